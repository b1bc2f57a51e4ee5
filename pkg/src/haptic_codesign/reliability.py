"""User-experienced delay cases and the overall-error upper bound.

A packet whose communication delay stays within the delay bound is shown
as received (Case 1); a moderately late one is bridged by prediction with
horizon ``comm_delay - delay_bound`` (Case 2); beyond ``horizon_cap`` the
requirement is missed (Case 3). The bound combines

    f_p(D^ch, delta) * eps_d * (1 - f_q(D^th))
    + f_p(T_th, delta) * (f_q(D^th) - f_q(D^th + T_th))
    + f_q(D^th + T_th)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .comm_model import LinkParams, QueueLaw, avg_decoding_error, queuing_violation
from .prediction.tradeoff import TradeoffTable, table_lookup


class Criticality(str, enum.Enum):
    CRITICAL = "critical"
    NON_CRITICAL = "non_critical"


@dataclass(frozen=True)
class TaskSpec:
    """Per-task QoS requirement.

    Attributes:
        delay_bound: D^max (ms).
        reliability_target: eps^max.
        jnd_threshold: delta, percent of the trajectory range.
        arrival_rate: lambda (packets/s).
        criticality: task class used by the multi-user benchmark.
        packet_bits: bits per arriving packet, used to put arrivals and the
            per-TTI service on the same scale in the queue law.
    """

    delay_bound: float
    reliability_target: float
    jnd_threshold: float
    arrival_rate: float = 100.0
    criticality: Criticality = Criticality.NON_CRITICAL
    packet_bits: float = 1.0

    def __post_init__(self):
        if not self.delay_bound > 0:
            raise ValueError("delay_bound must be positive")
        if not 0 < self.reliability_target < 1:
            raise ValueError("reliability_target must lie in (0, 1)")
        if not self.jnd_threshold > 0:
            raise ValueError("jnd_threshold must be positive")
        if not self.arrival_rate > 0:
            raise ValueError("arrival_rate must be positive")
        if not self.packet_bits > 0:
            raise ValueError("packet_bits must be positive")
        object.__setattr__(self, "criticality", Criticality(self.criticality))


@dataclass(frozen=True)
class ErrorBreakdown:
    """Components of the overall-error bound (fields may be arrays for sweeps)."""

    eps_d: float
    fq_dth: float
    fq_dth_tth: float
    eps_p_ch: float
    eps_p_tth: float
    term1: float
    term2: float
    term3: float
    total: float
    queuing_threshold: float

    def as_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else float(v))
                for k, v in self.__dict__.items()}


class ExperiencedDelay(NamedTuple):
    delay: float
    case: int
    horizon_used: Optional[float]


def queuing_threshold(task: TaskSpec, link: LinkParams) -> float:
    """D^th = max(D^max - D^t - D^r, 0) in ms."""
    return max(task.delay_bound - link.tx_duration - link.backhaul_delay, 0.0)


def experienced_delay(comm_delay: float, task: TaskSpec, link: LinkParams) -> ExperiencedDelay:
    """Map a communication delay (ms) to (experienced delay, case, prediction horizon).

    Case 1 needs prediction only for lost packets, with horizon at most the
    coherence time, so ``horizon_used`` is ``None`` there.
    """
    if comm_delay < 0:
        raise ValueError("comm_delay must be non-negative")
    dmax = task.delay_bound
    if comm_delay <= dmax:
        return ExperiencedDelay(comm_delay, 1, None)
    if comm_delay <= dmax + link.horizon_cap:
        return ExperiencedDelay(dmax, 2, comm_delay - dmax)
    return ExperiencedDelay(comm_delay - link.horizon_cap, 3, link.horizon_cap)


def compose_bound(eps_d, fq_dth, fq_dth_tth, fp_ch, fp_th):
    """The three terms of the bound from its component probabilities."""
    eps_d, fq1, fq2 = (np.asarray(x, dtype=float) for x in (eps_d, fq_dth, fq_dth_tth))
    term1 = fp_ch * eps_d * (1.0 - fq1)
    term2 = fp_th * (fq1 - fq2)
    term3 = fq2 + np.zeros_like(term1)
    return term1, term2, term3


def overall_error_bound(task: TaskSpec, link: LinkParams, table: TradeoffTable, bandwidth, bits,
                        eps_d=None, strict: bool = False) -> ErrorBreakdown:
    """Upper bound on the overall error probability at (``bandwidth`` kHz, ``bits``).

    ``bandwidth`` and ``bits`` broadcast against each other. ``eps_d``
    overrides the decoding error (otherwise taken from
    :func:`~haptic_codesign.comm_model.avg_decoding_error`). With ``strict``,
    table lookups outside the grid raise instead of clamping.
    """
    bandwidth = np.asarray(bandwidth, dtype=float)
    bits = np.asarray(bits, dtype=float)
    if np.any(bandwidth <= 0) or np.any(bits <= 0):
        raise ValueError("bandwidth and bits must be positive")
    dth = queuing_threshold(task, link)
    if eps_d is None:
        eps_d = avg_decoding_error(link, bandwidth, bits)
    eps_d = np.broadcast_to(np.asarray(eps_d, dtype=float), np.broadcast_shapes(bandwidth.shape, bits.shape))
    law = QueueLaw(task.arrival_rate, bits, link.tx_duration, task.packet_bits)
    fq1 = np.asarray(queuing_violation(law, dth))
    fq2 = np.asarray(queuing_violation(law, dth + link.horizon_cap))
    fp_ch = table_lookup(table, link.coherence_time, task.jnd_threshold, strict=strict)
    fp_th = table_lookup(table, link.horizon_cap, task.jnd_threshold, strict=strict)
    term1, term2, term3 = compose_bound(eps_d, fq1, fq2, fp_ch, fp_th)
    total = term1 + term2 + term3
    out = dict(eps_d=eps_d, fq_dth=fq1 + np.zeros_like(total), fq_dth_tth=fq2 + np.zeros_like(total),
               eps_p_ch=fp_ch, eps_p_tth=fp_th, term1=term1, term2=term2, term3=term3, total=total)
    if total.ndim == 0:
        out = {k: float(v) for k, v in out.items()}
    return ErrorBreakdown(queuing_threshold=dth, **out)


def placement_compare(eps_p: float, eps_c: float):
    """Overall error with the predictor at the transmitter vs at the receiver.

    Transmitter-side prediction fails if either prediction or communication
    fails; receiver-side prediction only compensates lost packets, so both
    must fail. Returns ``(eps_tx, eps_rx)``.
    """
    for name, v in (("eps_p", eps_p), ("eps_c", eps_c)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    eps_tx = 1.0 - (1.0 - eps_p) * (1.0 - eps_c)
    eps_rx = eps_p * eps_c
    return eps_tx, eps_rx
