"""Slot-level Monte Carlo of one teleoperation link.

Packets arrive as a Poisson stream, wait in a FIFO queue drained at
``bits / packet_bits`` packets per slot, and are decoded with the
finite-blocklength error at the gain of their coherence block. Each
packet's communication delay (backhaul + queue wait + TTI) is mapped to
Cases 1-3 and the prediction fallback is a Bernoulli draw from the
tradeoff table at the horizon actually needed.

Receiver and transmitter placements are evaluated on the same random
numbers, so the receiver-side error never exceeds the transmitter-side
error on any sample path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import units
from .comm_model import FixedGain, LinkParams, QueueLaw, RayleighAverage, decoding_error_at, queuing_violation
from .prediction.tradeoff import TradeoffTable, table_lookup
from .reliability import TaskSpec, overall_error_bound, queuing_threshold

RECEIVER = "receiver"
TRANSMITTER = "transmitter"
_CHUNK = 1 << 20
_Z95 = 1.959963984540054


@dataclass(frozen=True)
class SimScenario:
    task: TaskSpec
    link: LinkParams
    bandwidth: float  # kHz
    bits: int
    table: TradeoffTable
    placement: str = RECEIVER
    n_slots: int = 10 ** 6
    seed: int = 0
    slot: Optional[float] = None  # ms; defaults to the TTI
    loss_override: Optional[float] = None

    def __post_init__(self):
        if self.slot is None:
            object.__setattr__(self, "slot", self.link.tx_duration)
        if self.n_slots < 10 ** 4:
            raise ValueError("n_slots must be at least 10^4")
        if not math.isclose(self.slot, self.link.tx_duration):
            raise ValueError("slot must equal the TTI (tx_duration)")
        if self.placement not in (RECEIVER, TRANSMITTER):
            raise ValueError(f"placement must be {RECEIVER!r} or {TRANSMITTER!r}")
        if not self.bandwidth > 0 or not self.bits >= 1:
            raise ValueError("bandwidth and bits must be positive")
        if self.loss_override is not None and not 0.0 <= self.loss_override <= 1.0:
            raise ValueError("loss_override must lie in [0, 1]")


@dataclass
class SimReport:
    placement: str
    seed: int
    n_slots: int
    n_packets: int
    errors: int
    empirical_overall_error: float
    ci_half_width: float
    case_counts: List[int]
    decode_failures: int
    queue_violations: int
    prediction_failures: int
    censored: int
    analytic_bound: float
    delay_histogram: List[int]
    wait_histogram: List[int]
    slot_ms: float
    mean_wait_ms: float
    mean_waiting_count: float
    arrival_rate: float
    extra: dict = field(default_factory=dict)

    @property
    def little_ratio(self) -> float:
        """Time-average waiting count over lambda x mean wait (1 under Little's law)."""
        rhs = self.arrival_rate * units.ms_to_s(self.mean_wait_ms)
        return float(self.mean_waiting_count / rhs) if rhs > 0 else float("nan")

    def queue_tail(self):
        """``(kappa_ms, empirical Pr{wait > kappa}, exceedance counts)`` per slot multiple."""
        h = np.asarray(self.wait_histogram, dtype=np.int64)
        n = h.sum()
        exceed = n - np.cumsum(h)
        kappa = np.arange(h.size) * self.slot_ms
        return kappa, exceed / max(n, 1), exceed

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["little_ratio"] = self.little_ratio
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)


def _block_gains(scn: SimScenario, rng: np.random.Generator) -> np.ndarray:
    n_blocks = int(math.ceil(scn.n_slots * scn.slot / scn.link.coherence_time)) + 1
    mode = scn.link.fading_mode
    if isinstance(mode, RayleighAverage):
        return rng.exponential(1.0, n_blocks)
    if isinstance(mode, FixedGain):
        return np.full(n_blocks, mode.g)
    raise TypeError(f"unknown fading mode {mode!r}")


class _Counters:
    def __init__(self):
        self.n = 0
        self.err = np.zeros(2, dtype=np.int64)  # receiver, transmitter
        self.pred_fail = np.zeros(2, dtype=np.int64)
        self.cases = np.zeros(3, dtype=np.int64)
        self.lost = 0
        self.qviol = 0
        self.delay_hist = np.zeros(0, dtype=np.int64)
        self.wait_hist = np.zeros(0, dtype=np.int64)
        self.wait_sum = 0

    @staticmethod
    def _add_hist(hist, values):
        c = np.bincount(values)
        if c.size > hist.size:
            hist = np.concatenate([hist, np.zeros(c.size - hist.size, dtype=np.int64)])
        hist[:c.size] += c
        return hist


def _simulate(scn: SimScenario):
    task, link, table = scn.task, scn.link, scn.table
    dt = scn.slot
    lam_slot = task.arrival_rate * units.ms_to_s(dt)
    service = scn.bits / task.packet_bits  # packets per slot
    dmax, tth, dch = task.delay_bound, link.horizon_cap, link.coherence_time
    dth = queuing_threshold(task, link)
    h_min = float(table.horizons[0])

    ss = np.random.SeedSequence(scn.seed).spawn(3)
    rng_arr, rng_gain, rng_pkt = (np.random.default_rng(s) for s in ss)
    gains = _block_gains(scn, rng_gain)

    def fp(h):
        return table_lookup(table, np.clip(h, h_min, table.horizons[-1]), task.jnd_threshold)

    cnt = _Counters()
    q0 = 0.0
    arrived = 0
    started = 0
    pending = np.zeros(0, dtype=np.int64)  # arrival slots of packets not yet started
    last_delivered = -np.inf  # arrival slot of the last decoded packet
    waiting_area = 0.0

    for s0 in range(0, scn.n_slots, _CHUNK):
        m = min(_CHUNK, scn.n_slots - s0)
        a = rng_arr.poisson(lam_slot, m)
        cum_a = arrived + np.cumsum(a)
        walk = np.cumsum(a - service)
        q = walk - np.minimum(-q0, np.minimum.accumulate(walk))
        q = np.maximum(q, 0.0)
        # packets whose service has begun by the end of each slot
        begun = np.ceil(cum_a - q - 1e-9)
        begun = np.maximum.accumulate(np.clip(begun, started, cum_a)).astype(np.int64)
        waiting_area += float(np.sum(cum_a - begun))

        pending = np.concatenate([pending, np.repeat(np.arange(s0, s0 + m), a)])
        n_new = int(begun[-1]) - started
        if n_new > 0:
            k = np.arange(started, started + n_new)
            start_slot = s0 + np.searchsorted(begun, k + 1, side="left")
            arr_slot = pending[:n_new]
            last_delivered = _process(scn, cnt, arr_slot, start_slot, gains, rng_pkt, fp,
                                      last_delivered, dth, h_min)
            pending = pending[n_new:]
            started += n_new
        q0 = float(q[-1])
        arrived = int(cum_a[-1])

    # packets still queued at the end: count those already past the prediction cap
    comm_lb = link.backhaul_delay + (scn.n_slots - pending) * dt + link.tx_duration
    expired = comm_lb > dmax + tth
    n_exp = int(np.count_nonzero(expired))
    if n_exp:
        cnt.n += n_exp
        cnt.err += n_exp
        cnt.cases[2] += n_exp
        cnt.qviol += n_exp
    censored = int(pending.size - n_exp)

    mean_wait = cnt.wait_sum / max(started, 1) * dt
    mean_waiting = waiting_area / scn.n_slots
    return cnt, censored, mean_wait, mean_waiting, dth


def _process(scn, cnt, arr_slot, start_slot, gains, rng, fp, last_delivered, dth, h_min):
    """Classify a batch of packets in FIFO order; returns the updated last delivery."""
    task, link = scn.task, scn.link
    dt = scn.slot
    n = arr_slot.size
    u = rng.random((n, 2))
    wait = start_slot - arr_slot
    comm = link.backhaul_delay + wait * dt + link.tx_duration
    if scn.loss_override is not None:
        eps_d = np.full(n, scn.loss_override)
    else:
        block = np.floor(start_slot * dt / link.coherence_time).astype(np.int64)
        eps_d = decoding_error_at(link, scn.bandwidth, scn.bits, gains[block])
    lost = u[:, 0] < eps_d

    dmax, tth = task.delay_bound, link.horizon_cap
    case = np.where(comm <= dmax, 1, np.where(comm <= dmax + tth, 2, 3))

    # horizon a receiver-side predictor must bridge
    prev = np.maximum.accumulate(np.where(~lost, arr_slot, -np.inf))
    prev = np.concatenate([[last_delivered], prev[:-1]])
    prev = np.maximum(prev, last_delivered)
    gap = np.where(np.isfinite(prev), (arr_slot - prev) * dt, link.coherence_time)
    h = np.where(case == 1, np.clip(gap, h_min, link.coherence_time),
                 np.where(lost, tth, np.clip(comm - dmax, 0.0, tth)))
    h = np.where(case == 3, tth, h)
    pred_fail = u[:, 1] < fp(h)

    err_rx = (case == 3) | ((case == 2) & pred_fail) | ((case == 1) & lost & pred_fail)
    err_tx = (case >= 2) | lost | pred_fail

    cnt.n += n
    cnt.err += [int(err_rx.sum()), int(err_tx.sum())]
    cnt.pred_fail += [int((pred_fail & ((case == 2) | lost) & (case < 3)).sum()), int(pred_fail.sum())]
    cnt.cases += np.bincount(case - 1, minlength=3)
    cnt.lost += int(lost.sum())
    cnt.qviol += int(np.count_nonzero(wait * dt > dth))
    experienced = np.where(case == 1, comm, np.where(case == 2, dmax, comm - tth))
    cnt.delay_hist = cnt._add_hist(cnt.delay_hist, np.floor(experienced).astype(np.int64))
    cnt.wait_hist = cnt._add_hist(cnt.wait_hist, wait.astype(np.int64))
    cnt.wait_sum += int(wait.sum())
    delivered = arr_slot[~lost]
    return float(delivered[-1]) if delivered.size else last_delivered


def _report(scn: SimScenario, placement: str, res) -> SimReport:
    cnt, censored, mean_wait, mean_waiting, _ = res
    i = 0 if placement == RECEIVER else 1
    n = cnt.n
    p = cnt.err[i] / n if n else 0.0
    hw = _Z95 * math.sqrt(p * (1 - p) / n) if n else float("nan")
    bound = overall_error_bound(scn.task, scn.link, scn.table, scn.bandwidth, scn.bits,
                                eps_d=scn.loss_override).total
    return SimReport(
        placement=placement, seed=scn.seed, n_slots=scn.n_slots, n_packets=int(n),
        errors=int(cnt.err[i]), empirical_overall_error=float(p), ci_half_width=float(hw),
        case_counts=[int(c) for c in cnt.cases], decode_failures=int(cnt.lost),
        queue_violations=int(cnt.qviol), prediction_failures=int(cnt.pred_fail[i]),
        censored=censored, analytic_bound=float(bound),
        delay_histogram=[int(c) for c in cnt.delay_hist],
        wait_histogram=[int(c) for c in cnt.wait_hist], slot_ms=float(scn.slot),
        mean_wait_ms=float(mean_wait), mean_waiting_count=float(mean_waiting),
        arrival_rate=float(scn.task.arrival_rate),
    )


def run_sim(scenario: SimScenario) -> SimReport:
    """Simulate ``scenario`` and report the empirical overall error for its placement."""
    return _report(scenario, scenario.placement, _simulate(scenario))


def compare_placements(scenario: SimScenario) -> Tuple[SimReport, SimReport]:
    """Receiver and transmitter reports from one run on common random numbers."""
    res = _simulate(scenario)
    return _report(scenario, RECEIVER, res), _report(scenario, TRANSMITTER, res)


def analytic_queue_tail(scenario: SimScenario, kappa_ms):
    """Queue-delay violation law for the scenario at ``kappa_ms``."""
    law = QueueLaw(scenario.task.arrival_rate, scenario.bits, scenario.link.tx_duration,
                   scenario.task.packet_bits)
    return queuing_violation(law, kappa_ms)
