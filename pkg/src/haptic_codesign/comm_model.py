"""Physical-layer error laws: finite-blocklength decoding error and
effective-bandwidth queuing-delay violation.

All information-theoretic logarithms are base 2. Distances are in km,
powers in dBm, bandwidths in kHz and durations in ms at the public
surface; SI values are used internally (see :mod:`haptic_codesign.units`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special

from . import units

LOG2_E = math.log2(math.e)
HIGH_SNR_DB = 5.0
_INV_E = math.exp(-1.0)


# --------------------------------------------------------------------------
# Special functions
# --------------------------------------------------------------------------

def q_function(x):
    """Standard Gaussian upper-tail probability Q(x) = P{N(0,1) > x}."""
    out = special.ndtr(-np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def inverse_q(p):
    """Inverse of :func:`q_function` for p in (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("inverse_q requires 0 < p < 1")
    out = -special.ndtri(p)
    return float(out) if np.ndim(out) == 0 else out


def _lambert_w_m1_initial(y):
    # Branch-point series near -1/e, asymptotic expansion near 0-.
    p = -np.sqrt(np.maximum(2.0 * (1.0 + math.e * y), 0.0))
    near = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    with np.errstate(divide="ignore", invalid="ignore"):
        l1 = np.log(-y)
        l2 = np.log(-l1)
        far = l1 - l2 + l2 / l1
    return np.where(y < -0.25, near, far)


def lambert_w_m1(y):
    """Lower real branch W_{-1} of the Lambert W function.

    Solves ``x * exp(x) = y`` for ``x <= -1`` with ``-1/e <= y < 0``.
    Accepts scalars or arrays.

    Raises:
        ValueError: if any ``y`` lies outside ``[-1/e, 0)``.
    """
    y_arr = np.asarray(y, dtype=float)
    # tolerate the representable neighbour of -1/e
    if np.any(y_arr < -_INV_E * (1.0 + 1e-15)) or np.any(y_arr >= 0.0) or np.any(np.isnan(y_arr)):
        raise ValueError("lambert_w_m1 domain is [-1/e, 0)")
    y_arr = np.maximum(y_arr, -_INV_E)
    x = _lambert_w_m1_initial(y_arr)
    x = np.minimum(x, -1.0)
    for _ in range(50):
        ex = np.exp(x)
        f = x * ex - y_arr
        xp1 = x + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            denom = ex * xp1 - (x + 2.0) * f / (2.0 * xp1)
            step = np.where(np.abs(xp1) > 1e-12, f / denom, 0.0)
        x_new = np.minimum(x - step, -1.0)
        if np.all(np.abs(x_new - x) <= 1e-15 * np.abs(x)):
            x = x_new
            break
        x = x_new
    x = np.where(y_arr == -_INV_E, -1.0, x)
    return float(x) if np.ndim(x) == 0 else x


# --------------------------------------------------------------------------
# Link description
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedGain:
    """Deterministic small-scale gain."""

    g: float = 1.0

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("fixed gain must be positive")


@dataclass(frozen=True)
class RayleighAverage:
    """Average over unit-mean exponential (Rayleigh power) gain."""

    nodes: int = 128

    def __post_init__(self):
        if self.nodes < 4:
            raise ValueError("quadrature node count must be >= 4")


FadingMode = Union[FixedGain, RayleighAverage]


@dataclass(frozen=True)
class LinkParams:
    """Radio constants for one transmitter/receiver pair.

    Attributes:
        tx_power: transmit power P (dBm).
        noise_psd: single-sided noise spectral density N0 (dBm/Hz).
        distance: BS-receiver distance (km).
        backhaul_delay: core network and backhaul delay D^r (ms).
        tx_duration: transmission duration / TTI D^t (ms).
        coherence_time: channel coherence time D^ch (ms).
        horizon_cap: maximum prediction horizon T_th (ms).
        fading_mode: how the small-scale gain enters decoding error.
    """

    tx_power: float = 23.0
    noise_psd: float = -144.0
    distance: float = 0.2
    backhaul_delay: float = 10.0
    tx_duration: float = 0.5
    coherence_time: float = 10.0
    horizon_cap: float = 50.0
    fading_mode: FadingMode = field(default_factory=FixedGain)

    def __post_init__(self):
        if not self.tx_duration > 0:
            raise ValueError("tx_duration must be positive")
        if not self.distance > 0:
            raise ValueError("distance must be positive")
        if not self.coherence_time > 0:
            raise ValueError("coherence_time must be positive")
        if not self.horizon_cap > 0:
            raise ValueError("horizon_cap must be positive")
        if self.backhaul_delay < 0:
            raise ValueError("backhaul_delay must be non-negative")

    @property
    def large_scale_gain(self) -> float:
        return path_loss_gain(self.distance)


@dataclass(frozen=True)
class LinkBudget:
    """Derived per-bandwidth link quantities (SI).

    ``blocklength`` is ``tx_duration * bandwidth`` in channel uses.
    ``high_snr`` records whether the >5 dB dispersion simplification applies.
    Fields may hold arrays when built from an array of gains.
    """

    large_scale_gain: float
    snr: float
    capacity: float
    dispersion: float
    blocklength: float
    high_snr: bool


@dataclass(frozen=True)
class QueueLaw:
    """Poisson arrivals served at a constant rate of ``bits_per_tti`` per TTI.

    ``packet_bits`` converts the packet arrival rate into the unit of the
    service rate. With ``packet_bits == 1`` the law is the textbook
    expression with ``rho = lambda * D^t / b``.
    """

    arrival_rate: float  # packets/s
    bits_per_tti: float  # bits
    tx_duration: float  # ms
    packet_bits: float = 1.0

    def __post_init__(self):
        if not self.arrival_rate > 0:
            raise ValueError("arrival_rate must be positive")
        if not self.tx_duration > 0:
            raise ValueError("tx_duration must be positive")
        if not self.packet_bits > 0:
            raise ValueError("packet_bits must be positive")
        if np.any(np.asarray(self.bits_per_tti) <= 0):
            raise ValueError("bits_per_tti must be positive")

    @property
    def load(self):
        """Utilisation rho = lambda * packet_bits * D^t / b."""
        return self.arrival_rate * self.packet_bits * units.ms_to_s(self.tx_duration) / np.asarray(
            self.bits_per_tti, dtype=float)

    @property
    def eff_bandwidth(self):
        """Service rate b / D^t expressed in packets/s."""
        return np.asarray(self.bits_per_tti, dtype=float) / (
            units.ms_to_s(self.tx_duration) * self.packet_bits)

    @property
    def exponent(self):
        """Decay rate xi (1/s); ``0`` when the queue is saturated."""
        rho = np.atleast_1d(self.load).astype(float)
        eb = np.broadcast_to(self.eff_bandwidth, rho.shape).astype(float)
        xi = np.zeros_like(rho)
        stable = rho < 1.0
        if np.any(stable):
            r = rho[stable]
            w = lambert_w_m1(-r * np.exp(-r))
            xi[stable] = np.minimum(eb[stable] * w + self.arrival_rate, 0.0)
        return float(xi[0]) if np.ndim(self.load) == 0 else xi


# --------------------------------------------------------------------------
# Channel
# --------------------------------------------------------------------------

def path_loss_gain(distance):
    """Large-scale gain alpha with 10 log10(alpha) = -128.1 - 36.7 log10(d[km])."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = units.db_to_linear(-128.1 - 36.7 * np.log10(d))
    return float(out) if np.ndim(out) == 0 else out


def dispersion_exact(snr):
    """Channel dispersion log2(e)^2 [1 - (1+snr)^-2]."""
    snr = np.asarray(snr, dtype=float)
    return LOG2_E ** 2 * (1.0 - 1.0 / (1.0 + snr) ** 2)


def link_budget(link: LinkParams, bandwidth, gain=1.0) -> LinkBudget:
    """SNR, capacity, dispersion and blocklength at ``bandwidth`` kHz.

    ``gain`` is the small-scale gain g (scalar or array).
    """
    w_hz = units.khz_to_hz(bandwidth)
    g = np.asarray(gain, dtype=float)
    if np.any(w_hz <= 0):
        raise ValueError("bandwidth must be positive")
    if np.any(g <= 0):
        raise ValueError("gain must be positive")
    alpha = link.large_scale_gain
    snr = alpha * g * units.dbm_to_watt(link.tx_power) / (units.dbm_to_watt(link.noise_psd) * w_hz)
    capacity = np.log2(1.0 + snr)
    disp = dispersion_exact(snr)
    blocklength = units.ms_to_s(link.tx_duration) * w_hz
    high = snr > units.db_to_linear(HIGH_SNR_DB)
    if np.ndim(snr) == 0:
        snr, capacity, disp, high = float(snr), float(capacity), float(disp), bool(high)
    return LinkBudget(
        large_scale_gain=alpha,
        snr=snr,
        capacity=capacity,
        dispersion=disp,
        blocklength=float(blocklength) if np.ndim(blocklength) == 0 else blocklength,
        high_snr=high,
    )


def decoding_error(budget: LinkBudget, bits, bandwidth=None, tx_duration=None):
    """Finite-blocklength decoding error probability.

    Q((l C - b + log2(l)/2) / sqrt(l V)) with l the blocklength. Above
    5 dB SNR, V is replaced by log2(e)^2; otherwise the exact dispersion is
    used. ``bandwidth`` (kHz) and ``tx_duration`` (ms), when given, override
    the blocklength stored in ``budget``.
    """
    if bandwidth is not None and tx_duration is not None:
        l = units.ms_to_s(tx_duration) * units.khz_to_hz(bandwidth)
    else:
        l = np.asarray(budget.blocklength, dtype=float)
    if np.any(l < 1.0):
        raise ValueError("blocklength must be at least one symbol")
    b = np.asarray(bits, dtype=float)
    if np.any(b < 0):
        raise ValueError("bits must be non-negative")
    v = np.where(budget.high_snr, LOG2_E ** 2, budget.dispersion)
    arg = (l * budget.capacity - b + 0.5 * np.log2(l)) / np.sqrt(l * v)
    return q_function(arg)


def decoding_error_at(link: LinkParams, bandwidth, bits, gain=1.0):
    """Shortcut for ``decoding_error(link_budget(link, bandwidth, gain), bits)``."""
    return decoding_error(link_budget(link, bandwidth, gain), bits)


def capacity_bits(link: LinkParams, bandwidth, gain=1.0):
    """Payload at which the decoding error reaches 1/2: l C + log2(l) / 2."""
    bud = link_budget(link, bandwidth, gain)
    l = np.asarray(bud.blocklength, dtype=float)
    out = l * np.asarray(bud.capacity) + 0.5 * np.log2(l)
    return float(out) if np.ndim(out) == 0 else out


def avg_decoding_error(link: LinkParams, bandwidth, bits):
    """Decoding error under the link's fading mode.

    ``FixedGain`` evaluates at that gain; ``RayleighAverage`` integrates
    against the unit exponential density with Gauss-Laguerre quadrature.
    """
    mode = link.fading_mode
    if isinstance(mode, FixedGain):
        return decoding_error_at(link, bandwidth, bits, mode.g)
    if isinstance(mode, RayleighAverage):
        nodes, weights = _laguerre(mode.nodes)
        w, b = np.broadcast_arrays(np.asarray(bandwidth, dtype=float), np.asarray(bits, dtype=float))
        eps = decoding_error_at(link, w[..., None], b[..., None], nodes)
        out = np.clip(np.sum(eps * weights, axis=-1) / weights.sum(), 0.0, 1.0)
        return float(out) if np.ndim(out) == 0 else out
    raise TypeError(f"unknown fading mode {mode!r}")


_LAGUERRE_CACHE: dict = {}


def _laguerre(n: int):
    if n not in _LAGUERRE_CACHE:
        x, w = special.roots_laguerre(n)
        _LAGUERRE_CACHE[n] = (x, w)
    return _LAGUERRE_CACHE[n]


# --------------------------------------------------------------------------
# Queue
# --------------------------------------------------------------------------

def queuing_violation(law: QueueLaw, bound):
    """Probability that the queuing delay exceeds ``bound`` ms.

    exp(kappa * xi) with xi = E^B W_{-1}(-rho e^{-rho}) + lambda. Saturated
    queues (rho >= 1) and ``bound == 0`` give exactly 1.
    """
    kappa = units.ms_to_s(bound)
    if np.any(kappa < 0):
        raise ValueError("delay bound must be non-negative")
    out = np.exp(kappa * np.asarray(law.exponent))
    out = np.where(kappa == 0, 1.0, out)
    return float(out) if np.ndim(out) == 0 else out


def queuing_violation_slope(law: QueueLaw, bound):
    """Derivative of :func:`queuing_violation` with respect to ``bits_per_tti`` (per bit).

    With w = W_{-1}(-rho e^{-rho}), d xi / d E^B = w (w + rho) / (1 + w),
    which is negative for every stable load.
    """
    kappa = units.ms_to_s(bound)
    rho = np.asarray(law.load, dtype=float)
    if np.any(rho >= 1.0):
        raise ValueError("slope is defined only for a stable queue (rho < 1)")
    w = lambert_w_m1(-rho * np.exp(-rho))
    dxi_deb = w * (w + rho) / (1.0 + w)
    deb_db = 1.0 / (units.ms_to_s(law.tx_duration) * law.packet_bits)
    out = kappa * queuing_violation(law, bound) * dxi_deb * deb_db
    return float(out) if np.ndim(out) == 0 else out
