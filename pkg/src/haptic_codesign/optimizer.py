"""Bandwidth / payload search and multi-user admission.

For one task the optimum is found by two nested searches:

* inner: for fixed bandwidth W, the payload b on an integer grid that
  minimises the overall-error bound (first decreasing then increasing in b,
  searched by ternary search with an exhaustive fallback);
* outer: bisection on W, where the minimised bound decreases with W, until
  it is within tolerance of the reliability target.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .comm_model import LinkParams
from .prediction.tradeoff import TradeoffTable
from .reliability import Criticality, ErrorBreakdown, TaskSpec, overall_error_bound

log = logging.getLogger(__name__)

TASK_ORIENTED = "task_oriented"
TASK_AGNOSTIC = "task_agnostic"


@dataclass(frozen=True)
class SearchConfig:
    """Search ranges and stopping rules.

    ``tolerance_rule="paper"`` stops when |eps - eps_max| <= eps_max**2;
    ``"absolute"`` uses ``tolerance`` instead. The outer loop also stops
    when the bandwidth interval is narrower than ``w_resolution_hz``.

    ``verify_unimodal`` scans the whole b-grid at every bandwidth probe.
    Past the capacity point the decoding error saturates and the bound
    dips again slightly, which would mislead a bare ternary search.
    """

    w_range: Tuple[float, float] = (2.0, 1000.0)  # kHz
    b_range: Tuple[int, int] = (1, 2000)  # bits
    tolerance_rule: str = "paper"
    tolerance: float = 0.0
    max_iters: int = 64
    b_grid_resolution: int = 1
    verify_unimodal: bool = True
    w_resolution_hz: float = 1.0

    def __post_init__(self):
        w0, w1 = self.w_range
        b0, b1 = self.b_range
        if not 0 < w0 <= w1:
            raise ValueError("w_range must satisfy 0 < W0 <= Wmax")
        if not 1 <= b0 <= b1:
            raise ValueError("b_range must satisfy 1 <= b0 <= bmax")
        if self.tolerance_rule not in ("paper", "absolute"):
            raise ValueError("tolerance_rule must be 'paper' or 'absolute'")
        if self.tolerance_rule == "absolute" and not self.tolerance > 0:
            raise ValueError("absolute tolerance must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.b_grid_resolution < 1:
            raise ValueError("b_grid_resolution must be >= 1")
        if not self.w_resolution_hz > 0:
            raise ValueError("w_resolution_hz must be positive")

    def b_grid(self) -> np.ndarray:
        return np.arange(self.b_range[0], self.b_range[1] + 1, self.b_grid_resolution, dtype=float)

    def tol(self, target: float) -> float:
        return target ** 2 if self.tolerance_rule == "paper" else self.tolerance


@dataclass
class AllocationResult:
    bandwidth_opt: float
    bits_opt: int
    breakdown: Optional[ErrorBreakdown]
    feasible: bool
    iterations: int
    trace: List[Tuple[float, int, float]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "bandwidth_opt_khz": self.bandwidth_opt,
            "bits_opt": self.bits_opt,
            "feasible": self.feasible,
            "iterations": self.iterations,
            "breakdown": None if self.breakdown is None else self.breakdown.as_dict(),
            "trace": [{"w_khz": w, "bits": b, "eps": e} for w, b, e in self.trace],
        }


# --------------------------------------------------------------------------
# Generic searches
# --------------------------------------------------------------------------

def count_sign_changes(values, rel_tol: float = 1e-12) -> int:
    """Sign changes in the first differences, ignoring rounding-level steps."""
    v = np.asarray(values, dtype=float)
    d = np.diff(v)
    scale = max(float(np.max(np.abs(v))), np.finfo(float).tiny)
    s = np.sign(d[np.abs(d) > rel_tol * scale])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def grid_argmin(fn: Callable[[np.ndarray], np.ndarray], grid, verify: bool = False):
    """Minimise a unimodal ``fn`` over ``grid`` by ternary search.

    ``fn`` maps an array of grid values to objective values. Ties go to the
    smallest grid value. A tie between the two probes, or (with ``verify``)
    more than one sign change over the full grid, switches to an exhaustive
    scan. Returns ``(index, value, exhaustive_used)``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty search grid")

    def f(i):
        return float(fn(grid[i:i + 1])[0])

    def exhaustive():
        vals = np.asarray(fn(grid), dtype=float)
        k = int(np.argmin(vals))
        return k, float(vals[k]), True

    if verify:
        vals = np.asarray(fn(grid), dtype=float)
        if count_sign_changes(vals) > 1:
            log.info("objective is not unimodal on the grid; using exhaustive scan")
            k = int(np.argmin(vals))
            return k, float(vals[k]), True

    lo, hi = 0, grid.size - 1
    while hi - lo > 2:
        third = (hi - lo) // 3
        m1, m2 = lo + third, hi - third
        f1, f2 = f(m1), f(m2)
        if f1 < f2:
            hi = m2 - 1
        elif f1 > f2:
            lo = m1 + 1
        else:
            return exhaustive()
    cand = np.arange(lo, hi + 1)
    vals = np.asarray(fn(grid[cand]), dtype=float)
    k = int(cand[np.argmin(vals)])
    best = float(np.min(vals))
    # walk down a flat stretch so ties resolve to the smallest b
    while k > 0 and f(k - 1) <= best:
        k -= 1
        best = f(k)
    return k, best, False


def bisect_bandwidth(evaluate: Callable[[float], Tuple[int, float]], target: float,
                     cfg: SearchConfig):
    """Smallest bandwidth whose minimised error meets ``target``.

    ``evaluate(W)`` returns ``(b, eps)``. Returns
    ``(W, b, eps, feasible, iterations, trace)``; when even ``Wmax``
    misses the target the result is infeasible and the trace holds the
    boundary probe.
    """
    tol = cfg.tol(target)
    lo, hi = cfg.w_range
    trace = []

    def probe(w):
        b, e = evaluate(w)
        trace.append((float(w), int(b), float(e)))
        return b, e

    b_hi, e_hi = probe(hi)
    if e_hi > target + tol:
        return hi, b_hi, e_hi, False, 0, trace
    best = (hi, b_hi, e_hi)
    b_lo, e_lo = probe(lo)
    if e_lo <= target + tol:
        return lo, b_lo, e_lo, True, 0, trace

    iters = 0
    while iters < cfg.max_iters and (hi - lo) * 1e3 >= cfg.w_resolution_hz:
        iters += 1
        mid = 0.5 * (lo + hi)
        b, e = probe(mid)
        if e <= target + tol:
            best = (mid, b, e)
            hi = mid
        else:
            lo = mid
        if abs(e - target) <= tol:
            break
    return best[0], best[1], best[2], True, iters, trace


# --------------------------------------------------------------------------
# Single-user problem
# --------------------------------------------------------------------------

def inner_opt_bits(task: TaskSpec, link: LinkParams, table: TradeoffTable, bandwidth: float,
                   cfg: SearchConfig = SearchConfig()) -> Tuple[int, float]:
    """Payload (bits) minimising the overall-error bound at ``bandwidth`` kHz."""
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    grid = cfg.b_grid()

    def fn(bits):
        return overall_error_bound(task, link, table, bandwidth, bits).total

    k, val, _ = grid_argmin(fn, grid, cfg.verify_unimodal)
    return int(grid[k]), val


def outer_opt_bandwidth(task: TaskSpec, link: LinkParams, table: TradeoffTable,
                        cfg: SearchConfig = SearchConfig()) -> AllocationResult:
    """Minimum bandwidth and matching payload meeting the task's reliability target."""
    def evaluate(w):
        return inner_opt_bits(task, link, table, w, cfg)

    w, b, _, feasible, iters, trace = bisect_bandwidth(evaluate, task.reliability_target, cfg)
    breakdown = overall_error_bound(task, link, table, w, b)
    return AllocationResult(w, b, breakdown, feasible, iters, trace)


# --------------------------------------------------------------------------
# Multi-user problem
# --------------------------------------------------------------------------

@dataclass
class MultiUserResult:
    mode: str
    bandwidths: List[float]
    n_served: int
    total_bw: float

    def as_dict(self) -> dict:
        return {"mode": self.mode, "bandwidths_khz": self.bandwidths, "n_served": self.n_served,
                "total_bw_khz": self.total_bw}


def admit_prefix(bandwidths: Sequence[float], w_max: float) -> Tuple[int, float]:
    """Largest prefix of ``bandwidths`` whose sum fits in ``w_max``; returns (count, used)."""
    used = 0.0
    n = 0
    for w in bandwidths:
        if not math.isfinite(w) or used + w > w_max * (1 + 1e-12):
            break
        used += w
        n += 1
    return n, used


def allocate(classes: Sequence, class_bandwidth: Dict, w_max: float, mode: str) -> MultiUserResult:
    """Admission from per-class bandwidths.

    ``classes`` lists each user's class in arrival order. In task-agnostic
    mode every user is provisioned with the largest bandwidth among all
    classes in ``class_bandwidth``.
    """
    if not w_max > 0:
        raise ValueError("w_max must be positive")
    if mode == TASK_ORIENTED:
        widths = [float(class_bandwidth[c]) for c in classes]
    elif mode == TASK_AGNOSTIC:
        worst = max(float(v) for v in class_bandwidth.values())
        widths = [worst] * len(classes)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    n, used = admit_prefix(widths, w_max)
    return MultiUserResult(mode, widths, n, used)


def class_optima(tasks: Sequence[TaskSpec], link: LinkParams, table: TradeoffTable,
                 cfg: SearchConfig = SearchConfig()) -> Dict[TaskSpec, float]:
    """Single-user optimum per distinct task; ``inf`` if the task is infeasible."""
    out: Dict[TaskSpec, float] = {}
    for t in tasks:
        if t not in out:
            res = outer_opt_bandwidth(t, link, table, cfg)
            out[t] = res.bandwidth_opt if res.feasible else math.inf
    return out


def multi_user_allocate(tasks: Sequence[TaskSpec], link: LinkParams, table: TradeoffTable,
                        w_max: float, mode: str = TASK_ORIENTED, cfg: SearchConfig = SearchConfig(),
                        class_bandwidth: Optional[Dict] = None) -> MultiUserResult:
    """Serve as many users (in the given order) as fit into ``w_max`` kHz.

    ``class_bandwidth`` maps a task or its criticality to a known optimum;
    tasks not covered are solved with :func:`outer_opt_bandwidth`.
    """
    known = dict(class_bandwidth or {})
    missing = [t for t in tasks if t not in known and t.criticality not in known]
    known.update(class_optima(missing, link, table, cfg))
    keys = [t if t in known else t.criticality for t in tasks]
    return allocate(keys, known, w_max, mode)


def bandwidth_savings(ratio: float, w_critical: float, w_non_critical: float) -> float:
    """Percent bandwidth saved by task-oriented over task-agnostic provisioning.

    ``ratio`` is the share of critical tasks; the task-agnostic design
    provisions every task at ``w_critical``.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    if not (w_critical > 0 and w_non_critical > 0):
        raise ValueError("bandwidths must be positive")
    return 100.0 * (1.0 - (ratio * w_critical + (1.0 - ratio) * w_non_critical) / w_critical)


def task_bandwidth_savings(critical: TaskSpec, non_critical: TaskSpec, link: LinkParams,
                           table: TradeoffTable, ratio: float,
                           cfg: SearchConfig = SearchConfig()) -> float:
    """:func:`bandwidth_savings` with both optima computed by the optimizer."""
    opt = class_optima([critical, non_critical], link, table, cfg)
    return bandwidth_savings(ratio, opt[critical], opt[non_critical])
