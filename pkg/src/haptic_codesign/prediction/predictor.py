"""Least-squares autoregressive position predictor and its error statistics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Tuple

import numpy as np
from scipy import linalg

from .trajectories import SAMPLE_RATE, TrajectoryDataset
from .tradeoff import TradeoffTable, project_monotone

log = logging.getLogger(__name__)

DEFAULT_HISTORY = 500  # slots (ms at 1 kHz)
DEFAULT_HORIZON = 100


class PredictorFitError(ValueError):
    pass


class InsufficientWindowsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PredictorModel:
    """AR(order) one-step model rolled out recursively over ``horizon_len`` slots.

    ``coefficients[k]`` multiplies the position ``k`` slots back (k=0 is the
    latest); the optional last entry is the intercept.
    """

    order: int
    coefficients: np.ndarray
    history_len: int = DEFAULT_HISTORY
    horizon_len: int = DEFAULT_HORIZON
    intercept: bool = True
    train_rrmse: float = float("nan")
    val_rrmse: float = float("nan")
    train_fingerprints: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.order > self.history_len:
            raise ValueError("order must not exceed history_len")
        if self.horizon_len < 1:
            raise ValueError("horizon_len must be >= 1")
        coef = np.asarray(self.coefficients, dtype=float).copy()
        if coef.shape != (self.order + int(self.intercept),):
            raise ValueError("coefficient vector does not match order/intercept")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)


def rrmse(predicted, truth) -> float:
    """Relative root mean squared error in percent: 100 * RMSE / |mean(truth)|."""
    p = np.asarray(predicted, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if p.size != t.size or p.size == 0:
        raise ValueError("predicted and truth must have equal non-zero length")
    mean = t.mean()
    if mean == 0:
        raise ValueError("RRMSE is undefined for zero-mean truth")
    return float(np.sqrt(np.mean((p - t) ** 2)) / abs(mean) * 100.0)


def _lagged(q: np.ndarray, order: int, intercept: bool) -> Tuple[np.ndarray, np.ndarray]:
    n = q.size - order
    cols = [q[order - 1 - k: order - 1 - k + n] for k in range(order)]
    if intercept:
        cols.append(np.ones(n))
    return np.column_stack(cols), q[order:]


def _regressor_name(k: int, order: int) -> str:
    return "intercept" if k == order else f"lag {k + 1}"


def fit_predictor(data: TrajectoryDataset, history_len: int = DEFAULT_HISTORY,
                  horizon_len: int = DEFAULT_HORIZON, order: int = 2, intercept: bool = True,
                  train_fraction: float = 0.8, eval_stride: int = 50) -> PredictorModel:
    """Fit one-step AR coefficients by least squares on position.

    The first ``train_fraction`` of sequences is used for fitting and the
    rest for validation; both RRMSE figures are computed on recursive
    ``horizon_len``-step rollouts from windows spaced ``eval_stride`` apart.

    Raises:
        PredictorFitError: when the regression matrix is rank deficient; the
            message names the regressor that is a combination of the others.
    """
    if order > history_len:
        raise ValueError("order must not exceed history_len")
    train, val = data.split(train_fraction) if len(data) > 1 else (data, data)
    blocks = [_lagged(q, order, intercept) for q in train.positions() if q.size > order]
    if not blocks:
        raise PredictorFitError("no training sequence is longer than the AR order")
    x = np.vstack([b[0] for b in blocks])
    y = np.concatenate([b[1] for b in blocks])
    if x.shape[0] < x.shape[1]:
        raise PredictorFitError("fewer training samples than regressors")

    _, r, piv = linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(x.shape) * np.finfo(float).eps
    if np.any(diag <= tol):
        bad = int(piv[np.argmax(diag <= tol)])
        raise PredictorFitError(
            f"rank-deficient regression: {_regressor_name(bad, order)} is a linear "
            f"combination of the other regressors")
    coef, *_ = linalg.lstsq(x, y)

    model = PredictorModel(order, coef, history_len, horizon_len, intercept,
                           train_fingerprints=train.fingerprints())
    tr = _rollout_rrmse(model, train, eval_stride)
    va = _rollout_rrmse(model, val, eval_stride) if val is not train else tr
    log.info("AR(%d) fit: train RRMSE %.4g%%, validation RRMSE %.4g%%", order, tr, va)
    return PredictorModel(order, coef, history_len, horizon_len, intercept, tr, va,
                          train.fingerprints())


def predict(model: PredictorModel, history) -> np.ndarray:
    """Recursive ``horizon_len``-step forecast of position.

    ``history`` holds the last ``history_len`` observations, either
    positions ``(history_len,)`` or ``[position, velocity]`` rows.
    """
    h = np.asarray(history, dtype=float)
    if h.ndim == 2:
        h = h[:, 0]
    if h.shape != (model.history_len,):
        raise ValueError(f"history must contain {model.history_len} samples, got {h.shape[0]}")
    return rollout(model, h[None, -model.order:])[0]


def rollout(model: PredictorModel, lags: np.ndarray) -> np.ndarray:
    """Vectorised forecast for a batch of ``(n, order)`` position tails (oldest first)."""
    p = model.order
    state = np.array(lags[:, ::-1], dtype=float)  # newest first
    a = model.coefficients[:p]
    c = model.coefficients[p] if model.intercept else 0.0
    out = np.empty((state.shape[0], model.horizon_len))
    for k in range(model.horizon_len):
        nxt = state @ a + c
        out[:, k] = nxt
        state = np.roll(state, 1, axis=1)
        state[:, 0] = nxt
    return out


def iter_windows(model: PredictorModel, data: TrajectoryDataset, stride: int = 1
                 ) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(sequence_index, starts, future)`` per sequence.

    ``starts`` are the indices of the last history sample of each window and
    ``future`` the ``(n, horizon_len)`` true positions that follow.
    """
    need = model.history_len + model.horizon_len
    for si, q in enumerate(data.positions()):
        if q.size < need:
            continue
        starts = np.arange(model.history_len - 1, q.size - model.horizon_len, stride)
        idx = starts[:, None] + np.arange(1, model.horizon_len + 1)
        yield si, starts, q[idx]


def _window_errors(model: PredictorModel, q: np.ndarray, starts: np.ndarray, future: np.ndarray):
    lag_idx = starts[:, None] + np.arange(-model.order + 1, 1)
    return rollout(model, q[lag_idx]) - future


def _rollout_rrmse(model: PredictorModel, data: TrajectoryDataset, stride: int) -> float:
    se = 0.0
    count = 0
    total = 0.0
    positions = data.positions()
    for si, starts, future in iter_windows(model, data, stride):
        err = _window_errors(model, positions[si], starts, future)
        se += float(np.sum(err ** 2))
        total += float(np.sum(future))
        count += future.size
    if count == 0:
        return float("nan")
    mean = total / count
    if mean == 0:
        raise ValueError("RRMSE is undefined for zero-mean truth")
    return float(np.sqrt(se / count) / abs(mean) * 100.0)


def horizon_slots(horizons_ms, horizon_len: int) -> np.ndarray:
    """Convert horizons in ms to 1-based rollout step indices."""
    h = np.asarray(horizons_ms, dtype=float)
    slots = h * SAMPLE_RATE / 1000.0
    idx = np.rint(slots).astype(int)
    if np.any(np.abs(slots - idx) > 1e-9) or np.any(idx < 1) or np.any(idx > horizon_len):
        raise ValueError(f"horizons must be whole slots in [1, {horizon_len}] ms")
    return idx


def count_exceedances(model: PredictorModel, data: TrajectoryDataset, horizons_ms, deltas_pct,
                      stride: int = 1) -> Tuple[np.ndarray, int]:
    """Windows whose position error at each horizon exceeds each JND threshold.

    Returns ``(counts, n)`` with ``counts`` of shape (horizons, deltas) and
    ``n`` the number of windows evaluated.
    """
    steps = horizon_slots(horizons_ms, model.horizon_len)
    thresholds = np.asarray(deltas_pct, dtype=float) * data.range_norm / 100.0
    counts = np.zeros((steps.size, thresholds.size), dtype=np.int64)
    n = 0
    positions = data.positions()
    for si, starts, future in iter_windows(model, data, stride):
        err = np.abs(_window_errors(model, positions[si], starts, future)[:, steps - 1])
        counts += np.sum(err[:, :, None] > thresholds[None, None, :], axis=0)
        n += starts.size
    return counts, n


def estimate_error_prob(model: PredictorModel, data: TrajectoryDataset, horizons_ms, deltas_pct,
                        stride: int = 1, min_windows: int = 100) -> TradeoffTable:
    """Empirical f_p(horizon, delta) on held-out data.

    Each cell is the fraction of windows whose absolute position error at
    that horizon exceeds ``delta`` percent of ``data.range_norm``. The raw
    surface is kept in ``raw_eps``; ``eps`` is its monotone projection with
    cells below 1/(10 n) raised to that floor (marked in ``floored``).

    Raises:
        ValueError: if ``data`` shares sequences with the training set.
        InsufficientWindowsError: if a cell has fewer than ``min_windows`` windows.
    """
    if model.train_fingerprints & data.fingerprints():
        raise ValueError("held-out data overlaps the predictor's training sequences")
    counts, n = count_exceedances(model, data, horizons_ms, deltas_pct, stride)
    h = np.asarray(horizons_ms, dtype=float)
    d = np.asarray(deltas_pct, dtype=float)
    if n < min_windows:
        raise InsufficientWindowsError(
            f"cell (horizon={h[0]:g} ms, delta={d[0]:g}%) has {n} windows; need >= {min_windows}")
    raw = counts / n
    projected = project_monotone(raw, np.full(raw.shape, float(n)))
    floor = 1.0 / (10.0 * n)
    floored = projected < floor
    eps = np.where(floored, floor, projected)
    return TradeoffTable(h, d, eps, np.full(raw.shape, n, dtype=np.int64), raw_eps=raw, floored=floored)
