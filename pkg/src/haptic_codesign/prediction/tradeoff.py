"""Prediction-error probability surface f_p(horizon, JND threshold).

A :class:`TradeoffTable` stores empirical probabilities on a
(horizon [ms], delta [%]) grid. Lookups interpolate bilinearly in
(horizon, log10 delta) and clamp to the grid edge unless strict.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.optimize import isotonic_regression

HEADER = ["horizon_ms", "delta_pct", "eps_p", "n"]


class TableCoverageError(ValueError):
    """Query outside the table grid while strict mode is on."""


class TableClampWarning(UserWarning):
    """Query clamped to the nearest grid edge."""


class TableFormatError(ValueError):
    """Malformed tradeoff table file."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f"line {line}"
            if column is not None:
                loc += f", column {column}"
            loc += ": "
        super().__init__(loc + message)
        self.line = line
        self.column = column


def _as_grid(values, name):
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} grid is empty")
    if np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name} grid must be strictly increasing")
    return arr


@dataclass(frozen=True, eq=False)
class TradeoffTable:
    """Empirical f_p on a (horizon, delta) grid.

    ``eps[i, j]`` is the probability at ``horizons[i]`` ms and ``deltas[j]``
    percent. ``sample_counts`` holds the number of windows behind each cell.
    ``raw_eps`` keeps the unprojected estimate when the table came from data,
    and ``floored`` marks cells raised to the 1/(10 n) floor.
    """

    horizons: np.ndarray
    deltas: np.ndarray
    eps: np.ndarray
    sample_counts: np.ndarray
    raw_eps: Optional[np.ndarray] = None
    floored: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        h = _as_grid(self.horizons, "horizon")
        d = _as_grid(self.deltas, "delta")
        if np.any(d <= 0):
            raise ValueError("delta grid must be positive")
        eps = np.asarray(self.eps, dtype=float).reshape(h.size, d.size)
        n = np.asarray(self.sample_counts, dtype=np.int64).reshape(h.size, d.size)
        if np.any(~np.isfinite(eps)) or np.any(eps < 0) or np.any(eps > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "horizons", h)
        object.__setattr__(self, "deltas", d)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "sample_counts", n)
        for arr in (h, d, eps, n):
            arr.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, TradeoffTable):
            return NotImplemented
        return (np.array_equal(self.horizons, other.horizons)
                and np.array_equal(self.deltas, other.deltas)
                and np.array_equal(self.eps, other.eps)
                and np.array_equal(self.sample_counts, other.sample_counts))

    @property
    def is_monotone(self) -> bool:
        """Non-decreasing along horizons and non-increasing along deltas."""
        return bool(np.all(np.diff(self.eps, axis=0) >= 0) and np.all(np.diff(self.eps, axis=1) <= 0))

    @classmethod
    def from_function(cls, horizons, deltas, fn: Callable, n: int = 0) -> "TradeoffTable":
        """Tabulate ``fn(horizon_ms, delta_pct)`` on the given grid."""
        h = np.asarray(horizons, dtype=float)
        d = np.asarray(deltas, dtype=float)
        hh, dd = np.meshgrid(h, d, indexing="ij")
        eps = np.clip(np.vectorize(fn, otypes=[float])(hh, dd), 0.0, 1.0)
        return cls(h, d, eps, np.full(eps.shape, n, dtype=np.int64))


def _bracket(grid, x):
    """Lower index and fractional offset for each query, grid clamped."""
    if grid.size == 1:
        return np.zeros(np.shape(x), dtype=int), np.zeros(np.shape(x))
    i = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
    t = (x - grid[i]) / (grid[i + 1] - grid[i])
    return i, np.clip(t, 0.0, 1.0)


def table_lookup(table: TradeoffTable, horizon, delta, strict: bool = False):
    """Interpolated f_p at ``horizon`` ms and ``delta`` percent.

    Bilinear in (horizon, log10 delta). Out-of-grid queries clamp to the
    edge with a :class:`TableClampWarning`, or raise
    :class:`TableCoverageError` when ``strict``.
    """
    h = np.asarray(horizon, dtype=float)
    d = np.asarray(delta, dtype=float)
    if np.any(d <= 0):
        raise ValueError("delta must be positive")
    h, d = np.broadcast_arrays(h, d)
    hg, dg = table.horizons, table.deltas
    outside = (h < hg[0]) | (h > hg[-1]) | (d < dg[0]) | (d > dg[-1])
    if np.any(outside):
        bad = (float(h[outside].flat[0]), float(d[outside].flat[0]))
        msg = (f"query (horizon={bad[0]:g} ms, delta={bad[1]:g}%) outside grid "
               f"[{hg[0]:g}, {hg[-1]:g}] ms x [{dg[0]:g}, {dg[-1]:g}]%")
        if strict:
            raise TableCoverageError(msg)
        warnings.warn(msg + "; clamped to edge", TableClampWarning, stacklevel=2)
    hc = np.clip(h, hg[0], hg[-1])
    ld = np.log10(np.clip(d, dg[0], dg[-1]))
    i, th = _bracket(hg, hc)
    j, td = _bracket(np.log10(dg), ld)
    i1 = np.minimum(i + 1, hg.size - 1)
    j1 = np.minimum(j + 1, dg.size - 1)
    e = table.eps
    out = ((1 - th) * (1 - td) * e[i, j] + th * (1 - td) * e[i1, j]
           + (1 - th) * td * e[i, j1] + th * td * e[i1, j1])
    return float(out) if np.ndim(out) == 0 else out


def project_monotone(eps, weights=None):
    """Project a matrix onto non-decreasing rows-axis / non-increasing columns-axis.

    Weighted isotonic regression along horizons for every delta, then along
    deltas for every horizon. With equal weights per column the second pass
    keeps the first pass's ordering, so the result satisfies both
    constraints, and each cell stays within the range of the cells it is
    comparable with.
    """
    eps = np.asarray(eps, dtype=float)
    w = np.ones_like(eps) if weights is None else np.asarray(weights, dtype=float)
    out = eps.copy()
    # one round suffices for equal weights; unequal weights may need more
    for _ in range(100):
        for j in range(out.shape[1]):
            out[:, j] = isotonic_regression(out[:, j], weights=w[:, j], increasing=True).x
        for i in range(out.shape[0]):
            out[i, :] = isotonic_regression(out[i, :], weights=w[i, :], increasing=False).x
        if np.all(np.diff(out, axis=0) >= 0):
            break
    return np.clip(out, 0.0, 1.0)


# --------------------------------------------------------------------------
# CSV I/O
# --------------------------------------------------------------------------

def dumps(table: TradeoffTable, comment: Optional[str] = None) -> str:
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    buf.write(",".join(HEADER) + "\n")
    for i, h in enumerate(table.horizons):
        for j, d in enumerate(table.deltas):
            buf.write(f"{float(h)!r},{float(d)!r},{table.eps[i, j]:.16e},{int(table.sample_counts[i, j])}\n")
    return buf.getvalue()


def save(table: TradeoffTable, path, comment: Optional[str] = None) -> None:
    """Write ``table`` as CSV (header ``horizon_ms,delta_pct,eps_p,n``)."""
    Path(path).write_text(dumps(table, comment))


def loads(text: str, strict: bool = True) -> TradeoffTable:
    rows = []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if not header_seen:
            if [f.strip() for f in fields] != HEADER:
                raise TableFormatError(f"expected header {','.join(HEADER)!r}", lineno, 1)
            header_seen = True
            continue
        if len(fields) != 4:
            raise TableFormatError(f"expected 4 fields, found {len(fields)}", lineno, min(len(fields), 4) + 1)
        parsed = []
        for col, raw in enumerate(fields, start=1):
            try:
                parsed.append(int(raw) if col == 4 else float(raw))
            except ValueError:
                raise TableFormatError(f"cannot parse {raw!r}", lineno, col) from None
        if not 0.0 <= parsed[2] <= 1.0:
            raise TableFormatError(f"probability {parsed[2]!r} outside [0, 1]", lineno, 3)
        rows.append((lineno, *parsed))
    if not header_seen:
        raise TableFormatError("missing header")
    if not rows:
        raise TableFormatError("table has no rows")

    horizons = sorted({r[1] for r in rows})
    deltas = sorted({r[2] for r in rows})
    hi = {h: k for k, h in enumerate(horizons)}
    di = {d: k for k, d in enumerate(deltas)}
    eps = np.full((len(horizons), len(deltas)), np.nan)
    n = np.zeros_like(eps, dtype=np.int64)
    expected = [(h, d) for h in horizons for d in deltas]
    for k, (lineno, h, d, p, cnt) in enumerate(rows):
        if k >= len(expected) or (h, d) != expected[k]:
            raise TableFormatError("rows must be row-major (horizon outer, delta inner) with no duplicates",
                                   lineno, 1)
        eps[hi[h], di[d]] = p
        n[hi[h], di[d]] = cnt
    if len(rows) != len(expected):
        raise TableFormatError(f"expected {len(expected)} rows for a full grid, found {len(rows)}")
    table = TradeoffTable(np.array(horizons), np.array(deltas), eps, n)
    if not table.is_monotone:
        msg = "table is not monotone (non-decreasing in horizon, non-increasing in delta)"
        if strict:
            raise TableFormatError(msg)
        warnings.warn(msg, UserWarning, stacklevel=2)
    return table


def load(path, strict: bool = True) -> TradeoffTable:
    """Read a table written by :func:`save`. Comment lines start with ``#``."""
    return loads(Path(path).read_text(), strict=strict)
