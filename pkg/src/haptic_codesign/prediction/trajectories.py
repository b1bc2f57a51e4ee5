"""Seeded synthetic teleoperation trajectories sampled at 1 kHz.

Each sequence is an ``(length, 2)`` array of ``[position, velocity]``.
Every sequence draws from its own substream of the dataset seed, so
sequences can be generated independently and in any order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.signal import lfilter

SAMPLE_RATE = 1000.0  # Hz


@dataclass(frozen=True)
class OUProcess:
    """Mean-reverting (Ornstein-Uhlenbeck) velocity integrated to position.

    theta is the reversion rate (1/s) and sigma the velocity diffusion
    (units/s per sqrt(s)). ``v0=None`` draws the initial velocity from the
    stationary law.
    """

    theta: float = 20.0
    sigma: float = 2.0
    v0: float | None = None
    q0_low: float = 0.5
    q0_high: float = 1.5

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("OU theta must be positive")
        if self.sigma < 0:
            raise ValueError("OU sigma must be non-negative")
        if self.q0_high < self.q0_low:
            raise ValueError("q0_high must be >= q0_low")

    def velocity_autocorrelation(self, lag_slots):
        return np.exp(-self.theta * np.asarray(lag_slots, dtype=float) / SAMPLE_RATE)

    def sample(self, rng: np.random.Generator, length: int) -> np.ndarray:
        dt = 1.0 / SAMPLE_RATE
        a = np.exp(-self.theta * dt)
        s = self.sigma * np.sqrt((1.0 - a * a) / (2.0 * self.theta))
        stat_sd = self.sigma / np.sqrt(2.0 * self.theta)
        v0 = rng.normal(0.0, stat_sd) if self.v0 is None else self.v0
        q0 = rng.uniform(self.q0_low, self.q0_high)
        noise = rng.standard_normal(length - 1) * s
        v = np.empty(length)
        v[0] = v0
        # AR(1) recursion v[t] = a v[t-1] + noise[t-1] as a linear filter
        v[1:], _ = lfilter([1.0], [1.0, -a], noise, zi=[a * v0])
        q = np.empty(length)
        q[0] = q0
        q[1:] = q0 + np.cumsum(v[:-1]) * dt
        return np.column_stack([q, v])


@dataclass(frozen=True)
class SinusoidMix:
    """Sum of sinusoids with random amplitude, phase and frequency below ``f_max`` Hz."""

    components: int = 3
    f_min: float = 0.2
    f_max: float = 2.0
    amp_low: float = 0.05
    amp_high: float = 0.3
    offset: float = 1.0

    def __post_init__(self):
        if self.components < 1:
            raise ValueError("need at least one sinusoid")
        if not 0 < self.f_min < self.f_max < 10.0:
            raise ValueError("frequencies must satisfy 0 < f_min < f_max < 10 Hz")
        if not 0 <= self.amp_low <= self.amp_high:
            raise ValueError("invalid amplitude range")

    def sample(self, rng: np.random.Generator, length: int) -> np.ndarray:
        t = np.arange(length) / SAMPLE_RATE
        amp = rng.uniform(self.amp_low, self.amp_high, self.components)
        freq = rng.uniform(self.f_min, self.f_max, self.components)
        phase = rng.uniform(0.0, 2 * np.pi, self.components)
        w = 2 * np.pi * freq
        arg = np.outer(t, w) + phase
        q = self.offset + np.sin(arg) @ amp
        v = np.cos(arg) @ (amp * w)
        return np.column_stack([q, v])


PROCESSES = {"ou": OUProcess, "sinusoid_mix": SinusoidMix}


def _fingerprint(seq: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(seq).tobytes()).hexdigest()


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """Position/velocity sequences sampled at 1 kHz.

    ``range_norm`` is the empirical position range across all sequences
    (1.0 for a constant dataset); JND thresholds in percent refer to it.
    """

    sequences: tuple
    seed: int | None = None
    sample_rate: float = SAMPLE_RATE
    range_norm: float = 1.0

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError("sample_rate is fixed at 1000 Hz")
        if not self.range_norm > 0:
            raise ValueError("range_norm must be positive")
        seqs = tuple(np.asarray(s, dtype=float) for s in self.sequences)
        for s in seqs:
            if s.ndim != 2 or s.shape[1] != 2:
                raise ValueError("each sequence must have shape (length, 2)")
            s.setflags(write=False)
        object.__setattr__(self, "sequences", seqs)

    def __len__(self):
        return len(self.sequences)

    def __eq__(self, other):
        if not isinstance(other, TrajectoryDataset):
            return NotImplemented
        return (self.range_norm == other.range_norm and len(self) == len(other)
                and all(np.array_equal(a, b) for a, b in zip(self.sequences, other.sequences)))

    @classmethod
    def from_positions(cls, positions: Sequence[np.ndarray], range_norm: float | None = None,
                       seed: int | None = None) -> "TrajectoryDataset":
        """Build a dataset from position series; velocity from first differences."""
        seqs = []
        for q in positions:
            q = np.asarray(q, dtype=float)
            v = np.empty_like(q)
            v[:-1] = np.diff(q) * SAMPLE_RATE
            v[-1] = v[-2] if q.size > 1 else 0.0
            seqs.append(np.column_stack([q, v]))
        if range_norm is None:
            range_norm = _position_range(seqs)
        return cls(tuple(seqs), seed=seed, range_norm=range_norm)

    def positions(self) -> List[np.ndarray]:
        return [s[:, 0] for s in self.sequences]

    def subset(self, indices) -> "TrajectoryDataset":
        """Sequences at ``indices``; keeps this dataset's ``range_norm``."""
        return TrajectoryDataset(tuple(self.sequences[i] for i in indices), seed=self.seed,
                                 range_norm=self.range_norm)

    def split(self, train_fraction: float = 0.8):
        """Split by sequence: the first ``train_fraction`` for training, the rest held out."""
        n_train = int(round(train_fraction * len(self)))
        n_train = min(max(n_train, 1), len(self) - 1) if len(self) > 1 else len(self)
        return self.subset(range(n_train)), self.subset(range(n_train, len(self)))

    def fingerprints(self) -> frozenset:
        return frozenset(_fingerprint(s) for s in self.sequences)


def _position_range(seqs) -> float:
    lo = min(float(s[:, 0].min()) for s in seqs)
    hi = max(float(s[:, 0].max()) for s in seqs)
    return hi - lo if hi > lo else 1.0


def generate_trajectories(count: int, length: int, seed: int, process: str = "ou",
                          params=None) -> TrajectoryDataset:
    """Generate ``count`` sequences of ``length`` slots.

    Args:
        count: number of sequences (>= 1).
        length: slots per sequence (>= 1000, i.e. one second).
        seed: root seed; sequence ``k`` uses the ``k``-th spawned substream.
        process: ``"ou"`` or ``"sinusoid_mix"``.
        params: an :class:`OUProcess` or :class:`SinusoidMix`; defaults per process.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if length < 1000:
        raise ValueError("length must be >= 1000 slots")
    if process not in PROCESSES:
        raise ValueError(f"unknown process {process!r}; choose from {sorted(PROCESSES)}")
    if params is None:
        params = PROCESSES[process]()
    elif not isinstance(params, PROCESSES[process]):
        raise ValueError(f"params of type {type(params).__name__} do not match process {process!r}")
    streams = np.random.SeedSequence(seed).spawn(count)
    seqs = [params.sample(np.random.default_rng(ss), length) for ss in streams]
    return TrajectoryDataset(tuple(seqs), seed=seed, range_norm=_position_range(seqs))
