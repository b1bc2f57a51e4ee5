"""Reference parameter sets and a stipulated prediction-error table.

``REFERENCE_LINK`` and the two task classes carry the reference link and
task values. Packets are ``PACKET_BITS`` long so that the per-TTI payload
``b`` and the packet arrival rate share a unit in the queue law.
"""

from __future__ import annotations

import numpy as np

from .comm_model import FixedGain, LinkParams
from .prediction.tradeoff import TradeoffTable
from .reliability import Criticality, TaskSpec

PACKET_BITS = 1000.0

REFERENCE_LINK = LinkParams(
    tx_power=23.0,
    noise_psd=-144.0,
    distance=0.2,
    backhaul_delay=10.0,
    tx_duration=0.5,
    coherence_time=10.0,
    horizon_cap=50.0,
    fading_mode=FixedGain(1.0),
)

CRITICAL_TASK = TaskSpec(delay_bound=20.0, reliability_target=1e-5, jnd_threshold=0.1,
                         arrival_rate=100.0, criticality=Criticality.CRITICAL, packet_bits=PACKET_BITS)
NON_CRITICAL_TASK = TaskSpec(delay_bound=20.0, reliability_target=1e-5, jnd_threshold=1.0,
                             arrival_rate=100.0, criticality=Criticality.NON_CRITICAL,
                             packet_bits=PACKET_BITS)

# benchmark single-user optima for the two task classes (kHz, bits)
BENCHMARK_OPTIMA = {
    Criticality.CRITICAL: (145.24, 268),
    Criticality.NON_CRITICAL: (32.19, 92),
}

STIPULATED_HORIZONS = np.array([1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 75.0, 100.0])
STIPULATED_DELTAS = np.array([0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0])


def stipulated_fp(horizon_ms, delta_pct, scale=1e-3, power=1.5):
    """Power law ``scale * (T/10 ms)^power / delta``, capped at 1."""
    return np.minimum(1.0, scale * (np.asarray(horizon_ms) / 10.0) ** power / np.asarray(delta_pct))


def stipulated_table(scale: float = 1e-3, power: float = 1.5) -> TradeoffTable:
    """Monotone reference table used where no trained predictor is available."""
    return TradeoffTable.from_function(STIPULATED_HORIZONS, STIPULATED_DELTAS,
                                       lambda h, d: stipulated_fp(h, d, scale, power))
