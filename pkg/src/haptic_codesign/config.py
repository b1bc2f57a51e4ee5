"""Flat ``key = value`` run configuration.

Every key carries its unit in its name. Command-line flags mirror the keys
(``delay_bound_ms`` becomes ``--delay-bound-ms``); values read from a
config file override flags. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional

from .comm_model import FixedGain, LinkParams, RayleighAverage
from .optimizer import SearchConfig
from .prediction import tradeoff
from .reliability import Criticality, TaskSpec


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> List[float]:
    items = [s for s in str(text).replace(" ", "").split(",") if s]
    if not items:
        raise ValueError("empty list")
    return [float(s) for s in items]


def _str_list(text: str) -> List[str]:
    return [s.strip() for s in str(text).split(",") if s.strip()]


def _opt_float(text: str) -> Optional[float]:
    return None if str(text).strip().lower() in ("", "none") else float(text)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    help: str


LINK_KEYS = {
    "tx_power_dbm": Key(float, 23.0, "transmit power"),
    "noise_psd_dbm_hz": Key(float, -144.0, "single-sided noise spectral density"),
    "distance_km": Key(float, 0.2, "transmitter-receiver distance"),
    "backhaul_delay_ms": Key(float, 10.0, "core network and backhaul delay"),
    "tx_duration_ms": Key(float, 0.5, "TTI / transmission delay"),
    "coherence_time_ms": Key(float, 10.0, "channel coherence time"),
    "horizon_cap_ms": Key(float, 50.0, "prediction horizon threshold"),
    "fading": Key(str, "fixed", "fixed | rayleigh"),
    "fading_gain": Key(float, 1.0, "small-scale gain for fixed fading"),
    "quadrature_nodes": Key(int, 128, "Gauss-Laguerre nodes for rayleigh fading"),
}

TASK_KEYS = {
    "delay_bound_ms": Key(float, 20.0, "delay bound D^max"),
    "reliability_target": Key(float, 1e-5, "target overall error"),
    "critical_jnd_pct": Key(float, 0.1, "JND threshold of critical tasks"),
    "non_critical_jnd_pct": Key(float, 1.0, "JND threshold of non-critical tasks"),
    "arrival_rate_pps": Key(float, 100.0, "packet arrival rate"),
    "packet_bits": Key(float, 1000.0, "bits per arriving packet"),
    "classes": Key(_str_list, ["critical", "non_critical"], "task classes to evaluate"),
}

TABLE_KEYS = {
    "table_path": Key(str, "", "tradeoff table CSV; empty uses the stipulated table"),
    "table_scale": Key(float, 1e-3, "stipulated table: f_p at 10 ms and 1 %"),
    "table_power": Key(float, 1.5, "stipulated table: horizon exponent"),
    "table_strict": Key(_bool, False, "raise instead of clamping out-of-grid lookups"),
}

SEARCH_KEYS = {
    "w_min_khz": Key(float, 2.0, "lower end of the bandwidth search"),
    "w_max_khz": Key(float, 1000.0, "upper end of the bandwidth search"),
    "b_min_bits": Key(int, 1, "smallest payload"),
    "b_max_bits": Key(int, 2000, "largest payload"),
    "b_step_bits": Key(int, 1, "payload grid step"),
    "tolerance_rule": Key(str, "paper", "paper | absolute"),
    "tolerance": Key(float, 0.0, "absolute tolerance"),
    "max_iters": Key(int, 64, "bisection iteration cap"),
    "verify_unimodal": Key(_bool, True, "scan the full payload grid at each probe"),
}

OUTPUT_KEYS = {
    "output_dir": Key(str, ".", "directory for emitted files"),
    "format": Key(str, "csv", "csv | json"),
}

TRADEOFF_KEYS = {
    "seed": Key(int, None, "root seed"),
    "n_sequences": Key(int, 50, "number of trajectories"),
    "length_slots": Key(int, 20000, "samples per trajectory (1 kHz)"),
    "process": Key(str, "ou", "ou | sinusoid_mix"),
    "ou_theta": Key(float, 20.0, "OU reversion rate (1/s)"),
    "ou_sigma": Key(float, 2.0, "OU velocity diffusion"),
    "history_len": Key(int, 500, "history window (slots)"),
    "horizon_len": Key(int, 100, "rollout length (slots)"),
    "ar_order": Key(int, 2, "autoregressive order"),
    "window_stride": Key(int, 5, "stride between evaluation windows"),
    "train_fraction": Key(float, 0.8, "share of sequences used for fitting"),
    "horizons_ms": Key(_float_list, [1, 2, 5, 10, 20, 30, 40, 50, 75, 100], "table horizons"),
    "deltas_pct": Key(_float_list, [0.05, 0.1, 0.2, 0.5, 1, 2, 5], "table JND thresholds"),
}

ALLOCATE_KEYS = {
    "w_critical_khz": Key(_opt_float, None, "inject the critical-class optimum"),
    "w_non_critical_khz": Key(_opt_float, None, "inject the non-critical-class optimum"),
    "critical_ratio": Key(float, 0.0, "share of critical tasks r"),
    "n_users_max": Key(int, 50, "users on the total-bandwidth curve"),
    "alloc_w_max_khz": Key(_float_list, [250, 500, 750, 1000, 1500, 2000], "budgets for the users curve"),
    "ratio_grid": Key(_float_list, [0, 0.25, 0.5, 0.75, 1], "ratios for the savings curve"),
}

SIMULATE_KEYS = {
    "seed": Key(int, None, "root seed"),
    "w_khz": Key(_opt_float, None, "bandwidth; empty uses the optimizer result"),
    "bits": Key(_opt_float, None, "payload; empty uses the optimizer result"),
    "n_slots": Key(int, 10 ** 6, "simulated TTIs"),
    "placement": Key(str, "receiver", "receiver | transmitter"),
    "loss_override": Key(_opt_float, None, "force the decoding-failure probability"),
    "loss_sweep": Key(_float_list, [1e-3, 3e-3, 1e-2, 3e-2, 1e-1], "loss levels for the placement curve"),
    "task_class": Key(str, "non_critical", "critical | non_critical"),
}

SWEEP_KEYS = {
    "w_khz": Key(float, 140.0, "bandwidth for the delay-bound and payload sweeps"),
    "bits": Key(int, 256, "payload for the delay-bound sweep"),
    "dmax_grid_ms": Key(_float_list, [5, 10, 10.5, 11, 12, 13, 14, 15, 17.5, 20, 22.5, 25, 30, 35, 40, 45, 50],
                        "delay bounds for the overall-error curve"),
    "b_grid_bits": Key(_float_list, [25, 50, 75, 100, 150, 200, 250, 300, 350, 400, 500], "payload sweep"),
    "w_grid_khz": Key(_float_list, [20, 40, 60, 80, 100, 120, 140, 160, 180, 200], "bandwidth sweep"),
}

_BASE = {**LINK_KEYS, **TASK_KEYS, **TABLE_KEYS, **OUTPUT_KEYS}
COMMAND_KEYS: Dict[str, Dict[str, Key]] = {
    "tradeoff": {**TRADEOFF_KEYS, **OUTPUT_KEYS},
    "optimize": {**_BASE, **SEARCH_KEYS},
    "allocate": {**_BASE, **SEARCH_KEYS, **ALLOCATE_KEYS},
    "simulate": {**_BASE, **SEARCH_KEYS, **SIMULATE_KEYS},
    "sweep": {**_BASE, **SEARCH_KEYS, **SWEEP_KEYS},
}


def parse_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Raw ``key = value`` pairs; ``#`` starts a comment."""
    out: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: missing key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def resolve(command: str, file_values: Mapping[str, str], flag_values: Mapping[str, Any]) -> Dict[str, Any]:
    """Merge defaults, flags and file values (file wins) and parse them."""
    schema = COMMAND_KEYS[command]
    unknown = sorted(set(file_values) - set(schema))
    if unknown:
        raise ConfigError(f"{command}: unknown key(s) {', '.join(unknown)}")
    cfg: Dict[str, Any] = {}
    for name, key in schema.items():
        if name in file_values:
            raw = file_values[name]
        elif flag_values.get(name) is not None:
            raw = flag_values[name]
        else:
            cfg[name] = key.default
            continue
        try:
            cfg[name] = key.parse(raw) if isinstance(raw, str) else raw
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{command}.{name}: {exc}") from None
    if "seed" in schema and cfg.get("seed") is None:
        raise ConfigError(f"{command}.seed: a seed is required")
    return cfg


def config_hash(cfg: Mapping[str, Any]) -> str:
    """SHA-256 of the resolved values; the output directory is left out."""
    canon = "\n".join(f"{k}={cfg[k]!r}" for k in sorted(cfg) if k != "output_dir")
    return hashlib.sha256(canon.encode()).hexdigest()


# --------------------------------------------------------------------------
# Builders
# --------------------------------------------------------------------------

def _checked(name: str, build: Callable[[], Any]):
    try:
        return build()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def link_from(cfg: Mapping[str, Any]) -> LinkParams:
    def build():
        if cfg["fading"] == "fixed":
            mode = FixedGain(cfg["fading_gain"])
        elif cfg["fading"] == "rayleigh":
            mode = RayleighAverage(cfg["quadrature_nodes"])
        else:
            raise ValueError(f"fading must be 'fixed' or 'rayleigh', got {cfg['fading']!r}")
        return LinkParams(
            tx_power=cfg["tx_power_dbm"], noise_psd=cfg["noise_psd_dbm_hz"], distance=cfg["distance_km"],
            backhaul_delay=cfg["backhaul_delay_ms"], tx_duration=cfg["tx_duration_ms"],
            coherence_time=cfg["coherence_time_ms"], horizon_cap=cfg["horizon_cap_ms"], fading_mode=mode)
    return _checked("link", build)


def task_from(cfg: Mapping[str, Any], task_class: str) -> TaskSpec:
    def build():
        crit = Criticality(task_class)
        jnd = cfg["critical_jnd_pct"] if crit is Criticality.CRITICAL else cfg["non_critical_jnd_pct"]
        return TaskSpec(delay_bound=cfg["delay_bound_ms"], reliability_target=cfg["reliability_target"],
                        jnd_threshold=jnd, arrival_rate=cfg["arrival_rate_pps"], criticality=crit,
                        packet_bits=cfg["packet_bits"])
    return _checked(f"task[{task_class}]", build)


def table_from(cfg: Mapping[str, Any]):
    from .presets import stipulated_table

    if cfg["table_path"]:
        path = Path(cfg["table_path"])
        try:
            return tradeoff.load(path)
        except OSError as exc:
            raise ConfigError(f"table_path: {exc}") from None
        except tradeoff.TableFormatError as exc:
            raise ConfigError(f"table_path: {path}: {exc}") from None
    return _checked("table", lambda: stipulated_table(cfg["table_scale"], cfg["table_power"]))


def search_from(cfg: Mapping[str, Any]) -> SearchConfig:
    return _checked("search", lambda: SearchConfig(
        w_range=(cfg["w_min_khz"], cfg["w_max_khz"]), b_range=(cfg["b_min_bits"], cfg["b_max_bits"]),
        tolerance_rule=cfg["tolerance_rule"], tolerance=cfg["tolerance"], max_iters=cfg["max_iters"],
        b_grid_resolution=cfg["b_step_bits"], verify_unimodal=cfg["verify_unimodal"]))
