"""Command-line front end emitting plot-ready CSV and JSON.

Exit codes: 0 success, 1 configuration error, 2 infeasible target.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

from . import config as C
from .optimizer import (TASK_AGNOSTIC, TASK_ORIENTED, admit_prefix, bandwidth_savings,
                        inner_opt_bits, outer_opt_bandwidth)
from .prediction import (OUProcess, SinusoidMix, estimate_error_prob, fit_predictor,
                         generate_trajectories, tradeoff)
from .reliability import Criticality, overall_error_bound
from .simulator import SimScenario, compare_placements

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2


class Infeasible(Exception):
    pass


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):
        return _fmt(v.item())
    return str(v)


def _meta_line(cfg: Mapping[str, Any]) -> str:
    return f"# config_sha256={C.config_hash(cfg)} seed={cfg.get('seed')}"


def write_csv(path: Path, cfg: Mapping[str, Any], header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Plot data as CSV, or as JSON records when ``format = json``."""
    rows = [list(r) for r in rows]
    if cfg.get("format") == "json":
        records = [{h: (v.item() if hasattr(v, "item") else v) for h, v in zip(header, r)} for r in rows]
        write_json(path.with_suffix(".json"), cfg, {"columns": list(header), "rows": records})
        return
    lines = [_meta_line(cfg), ",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, cfg: Mapping[str, Any], payload: Dict[str, Any]) -> None:
    doc = {"config_sha256": C.config_hash(cfg), "seed": cfg.get("seed"), **payload}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _outdir(cfg) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _classes(cfg) -> List[str]:
    try:
        return [Criticality(c).value for c in cfg["classes"]]
    except ValueError as exc:
        raise C.ConfigError(f"classes: {exc}") from None


def _check_coverage(cfg, table, link, tasks) -> None:
    if not cfg["table_strict"]:
        return
    for t in tasks:
        for h in (link.coherence_time, link.horizon_cap):
            try:
                tradeoff.table_lookup(table, h, t.jnd_threshold, strict=True)
            except tradeoff.TableCoverageError as exc:
                raise C.ConfigError(f"table_path: {exc}") from None


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_tradeoff(cfg) -> int:
    out = _outdir(cfg)
    if cfg["process"] == "ou":
        params = C._checked("process", lambda: OUProcess(theta=cfg["ou_theta"], sigma=cfg["ou_sigma"]))
    elif cfg["process"] == "sinusoid_mix":
        params = SinusoidMix()
    else:
        raise C.ConfigError(f"process: unknown process {cfg['process']!r}")

    def build():
        data = generate_trajectories(cfg["n_sequences"], cfg["length_slots"], cfg["seed"], cfg["process"], params)
        model = fit_predictor(data, cfg["history_len"], cfg["horizon_len"], cfg["ar_order"],
                              train_fraction=cfg["train_fraction"])
        _, held_out = data.split(cfg["train_fraction"])
        table = estimate_error_prob(model, held_out, cfg["horizons_ms"], cfg["deltas_pct"],
                                    stride=cfg["window_stride"])
        return model, table

    model, table = C._checked("tradeoff", build)
    tradeoff.save(table, out / "table.csv", comment=_meta_line(cfg)[2:])
    header = ["horizon_ms"] + [f"eps_p_delta_{d:g}" for d in table.deltas]
    rows = [[float(h)] + [float(e) for e in table.eps[i]] for i, h in enumerate(table.horizons)]
    write_csv(out / "fig4.csv", cfg, header, rows)
    write_json(out / "predictor.json", cfg, {
        "order": model.order, "coefficients": [float(c) for c in model.coefficients],
        "intercept": model.intercept, "train_rrmse_pct": model.train_rrmse,
        "val_rrmse_pct": model.val_rrmse, "windows_per_cell": int(table.sample_counts.flat[0]),
        "floored_cells": int(table.floored.sum()),
    })
    return EXIT_OK


def cmd_optimize(cfg) -> int:
    out = _outdir(cfg)
    link, table, search = C.link_from(cfg), C.table_from(cfg), C.search_from(cfg)
    tasks = {c: C.task_from(cfg, c) for c in _classes(cfg)}
    _check_coverage(cfg, table, link, tasks.values())
    results = {c: outer_opt_bandwidth(t, link, table, search) for c, t in tasks.items()}
    write_json(out / "optimize.json", cfg, {"results": {c: r.as_dict() for c, r in results.items()}})
    return EXIT_OK if all(r.feasible for r in results.values()) else EXIT_INFEASIBLE


def user_classes(n: int, ratio: float) -> List[Criticality]:
    """Deterministic interleaving with ``floor(k * ratio)`` critical users among the first ``k``."""
    out = []
    for i in range(n):
        crit = math.floor((i + 1) * ratio + 1e-9) > math.floor(i * ratio + 1e-9)
        out.append(Criticality.CRITICAL if crit else Criticality.NON_CRITICAL)
    return out


def _class_bandwidths(cfg) -> Dict[Criticality, float]:
    injected = {Criticality.CRITICAL: cfg["w_critical_khz"], Criticality.NON_CRITICAL: cfg["w_non_critical_khz"]}
    if all(v is not None for v in injected.values()):
        return injected
    link, table, search = C.link_from(cfg), C.table_from(cfg), C.search_from(cfg)
    out = {}
    for crit, w in injected.items():
        if w is None:
            task = C.task_from(cfg, crit.value)
            _check_coverage(cfg, table, link, [task])
            res = outer_opt_bandwidth(task, link, table, search)
            if not res.feasible:
                raise Infeasible(f"{crit.value} task is infeasible within w_max_khz")
            w = res.bandwidth_opt
        out[crit] = float(w)
    return out


def cmd_allocate(cfg) -> int:
    out = _outdir(cfg)
    r = cfg["critical_ratio"]
    if not 0.0 <= r <= 1.0:
        raise C.ConfigError("critical_ratio: must lie in [0, 1]")
    for q in cfg["ratio_grid"]:
        if not 0.0 <= q <= 1.0:
            raise C.ConfigError("ratio_grid: ratios must lie in [0, 1]")
    try:
        wb = _class_bandwidths(cfg)
    except Infeasible as exc:
        write_json(out / "allocate.json", cfg, {"feasible": False, "reason": str(exc)})
        return EXIT_INFEASIBLE
    worst = max(wb.values())
    users = user_classes(cfg["n_users_max"], r)
    rows = []
    to_total = ag_total = 0.0
    for n, c in enumerate(users, start=1):
        to_total += wb[c]
        ag_total += worst
        rows.append([n, to_total, ag_total, 100.0 * (1.0 - to_total / ag_total)])
    write_csv(out / "fig10a.csv", cfg, ["n_users", "total_bw_task_oriented_khz", "total_bw_task_agnostic_khz",
                                        "savings_pct"], rows)
    # enough users to exhaust the largest budget in either mode
    n_pool = int(max(cfg["alloc_w_max_khz"]) // min(wb.values())) + 1
    pool = user_classes(n_pool, r)
    rows = []
    for w_max in cfg["alloc_w_max_khz"]:
        n_to, _ = admit_prefix([wb[c] for c in pool], w_max)
        n_ag, _ = admit_prefix([worst] * n_pool, w_max)
        rows.append([float(w_max), n_to, n_ag])
    write_csv(out / "fig10b.csv", cfg, ["w_max_khz", "served_task_oriented", "served_task_agnostic"], rows)
    rows = [[float(q), bandwidth_savings(q, wb[Criticality.CRITICAL], wb[Criticality.NON_CRITICAL])]
            for q in cfg["ratio_grid"]]
    write_csv(out / "savings.csv", cfg, ["critical_ratio", "savings_pct"], rows)
    write_json(out / "allocate.json", cfg, {
        "feasible": True,
        "class_bandwidth_khz": {k.value: v for k, v in wb.items()},
        "savings_pct": bandwidth_savings(r, wb[Criticality.CRITICAL], wb[Criticality.NON_CRITICAL]),
        "modes": [TASK_ORIENTED, TASK_AGNOSTIC],
    })
    return EXIT_OK


def cmd_simulate(cfg) -> int:
    out = _outdir(cfg)
    link, table = C.link_from(cfg), C.table_from(cfg)
    task = C.task_from(cfg, cfg["task_class"])
    _check_coverage(cfg, table, link, [task])
    w, b = cfg["w_khz"], cfg["bits"]
    if w is None or b is None:
        res = outer_opt_bandwidth(task, link, table, C.search_from(cfg))
        if not res.feasible:
            write_json(out / "report.json", cfg, {"feasible": False, "optimizer": res.as_dict()})
            return EXIT_INFEASIBLE
        w = res.bandwidth_opt if w is None else w
        b = res.bits_opt if b is None else b

    def scenario(loss):
        return C._checked("scenario", lambda: SimScenario(
            task, link, float(w), int(b), table, placement=cfg["placement"], n_slots=cfg["n_slots"],
            seed=cfg["seed"], loss_override=loss))

    rx, tx = compare_placements(scenario(cfg["loss_override"]))
    write_json(out / "report.json", cfg, {"feasible": True, "bandwidth_khz": float(w), "bits": int(b),
                                          "placement": cfg["placement"],
                                          "receiver": rx.as_dict(), "transmitter": tx.as_dict()})
    rows = []
    for loss in cfg["loss_sweep"]:
        r, t = compare_placements(scenario(loss))
        rows.append([float(loss), r.empirical_overall_error, r.ci_half_width,
                     t.empirical_overall_error, t.ci_half_width, r.n_packets])
    write_csv(out / "fig9.csv", cfg, ["loss_prob", "eps_receiver", "ci_receiver", "eps_transmitter",
                                      "ci_transmitter", "n_packets"], rows)
    return EXIT_OK


def cmd_sweep(cfg) -> int:
    out = _outdir(cfg)
    link, table, search = C.link_from(cfg), C.table_from(cfg), C.search_from(cfg)
    classes = _classes(cfg)
    tasks = {c: C.task_from(cfg, c) for c in classes}
    _check_coverage(cfg, table, link, tasks.values())
    w, b = cfg["w_khz"], cfg["bits"]

    rows = []
    for d in cfg["dmax_grid_ms"]:
        row = [float(d)]
        for c in classes:
            t = C._checked("dmax_grid_ms", lambda: replace(tasks[c], delay_bound=d))
            row.append(overall_error_bound(t, link, table, w, b).total)
        rows.append(row)
    write_csv(out / "fig6.csv", cfg, ["delay_bound_ms"] + [f"total_{c}" for c in classes], rows)

    cols = ["eps_d", "fq_dth", "fq_dth_tth", "term1", "term2", "term3", "total"]
    rows = []
    for c in classes:
        for bits in cfg["b_grid_bits"]:
            e = overall_error_bound(tasks[c], link, table, w, bits)
            rows.append([c, float(bits)] + [getattr(e, k) for k in cols])
    write_csv(out / "fig7.csv", cfg, ["class", "bits"] + cols, rows)

    rows = []
    for c in classes:
        for wk in cfg["w_grid_khz"]:
            bits, _ = inner_opt_bits(tasks[c], link, table, wk, search)
            e = overall_error_bound(tasks[c], link, table, wk, bits)
            rows.append([c, float(wk), bits] + [getattr(e, k) for k in cols])
    write_csv(out / "fig8.csv", cfg, ["class", "w_khz", "bits_opt"] + cols, rows)
    return EXIT_OK


COMMANDS = {
    "tradeoff": (cmd_tradeoff, "estimate the prediction-error table from synthetic trajectories"),
    "optimize": (cmd_optimize, "minimum bandwidth and payload per task class"),
    "allocate": (cmd_allocate, "multi-user admission, task-oriented vs task-agnostic"),
    "simulate": (cmd_simulate, "Monte Carlo check of the bound and predictor placement"),
    "sweep": (cmd_sweep, "error components versus delay bound, payload and bandwidth"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="haptic-codesign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value file; its values override flags")
        for key, spec in C.COMMAND_KEYS[name].items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="VALUE",
                           help=f"{spec.help} (default: {spec.default})")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        file_values = {}
        if args.config:
            path = Path(args.config)
            try:
                text = path.read_text()
            except OSError as exc:
                raise C.ConfigError(f"cannot read config: {exc}") from None
            file_values = C.parse_text(text, str(path))
        cfg = C.resolve(args.command, file_values, flags)
        fmt = cfg.get("format", "csv")
        if fmt not in ("csv", "json"):
            raise C.ConfigError(f"format: expected csv or json, got {fmt!r}")
        return COMMANDS[args.command][0](cfg)
    except C.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
