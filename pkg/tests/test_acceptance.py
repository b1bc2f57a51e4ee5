"""Acceptance gate: one verdict line per criterion, shown in the terminal summary."""

import math
from dataclasses import replace

import numpy as np
import pytest

from acceptance_log import criterion
from oracles import brute_force_counts
from haptic_codesign.cli import main
from haptic_codesign.comm_model import (LinkParams, QueueLaw, capacity_bits, decoding_error_at,
                                        inverse_q, lambert_w_m1, q_function, queuing_violation,
                                        queuing_violation_slope)
from haptic_codesign.optimizer import (TASK_AGNOSTIC, TASK_ORIENTED, SearchConfig, allocate,
                                       bandwidth_savings, count_sign_changes, inner_opt_bits,
                                       outer_opt_bandwidth)
from haptic_codesign.prediction import (TrajectoryDataset, count_exceedances, estimate_error_prob,
                                        fit_predictor, generate_trajectories)
from haptic_codesign.presets import (CRITICAL_TASK, NON_CRITICAL_TASK, BENCHMARK_OPTIMA,
                                     REFERENCE_LINK, stipulated_table)
from haptic_codesign.reliability import Criticality, TaskSpec, overall_error_bound
from haptic_codesign.simulator import SimScenario, analytic_queue_tail, compare_placements

TASKS = (CRITICAL_TASK, NON_CRITICAL_TASK)
SEED = 20240601


def test_special_functions():
    with criterion("special functions: Lambert W_-1 residual, Q round trip", budget_s=1.0) as c:
        y = -np.logspace(math.log10(math.exp(-1)), -12, 201)[1:]
        x = lambert_w_m1(y)
        resid = float(np.max(np.abs(x * np.exp(x) - y) / np.abs(y)))
        p = np.logspace(-12, math.log10(0.5), 300)
        p = np.concatenate([p, 1 - p[p < 0.5]])
        trip = float(np.max(np.abs(q_function(inverse_q(p)) - p) / np.minimum(p, 1 - p)))
        c["notes"].append(f"max residual {resid:.1e}, max round-trip error {trip:.1e}")
        c["ok"] = resid <= 1e-12 and trip <= 1e-9
    assert c["ok"]


def _bandwidth_draws():
    rng = np.random.default_rng(SEED)
    return rng.uniform(*SearchConfig().w_range, 50)


def test_monotonicity_suite():
    link, table = REFERENCE_LINK, stipulated_table()
    cfg = SearchConfig()
    grid = cfg.b_grid()
    with criterion("monotonicity suite: decoding error and queue law in b, single turn in b below capacity, "
                   "min error in W", budget_s=30.0) as c:
        bad = []
        for w in _bandwidth_draws():
            eps = decoding_error_at(link, w, grid)
            if np.any(np.diff(eps) < 0):
                bad.append(f"decoding W={w:.2f}")
        for task in TASKS:
            b = grid[grid > task.arrival_rate * task.packet_bits * link.tx_duration / 1e3 * 1.01]
            law = QueueLaw(task.arrival_rate, b, link.tx_duration, task.packet_bits)
            kappa = max(task.delay_bound - link.backhaul_delay - link.tx_duration, 0.0)
            fq = queuing_violation(law, kappa)
            h = 1e-3
            fd = (queuing_violation(QueueLaw(task.arrival_rate, b + h, link.tx_duration, task.packet_bits), kappa)
                  - queuing_violation(QueueLaw(task.arrival_rate, b - h, link.tx_duration, task.packet_bits), kappa))
            resolved = fq > 1e-300
            if not (np.all(np.diff(fq[resolved]) < 0) and np.all(queuing_violation_slope(law, kappa) < 0)
                    and np.all(fd[resolved] < 0)):
                bad.append(f"queue {task.criticality.value}")
            for w in _bandwidth_draws():
                sub = grid[grid <= math.floor(capacity_bits(link, w))]
                if sub.size and count_sign_changes(overall_error_bound(task, link, table, w, sub).total) > 1:
                    bad.append(f"turns {task.criticality.value} W={w:.2f}")
            ws = np.linspace(20.0, 400.0, 50)
            best = np.array([inner_opt_bits(task, link, table, w, cfg)[1] for w in ws])
            if np.any(np.diff(best) > 0):
                bad.append(f"W-monotone {task.criticality.value}")
        c["ok"] = not bad
        c["notes"].append("violations: " + (", ".join(bad) if bad else "none"))
    assert c["ok"]


@pytest.mark.xfail(strict=True, reason="past the capacity point the decoding error saturates and the "
                                       "bound keeps falling by ~1e-10, a second turn in b")
def test_single_turn_on_full_grid():
    link, table = REFERENCE_LINK, stipulated_table()
    grid = SearchConfig().b_grid()
    with criterion("single turn in b on the full default grid [1, 2000]") as c:
        bad = []
        for task in TASKS:
            for w in _bandwidth_draws():
                if count_sign_changes(overall_error_bound(task, link, table, w, grid).total) > 1:
                    bad.append(f"{task.criticality.value} W={w:.1f}")
        c["ok"] = not bad
        c["notes"].append(f"{len(bad)}/100 draws with two turns" + (f" ({', '.join(bad)})" if bad else ""))
    assert c["ok"]


def _random_instance(rng):
    link = LinkParams(distance=rng.uniform(0.1, 0.4))
    task = TaskSpec(rng.uniform(12.0, 40.0), 10 ** rng.uniform(-6, -3), rng.choice([0.1, 0.2, 0.5, 1.0, 2.0]),
                    rng.uniform(50.0, 300.0), packet_bits=1000.0)
    return link, task


def test_optimizer_vs_exhaustive_grid():
    table = stipulated_table()
    rng = np.random.default_rng(SEED)
    with criterion("optimizer vs exhaustive 200x200 grid, 20 instances", budget_s=120.0) as c:
        bad = []
        for k in range(20):
            link, task = _random_instance(rng)
            # the optimizer searches the same 200-point payload grid as the oracle
            cfg = SearchConfig(w_range=(2.0, 400.0), b_range=(1, 1991), b_grid_resolution=10)
            w_grid = np.linspace(*cfg.w_range, 200)
            b_grid = cfg.b_grid()
            assert b_grid.size == 200
            dw, db = w_grid[1] - w_grid[0], b_grid[1] - b_grid[0]
            tol = cfg.tol(task.reliability_target)
            surface = overall_error_bound(task, link, table, w_grid[:, None], b_grid[None, :]).total
            ok_rows = np.nonzero(surface.min(axis=1) <= task.reliability_target + tol)[0]
            res = outer_opt_bandwidth(task, link, table, cfg)
            if ok_rows.size == 0:
                if res.feasible:
                    bad.append(f"#{k} grid infeasible, optimizer feasible")
                continue
            i = int(ok_rows[0])
            w_or, b_or = w_grid[i], b_grid[int(np.argmin(surface[i]))]
            within = (res.feasible and abs(res.bandwidth_opt - w_or) <= dw
                      and abs(res.bits_opt - b_or) <= db)
            stopped = res.breakdown.total <= task.reliability_target + tol
            bound = math.log2((cfg.w_range[1] - cfg.w_range[0]) * 1e3 / cfg.w_resolution_hz) + 2
            if not (within and stopped and res.iterations <= bound):
                bad.append(f"#{k} W*={res.bandwidth_opt:.2f}/{w_or:.2f} b*={res.bits_opt}/{b_or:.0f}")
        c["ok"] = not bad
        c["notes"].append("mismatches: " + (", ".join(bad) if bad else "none"))
    assert c["ok"]


def test_paper_numbers_with_injected_optima():
    w_c, _ = BENCHMARK_OPTIMA[Criticality.CRITICAL]
    w_n, _ = BENCHMARK_OPTIMA[Criticality.NON_CRITICAL]
    with criterion("benchmark optima injected: savings 77.8 +- 0.2 %, 31 vs 6 users") as c:
        s = bandwidth_savings(0.0, w_c, w_n)
        bw = {Criticality.CRITICAL: w_c, Criticality.NON_CRITICAL: w_n}
        users = [Criticality.NON_CRITICAL] * 64
        n_to = allocate(users, bw, 1000.0, TASK_ORIENTED).n_served
        n_ag = allocate(users, bw, 1000.0, TASK_AGNOSTIC).n_served
        c["notes"].append(f"savings {s:.3f} %, served {n_to} vs {n_ag}")
        c["ok"] = abs(s - 77.8) <= 0.2 and (n_to, n_ag) == (31, 6)
    assert c["ok"]


def test_delay_bound_curve_shape():
    link, table = REFERENCE_LINK, stipulated_table()
    with criterion("total error vs delay bound: flat, cliff, plateau", budget_s=10.0) as c:
        dmax = np.round(np.arange(5.0, 50.001, 0.1), 10)
        notes = []
        for task in TASKS:
            tot = np.array([overall_error_bound(replace(task, delay_bound=d), link, table, 140.0, 256).total
                            for d in dmax])
            flat = tot[dmax <= 10.5]
            cliff = tot[(dmax >= 10.5) & (dmax <= 25.0)]
            plateau = tot[(dmax >= 30.0) & (dmax <= 50.0)]
            var = float(np.ptp(plateau) / plateau.min())
            good = bool(np.all(flat == flat[0]) and np.all(np.diff(cliff) < 0) and var < 0.01)
            notes.append(f"{task.criticality.value}: plateau variation {var:.1e}")
            c["ok"] &= good
        c["notes"] += notes
    assert c["ok"]


def _scaled_scenario(n_slots=10 ** 7, loss=None):
    task = replace(NON_CRITICAL_TASK, reliability_target=1e-3)
    table = stipulated_table(scale=0.1)
    res = outer_opt_bandwidth(task, REFERENCE_LINK, table)
    assert res.feasible
    return SimScenario(task, REFERENCE_LINK, res.bandwidth_opt, res.bits_opt, table, n_slots=n_slots,
                       seed=SEED, loss_override=loss)


def test_simulator_vs_analytics():
    with criterion("simulator vs analytic bound, Little's law, placement ordering", budget_s=120.0) as c:
        scn = _scaled_scenario()
        rx, tx = compare_placements(scn)
        bound = rx.analytic_bound
        se = math.sqrt(bound * (1 - bound) / rx.n_packets)
        kappa, emp, exceed = rx.queue_tail()
        law = analytic_queue_tail(scn, kappa + rx.slot_ms)
        sel = exceed >= 30
        tail_ok = bool(np.all(emp[sel] <= law[sel] + 3 * np.sqrt(emp[sel] * (1 - emp[sel]) / rx.n_packets)))
        c["notes"].append(f"W={scn.bandwidth:.2f} kHz b={scn.bits}: bound {bound:.3e}, "
                          f"receiver {rx.empirical_overall_error:.3e}, Little ratio {rx.little_ratio:.4f}")
        c["ok"] = (rx.empirical_overall_error <= bound + 3 * se and abs(rx.little_ratio - 1) <= 0.05
                   and tail_ok)
        ordered = []
        for loss in (1e-3, 3e-3, 1e-2, 3e-2, 1e-1):
            r, t = compare_placements(_scaled_scenario(loss=loss))
            ordered.append(r.empirical_overall_error + r.ci_half_width
                           <= t.empirical_overall_error - t.ci_half_width)
        c["notes"].append(f"receiver below transmitter at {sum(ordered)}/5 loss levels")
        c["ok"] &= all(ordered)
    assert c["ok"]


def test_prediction_pipeline():
    with criterion("prediction pipeline: brute-force counts, monotone table, exact AR fixtures",
                   budget_s=60.0) as c:
        data = generate_trajectories(10, 6000, seed=SEED)
        train, held = data.split(0.5)
        model = fit_predictor(train, history_len=100, horizon_len=100, order=2)
        horizons, deltas = [1, 2, 5, 10, 20, 50, 100], [0.05, 0.1, 0.5, 1.0, 5.0]
        counts, n = count_exceedances(model, held, horizons, deltas, stride=2)
        oracle, n_or = brute_force_counts(model, held.positions(), held.range_norm, horizons, deltas, stride=2)
        table = estimate_error_prob(model, held, horizons, deltas, stride=2)
        exact = counts.tolist() == oracle and n == n_or and n <= 10 ** 5
        exact &= bool(np.array_equal(table.raw_eps, np.asarray(oracle) / n_or))

        t = np.arange(1500)
        affine = TrajectoryDataset.from_positions([1.0 + 0.1 * k + (k + 1) * 1e-4 * t for k in range(6)])
        rng = np.random.default_rng(3)
        omega = 2 * np.pi * 1.3 / 1000
        sines = TrajectoryDataset.from_positions(
            [1.5 + rng.uniform(0.1, 0.5) * np.sin(omega * t + rng.uniform(0, 6)) for _ in range(6)])
        rr = [max(m.train_rrmse, m.val_rrmse) for m in
              (fit_predictor(d, history_len=10, horizon_len=100, order=2) for d in (affine, sines))]
        c["notes"].append(f"{n} windows, RRMSE affine {rr[0]:.1e} %, sinusoid {rr[1]:.1e} %")
        c["ok"] = exact and table.is_monotone and max(rr) <= 1e-9
    assert c["ok"]


COMMAND_ARGS = {
    "tradeoff": ["--seed", "7"],
    "optimize": [],
    "allocate": [],
    "simulate": ["--seed", "7"],
    "sweep": [],
}


def test_determinism(tmp_path):
    with criterion("determinism: every command byte-identical across reruns") as c:
        diffs = []
        for cmd, args in COMMAND_ARGS.items():
            runs = []
            for rep in ("a", "b"):
                out = tmp_path / f"{cmd}_{rep}"
                code = main([cmd, "--output-dir", str(out), *args])
                runs.append((code, {p.name: p.read_bytes() for p in sorted(out.iterdir())}))
            if runs[0] != runs[1] or runs[0][0] != 0:
                diffs.append(cmd)
        c["notes"].append("differing: " + (", ".join(diffs) if diffs else "none"))
        c["ok"] = not diffs
    assert c["ok"]
