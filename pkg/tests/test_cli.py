import csv
import json

import numpy as np
import pytest

from haptic_codesign.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main, user_classes
from haptic_codesign.config import ConfigError, parse_text, resolve
from haptic_codesign.prediction import load
from haptic_codesign.reliability import Criticality

SMALL_TRADEOFF = ["--n-sequences", "6", "--length-slots", "3000", "--history-len", "50",
                  "--window-stride", "3"]


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_sha256=")
    return list(csv.DictReader(lines[1:]))


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([args[0], "--output-dir", str(out), *args[1:]])
    return code, out


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


# -- config handling ---------------------------------------------------------------

def test_parse_text():
    vals = parse_text("# comment\nseed = 4\n\nw_khz=120 # trailing\n")
    assert vals == {"seed": "4", "w_khz": "120"}
    with pytest.raises(ConfigError, match=":2:"):
        parse_text("seed = 1\nseed = 2\n")
    with pytest.raises(ConfigError):
        parse_text("no equals sign\n")


def test_resolve_priority_and_types():
    cfg = resolve("sweep", {"w_khz": "90"}, {"w_khz": "70", "bits": "128"})
    assert cfg["w_khz"] == 90.0 and cfg["bits"] == 128
    with pytest.raises(ConfigError, match="unknown"):
        resolve("sweep", {"w_kzh": "90"}, {})
    with pytest.raises(ConfigError, match="seed"):
        resolve("simulate", {}, {})


def test_unknown_key_exits_1(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("seed = 1\nbandwith_khz = 3\n")
    code, _ = run(tmp_path, "o", "tradeoff", "--config", str(cfg))
    assert code == EXIT_CONFIG
    assert "bandwith_khz" in capsys.readouterr().err


def test_missing_seed_exits_1(tmp_path):
    assert run(tmp_path, "o", "tradeoff", *SMALL_TRADEOFF)[0] == EXIT_CONFIG
    assert run(tmp_path, "o", "simulate")[0] == EXIT_CONFIG


def test_bad_value_exits_1(tmp_path):
    assert run(tmp_path, "o", "sweep", "--distance-km", "-1")[0] == EXIT_CONFIG
    assert run(tmp_path, "o", "sweep", "--format", "xml")[0] == EXIT_CONFIG
    assert run(tmp_path, "o", "allocate", "--critical-ratio", "2")[0] == EXIT_CONFIG


# -- tradeoff ---------------------------------------------------------------------------

def test_tradeoff_is_byte_identical(tmp_path):
    code_a, a = run(tmp_path, "a", "tradeoff", "--seed", "9", *SMALL_TRADEOFF)
    code_b, b = run(tmp_path, "b", "tradeoff", "--seed", "9", *SMALL_TRADEOFF)
    code_c, c = run(tmp_path, "c", "tradeoff", "--seed", "10", *SMALL_TRADEOFF)
    assert code_a == code_b == code_c == EXIT_OK
    assert snapshot(a) == snapshot(b)
    assert snapshot(a)["table.csv"] != snapshot(c)["table.csv"]


def test_tradeoff_curves_are_table_cells(tmp_path):
    code, out = run(tmp_path, "o", "tradeoff", "--seed", "2", *SMALL_TRADEOFF, "--deltas-pct", "0.5,2")
    assert code == EXIT_OK
    table = load(out / "table.csv")
    rows = read_csv(out / "fig4.csv")
    assert list(rows[0]) == ["horizon_ms", "eps_p_delta_0.5", "eps_p_delta_2"]
    for i, row in enumerate(rows):
        assert float(row["horizon_ms"]) == table.horizons[i]
        assert [float(row["eps_p_delta_0.5"]), float(row["eps_p_delta_2"])] == table.eps[i].tolist()
    info = json.loads((out / "predictor.json").read_text())
    assert info["order"] == 2 and len(info["coefficients"]) == 3


# -- optimize ----------------------------------------------------------------------------

def test_optimize(tmp_path):
    code, out = run(tmp_path, "o", "optimize")
    assert code == EXIT_OK
    res = json.loads((out / "optimize.json").read_text())["results"]
    assert res["critical"]["bandwidth_opt_khz"] == pytest.approx(98.86, abs=0.01)
    assert res["non_critical"]["bits_opt"] == 176


def test_optimize_infeasible_exits_2(tmp_path):
    code, out = run(tmp_path, "o", "optimize", "--w-max-khz", "50")
    assert code == EXIT_INFEASIBLE
    res = json.loads((out / "optimize.json").read_text())["results"]
    assert not res["critical"]["feasible"]


# -- allocate ----------------------------------------------------------------------------

def test_user_classes_interleave():
    users = user_classes(8, 0.25)
    assert users.count(Criticality.CRITICAL) == 2
    assert user_classes(5, 1.0) == [Criticality.CRITICAL] * 5
    assert user_classes(5, 0.0) == [Criticality.NON_CRITICAL] * 5


def test_allocate_injected_optima(tmp_path):
    code, out = run(tmp_path, "o", "allocate", "--w-critical-khz", "145.24",
                    "--w-non-critical-khz", "32.19")
    assert code == EXIT_OK
    served = {float(r["w_max_khz"]): r for r in read_csv(out / "fig10b.csv")}
    assert int(served[1000.0]["served_task_oriented"]) == 31
    assert int(served[1000.0]["served_task_agnostic"]) == 6
    savings = {float(r["critical_ratio"]): float(r["savings_pct"]) for r in read_csv(out / "savings.csv")}
    assert savings[0.0] == pytest.approx(77.84, abs=0.01)
    assert savings[1.0] == 0.0


def test_allocate_all_critical_curves_coincide(tmp_path):
    code, out = run(tmp_path, "o", "allocate", "--critical-ratio", "1", "--w-critical-khz", "145.24",
                    "--w-non-critical-khz", "32.19")
    assert code == EXIT_OK
    for r in read_csv(out / "fig10a.csv"):
        assert r["total_bw_task_oriented_khz"] == r["total_bw_task_agnostic_khz"]
    for r in read_csv(out / "fig10b.csv"):
        assert r["served_task_oriented"] == r["served_task_agnostic"]


def test_allocate_infeasible_exits_2(tmp_path):
    code, out = run(tmp_path, "o", "allocate", "--w-max-khz", "50")
    assert code == EXIT_INFEASIBLE
    assert json.loads((out / "allocate.json").read_text())["feasible"] is False


# -- sweep -------------------------------------------------------------------------------

def test_sweep_outputs(tmp_path):
    code, out = run(tmp_path, "o", "sweep")
    assert code == EXIT_OK
    fig6 = read_csv(out / "fig6.csv")
    crit = np.array([float(r["total_critical"]) for r in fig6])
    dmax = np.array([float(r["delay_bound_ms"]) for r in fig6])
    assert np.all(crit[dmax <= 10.5] == crit[0])
    for r in read_csv(out / "fig7.csv"):
        parts = float(r["term1"]) + float(r["term2"]) + float(r["term3"])
        assert parts == pytest.approx(float(r["total"]), rel=1e-12)
    for cls in ("critical", "non_critical"):
        tot = [float(r["total"]) for r in read_csv(out / "fig8.csv") if r["class"] == cls]
        assert np.all(np.diff(tot) <= 0)


def test_json_format(tmp_path):
    code, out = run(tmp_path, "o", "sweep", "--format", "json", "--classes", "critical")
    assert code == EXIT_OK
    doc = json.loads((out / "fig6.json").read_text())
    assert doc["columns"] == ["delay_bound_ms", "total_critical"]
    assert not (out / "fig6.csv").exists()


def test_config_file_wins(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("w_khz = 90\n")
    code, out = run(tmp_path, "o", "sweep", "--config", str(cfg), "--w-khz", "70",
                    "--classes", "critical", "--b-grid-bits", "100")
    assert code == EXIT_OK
    from haptic_codesign.presets import CRITICAL_TASK, REFERENCE_LINK, stipulated_table
    from haptic_codesign.reliability import overall_error_bound
    row = read_csv(out / "fig7.csv")[0]
    expect = overall_error_bound(CRITICAL_TASK, REFERENCE_LINK, stipulated_table(), 90.0, 100).total
    assert float(row["total"]) == expect


# -- simulate ----------------------------------------------------------------------------

def test_simulate_is_byte_identical(tmp_path):
    args = ["--seed", "5", "--n-slots", "100000", "--w-khz", "140", "--bits", "256",
            "--loss-sweep", "0.01,0.1"]
    code_a, a = run(tmp_path, "a", "simulate", *args)
    code_b, b = run(tmp_path, "b", "simulate", *args)
    assert code_a == code_b == EXIT_OK
    assert snapshot(a) == snapshot(b)
    rows = read_csv(a / "fig9.csv")
    assert len(rows) == 2
    for r in rows:
        assert float(r["eps_receiver"]) <= float(r["eps_transmitter"])


def test_simulate_uses_optimizer(tmp_path):
    code, out = run(tmp_path, "o", "simulate", "--seed", "1", "--n-slots", "20000",
                    "--loss-sweep", "0.1")
    assert code == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["bits"] == 176


def test_shipped_scenarios_run(tmp_path):
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "scenarios"
    code, out = run(tmp_path, "ref", "optimize", "--config", str(root / "reference.cfg"))
    assert code == EXIT_OK
    res = json.loads((out / "optimize.json").read_text())["results"]
    assert res["critical"]["bits_opt"] == 209
    code, out = run(tmp_path, "sim", "simulate", "--config", str(root / "scaled_validation.cfg"),
                    "--n-slots", "10000")
    assert code == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["bits"] == 175 and rep["receiver"]["n_slots"] == 10 ** 7
