import json

import numpy as np
import pytest

from coopcbf import bench, cli, report
from coopcbf.scenario import dumps, load_scenario
from coopcbf.sim import RunLog, log_columns


def run_cli(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr().out


def test_validate_bundled(capsys):
    code, out = run_cli(["validate", "two_obstacles", "three_obstacles", "four_obstacles"], capsys)
    assert code == 0
    assert out.count("OK ") == 3


def test_validate_bad_file(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: x\nobstacles: [\n")
    code, out = run_cli(["validate", str(bad), "two_obstacles"], capsys)
    assert code == 1
    assert "INVALID" in out and "OK two_obstacles" in out


def test_run_full_short_passes(tmp_path, capsys):
    code, out = run_cli(["run", "two_obstacles", "--mode", "full", "--duration", "3",
                         "--out", str(tmp_path)], capsys)
    assert code == 0, out
    assert out.startswith("PASS two_obstacles [full]")
    d = tmp_path / "two_obstacles_full_seed0"
    for name in ("log.csv", "timing.csv", "paths.csv", "bars.csv", "paths.svg", "summary.json"):
        assert (d / name).is_file()
    s = json.loads((d / "summary.json").read_text())
    assert s["passed"] and s["tracking_rms_mps"] <= 0.05
    agg = json.loads((tmp_path / "summary.json").read_text())
    assert agg["passed"] and len(agg["runs"]) == 1
    bars = (d / "bars.csv").read_text().splitlines()
    assert len(bars) == 1 + 7  # header, t = 0, 0.5, ..., 3.0


def test_run_failure_still_writes_summary(tmp_path, capsys):
    code, out = run_cli(["run", "two_obstacles", "--duration", "1", "--out", str(tmp_path)], capsys)
    assert code == 1
    assert "failed=goal_reached" in out
    agg = json.loads((tmp_path / "summary.json").read_text())
    assert agg["passed"] is False
    s = agg["runs"][0]
    assert s["checks"]["barriers"] and s["checks"]["separation"] and not s["checks"]["goal_reached"]


def test_run_missing_scenario(tmp_path, capsys):
    code, out = run_cli(["run", "nowhere", "--out", str(tmp_path)], capsys)
    assert code == 1 and "FAIL nowhere" in out
    assert json.loads((tmp_path / "summary.json").read_text())["runs"][0]["error"]


def test_seed_determinism(tmp_path, capsys):
    texts = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        run_cli(["run", "two_obstacles", "--noise", "-43", "--seed", "7", "--duration", "2",
                 "--out", str(out)], capsys)
        texts.append((out / "two_obstacles_kinematic_noise-43dB_seed7" / "log.csv").read_bytes())
    assert texts[0] == texts[1]


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("COOPCBF_THREADS", "1")
    assert cli._workers(5) == 1
    monkeypatch.setenv("COOPCBF_THREADS", "3")
    assert cli._workers(5) == 3
    assert cli._workers(2) == 2
    monkeypatch.setenv("COOPCBF_THREADS", "lots")
    assert cli._workers(1) == 1


def test_pool_matches_serial(tmp_path, monkeypatch, capsys):
    scen = tmp_path / "alt.yaml"
    scen.write_text(dumps(load_scenario("three_obstacles")))
    logs = {}
    for threads in ("1", "2"):
        monkeypatch.setenv("COOPCBF_THREADS", threads)
        out = tmp_path / f"t{threads}"
        run_cli(["run", "two_obstacles", str(scen), "--duration", "0.5", "--out", str(out)], capsys)
        logs[threads] = sorted(p.read_bytes() for p in out.glob("*/log.csv"))
    assert len(logs["1"]) == 2 and logs["1"] == logs["2"]


def test_bench_command(capsys):
    code, out = run_cli(["bench", "--repeat", "10"], capsys)
    assert code == 0
    assert "compiled kernels" in out
    for name in ("barrier_stack", "planner_qp", "plant_step_1ms", "mpc_solve"):
        assert name in out


def test_bench_backend_switch():
    from coopcbf.qp import kernel
    before = kernel.dual_active_set
    with bench.backend("python"):
        assert kernel.dual_active_set is kernel.python_dual_active_set
    assert kernel.dual_active_set is before
    with pytest.raises(ValueError):
        with bench.backend("fortran"):
            pass


def test_separation_excursion():
    assert report.separation_excursion([1.0, 1.00004, 0.99996], 1.0, 5e-5) == 0.0
    assert report.separation_excursion([1.0, 1.0006], 1.0, 5e-5) == pytest.approx(5.5e-4)
    assert report.separation_excursion([0.999], 1.0, 5e-5) == pytest.approx(9.5e-4)
    assert report.separation_excursion([], 1.0, 5e-5) == 0.0


def synthetic_log(vel_error=0.0):
    cols = log_columns(["h_a1_o1"])
    log = RunLog(cols, meta={"tick_s": 0.005, "terminated": "time_limit", "noise_db": None})
    for k in range(1001):
        row = dict.fromkeys(cols, 0.0)
        row["time_s"] = k * 0.005
        row["phi_0"], row["phi_1"], row["phi_2"], row["phi_3"] = 0.0, 0.0, 0.0, -1.0
        row["phi_s_0"] = row["phi_s_2"] = 0.4
        row["a1_vx"] = row["a2_vx"] = 0.4 + vel_error
        row["h_a1_o1"] = 1.0
        row["separation_m"] = 1.0
        log.rows.append([row[c] for c in cols])
        log.timing.append((row["time_s"], 900.0, 1800.0))
    return log


def test_tracking_rms():
    assert report.tracking_rms(synthetic_log()) == pytest.approx(0.0)
    assert report.tracking_rms(synthetic_log(0.03)) == pytest.approx(0.03)
    assert report.tracking_rms(synthetic_log(), after_s=100.0) is None


def test_summary_checks_full_mode():
    from dataclasses import replace
    cfg = replace(load_scenario("two_obstacles"), mode="full")
    good = report.summarize(synthetic_log(0.01), cfg)
    assert good["passed"]
    assert good["planner_solve_us_median"] == 900.0 and good["mpc_solve_us_median"] == 1800.0
    bad = report.summarize(synthetic_log(0.08), cfg)
    assert not bad["passed"] and not bad["checks"]["tracking"]
    json.loads(report.summary_json(bad))


def test_plot_outputs():
    cfg = load_scenario("two_obstacles")
    log = synthetic_log()
    segs = report.bar_segments(log)
    np.testing.assert_allclose(segs[:, 0], np.arange(0, 5.01, 0.5))
    svg = report.svg_text(log, cfg)
    assert svg.startswith("<svg") and svg.count("<circle") == 2 + 2
    assert svg.count("<line") == len(segs) and svg.count("<polyline") == 2
    assert report.path_csv_text(log).splitlines()[0] == "time_s,p1_x,p1_y,p2_x,p2_y"
