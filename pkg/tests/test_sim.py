import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coopcbf import report
from coopcbf.scenario import load_scenario
from coopcbf.sim import (GaitSchedule, NoiseSpec, RunningRms, contact_and_feet, initial_state,
                         inject_noise, log_columns, pair_for, run_scenario)
from coopcbf.srb import AgentParams, SrbState

AGENTS = (AgentParams(), AgentParams())


def standing():
    return SrbState.from_parts([[0.0, 0.0, 0.26], [0.0, -1.0, 0.26]])


@given(st.floats(0, 100))
def test_trot_keeps_a_diagonal_pair_down(t):
    flags = GaitSchedule().stance(t)
    assert flags.sum() == 2
    assert flags[0] == flags[3] and flags[1] == flags[2] and flags[0] != flags[1]


def test_gait_validation():
    with pytest.raises(ValueError):
        GaitSchedule(duty=1.0)
    with pytest.raises(ValueError):
        GaitSchedule(period=0.0)
    with pytest.raises(ValueError):
        GaitSchedule(offsets=(0.0, 0.5))
    assert GaitSchedule().stance_duration == pytest.approx(0.2)


def test_touchdown_under_hips_at_rest():
    s = standing()
    c = contact_and_feet(0.0, s, GaitSchedule(), np.zeros(4), AGENTS)
    for i in range(2):
        for ell, hip in enumerate(AGENTS[i].hip_offsets):
            expected = s.com(i) + np.asarray(hip)
            np.testing.assert_allclose(c.feet[i, ell, :2], expected[:2], atol=1e-15)
            assert c.feet[i, ell, 2] == 0.0


def test_raibert_offset():
    gait = GaitSchedule(period=0.5, duty=0.5)
    assert gait.stance_duration == pytest.approx(0.25)
    s = standing()
    rest = contact_and_feet(0.0, s, gait, np.zeros(4), AGENTS)
    moving = contact_and_feet(0.0, s, gait, np.array([0.4, 0.0, 0.4, 0.0]), AGENTS)
    np.testing.assert_allclose(moving.feet[:, :, 0] - rest.feet[:, :, 0], 0.05, atol=1e-15)
    np.testing.assert_allclose(moving.feet[:, :, 1], rest.feet[:, :, 1], atol=1e-15)


def test_stance_feet_pinned_until_liftoff():
    gait = GaitSchedule()
    cmd = np.array([0.4, 0.0, 0.4, 0.0])
    prev = contact_and_feet(0.0, standing(), gait, cmd, AGENTS)
    touchdowns = 0
    for k in range(1, 100):
        t = k * 0.005
        moved = SrbState.from_parts([[0.4 * t, 0.0, 0.26], [0.4 * t, -1.0, 0.26]])
        cur = contact_and_feet(t, moved, gait, cmd, AGENTS, prev)
        held = cur.stance & prev.stance
        np.testing.assert_array_equal(cur.feet[held], prev.feet[held])
        new = cur.stance & ~prev.stance
        for i, ell in zip(*np.nonzero(new)):
            hip = np.asarray(AGENTS[i].hip_offsets[ell])
            np.testing.assert_allclose(cur.feet[i, ell, 0], 0.4 * t + hip[0] + 0.1 * 0.4, atol=1e-12)
            touchdowns += 1
        prev = cur
    assert touchdowns == 8


def test_noise_disabled_is_identity():
    v = np.array([0.4, 0.05, 0.4, 0.05])
    out = inject_noise(v, NoiseSpec(False), 0.4)
    np.testing.assert_array_equal(out, v)
    np.testing.assert_array_equal(inject_noise(v, NoiseSpec(True, -math.inf), 0.4), v)


def test_noise_level_at_minus_43_db():
    spec = NoiseSpec(True, -43.0, seed=1)
    assert spec.ratio * 0.4 == pytest.approx(2.83e-3, rel=1e-3)
    rng = spec.generator()
    samples = np.concatenate([inject_noise(np.zeros(4), spec, 0.4, rng) for _ in range(2500)])
    assert samples.size == 10_000
    assert np.sqrt(np.mean(samples**2)) == pytest.approx(2.83e-3, rel=0.05)
    assert abs(samples.mean()) < 1e-4


def test_noise_seeds():
    a = [inject_noise(np.zeros(10_000), NoiseSpec(True, -43.0, seed=s), 0.4) for s in (1, 2)]
    assert not np.array_equal(a[0], a[1])
    ra, rb = (np.sqrt(np.mean(x**2)) for x in a)
    assert abs(ra - rb) / ra < 0.05
    again = inject_noise(np.zeros(10_000), NoiseSpec(True, -43.0, seed=1), 0.4)
    np.testing.assert_array_equal(a[0], again)


def test_running_rms():
    r = RunningRms()
    assert r.value == 0.0
    r.update([3.0, 4.0])
    assert r.value == pytest.approx(math.sqrt(12.5))


def test_log_columns_layout():
    cfg = load_scenario("two_obstacles")
    cols = log_columns(cfg.barrier_set().labels())
    assert cols[0] == "time_s" and cols[-1] == "flags"
    assert cols.index("phi_s_0") < cols.index("h_a1_o1") < cols.index("h_hc2") < cols.index("separation_m")
    assert sum(c.startswith("grf_") for c in cols) == 24
    assert len(set(cols)) == len(cols)


def test_initial_state_places_attachments_at_starts():
    cfg = load_scenario("two_obstacles")
    pair = pair_for(cfg)
    s = initial_state(cfg, pair)
    np.testing.assert_allclose(pair.attach_points(s)[:, :2], np.asarray(cfg.starts_m), atol=1e-12)
    np.testing.assert_allclose(s.x[[2, 14]], 0.26)


@pytest.fixture(scope="module")
def kinematic_log():
    cfg = load_scenario("two_obstacles")
    return cfg, run_scenario(cfg)


def test_kinematic_run_is_safe(kinematic_log):
    cfg, log = kinematic_log
    s = report.summarize(log, cfg)
    assert s["min_barrier"] >= -1e-3
    assert s["max_abs_sep_sq_error"] <= cfg.eps * cfg.psi_m2 + 1e-6
    assert s["planner_failures"] == 0
    t = log.column("time_s")
    assert np.all(np.diff(t) > 0)
    np.testing.assert_allclose(np.diff(t), 0.005, atol=1e-12)


def test_kinematic_run_passes_between_obstacles(kinematic_log):
    _, log = kinematic_log
    A = log.array()
    j = log.columns.index("phi_0")
    # the bar midpoint crosses x = 1.5 between the two obstacles
    mid = 0.5 * (A[:, j:j + 2] + A[:, j + 2:j + 4])
    k = np.argmax(mid[:, 0] >= 1.5)
    assert mid[k, 0] >= 1.5
    assert -0.2 < mid[k, 1] < 0.4


def test_noisy_kinematic_run_is_deterministic():
    cfg = load_scenario("two_obstacles").with_overrides(noise_db=-43.0, seed=7)
    cfg = replace(cfg, duration_s=3.0)
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.csv_text() == b.csv_text()
    c = run_scenario(cfg.with_overrides(seed=8))
    assert c.csv_text() != a.csv_text()


def test_full_run_short():
    cfg = replace(load_scenario("two_obstacles").with_overrides(mode="full"), duration_s=1.0)
    log = run_scenario(cfg)
    assert log.meta["terminated"] == "time_limit"
    assert len(log.rows) == 201
    s = report.summarize(log, cfg)
    assert s["mpc_failures"] == 0 and s["min_barrier"] > 0
    assert s["max_abs_sep_error_m"] <= 1e-3
    # second run is byte-identical
    assert run_scenario(cfg).csv_text() == log.csv_text()


@pytest.mark.slow
def test_trot_drift_over_30_seconds():
    cfg = replace(load_scenario("two_obstacles").with_overrides(mode="full"), duration_s=30.0)
    s = report.summarize(run_scenario(cfg), cfg)
    assert s["terminated"] == "time_limit"
    assert s["max_abs_sep_error_m"] <= 1e-3


def test_unknown_mode_rejected():
    cfg = load_scenario("two_obstacles")
    with pytest.raises(ValueError):
        run_scenario(replace(cfg, mode="other"))
