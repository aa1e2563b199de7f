from dataclasses import replace

import pytest

from coopcbf.planner import Obstacle
from coopcbf.scenario import (ScenarioError, bundled_names, dumps, from_dict, load_scenario, loads,
                              to_dict, validate)

BASE_OBSTACLES = [((1.5, 0.7), 0.3), ((1.5, -0.5), 0.3)]


def obstacles(cfg):
    return [(o.center, o.radius) for o in cfg.obstacles]


def test_bundled_names():
    assert bundled_names() == ["four_obstacles", "three_obstacles", "two_obstacles"]


def test_two_obstacle_geometry():
    cfg = load_scenario("two_obstacles")
    assert obstacles(cfg) == BASE_OBSTACLES
    assert cfg.starts_m == ((0.0, 0.0), (0.0, -1.0))
    assert cfg.goals_m == ((4.0, 0.5), (4.0, -0.5))
    assert cfg.psi_m2 == 1.0 and cfg.eps == 5e-5
    assert cfg.planner.p_s_diag == (0.5, 0.5, 0.5, 0.5)
    assert cfg.planner.alpha_hc == (0.001, 0.001)
    assert cfg.mpc.horizon == 6


def test_added_obstacles():
    three = load_scenario("three_obstacles")
    four = load_scenario("four_obstacles")
    assert obstacles(three) == BASE_OBSTACLES + [((2.5, 0.1), 0.5)]
    assert obstacles(four) == BASE_OBSTACLES + [((2.5, 0.1), 0.5), ((3.5, 1.3), 0.4)]


def test_scientific_notation_reads_as_float():
    cfg = load_scenario("two_obstacles")
    assert isinstance(cfg.mpc.q_xi, float) and cfg.mpc.q_xi == 1e8
    assert isinstance(cfg.eps, float)


@pytest.mark.parametrize("name", ["two_obstacles", "three_obstacles", "four_obstacles"])
def test_round_trip(name):
    cfg = load_scenario(name)
    assert loads(dumps(cfg)) == cfg
    assert from_dict(to_dict(cfg)) == cfg


def test_load_from_path(tmp_path):
    p = tmp_path / "mine.yaml"
    p.write_text(dumps(load_scenario("two_obstacles")))
    assert load_scenario(str(p)) == load_scenario("two_obstacles")


def test_missing_scenario():
    with pytest.raises(FileNotFoundError):
        load_scenario("no_such_scenario")


def test_unknown_keys_rejected():
    raw = to_dict(load_scenario("two_obstacles"))
    raw["planner"]["alpha_agnet"] = 0.1
    with pytest.raises(ScenarioError, match="alpha_agnet"):
        from_dict(raw)
    raw = to_dict(load_scenario("two_obstacles"))
    raw["colour"] = "red"
    with pytest.raises(ScenarioError, match="colour"):
        from_dict(raw)


def test_start_inside_obstacle_rejected():
    raw = to_dict(load_scenario("two_obstacles"))
    raw["agents"]["starts_m"] = [[1.5, 0.6], [1.5, -0.4]]
    with pytest.raises(ScenarioError, match="strictly safe"):
        from_dict(raw)


def test_invalid_values_named():
    cfg = load_scenario("two_obstacles")
    with pytest.raises(ScenarioError, match="mode"):
        validate(replace(cfg, mode="fast"))
    with pytest.raises(ScenarioError, match="eps"):
        validate(replace(cfg, eps=2.0))
    with pytest.raises(ScenarioError, match="duty"):
        validate(replace(cfg, gait=replace(cfg.gait, duty=1.5)))


def test_parse_error_reports_line():
    text = "name: broken\nobstacles:\n  - {center_m: [1.5, 0.7], radius_m: 0.3\nmode: kinematic\n"
    with pytest.raises(ScenarioError, match=r"bad\.yaml:\d+:\d+"):
        loads(text, "bad.yaml")


def test_overrides():
    cfg = load_scenario("two_obstacles").with_overrides(mode="full", noise_db=-43, seed=5)
    assert cfg.mode == "full" and cfg.seed == 5
    assert cfg.noise.enabled and cfg.noise.level_db == -43.0
    assert not load_scenario("two_obstacles").noise.enabled


def test_barrier_set_from_scenario():
    bset = load_scenario("four_obstacles").barrier_set()
    assert bset.dim == 4 * (2 + 4) + 2
    assert bset.obstacles[3] == Obstacle((3.5, 1.3), 0.4)
