"""Scenario files: YAML with units in the key names.

A scenario is the full record of one experiment: obstacle layout, starts
and goals, barrier gains, MPC weights, gait, plant settings, noise and
seed.  Missing sections take the defaults below; unknown keys are errors.
"""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .planner import BarrierSet, DegenerateBarrierError, HolonomicSpec, Obstacle, stack_barriers

MODES = ("kinematic", "full")


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e4``-style floats (YAML 1.2 rule)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                 |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                 |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                 |[-+]?\.(?:inf|Inf|INF)
                 |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


class ScenarioError(ValueError):
    """Unreadable or invalid scenario file."""


@dataclass(frozen=True)
class PlannerSettings:
    gamma_samples: tuple = (0.2, 0.4, 0.6, 0.8)
    alpha_agent: float = 0.1
    alpha_coord: float = 0.1
    alpha_hc: tuple = (0.001, 0.001)
    p_s_diag: tuple = (0.5, 0.5, 0.5, 0.5)
    k_gain: float = 0.1
    rate_hz: float = 200.0


@dataclass(frozen=True)
class MpcSettings:
    horizon: int = 6
    mu: float = 0.6
    f_min_n: float = 0.0
    f_max_n: float = 500.0
    q_pos: tuple = (3e5, 3e7, 3e6)
    q_vel: float = 1e4
    q_xi: float = 1e8
    q_omega: float = 5e3
    terminal_ratio: float = 0.1
    r_f: float = 1e-2
    r_lambda: float = 1e4


@dataclass(frozen=True)
class GaitSettings:
    period_s: float = 0.4
    duty: float = 0.5


@dataclass(frozen=True)
class PlantSettings:
    dt_s: float = 0.001
    mass_kg: float = 12.45
    inertia_kgm2: tuple = (0.017, 0.056, 0.065)
    nominal_height_m: float = 0.26
    attach_offset_m: tuple = (-0.12, 0.0, 0.0)
    baumgarte_omega: float = 50.0
    baumgarte_zeta: float = 1.0
    drift_bound_m: float = 0.05


@dataclass(frozen=True)
class NoiseSettings:
    level_db: float | None = None

    @property
    def enabled(self) -> bool:
        return self.level_db is not None and math.isfinite(self.level_db)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    obstacles: tuple
    starts_m: tuple = ((0.0, 0.0), (0.0, -1.0))
    goals_m: tuple = ((4.0, 0.5), (4.0, -0.5))
    agent_radius_m: float = 0.0
    psi_m2: float = 1.0
    eps: float = 5e-5
    mode: str = "kinematic"
    seed: int = 0
    duration_s: float = 60.0
    goal_tol_m: float = 0.1
    planner: PlannerSettings = field(default_factory=PlannerSettings)
    mpc: MpcSettings = field(default_factory=MpcSettings)
    gait: GaitSettings = field(default_factory=GaitSettings)
    plant: PlantSettings = field(default_factory=PlantSettings)
    noise: NoiseSettings = field(default_factory=NoiseSettings)

    def barrier_set(self) -> BarrierSet:
        p = self.planner
        return BarrierSet(obstacles=self.obstacles, gamma_samples=p.gamma_samples,
                          alpha_agent=p.alpha_agent, alpha_coord=p.alpha_coord, alpha_hc=p.alpha_hc,
                          holonomic=HolonomicSpec(self.psi_m2, self.eps), agent_radius=self.agent_radius_m)

    @property
    def phi0(self) -> np.ndarray:
        return np.asarray(self.starts_m, dtype=float).reshape(4)

    @property
    def goal(self) -> np.ndarray:
        return np.asarray(self.goals_m, dtype=float).reshape(4)

    def with_overrides(self, mode=None, noise_db=None, seed=None) -> "ScenarioConfig":
        out = self
        if mode is not None:
            out = replace(out, mode=mode)
        if noise_db is not None:
            out = replace(out, noise=NoiseSettings(float(noise_db)))
        if seed is not None:
            out = replace(out, seed=int(seed))
        validate(out)
        return out


_SECTIONS = {"planner": PlannerSettings, "mpc": MpcSettings, "gait": GaitSettings,
             "plant": PlantSettings, "noise": NoiseSettings}
_TOP = {"name", "mode", "seed", "duration_s", "goal_tol_m", "obstacles", "agents", "holonomic", *_SECTIONS}


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def _section(cls, raw, where):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ScenarioError(f"{where}: expected a mapping")
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**{k: _tuplify(v) for k, v in raw.items()})


def _check_keys(raw, allowed, where):
    unknown = set(raw) - set(allowed)
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")


def from_dict(raw: dict) -> ScenarioConfig:
    """Build and validate a scenario from its parsed mapping."""
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping")
    _check_keys(raw, _TOP, "scenario")
    if "name" not in raw:
        raise ScenarioError("scenario: missing 'name'")
    obstacles = []
    for k, ob in enumerate(raw.get("obstacles") or []):
        if not isinstance(ob, dict):
            raise ScenarioError(f"obstacles[{k}]: expected a mapping")
        _check_keys(ob, ("center_m", "radius_m"), f"obstacles[{k}]")
        try:
            obstacles.append(Obstacle(tuple(ob["center_m"]), float(ob["radius_m"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"obstacles[{k}]: {exc}") from None
    agents = raw.get("agents") or {}
    _check_keys(agents, ("starts_m", "goals_m", "radius_m"), "agents")
    hol = raw.get("holonomic") or {}
    _check_keys(hol, ("psi_m2", "eps"), "holonomic")
    kw = {}
    for key in ("mode", "seed", "duration_s", "goal_tol_m"):
        if key in raw:
            kw[key] = raw[key]
    if "starts_m" in agents:
        kw["starts_m"] = _tuplify(agents["starts_m"])
    if "goals_m" in agents:
        kw["goals_m"] = _tuplify(agents["goals_m"])
    if "radius_m" in agents:
        kw["agent_radius_m"] = agents["radius_m"]
    if "psi_m2" in hol:
        kw["psi_m2"] = hol["psi_m2"]
    if "eps" in hol:
        kw["eps"] = hol["eps"]
    for sec, cls in _SECTIONS.items():
        kw[sec] = _section(cls, raw.get(sec), sec)
    try:
        cfg = ScenarioConfig(name=str(raw["name"]), obstacles=tuple(obstacles), **kw)
    except TypeError as exc:
        raise ScenarioError(str(exc)) from None
    try:
        validate(cfg)
    except TypeError as exc:
        raise ScenarioError(f"wrong value type: {exc}") from None
    return cfg


def to_dict(cfg: ScenarioConfig) -> dict:
    """Plain mapping that :func:`from_dict` maps back to ``cfg``."""
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        if isinstance(v, (np.floating, np.integer)):
            return v.item()
        return v

    out = {"name": cfg.name, "mode": cfg.mode, "seed": cfg.seed, "duration_s": cfg.duration_s,
           "goal_tol_m": cfg.goal_tol_m,
           "obstacles": [{"center_m": list(o.center), "radius_m": o.radius} for o in cfg.obstacles],
           "agents": {"starts_m": plain(cfg.starts_m), "goals_m": plain(cfg.goals_m),
                      "radius_m": cfg.agent_radius_m},
           "holonomic": {"psi_m2": cfg.psi_m2, "eps": cfg.eps}}
    for sec in _SECTIONS:
        out[sec] = {k: plain(v) for k, v in asdict(getattr(cfg, sec)).items()}
    return out


def dumps(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)


def loads(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        raw = yaml.load(text, Loader=_Loader)  # noqa: S506 - safe loader subclass
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ScenarioError(f"{where}: {getattr(exc, 'problem', exc)}") from None
    try:
        return from_dict(raw)
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from None


def bundled_names() -> list[str]:
    root = resources.files("coopcbf") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve(spec: str) -> Path | None:
    """Path of a scenario given a file path or a bundled name."""
    p = Path(spec)
    if p.is_file():
        return p
    stem = p.name[:-5] if p.name.endswith(".yaml") else p.name
    if stem in bundled_names():
        return Path(str(resources.files("coopcbf") / "scenarios" / f"{stem}.yaml"))
    return None


def load_scenario(path) -> ScenarioConfig:
    """Load a scenario from a file path or bundled name (``two_obstacles``)."""
    p = resolve(str(path))
    if p is None:
        raise FileNotFoundError(f"no scenario file or bundled scenario named {path!r}")
    return loads(p.read_text(), str(p))


def validate(cfg: ScenarioConfig) -> None:
    """Raise :class:`ScenarioError` naming the first violated invariant."""
    def need(ok, msg):
        if not ok:
            raise ScenarioError(msg)

    need(cfg.mode in MODES, f"mode must be one of {MODES}, got {cfg.mode!r}")
    need(isinstance(cfg.seed, int) and not isinstance(cfg.seed, bool), "seed must be an integer")
    need(cfg.duration_s > 0, "duration_s must be positive")
    need(cfg.goal_tol_m > 0, "goal_tol_m must be positive")
    need(np.shape(cfg.starts_m) == (2, 2), "agents.starts_m must hold two planar points")
    need(np.shape(cfg.goals_m) == (2, 2), "agents.goals_m must hold two planar points")
    need(cfg.psi_m2 > 0, "holonomic.psi_m2 must be positive")
    need(0 < cfg.eps < 1, "holonomic.eps must lie in (0, 1)")
    need(cfg.agent_radius_m >= 0, "agents.radius_m must be nonnegative")
    p = cfg.planner
    need(len(p.p_s_diag) == 4 and min(p.p_s_diag) > 0, "planner.p_s_diag must be four positive values")
    need(p.k_gain > 0, "planner.k_gain must be positive")
    need(p.rate_hz > 0, "planner.rate_hz must be positive")
    m = cfg.mpc
    need(isinstance(m.horizon, int) and m.horizon >= 1, "mpc.horizon must be a positive integer")
    need(m.mu > 0, "mpc.mu must be positive")
    need(0 <= m.f_min_n < m.f_max_n, "mpc force bounds need 0 <= f_min_n < f_max_n")
    need(len(m.q_pos) == 3 and min(m.q_pos) > 0 and min(m.q_vel, m.q_xi, m.q_omega) > 0,
         "mpc stage weights must be positive")
    need(m.terminal_ratio > 0 and m.r_f > 0 and m.r_lambda > 0, "mpc terminal/input weights must be positive")
    need(0 < cfg.gait.duty < 1, "gait.duty must lie in (0, 1)")
    need(cfg.gait.period_s > 0, "gait.period_s must be positive")
    pl = cfg.plant
    need(0 < pl.dt_s <= 0.01, "plant.dt_s must lie in (0, 0.01]")
    need(pl.mass_kg > 0 and len(pl.inertia_kgm2) == 3 and min(pl.inertia_kgm2) > 0,
         "plant mass and inertia must be positive")
    need(len(pl.attach_offset_m) == 3, "plant.attach_offset_m must have three entries")
    try:
        bset = cfg.barrier_set()
    except ValueError as exc:
        raise ScenarioError(f"planner settings: {exc}") from None
    try:
        H, _, _ = stack_barriers(cfg.phi0, bset)
    except DegenerateBarrierError as exc:
        raise ScenarioError(f"initial state: {exc}") from None
    if bset.dim:
        labels = bset.labels()
        bad = [labels[k] for k in np.flatnonzero(H <= 0)]
        need(not bad, f"initial state must be strictly safe (H > 0); violated: {', '.join(bad)}")
    for i, g in enumerate(cfg.goals_m):
        for z, ob in enumerate(cfg.obstacles):
            dist = math.hypot(g[0] - ob.center[0], g[1] - ob.center[1])
            need(dist > ob.radius + cfg.agent_radius_m,
                 f"goal of agent {i + 1} lies inside inflated obstacle {z + 1}")
