"""Closed-loop harness: gait, foot placement, noise and the layered loop.

Two modes:

``kinematic``
    Planar positions follow ``phi_dot = phi_s(phi)``.  Each 5 ms tick is an
    RK4 step of that closed-loop field, with the safety QP re-solved at
    every stage and the noise sample held over the tick.
``full``
    Planner and MPC tick every 5 ms; the SRB plant integrates with 1 ms
    substeps while the GRFs are held.  The planner sees the planar
    attachment points of the bar.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geom3d import euler_zyx, rot_z
from .mpc import MpcConfig, bar_normal_yaw, build_reference, solve_mpc
from .planner import Planner
from .qp import QpStatus
from .scenario import ScenarioConfig
from .srb import (LEG_NAMES, N_LEGS, AgentParams, ConstraintDriftError, ContactState, SingularConstraintError,
                  SrbPair, SrbState)

log = logging.getLogger(__name__)

FLAG_PLANNER = 1     # planner QP not optimal; zero-velocity fallback used
FLAG_MPC_SOFT = 2    # friction rows softened
FLAG_MPC_FAIL = 4    # MPC not solved; static GRFs applied


@dataclass(frozen=True)
class GaitSchedule:
    """Periodic contact pattern; legs ordered FL, FR, RL, RR.

    Trot default: diagonal pairs in antiphase.
    """

    period: float = 0.4
    duty: float = 0.5
    offsets: tuple = (0.0, 0.5, 0.5, 0.0)
    phase0: float = 0.0

    def __post_init__(self):
        if not 0 < self.duty < 1:
            raise ValueError("duty factor must lie in (0, 1)")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if len(self.offsets) != N_LEGS:
            raise ValueError("need one phase offset per leg")

    @property
    def stance_duration(self) -> float:
        return self.duty * self.period

    def phase(self, t: float) -> float:
        return (self.phase0 + t / self.period) % 1.0

    def stance(self, t: float) -> np.ndarray:
        ph = (self.phase(t) + np.asarray(self.offsets)) % 1.0
        return ph < self.duty


@dataclass(frozen=True)
class NoiseSpec:
    """Additive uniform noise on the safe velocity, RMS set in dB relative
    to the running RMS of the command."""

    enabled: bool = False
    level_db: float = -math.inf
    seed: int = 0

    @property
    def ratio(self) -> float:
        if not self.enabled or not math.isfinite(self.level_db):
            return 0.0
        return 10.0 ** (self.level_db / 20.0)

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


class RunningRms:
    """RMS over every commanded velocity component seen so far."""

    def __init__(self):
        self._sq = 0.0
        self._n = 0

    def update(self, v) -> float:
        v = np.asarray(v, dtype=float)
        self._sq += float(v @ v)
        self._n += v.size
        return self.value

    @property
    def value(self) -> float:
        return math.sqrt(self._sq / self._n) if self._n else 0.0


def inject_noise(phi_s, spec: NoiseSpec, running_rms: float, rng: np.random.Generator | None = None):
    """``phi_s`` plus zero-mean uniform noise of RMS ``running_rms * 10^(dB/20)``."""
    phi_s = np.asarray(phi_s, dtype=float)
    ratio = spec.ratio
    if ratio == 0.0:
        return phi_s.copy()
    if rng is None:
        rng = spec.generator()
    half = math.sqrt(3.0) * running_rms * ratio
    return phi_s + rng.uniform(-half, half, size=phi_s.shape)


def contact_and_feet(t: float, state: SrbState, schedule: GaitSchedule, phi_s, agents,
                     previous: ContactState | None = None) -> ContactState:
    """Stance flags from the gait phase and world foot positions.

    A foot touching down lands at its hip's ground projection plus
    ``stance_duration / 2`` times the commanded planar velocity; it stays
    pinned until liftoff.  Swing feet report their next touchdown target.
    """
    phi_s = np.asarray(phi_s, dtype=float).reshape(2, 2)
    flags = schedule.stance(t)
    stance = np.stack([flags, flags])
    feet = np.zeros((2, N_LEGS, 3))
    half = 0.5 * schedule.stance_duration
    for i in range(2):
        R = state.rotation_matrix(i)
        c = state.com(i)
        for ell, hip in enumerate(agents[i].hip_offsets):
            if stance[i, ell] and previous is not None and previous.stance[i, ell]:
                feet[i, ell] = previous.feet[i, ell]
                continue
            target = c + R @ np.asarray(hip)
            target[:2] += half * phi_s[i]
            target[2] = 0.0
            feet[i, ell] = target
    return ContactState(stance, feet)


@dataclass
class RunLog:
    """Per-tick record of one run."""

    columns: list
    rows: list = field(default_factory=list)
    timing: list = field(default_factory=list)
    events: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=float).reshape(-1, len(self.columns))

    def column(self, name: str) -> np.ndarray:
        return self.array()[:, self.columns.index(name)]

    def columns_like(self, prefix: str) -> list:
        return [c for c in self.columns if c.startswith(prefix)]

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def timing_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_s", "solve_us_planner", "solve_us_mpc"])
        for row in self.timing:
            w.writerow([f"{row[0]!r}", f"{row[1]:.1f}", f"{row[2]:.1f}"])
        return buf.getvalue()


def log_columns(labels) -> list:
    cols = ["time_s"]
    for i in (1, 2):
        cols += [f"a{i}_{k}" for k in ("x", "y", "z", "vx", "vy", "vz", "yaw", "pitch", "roll")]
    cols += [f"phi_{k}" for k in range(4)]
    cols += [f"phi_s_{k}" for k in range(4)]
    cols += list(labels)
    cols += ["separation_m", "lambda"]
    cols += [f"grf_a{i}_{leg}_{ax}" for i in (1, 2) for leg in LEG_NAMES for ax in "xyz"]
    cols += ["flags"]
    return cols


def _planner_for(cfg: ScenarioConfig) -> Planner:
    return Planner(cfg.barrier_set(), np.diag(cfg.planner.p_s_diag), cfg.goal, cfg.planner.k_gain)


def _noise_for(cfg: ScenarioConfig) -> NoiseSpec:
    if cfg.noise.enabled:
        return NoiseSpec(True, float(cfg.noise.level_db), cfg.seed)
    return NoiseSpec(False, -math.inf, cfg.seed)


def _at_goal(phi, goal, tol) -> bool:
    d = (np.asarray(phi) - goal).reshape(2, 2)
    return bool(np.all(np.hypot(d[:, 0], d[:, 1]) <= tol))


def _bar_yaw(phi) -> float:
    b = phi[0:2] - phi[2:4]
    return float(np.arctan2(-b[0], b[1]))


def run_scenario(cfg: ScenarioConfig) -> RunLog:
    """Run one scenario in its configured mode and return the log."""
    if cfg.mode == "kinematic":
        return _run_kinematic(cfg)
    if cfg.mode == "full":
        return _run_full(cfg)
    raise ValueError(f"unknown mode {cfg.mode!r}")


def _meta(cfg, dt):
    return {"scenario": cfg.name, "mode": cfg.mode, "seed": cfg.seed,
            "noise_db": cfg.noise.level_db if cfg.noise.enabled else None,
            "tick_s": dt, "goal_time_s": None, "terminated": "time_limit"}


def _run_kinematic(cfg: ScenarioConfig) -> RunLog:
    planner = _planner_for(cfg)
    bset = planner.bset
    dt = 1.0 / cfg.planner.rate_hz
    n_ticks = int(round(cfg.duration_s / dt))
    noise = _noise_for(cfg)
    rng = noise.generator()
    rms = RunningRms()
    runlog = RunLog(log_columns(bset.labels()), meta=_meta(cfg, dt))
    phi = cfg.phi0.copy()
    zeros_grf = [0.0] * 24

    def field_at(p, w):
        o = planner.plan(p)
        return o.safe_velocity + w, o

    for k in range(n_ticks + 1):
        t = k * dt
        out = planner.plan(phi)
        flags = 0 if out.ok else FLAG_PLANNER
        if not out.ok:
            runlog.events.append(f"tick {k}: planner {out.status.value}")
        rms.update(out.safe_velocity)
        w = inject_noise(np.zeros(4), noise, rms.value, rng) if noise.ratio else np.zeros(4)
        v = out.safe_velocity + w
        sep = float(np.hypot(*(phi[0:2] - phi[2:4])))
        yaw = _bar_yaw(phi)
        row = [t]
        for i in range(2):
            row += [phi[2 * i], phi[2 * i + 1], 0.0, v[2 * i], v[2 * i + 1], 0.0, yaw, 0.0, 0.0]
        row += list(phi) + list(out.safe_velocity) + list(out.barrier_values)
        row += [sep, 0.0] + zeros_grf + [flags]
        runlog.rows.append(row)
        runlog.timing.append((t, out.solve_time_s * 1e6, 0.0))
        if _at_goal(phi, cfg.goal, cfg.goal_tol_m):
            runlog.meta["goal_time_s"] = t
            runlog.meta["terminated"] = "goal"
            break
        if k == n_ticks:
            break
        k1 = v
        k2, o2 = field_at(phi + 0.5 * dt * k1, w)
        k3, o3 = field_at(phi + 0.5 * dt * k2, w)
        k4, o4 = field_at(phi + dt * k3, w)
        if not (o2.ok and o3.ok and o4.ok):
            runlog.events.append(f"tick {k}: planner fallback inside the integration step")
        phi = phi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return runlog


def initial_state(cfg: ScenarioConfig, pair: SrbPair) -> SrbState:
    """Agents standing at nominal height with attachment points at the starts,
    facing along the bar normal toward the goals."""
    starts = np.asarray(cfg.starts_m, dtype=float)
    travel = np.asarray(cfg.goals_m, dtype=float).mean(axis=0) - starts.mean(axis=0)
    yaw = np.full(2, bar_normal_yaw(starts[0] - starts[1], travel))
    com = np.zeros((2, 3))
    R = np.zeros((2, 3, 3))
    for i in range(2):
        R[i] = rot_z(yaw[i])
        arm = R[i] @ np.asarray(pair.agents[i].attach_offset)
        com[i, :2] = starts[i] - arm[:2]
        com[i, 2] = pair.agents[i].nominal_height
    return SrbState.from_parts(com, R_op=R)


def pair_for(cfg: ScenarioConfig) -> SrbPair:
    pl = cfg.plant
    agent = AgentParams(mass=pl.mass_kg, inertia=np.diag(pl.inertia_kgm2), attach_offset=pl.attach_offset_m,
                        nominal_height=pl.nominal_height_m)
    return SrbPair((agent, agent), psi=cfg.psi_m2)


def mpc_config_for(cfg: ScenarioConfig) -> MpcConfig:
    m = cfg.mpc
    agent = np.concatenate([np.asarray(m.q_pos, dtype=float), m.q_vel * np.ones(3),
                            m.q_xi * np.ones(3), m.q_omega * np.ones(3)])
    Q = np.diag(np.tile(agent, 2))
    return MpcConfig(horizon=m.horizon, dt=1.0 / cfg.planner.rate_hz, Q=Q, P=m.terminal_ratio * Q,
                     R_f=m.r_f * np.eye(24), R_lambda=m.r_lambda, mu=m.mu, f_min=m.f_min_n, f_max=m.f_max_n)


def _run_full(cfg: ScenarioConfig) -> RunLog:
    planner = _planner_for(cfg)
    bset = planner.bset
    pair = pair_for(cfg)
    mcfg = mpc_config_for(cfg)
    gait = GaitSchedule(cfg.gait.period_s, cfg.gait.duty)
    dt = mcfg.dt
    substeps = max(1, int(round(dt / cfg.plant.dt_s)))
    h = dt / substeps
    n_ticks = int(round(cfg.duration_s / dt))
    noise = _noise_for(cfg)
    rng = noise.generator()
    rms = RunningRms()
    runlog = RunLog(log_columns(bset.labels()), meta=_meta(cfg, dt))
    state = initial_state(cfg, pair)
    contacts = None
    f_prev, lam_prev = None, 0.0
    pl = cfg.plant
    for k in range(n_ticks + 1):
        t = k * dt
        p = pair.attach_points(state)
        phi = p[:, :2].reshape(4)
        out = planner.plan(phi)
        flags = 0 if out.ok else FLAG_PLANNER
        if not out.ok:
            runlog.events.append(f"tick {k}: planner {out.status.value}")
        rms.update(out.safe_velocity)
        cmd = inject_noise(out.safe_velocity, noise, rms.value, rng) if noise.ratio else out.safe_velocity
        contacts = contact_and_feet(t, state, gait, cmd, pair.agents, contacts)
        f_op = pair.static_forces(contacts) if f_prev is None else f_prev
        ref = build_reference(cmd, state, mcfg, pair)
        res = solve_mpc(state, contacts, ref, mcfg, pair, f_op, lam_prev)
        diag = res.diagnostics
        f, lam = res.control.f_grf, res.control.lam
        if diag.softened:
            flags |= FLAG_MPC_SOFT
        if diag.status is not QpStatus.OPTIMAL:
            flags |= FLAG_MPC_FAIL
            runlog.events.append(f"tick {k}: MPC {diag.status.value}; static GRFs applied")
            f, lam = pair.static_forces(contacts), 0.0
        row = [t]
        for i in range(2):
            yaw, pitch, roll = euler_zyx(state.rotation_matrix(i))
            row += list(state.com(i)) + list(state.vel(i)) + [yaw, pitch, roll]
        row += list(phi) + list(out.safe_velocity) + list(out.barrier_values)
        row += [float(np.linalg.norm(p[0] - p[1])), lam] + list(f) + [flags]
        runlog.rows.append(row)
        runlog.timing.append((t, out.solve_time_s * 1e6, diag.solve_time_s * 1e6))
        if _at_goal(phi, cfg.goal, cfg.goal_tol_m):
            runlog.meta["goal_time_s"] = t
            runlog.meta["terminated"] = "goal"
            break
        if k == n_ticks:
            break
        try:
            for _ in range(substeps):
                state = pair.integrate(state, contacts, f, h, pl.baumgarte_omega, pl.baumgarte_zeta,
                                       pl.drift_bound_m)
        except (ConstraintDriftError, SingularConstraintError) as exc:
            runlog.events.append(f"tick {k}: plant abort: {exc}")
            runlog.meta["terminated"] = "abort"
            break
        f_prev, lam_prev = f, lam
    return runlog
