"""Top-layer coordination planner built on control barrier functions.

The planner works on the planar positions ``phi = (x1, y1, x2, y2)`` of two
agents joined by a bar, and returns the velocity closest to a nominal
command (in the ``P_s`` metric) that keeps every barrier row satisfied::

    grad H(phi) . phi_s >= -A H(phi)

Barrier rows, in stacking order:

* agent/obstacle distance, agent-major (``h_a{i}_o{z}``)
* bar sample ``rho = g p_1 + (1 - g) p_2`` against each obstacle, sample-major
  (``h_co{c}_o{z}``)
* the two sides of the distance band ``(1 -+ eps) psi`` (``h_hc1``, ``h_hc2``)
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .qp import QpProblem, QpStatus, solve_inequality_qp

DEFAULT_GAMMAS = (0.2, 0.4, 0.6, 0.8)
DEFAULT_AGENT_RADIUS = 0.3


class DegenerateBarrierError(ValueError):
    """Barrier gradient undefined: a sample point sits on an obstacle centre."""


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.asarray(self.center, dtype=float).reshape(2))
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class HolonomicSpec:
    psi: float = 1.0
    eps: float = 5e-5

    def __post_init__(self):
        if not self.psi > 0:
            raise ValueError("psi must be positive")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")


@dataclass(frozen=True)
class BarrierSet:
    obstacles: tuple = ()
    gamma_samples: tuple = DEFAULT_GAMMAS
    alpha_agent: float | np.ndarray = 0.1
    alpha_coord: float | np.ndarray = 0.1
    alpha_hc: tuple = (0.001, 0.001)
    holonomic: HolonomicSpec | None = field(default_factory=HolonomicSpec)
    agent_radius: float = DEFAULT_AGENT_RADIUS
    n_agents: int = 2

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "gamma_samples", tuple(float(g) for g in self.gamma_samples))
        if self.n_agents not in (1, 2):
            raise ValueError("only one or two agents are supported")
        if any(not 0.0 <= g <= 1.0 for g in self.gamma_samples):
            raise ValueError("gamma samples must lie in [0, 1]")
        if len(set(self.gamma_samples)) != len(self.gamma_samples):
            raise ValueError("gamma samples must be distinct")
        if self.agent_radius < 0:
            raise ValueError("agent_radius must be nonnegative")
        if np.any(self.gains() <= 0):
            raise ValueError("all barrier gains must be positive")

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    @property
    def eta(self) -> int:
        return len(self.gamma_samples) if self.n_agents == 2 else 0

    @property
    def has_holonomic(self) -> bool:
        return self.n_agents == 2 and self.holonomic is not None

    @property
    def dim(self) -> int:
        D = self.n_obstacles
        return D * (self.n_agents + self.eta) + (2 if self.has_holonomic else 0)

    def gains(self) -> np.ndarray:
        D, N, eta = self.n_obstacles, self.n_agents, self.eta
        a_agent = np.broadcast_to(np.asarray(self.alpha_agent, dtype=float), (N, D)).reshape(-1)
        a_coord = np.broadcast_to(np.asarray(self.alpha_coord, dtype=float), (eta, D)).reshape(-1)
        parts = [a_agent, a_coord]
        if self.has_holonomic:
            parts.append(np.asarray(self.alpha_hc, dtype=float).reshape(2))
        return np.concatenate(parts)

    @cached_property
    def _centers(self):
        return np.ascontiguousarray([o.center for o in self.obstacles], dtype=float).reshape(-1, 2)

    @cached_property
    def _radii(self):
        return np.ascontiguousarray([o.radius for o in self.obstacles], dtype=float)

    @cached_property
    def _gammas(self):
        return np.ascontiguousarray(self.gamma_samples, dtype=float)

    @cached_property
    def _gains(self):
        return self.gains()

    def labels(self) -> list[str]:
        D, N = self.n_obstacles, self.n_agents
        out = [f"h_a{i + 1}_o{z + 1}" for i in range(N) for z in range(D)]
        out += [f"h_co{c + 1}_o{z + 1}" for c in range(self.eta) for z in range(D)]
        if self.has_holonomic:
            out += ["h_hc1", "h_hc2"]
        return out


@dataclass(frozen=True)
class PlannerOutput:
    safe_velocity: np.ndarray
    barrier_values: np.ndarray
    active_flags: np.ndarray
    status: QpStatus
    solve_time_s: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def _agent_pos(phi, i):
    return np.asarray(phi, dtype=float)[2 * i:2 * i + 2]


def barrier_agent(phi, i: int, obs: Obstacle, agent_radius: float = DEFAULT_AGENT_RADIUS) -> float:
    """Distance margin of agent ``i`` to an obstacle inflated by ``agent_radius``."""
    diff = _agent_pos(phi, i) - np.asarray(obs.center)
    dist = float(np.hypot(diff[0], diff[1]))
    if dist == 0.0:
        raise DegenerateBarrierError(f"agent {i} is at the centre of obstacle {obs}")
    return dist - (obs.radius + agent_radius)


def barrier_coordination(phi, gamma: float, obs: Obstacle) -> float:
    """Margin of the bar point ``gamma p_1 + (1 - gamma) p_2`` to an obstacle."""
    rho = gamma * _agent_pos(phi, 0) + (1.0 - gamma) * _agent_pos(phi, 1)
    diff = rho - np.asarray(obs.center)
    dist = float(np.hypot(diff[0], diff[1]))
    if dist == 0.0:
        raise DegenerateBarrierError(f"bar sample gamma={gamma} is at the centre of obstacle {obs}")
    return dist - obs.radius


def barrier_holonomic(phi, spec: HolonomicSpec) -> tuple[float, float]:
    d = _agent_pos(phi, 0) - _agent_pos(phi, 1)
    sq = float(d @ d)
    return sq - (1.0 - spec.eps) * spec.psi, (1.0 + spec.eps) * spec.psi - sq


def _stack_rows_py(phi, centers, radii, agent_radius, gammas, n_agents, holonomic, psi, eps, H, grad):
    # numpy fallback for _barrier_ext.stack_rows
    N = n_agents
    D = centers.shape[0]
    grad[:] = 0.0
    if D:
        P = phi.reshape(N, 2)
        diff = P[:, None, :] - centers[None, :, :]             # (N, D, 2)
        dist = np.sqrt((diff * diff).sum(axis=2))
        if np.any(dist == 0.0):
            return 1
        H[:N * D] = (dist - (radii + agent_radius)[None, :]).reshape(-1)
        unit = diff / dist[:, :, None]
        for i in range(N):
            grad[i * D:(i + 1) * D, 2 * i:2 * i + 2] = unit[i]
        eta = gammas.shape[0] if N == 2 else 0
        if eta:
            rho = gammas[:, None] * P[0][None, :] + (1.0 - gammas)[:, None] * P[1][None, :]
            rdiff = rho[:, None, :] - centers[None, :, :]      # (eta, D, 2)
            rdist = np.sqrt((rdiff * rdiff).sum(axis=2))
            if np.any(rdist == 0.0):
                return 1
            s = slice(N * D, N * D + eta * D)
            H[s] = (rdist - radii[None, :]).reshape(-1)
            runit = (rdiff / rdist[:, :, None]).reshape(-1, 2)
            w = np.repeat(gammas, D)
            grad[s, 0:2] = w[:, None] * runit
            grad[s, 2:4] = (1.0 - w)[:, None] * runit
    if holonomic and N == 2:
        d = phi[0:2] - phi[2:4]
        sq = float(d @ d)
        H[-2] = sq - (1.0 - eps) * psi
        H[-1] = (1.0 + eps) * psi - sq
        grad[-2, 0:2], grad[-2, 2:4] = 2.0 * d, -2.0 * d
        grad[-1] = -grad[-2]
    return 0


try:
    from ._barrier_ext import stack_rows as _stack_rows_ext
except ImportError:  # extension not built
    _stack_rows_ext = None

if _stack_rows_ext is not None and os.environ.get("COOPCBF_PURE_PYTHON", "") in ("", "0"):
    _stack_rows = _stack_rows_ext
else:
    _stack_rows = _stack_rows_py


def _stack_into(phi, bset, H, grad):
    hol = bset.holonomic
    flag = _stack_rows(phi, bset._centers, bset._radii, float(bset.agent_radius), bset._gammas,
                       bset.n_agents, int(bset.has_holonomic), hol.psi if hol else 1.0,
                       hol.eps if hol else 0.0, H, grad)
    if flag:
        raise DegenerateBarrierError("a barrier sample point coincides with an obstacle centre")


def stack_barriers(phi, bset: BarrierSet):
    """Barrier vector ``H``, its gradient rows w.r.t. ``phi`` and the gains ``A``.

    Returns
    -------
    H : (K,) ndarray
    grad_H : (K, 2N) ndarray
    A : (K, K) diagonal ndarray
    """
    phi = np.ascontiguousarray(phi, dtype=float).reshape(-1)
    if phi.shape[0] != 2 * bset.n_agents:
        raise ValueError(f"phi must have {2 * bset.n_agents} entries")
    K = bset.dim
    H = np.empty(K)
    grad = np.zeros((K, 2 * bset.n_agents))
    _stack_into(phi, bset, H, grad)
    return H, grad, np.diag(bset._gains)


def barrier_qp(k_d, H, grad, gains, P_s) -> QpProblem:
    """``argmin (u - k_d)' P_s (u - k_d)  s.t.  grad u >= -gains * H`` as a QpProblem."""
    P2 = 2.0 * np.asarray(P_s, dtype=float)
    return QpProblem(P2, -P2 @ np.asarray(k_d, dtype=float), grad, -gains * H)


def _check_spd(P_s, n):
    P_s = np.asarray(P_s, dtype=float)
    if P_s.shape != (n, n) or not np.allclose(P_s, P_s.T) or np.linalg.eigvalsh(P_s)[0] <= 0:
        raise ValueError(f"P_s must be a symmetric positive definite {n}x{n} matrix")
    return P_s


def plan_safe_velocity(phi, bset: BarrierSet, k_d, P_s=None, tol: float = 1e-8) -> PlannerOutput:
    """Safe planar velocity for the current positions.

    If the QP is not solved to optimality the velocity falls back to zero and
    ``status`` carries the solver verdict.
    """
    n = 2 * bset.n_agents
    P_s = 0.5 * np.eye(n) if P_s is None else _check_spd(P_s, n)
    return _plan(np.ascontiguousarray(phi, dtype=float).reshape(n), bset,
                 np.asarray(k_d, dtype=float).reshape(n), 2.0 * P_s, tol)


def _plan(phi, bset, k_d, P2, tol):
    n = phi.shape[0]
    K = bset.dim
    t0 = time.perf_counter()
    H = np.empty(K)
    grad = np.empty((K, n))
    _stack_into(phi, bset, H, grad)
    gains = bset._gains
    sol = solve_inequality_qp(P2, -P2 @ k_d, grad, -gains * H, tol)
    elapsed = time.perf_counter() - t0
    if sol.status is QpStatus.OPTIMAL:
        u = sol.primal
    else:
        u = np.zeros(n)
    rows = grad @ u + gains * H
    scale = 1.0 + np.abs(grad).sum(axis=1) * np.abs(u).max(initial=0.0)
    active = np.abs(rows) <= 1e-8 * scale
    return PlannerOutput(u, H, active, sol.status, elapsed)


def single_agent_filter(phi_i, obstacles, u_d, P_s=None, alpha=0.1, agent_radius: float = 0.0,
                        tol: float = 1e-8) -> np.ndarray:
    """Per-agent safety filter: one agent, obstacle rows only."""
    bset = BarrierSet(obstacles=tuple(obstacles), gamma_samples=(), alpha_agent=alpha,
                      holonomic=None, agent_radius=agent_radius, n_agents=1)
    out = plan_safe_velocity(np.asarray(phi_i, dtype=float).reshape(2), bset, u_d, P_s, tol)
    return out.safe_velocity


class Planner:
    """Planner bound to one barrier set, weight matrix and goal.

    Holds no state between calls.
    """

    def __init__(self, bset: BarrierSet, P_s=None, goal=None, k_gain: float = 0.1):
        n = 2 * bset.n_agents
        self.bset = bset
        self.P_s = 0.5 * np.eye(n) if P_s is None else _check_spd(P_s, n)
        self.goal = np.zeros(n) if goal is None else np.asarray(goal, dtype=float).reshape(n)
        self.k_gain = float(k_gain)
        self.labels = bset.labels()
        self.tol = 1e-8
        self._P2 = 2.0 * self.P_s

    def desired_velocity(self, phi) -> np.ndarray:
        return self.k_gain * (self.goal - np.asarray(phi, dtype=float))

    def plan(self, phi, k_d=None) -> PlannerOutput:
        phi = np.ascontiguousarray(phi, dtype=float)
        k_d = self.desired_velocity(phi) if k_d is None else np.asarray(k_d, dtype=float)
        return _plan(phi, self.bset, k_d, self._P2, self.tol)

    def velocity_field(self, phi) -> np.ndarray:
        return self.plan(phi).safe_velocity
