"""Receding-horizon GRF planner over the interconnected SRB model.

The decision vector stacks, for each horizon step ``k = 0 .. N-1``, the
block ``(x_{k+1}, f_k, lam_k)``, so ``N (24 + 24 + 1)`` variables in total.
Dynamics and the linearized ``Lam_ddot = 0`` rows are equalities; swing
legs are pinned to zero force; stance legs live in a four-facet friction
pyramid with vertical bounds.

:func:`build_mpc_qp` assembles that stacked problem as written.
:func:`solve_mpc` solves the equivalent condensed problem: states are
eliminated through the dynamics and swing forces dropped, leaving the
stance forces, the multipliers and the holonomic rows.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .geom3d import log_so3, rot_z
from .qp import QpProblem, QpStatus, solve_qp
from .srb import FORCE_DIM, N_LEGS, STATE_DIM, ContactState, ControlSolution, SrbPair, SrbState

log = logging.getLogger(__name__)

BLOCK = STATE_DIM + FORCE_DIM + 1


def paper_stage_weights() -> np.ndarray:
    """Stage weight ``Q`` of the experiments (24x24, diagonal)."""
    agent = np.concatenate([1e5 * np.array([3.0, 300.0, 30.0]), 1e4 * np.ones(3),
                            1e8 * np.ones(3), 5e3 * np.ones(3)])
    return np.diag(np.tile(agent, 2))


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 6
    dt: float = 0.005
    Q: np.ndarray = field(default_factory=paper_stage_weights)
    P: np.ndarray | None = None
    R_f: np.ndarray = field(default_factory=lambda: 1e-2 * np.eye(FORCE_DIM))
    R_lambda: float = 1e4
    mu: float = 0.6
    f_min: float = 0.0
    f_max: float = 500.0
    tol: float = 1e-6
    cost_scale: float = 1e-4
    soft_penalty: float = 1e6
    heading_frame: bool = True

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "P", 0.1 * Q if self.P is None else np.asarray(self.P, dtype=float))
        object.__setattr__(self, "R_f", np.asarray(self.R_f, dtype=float))
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.mu > 0:
            raise ValueError("friction coefficient must be positive")
        if not 0 <= self.f_min < self.f_max:
            raise ValueError("need 0 <= f_min < f_max")
        if not self.R_lambda > 0:
            raise ValueError("R_lambda must be positive")
        for name, M, n in (("Q", self.Q, STATE_DIM), ("P", self.P, STATE_DIM), ("R_f", self.R_f, FORCE_DIM)):
            if M.shape != (n, n) or not np.allclose(M, M.T) or np.linalg.eigvalsh(M)[0] <= 0:
                raise ValueError(f"{name} must be symmetric positive definite {n}x{n}")

    @property
    def n_vars(self) -> int:
        return self.horizon * BLOCK


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Desired states ``(N+1, 24)``; row 0 is the current instant."""

    x_des: np.ndarray
    yaw: np.ndarray

    @property
    def horizon(self) -> int:
        return self.x_des.shape[0] - 1


@dataclass(frozen=True)
class MpcDiagnostics:
    status: QpStatus
    solve_time_s: float
    kkt_residual: float
    n_vars: int
    softened: bool
    holonomic_residual: float
    iterations: int


@dataclass(frozen=True)
class MpcResult:
    control: ControlSolution
    x_next: SrbState
    x_pred: np.ndarray
    f_pred: np.ndarray
    lam_pred: np.ndarray
    diagnostics: MpcDiagnostics


def stage_weights(cfg: MpcConfig, ref: ReferenceTrajectory):
    """``(Q, P)`` for one solve.

    With ``cfg.heading_frame`` the planar position and velocity blocks are
    read in each agent's desired-heading frame (first axis forward), so
    the anisotropic position weight follows the robot as the bar turns.
    At zero yaw this is ``cfg.Q`` and ``cfg.P`` unchanged.
    """
    if not cfg.heading_frame:
        return cfg.Q, cfg.P
    T = np.eye(STATE_DIM)
    for i, yaw in enumerate(np.asarray(ref.yaw, dtype=float).reshape(2)):
        Rz = rot_z(yaw)
        T[12 * i:12 * i + 3, 12 * i:12 * i + 3] = Rz
        T[12 * i + 3:12 * i + 6, 12 * i + 3:12 * i + 6] = Rz
    return T @ cfg.Q @ T.T, T @ cfg.P @ T.T


def _yaw_of(R) -> float:
    return float(np.arctan2(R[1, 0], R[0, 0]))


def bar_normal_yaw(bar, travel) -> float:
    """Yaw of the planar bar normal that points along ``travel``."""
    bar = np.asarray(bar, dtype=float)[:2]
    n = np.array([bar[1], -bar[0]])
    if n @ np.asarray(travel, dtype=float)[:2] < 0:
        n = -n
    return float(np.arctan2(n[1], n[0]))


def desired_yaw(bar, current_yaw) -> np.ndarray:
    """Heading perpendicular to the planar bar, on the side nearest the
    current heading.

    ``bar`` is ``p_1 - p_2``.  Choosing the nearer normal keeps the
    reference continuous while the bar turns through any angle; the
    travel direction only fixes the heading at the start.
    """
    bar = np.asarray(bar, dtype=float)[:2]
    current_yaw = np.asarray(current_yaw, dtype=float).reshape(2)
    if np.hypot(*bar) == 0.0:
        return current_yaw.copy()
    ref = np.arctan2(np.sin(current_yaw).sum(), np.cos(current_yaw).sum())
    yaw = np.arctan2(-bar[0], bar[1])
    if abs(_wrap(yaw - ref)) > np.pi / 2:
        yaw = _wrap(yaw + np.pi)
    return np.full(2, yaw)


def _wrap(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def build_reference(phi_s, state: SrbState, cfg: MpcConfig, pair: SrbPair) -> ReferenceTrajectory:
    """Reference over the horizon from the planner's safe velocity.

    Attachment points advance with ``phi_s`` from where they are now; COM
    targets follow from the desired heading; height is nominal; roll,
    pitch and body rates are zero.
    """
    phi_s = getattr(phi_s, "safe_velocity", phi_s)
    phi_s = np.asarray(phi_s, dtype=float).reshape(2, 2)
    p_now = pair.attach_points(state)
    yaw_now = [_yaw_of(state.rotation_matrix(i)) for i in range(2)]
    yaw = desired_yaw(p_now[0] - p_now[1], yaw_now)
    N = cfg.horizon
    x_des = np.zeros((N + 1, STATE_DIM))
    for i in range(2):
        b = 12 * i
        Rd = rot_z(yaw[i])
        arm = (Rd @ np.asarray(pair.agents[i].attach_offset))[:2]
        xi = log_so3(state.R_op[i].T @ Rd)
        for k in range(N + 1):
            x_des[k, b:b + 2] = p_now[i, :2] + k * cfg.dt * phi_s[i] - arm
            x_des[k, b + 2] = pair.agents[i].nominal_height
            x_des[k, b + 3:b + 5] = phi_s[i]
            x_des[k, b + 6:b + 9] = xi
    return ReferenceTrajectory(x_des, yaw)


def friction_pyramid_rows(mu: float, contacts: ContactState, f_min: float = 0.0, f_max: float = 500.0):
    """Rows for one step's 24 GRF entries.

    Returns ``(C, b, E, e)``: stance legs satisfy ``C f >= b`` (``f_z`` in
    ``[f_min, f_max]`` and ``|f_x|, |f_y| <= mu f_z``); swing legs get
    ``E f = e = 0``.
    """
    if not mu > 0:
        raise ValueError("friction coefficient must be positive")
    rows, rhs, eq = [], [], []
    for i in range(2):
        for ell in range(N_LEGS):
            k = 12 * i + 3 * ell
            if contacts.stance[i, ell]:
                for coef, bound in (((0, 0, 1), f_min), ((0, 0, -1), -f_max),
                                    ((-1, 0, mu), 0.0), ((1, 0, mu), 0.0),
                                    ((0, -1, mu), 0.0), ((0, 1, mu), 0.0)):
                    r = np.zeros(FORCE_DIM)
                    r[k:k + 3] = coef
                    rows.append(r)
                    rhs.append(bound)
            else:
                for a in range(3):
                    r = np.zeros(FORCE_DIM)
                    r[k + a] = 1.0
                    eq.append(r)
    C = np.array(rows).reshape(-1, FORCE_DIM)
    E = np.array(eq).reshape(-1, FORCE_DIM)
    return C, np.array(rhs, dtype=float), E, np.zeros(E.shape[0])


def _contact_list(contacts, N):
    if isinstance(contacts, ContactState):
        return [contacts] * N
    contacts = list(contacts)
    if len(contacts) != N:
        raise ValueError(f"need {N} contact states, got {len(contacts)}")
    return contacts


@dataclass(frozen=True)
class MpcLayout:
    """Index helpers for the stacked decision vector."""

    horizon: int

    def x(self, k: int) -> slice:
        """State ``x_k`` for ``k = 1 .. N``."""
        s = (k - 1) * BLOCK
        return slice(s, s + STATE_DIM)

    def f(self, k: int) -> slice:
        s = k * BLOCK + STATE_DIM
        return slice(s, s + FORCE_DIM)

    def lam(self, k: int) -> int:
        return k * BLOCK + STATE_DIM + FORCE_DIM


def build_mpc_qp(state: SrbState, contacts, ref: ReferenceTrajectory, cfg: MpcConfig, pair: SrbPair,
                 f_op=None, lam_op: float = 0.0):
    """Assemble the horizon QP.

    The model is linearized once at ``(state, f_op, lam_op)`` and shared by
    every step.  Returns ``(problem, layout, ltv)``; the cost is multiplied
    by ``cfg.cost_scale``.
    """
    N = cfg.horizon
    if ref.horizon != N:
        raise ValueError("reference horizon does not match the configuration")
    cl = _contact_list(contacts, N)
    if f_op is None:
        f_op = pair.static_forces(cl[0])
    ltv = pair.linearize(state, cl[0], f_op, lam_op, cfg.dt)
    L = MpcLayout(N)
    n = cfg.n_vars
    s = cfg.cost_scale

    G = np.zeros((n, n))
    c = np.zeros(n)
    Wq, Wp = stage_weights(cfg, ref)
    for k in range(N):
        W = Wp if k == N - 1 else Wq
        xs = L.x(k + 1)
        G[xs, xs] = 2.0 * s * W
        c[xs] = -2.0 * s * W @ ref.x_des[k + 1]
        fs = L.f(k)
        G[fs, fs] = 2.0 * s * cfg.R_f
        G[L.lam(k), L.lam(k)] = 2.0 * s * cfg.R_lambda

    eq_rows, eq_rhs, in_rows, in_rhs = [], [], [], []
    x0 = state.x
    for k in range(N):
        Ek = np.zeros((STATE_DIM, n))
        Ek[:, L.x(k + 1)] = np.eye(STATE_DIM)
        Ek[:, L.f(k)] = -ltv.B
        Ek[:, L.lam(k)] = -ltv.C
        hk = np.zeros(n)
        hk[L.f(k)] = ltv.Gf
        hk[L.lam(k)] = ltv.Gl
        if k == 0:
            eq_rhs.append(ltv.A @ x0 + ltv.e)
            h_rhs = -ltv.beta - ltv.Gx @ x0
        else:
            Ek[:, L.x(k)] = -ltv.A
            eq_rhs.append(ltv.e)
            hk[L.x(k)] = ltv.Gx
            h_rhs = -ltv.beta
        eq_rows.append(Ek)
        eq_rows.append(hk[None, :])
        eq_rhs.append([h_rhs])
        C, b, E, e = friction_pyramid_rows(cfg.mu, cl[k], cfg.f_min, cfg.f_max)
        if C.shape[0]:
            Ck = np.zeros((C.shape[0], n))
            Ck[:, L.f(k)] = C
            in_rows.append(Ck)
            in_rhs.append(b)
        if E.shape[0]:
            Sk = np.zeros((E.shape[0], n))
            Sk[:, L.f(k)] = E
            eq_rows.append(Sk)
            eq_rhs.append(e)
    problem = QpProblem(G, c,
                        np.vstack(in_rows) if in_rows else np.zeros((0, n)),
                        np.concatenate(in_rhs) if in_rhs else np.zeros(0),
                        np.vstack(eq_rows), np.concatenate(eq_rhs))
    return problem, L, ltv


def _soften(problem: QpProblem, penalty: float) -> QpProblem:
    """Add one nonnegative slack per inequality row with a quadratic penalty."""
    n, m = problem.n, problem.m
    G = np.zeros((n + m, n + m))
    G[:n, :n] = problem.cost_matrix
    G[n:, n:] = 2.0 * penalty * np.eye(m)
    c = np.concatenate([problem.cost_vector, np.zeros(m)])
    C = np.block([[problem.ineq_matrix, np.eye(m)], [np.zeros((m, n)), np.eye(m)]])
    b = np.concatenate([problem.ineq_vector, np.zeros(m)])
    E = np.hstack([problem.eq_matrix, np.zeros((problem.p, m))])
    return QpProblem(G, c, C, b, E, problem.eq_vector)


def holonomic_residuals(z, layout: MpcLayout, ltv, x0) -> np.ndarray:
    """Linearized ``Lam_ddot`` row value at every horizon step."""
    out = np.empty(layout.horizon)
    for k in range(layout.horizon):
        xk = x0 if k == 0 else z[layout.x(k)]
        out[k] = ltv.Gx @ xk + ltv.Gf @ z[layout.f(k)] + ltv.Gl * z[layout.lam(k)] + ltv.beta
    return out


def _selection(contacts: ContactState) -> np.ndarray:
    """Columns picking the stance-leg GRF components out of the 24."""
    idx = np.flatnonzero(contacts.mask)
    S = np.zeros((FORCE_DIM, idx.size))
    S[idx, np.arange(idx.size)] = 1.0
    return S


def condense(state: SrbState, contacts, ref: ReferenceTrajectory, cfg: MpcConfig, pair: SrbPair,
             f_op=None, lam_op: float = 0.0):
    """Eliminate states and swing forces from the horizon problem.

    The reduced variable ``w`` stacks, per step, the stance GRF components
    and ``lam``.  Returns ``(problem, expand, ltv)`` where ``expand(w)``
    rebuilds the full stacked decision vector.
    """
    N = cfg.horizon
    if ref.horizon != N:
        raise ValueError("reference horizon does not match the configuration")
    cl = _contact_list(contacts, N)
    if f_op is None:
        f_op = pair.static_forces(cl[0])
    ltv = pair.linearize(state, cl[0], f_op, lam_op, cfg.dt)
    sc = cfg.cost_scale
    S = [_selection(c) for c in cl]
    sizes = [Sk.shape[1] + 1 for Sk in S]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    nw = int(offs[-1])
    Bw = [np.hstack([ltv.B @ Sk, ltv.C[:, None]]) for Sk in S]
    # x_{k+1} = T[k] w + t[k]
    T = np.zeros((N, STATE_DIM, nw))
    t = np.zeros((N, STATE_DIM))
    prev_T = np.zeros((STATE_DIM, nw))
    prev_t = state.x
    for k in range(N):
        T[k] = ltv.A @ prev_T
        T[k][:, offs[k]:offs[k + 1]] += Bw[k]
        t[k] = ltv.A @ prev_t + ltv.e
        prev_T, prev_t = T[k], t[k]

    H = np.zeros((nw, nw))
    g = np.zeros(nw)
    Wq, Wp = stage_weights(cfg, ref)
    for k in range(N):
        W = Wp if k == N - 1 else Wq
        WT = W @ T[k]
        H += 2.0 * sc * T[k].T @ WT
        g += 2.0 * sc * WT.T @ (t[k] - ref.x_des[k + 1])
        sl = slice(offs[k], offs[k + 1])
        H[sl, sl][:-1, :-1] += 2.0 * sc * S[k].T @ cfg.R_f @ S[k]
        H[offs[k + 1] - 1, offs[k + 1] - 1] += 2.0 * sc * cfg.R_lambda
    H = 0.5 * (H + H.T)

    E = np.zeros((N, nw))
    e = np.zeros(N)
    in_rows, in_rhs = [], []
    for k in range(N):
        sl = slice(offs[k], offs[k + 1])
        E[k, sl] = np.append(ltv.Gf @ S[k], ltv.Gl)
        if k == 0:
            e[k] = -ltv.beta - ltv.Gx @ state.x
        else:
            E[k] += ltv.Gx @ T[k - 1]
            e[k] = -ltv.beta - ltv.Gx @ t[k - 1]
        C, b, _, _ = friction_pyramid_rows(cfg.mu, cl[k], cfg.f_min, cfg.f_max)
        if C.shape[0]:
            Ck = np.zeros((C.shape[0], nw))
            Ck[:, offs[k]:offs[k + 1] - 1] = C @ S[k]
            in_rows.append(Ck)
            in_rhs.append(b)
    problem = QpProblem(H, g,
                        np.vstack(in_rows) if in_rows else np.zeros((0, nw)),
                        np.concatenate(in_rhs) if in_rhs else np.zeros(0), E, e)
    L = MpcLayout(N)

    def expand(w):
        z = np.zeros(cfg.n_vars)
        for k in range(N):
            z[L.x(k + 1)] = T[k] @ w + t[k]
            z[L.f(k)] = S[k] @ w[offs[k]:offs[k + 1] - 1]
            z[L.lam(k)] = w[offs[k + 1] - 1]
        return z

    return problem, expand, ltv


def solve_mpc(state: SrbState, contacts, ref: ReferenceTrajectory, cfg: MpcConfig, pair: SrbPair,
              f_op=None, lam_op: float = 0.0) -> MpcResult:
    """Solve the horizon problem and return the first-step control.

    The condensed problem (see :func:`condense`) has the same minimizer as
    the stacked one from :func:`build_mpc_qp`.  If the hard problem is not
    solved, the friction rows are softened with penalized slacks and
    ``diagnostics.softened`` is set.  Dynamics and holonomic rows are never
    relaxed.
    """
    t0 = time.perf_counter()
    problem, expand, ltv = condense(state, contacts, ref, cfg, pair, f_op, lam_op)
    sol = solve_qp(problem, cfg.tol, check=False)
    softened = False
    w = sol.primal
    if sol.status is not QpStatus.OPTIMAL:
        log.warning("MPC QP %s (residual %.2e); softening friction rows", sol.status.value, sol.kkt_residual)
        softened = True
        sol = solve_qp(_soften(problem, cfg.cost_scale * cfg.soft_penalty), cfg.tol, check=False)
        w = sol.primal[:problem.n]
    z = expand(w)
    elapsed = time.perf_counter() - t0
    N = cfg.horizon
    L = MpcLayout(N)
    x_pred = np.stack([z[L.x(k)] for k in range(1, N + 1)])
    f_pred = np.stack([z[L.f(k)] for k in range(N)])
    lam_pred = np.array([z[L.lam(k)] for k in range(N)])
    hres = float(np.abs(holonomic_residuals(z, L, ltv, state.x)).max())
    diag = MpcDiagnostics(sol.status, elapsed, sol.kkt_residual, cfg.n_vars, softened, hres, sol.iterations)
    return MpcResult(ControlSolution(f_pred[0], lam_pred[0]), SrbState(x_pred[0], state.R_op),
                     x_pred, f_pred, lam_pred, diag)
