"""Two single-rigid-body agents joined by a distance constraint.

Per-agent state ``(c, v, xi, w)``: COM position and velocity (world frame),
orientation deviation ``xi`` about an operating rotation ``R_op`` and body
angular rate ``w``.  The attachment point of the bar is ``p = c + R r`` with
``R = R_op (I + [xi]x)``.  The bar carries the force ``(p_1 - p_2) lam`` on
agent 1 and its reaction on agent 2; ``Lam = |p_1 - p_2|^2`` is the
constrained quantity.

Model kinematics use ``xi_dot = w``, consistent with ``R_dot = R_op [w]x``
at the operating point.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .geom3d import RotationState, approx_rotation, reset_operating_point, skew

try:
    from ._srb_ext import rk4_step as _rk4_ext
except ImportError:  # extension not built
    _rk4_ext = None

_USE_EXT = os.environ.get("COOPCBF_PURE_PYTHON", "") in ("", "0")

GRAVITY = 9.81
N_LEGS = 4
LEG_NAMES = ("FL", "FR", "RL", "RR")
STATE_DIM = 24
FORCE_DIM = 24

# slices within a 12-dim agent block
POS, VEL, XI, OMEGA = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12)


class SingularConstraintError(ArithmeticError):
    """The multiplier's coefficient in ``Lam_ddot`` vanished."""


class ConstraintDriftError(RuntimeError):
    """Plant attachment distance left the hard drift bound."""


def _hips(x=0.18, y=0.13):
    return ((x, y, 0.0), (x, -y, 0.0), (-x, y, 0.0), (-x, -y, 0.0))


@dataclass(frozen=True)
class AgentParams:
    """Rigid-body parameters of one quadruped (A1 trunk defaults)."""

    mass: float = 12.45
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.017, 0.056, 0.065]))
    attach_offset: tuple = (-0.12, 0.0, 0.0)
    hip_offsets: tuple = _hips()
    nominal_height: float = 0.26

    def __post_init__(self):
        inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "attach_offset", tuple(float(v) for v in np.reshape(self.attach_offset, 3)))
        hips = tuple(tuple(float(v) for v in np.reshape(h, 3)) for h in self.hip_offsets)
        if len(hips) != N_LEGS:
            raise ValueError("exactly four hip offsets are required")
        object.__setattr__(self, "hip_offsets", hips)
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not np.allclose(inertia, inertia.T) or np.linalg.eigvalsh(inertia)[0] <= 0:
            raise ValueError("inertia must be symmetric positive definite")

    @property
    def inertia_inv(self) -> np.ndarray:
        return np.linalg.inv(self.inertia)


@dataclass(frozen=True)
class SrbState:
    """Stacked 24-dim state plus the two operating rotations."""

    x: np.ndarray
    R_op: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.array(self.x, dtype=float).reshape(STATE_DIM))
        object.__setattr__(self, "R_op", np.array(self.R_op, dtype=float).reshape(2, 3, 3))

    @classmethod
    def from_parts(cls, com, vel=None, xi=None, omega=None, R_op=None) -> "SrbState":
        """Build from per-agent ``(2, 3)`` arrays; omitted parts are zero."""
        blocks = [np.asarray(com, dtype=float).reshape(2, 3)]
        for part in (vel, xi, omega):
            blocks.append(np.zeros((2, 3)) if part is None else np.asarray(part, dtype=float).reshape(2, 3))
        x = np.concatenate([np.concatenate([b[i] for b in blocks]) for i in range(2)])
        R = np.stack([np.eye(3)] * 2) if R_op is None else R_op
        return cls(x, R)

    def agent(self, i: int) -> np.ndarray:
        return self.x[12 * i:12 * i + 12]

    def com(self, i: int) -> np.ndarray:
        return self.x[12 * i:12 * i + 3]

    def vel(self, i: int) -> np.ndarray:
        return self.x[12 * i + 3:12 * i + 6]

    def xi(self, i: int) -> np.ndarray:
        return self.x[12 * i + 6:12 * i + 9]

    def omega(self, i: int) -> np.ndarray:
        return self.x[12 * i + 9:12 * i + 12]

    def rotation(self, i: int) -> RotationState:
        return RotationState(self.R_op[i], self.xi(i))

    def rotation_matrix(self, i: int) -> np.ndarray:
        return approx_rotation(self.rotation(i))

    def with_x(self, x) -> "SrbState":
        return SrbState(x, self.R_op)


@dataclass(frozen=True)
class ContactState:
    """Stance flags ``(2, 4)`` and world foot positions ``(2, 4, 3)``."""

    stance: np.ndarray
    feet: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "stance", np.array(self.stance, dtype=bool).reshape(2, N_LEGS))
        object.__setattr__(self, "feet", np.array(self.feet, dtype=float).reshape(2, N_LEGS, 3))

    @property
    def mask(self) -> np.ndarray:
        """Per-component 0/1 mask over the 24 GRF entries."""
        return np.repeat(self.stance.reshape(-1), 3).astype(float)

    def n_stance(self, i: int) -> int:
        return int(self.stance[i].sum())


@dataclass(frozen=True)
class ControlSolution:
    """GRFs ``(24,)`` ordered agent, leg, axis, plus the bar multiplier."""

    f_grf: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "f_grf", np.array(self.f_grf, dtype=float).reshape(FORCE_DIM))
        object.__setattr__(self, "lam", float(self.lam))

    def check_swing(self, contacts: ContactState, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.f_grf * (1.0 - contacts.mask)) <= tol))

    def leg(self, i: int, ell: int) -> np.ndarray:
        k = 12 * i + 3 * ell
        return self.f_grf[k:k + 3]


@dataclass(frozen=True)
class LtvStep:
    """Forward-Euler LTV model ``x+ = A x + B f + C lam + e`` and the
    linearized constraint ``Gx x + Gf f + Gl lam + beta = 0``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    e: np.ndarray
    Gx: np.ndarray
    Gf: np.ndarray
    Gl: float
    beta: float


def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def static_stand_contacts(state: SrbState, params, stance=None) -> ContactState:
    """Feet under the hips on flat ground."""
    stance = np.ones((2, N_LEGS), dtype=bool) if stance is None else stance
    feet = np.zeros((2, N_LEGS, 3))
    for i in range(2):
        R = state.rotation_matrix(i)
        for ell, hip in enumerate(params[i].hip_offsets):
            feet[i, ell] = state.com(i) + R @ np.asarray(hip)
            feet[i, ell, 2] = 0.0
    return ContactState(stance, feet)


class SrbPair:
    """Interconnected SRB dynamics for two agents.

    Parameters
    ----------
    agents : pair of AgentParams
    psi : float
        Squared bar length.
    gravity : float
    """

    def __init__(self, agents=None, psi: float = 1.0, gravity: float = GRAVITY):
        self.agents = tuple(agents) if agents is not None else (AgentParams(), AgentParams())
        if len(self.agents) != 2:
            raise ValueError("exactly two agents")
        if not psi > 0:
            raise ValueError("psi must be positive")
        self.psi = float(psi)
        self.g = np.array([0.0, 0.0, -gravity])
        self._m = np.array([a.mass for a in self.agents])
        self._I = [a.inertia for a in self.agents]
        self._Iinv = [a.inertia_inv for a in self.agents]
        self._r = [np.asarray(a.attach_offset) for a in self.agents]
        self._Is = np.ascontiguousarray(self._I)
        self._Iinvs = np.ascontiguousarray(self._Iinv)
        self._rs = np.ascontiguousarray(self._r)

    # -- kinematics -------------------------------------------------------

    def attach_points(self, state: SrbState) -> np.ndarray:
        """World attachment points, ``(2, 3)``."""
        return np.stack([state.com(i) + state.rotation_matrix(i) @ self._r[i] for i in range(2)])

    def constraint(self, state: SrbState) -> tuple[float, float]:
        """``(Lam, Lam_dot)`` for the current state."""
        d, dd = self._d_and_rate(state)
        return float(d @ d), float(2.0 * d @ dd)

    def separation(self, state: SrbState) -> float:
        p = self.attach_points(state)
        return float(np.linalg.norm(p[0] - p[1]))

    def _d_and_rate(self, state):
        x = state.x
        d = np.zeros(3)
        dd = np.zeros(3)
        for i, s in ((0, 1.0), (1, -1.0)):
            b = 12 * i
            Rop = state.R_op[i]
            r = self._r[i]
            a = Rop @ (r + _cross(x[b + 6:b + 9], r))
            d += s * (x[b:b + 3] + a)
            # p_dot = v + R_op [w]x r
            dd += s * (x[b + 3:b + 6] + Rop @ _cross(x[b + 9:b + 12], r))
        return d, dd

    # -- wrench and dynamics ----------------------------------------------

    def net_wrench(self, state: SrbState, contacts: ContactState, f_grf, lam: float):
        """Net force and torque about the COM, each ``(2, 3)``; gravity included."""
        f = np.asarray(f_grf, dtype=float).reshape(2, N_LEGS, 3) * contacts.stance[:, :, None]
        d, _ = self._d_and_rate(state)
        f_net = np.zeros((2, 3))
        tau = np.zeros((2, 3))
        for i, s in ((0, 1.0), (1, -1.0)):
            c = state.com(i)
            a = state.rotation_matrix(i) @ self._r[i]
            fint = s * lam * d
            f_net[i] = f[i].sum(axis=0) + fint + self._m[i] * self.g
            t = _cross(a, fint)
            for ell in range(N_LEGS):
                if contacts.stance[i, ell]:
                    t = t + _cross(contacts.feet[i, ell] - c, f[i, ell])
            tau[i] = t
        return f_net, tau

    def _split_accel(self, state, contacts, f_grf):
        """Accelerations as ``base + lam * slope`` (both 24-vectors), plus d, d_dot."""
        x = state.x
        f = np.asarray(f_grf, dtype=float).reshape(2, N_LEGS, 3)
        d, dd = self._d_and_rate(state)
        base = np.zeros(STATE_DIM)
        slope = np.zeros(STATE_DIM)
        for i, s in ((0, 1.0), (1, -1.0)):
            b = 12 * i
            c, w = x[b:b + 3], x[b + 9:b + 12]
            R = state.R_op[i] @ (np.eye(3) + skew(x[b + 6:b + 9]))
            a = R @ self._r[i]
            fsum = np.zeros(3)
            tau = np.zeros(3)
            for ell in range(N_LEGS):
                if contacts.stance[i, ell]:
                    fl = f[i, ell]
                    fsum += fl
                    tau += _cross(contacts.feet[i, ell] - c, fl)
            I, Iinv, m = self._I[i], self._Iinv[i], self._m[i]
            base[b:b + 3] = x[b + 3:b + 6]
            base[b + 3:b + 6] = fsum / m + self.g
            base[b + 6:b + 9] = w
            base[b + 9:b + 12] = Iinv @ (R.T @ tau - _cross(w, I @ w))
            slope[b + 3:b + 6] = s * d / m
            slope[b + 9:b + 12] = Iinv @ (R.T @ (s * _cross(a, d)))
        return base, slope, d, dd

    def _pdd_of(self, state, acc):
        """``d_ddot`` implied by an acceleration vector."""
        out = np.zeros(3)
        for i, s in ((0, 1.0), (1, -1.0)):
            b = 12 * i
            out += s * (acc[b + 3:b + 6] + state.R_op[i] @ _cross(acc[b + 9:b + 12], self._r[i]))
        return out

    def lambda_coefficients(self, state: SrbState, contacts: ContactState, f_grf):
        """``(a, b)`` with ``Lam_ddot = a + b lam``."""
        base, slope, d, dd = self._split_accel(state, contacts, f_grf)
        a = 2.0 * dd @ dd + 2.0 * d @ self._pdd_of(state, base)
        b = 2.0 * d @ self._pdd_of(state, slope)
        return float(a), float(b)

    def resolve_lambda(self, state: SrbState, contacts: ContactState, f_grf, target: float = 0.0) -> float:
        """Multiplier giving ``Lam_ddot = target`` (zero for the ideal joint)."""
        a, b = self.lambda_coefficients(state, contacts, f_grf)
        d, _ = self._d_and_rate(state)
        scale = float(d @ d) / self._m.max()
        if not abs(b) > 1e-12 * max(scale, 1e-300):
            raise SingularConstraintError(
                f"multiplier coefficient {b:.3e} vanished (|d|^2 = {float(d @ d):.3e})")
        return (target - a) / b

    def dynamics(self, state: SrbState, contacts: ContactState, f_grf, lam: float) -> np.ndarray:
        """State derivative ``Gamma(x, f, lam)``."""
        base, slope, _, _ = self._split_accel(state, contacts, f_grf)
        return base + lam * slope

    def lambda_ddot(self, state: SrbState, contacts: ContactState, f_grf, lam: float) -> float:
        a, b = self.lambda_coefficients(state, contacts, f_grf)
        return a + b * lam

    # -- linearization ----------------------------------------------------

    def jacobians(self, state: SrbState, contacts: ContactState, f_grf, lam: float):
        """Analytic partials of ``Gamma`` and ``Lam_ddot``.

        Returns ``(Jx, Jf, Jl, gx, gf, gl)`` with shapes ``(24, 24)``,
        ``(24, 24)``, ``(24,)``, ``(24,)``, ``(24,)`` and scalar.
        """
        x = state.x
        f = np.asarray(f_grf, dtype=float).reshape(2, N_LEGS, 3)
        d, dd = self._d_and_rate(state)
        Jx = np.zeros((24, 24))
        Jf = np.zeros((24, 24))
        Jl = np.zeros(24)
        # partials of d w.r.t. the state
        Dd = np.zeros((3, 24))
        M = []
        for i, s in ((0, 1.0), (1, -1.0)):
            b = 12 * i
            Mi = state.R_op[i] @ skew(self._r[i])
            M.append(Mi)
            Dd[:, b:b + 3] = s * np.eye(3)
            Dd[:, b + 6:b + 9] = -s * Mi
        acc = np.zeros(24)
        for i, s in ((0, 1.0), (1, -1.0)):
            b = 12 * i
            c, w = x[b:b + 3], x[b + 9:b + 12]
            Rop = state.R_op[i]
            R = Rop @ (np.eye(3) + skew(x[b + 6:b + 9]))
            a = R @ self._r[i]
            I, Iinv, m = self._I[i], self._Iinv[i], self._m[i]
            fsum = np.zeros(3)
            tau = np.zeros(3)
            for ell in range(N_LEGS):
                if contacts.stance[i, ell]:
                    fl = f[i, ell]
                    fsum += fl
                    arm = contacts.feet[i, ell] - c
                    tau += _cross(arm, fl)
                    k = 12 * i + 3 * ell
                    Jf[b + 3:b + 6, k:k + 3] = np.eye(3) / m
                    Jf[b + 9:b + 12, k:k + 3] = Iinv @ R.T @ skew(arm)
            fint = s * lam * d
            tau += _cross(a, fint)
            # translational
            Jx[b:b + 3, b + 3:b + 6] = np.eye(3)
            Jx[b + 3:b + 6, :] = (s * lam / m) * Dd
            Jl[b + 3:b + 6] = s * d / m
            # orientation
            Jx[b + 6:b + 9, b + 9:b + 12] = np.eye(3)
            # torque partials
            Dtau = (s * lam) * (skew(a) @ Dd)
            Dtau[:, b:b + 3] += skew(fsum)
            Dtau[:, b + 6:b + 9] += (s * lam) * skew(d) @ M[i]
            Dw = Iinv @ (R.T @ Dtau)
            Dw[:, b + 6:b + 9] += Iinv @ skew(Rop.T @ tau)
            Dw[:, b + 9:b + 12] -= Iinv @ (skew(w) @ I - skew(I @ w))
            Jx[b + 9:b + 12, :] = Dw
            Jl[b + 9:b + 12] = Iinv @ (R.T @ (s * _cross(a, d)))
            acc[b:b + 3] = x[b + 3:b + 6]
            acc[b + 3:b + 6] = (fsum + fint) / m + self.g
            acc[b + 6:b + 9] = w
            acc[b + 9:b + 12] = Iinv @ (R.T @ tau - _cross(w, I @ w))
        # Lam_ddot = 2 dd.dd + 2 d.ddd, with ddd = sum s (v_dot - M w_dot)
        P = np.zeros((3, 24))
        Pdot = np.zeros((3, 24))
        for i, s in ((0, 1.0), (1, -1.0)):
            b = 12 * i
            P[:, b + 3:b + 6] = s * np.eye(3)
            P[:, b + 9:b + 12] = -s * M[i]
            Pdot[:, b + 3:b + 6] = s * np.eye(3)
            Pdot[:, b + 9:b + 12] = -s * M[i]
        ddd = P @ acc
        gx = 4.0 * dd @ (Pdot) + 2.0 * ddd @ Dd + 2.0 * d @ (P @ Jx)
        gf = 2.0 * d @ (P @ Jf)
        gl = float(2.0 * d @ (P @ Jl))
        return Jx, Jf, Jl, gx, gf, gl

    def linearize(self, state: SrbState, contacts: ContactState, f_op, lam_op: float, dt: float) -> LtvStep:
        """Jacobian linearization at the operating point, forward-Euler discretized.

        The affine terms are chosen so that the operating point reproduces
        the nonlinear forward-Euler step and ``Lam_ddot`` exactly.
        """
        if not dt > 0:
            raise ValueError("dt must be positive")
        f_op = np.asarray(f_op, dtype=float).reshape(FORCE_DIM)
        Jx, Jf, Jl, gx, gf, gl = self.jacobians(state, contacts, f_op, lam_op)
        xdot = self.dynamics(state, contacts, f_op, lam_op)
        x = state.x
        A = np.eye(24) + dt * Jx
        B = dt * Jf
        C = dt * Jl
        e = x + dt * xdot - A @ x - B @ f_op - C * lam_op
        lddot = self.lambda_ddot(state, contacts, f_op, lam_op)
        beta = lddot - gx @ x - gf @ f_op - gl * lam_op
        return LtvStep(A, B, C, e, gx, gf, gl, float(beta))

    # -- plant ------------------------------------------------------------

    def integrate(self, state: SrbState, contacts: ContactState, f_grf, dt: float,
                  omega_b: float = 50.0, zeta_b: float = 1.0, drift_bound: float = 0.05) -> SrbState:
        """One RK4 plant step with Baumgarte-stabilized multiplier.

        At every stage ``lam`` is chosen so that
        ``Lam_ddot = -2 zeta_b omega_b Lam_dot - omega_b^2 (Lam - psi)``.
        The operating rotations are reset afterwards.
        """
        if not 0 < dt <= 0.01:
            raise ValueError("dt must lie in (0, 0.01]")
        f_grf = np.ascontiguousarray(f_grf, dtype=float).reshape(FORCE_DIM)
        if _rk4_ext is not None and _USE_EXT:
            x1 = np.empty(STATE_DIM)
            flag = _rk4_ext(np.ascontiguousarray(state.x), np.ascontiguousarray(state.R_op),
                            np.ascontiguousarray(contacts.stance, dtype=np.uint8),
                            np.ascontiguousarray(contacts.feet), f_grf, self._m, self._Is, self._Iinvs,
                            self._rs, float(self.g[2]), self.psi, omega_b, zeta_b, dt, x1)
            if flag:
                raise SingularConstraintError("multiplier coefficient vanished in the plant")
        else:
            x1 = self._rk4_py(state, contacts, f_grf, dt, omega_b, zeta_b)
        new = reset_all(SrbState(x1, state.R_op))
        d = new.x[0:3] - new.x[12:15] + new.R_op[0] @ self._r[0] - new.R_op[1] @ self._r[1]
        drift = abs(float(np.sqrt(d @ d)) - np.sqrt(self.psi))
        if drift > drift_bound:
            raise ConstraintDriftError(f"attachment distance drifted by {drift:.3e} m")
        return new

    def _rk4_py(self, state, contacts, f_grf, dt, omega_b, zeta_b):
        def rhs(x):
            st = SrbState(x, state.R_op)
            base, slope, d, dd = self._split_accel(st, contacts, f_grf)
            a = 2.0 * dd @ dd + 2.0 * d @ self._pdd_of(st, base)
            b = 2.0 * d @ self._pdd_of(st, slope)
            Lam, Lam_dot = d @ d, 2.0 * d @ dd
            target = -2.0 * zeta_b * omega_b * Lam_dot - omega_b**2 * (Lam - self.psi)
            if b == 0.0:
                raise SingularConstraintError("multiplier coefficient vanished in the plant")
            return base + ((target - a) / b) * slope

        x0 = state.x
        k1 = rhs(x0)
        k2 = rhs(x0 + 0.5 * dt * k1)
        k3 = rhs(x0 + 0.5 * dt * k2)
        k4 = rhs(x0 + dt * k3)
        return x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def static_forces(self, contacts: ContactState) -> np.ndarray:
        """Gravity-compensating vertical GRFs split over stance legs."""
        f = np.zeros((2, N_LEGS, 3))
        for i in range(2):
            n = contacts.n_stance(i)
            if n:
                f[i, contacts.stance[i], 2] = self._m[i] * -self.g[2] / n
        return f.reshape(-1)


def reset_all(state: SrbState) -> SrbState:
    """Fold both ``xi`` into their operating rotations (batched polar projection)."""
    x = state.x.copy()
    xi = x.reshape(2, 12)[:, 6:9]
    K = np.zeros((2, 3, 3))
    K[:, 0, 1], K[:, 0, 2], K[:, 1, 2] = -xi[:, 2], xi[:, 1], -xi[:, 0]
    K -= K.transpose(0, 2, 1)
    U, _, Vt = np.linalg.svd(state.R_op + state.R_op @ K)
    R = U @ Vt
    flip = np.linalg.det(R) < 0
    if flip.any():
        U[flip, :, -1] *= -1.0
        R = U @ Vt
    x.reshape(2, 12)[:, 6:9] = 0.0
    return SrbState(x, R)
