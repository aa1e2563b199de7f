import numpy as np
import pytest

from coopcbf import srb as srb_mod
from coopcbf.geom3d import RotationState, polar_orthonormalize
from coopcbf.srb import (GRAVITY, AgentParams, ConstraintDriftError, ContactState, ControlSolution,
                         SingularConstraintError, SrbPair, SrbState, reset_all, static_stand_contacts)
from oracles import central_jacobian, random_srb_point as random_point

H0 = 0.26
NO_CONTACT = ContactState(np.zeros((2, 4), bool), np.zeros((2, 4, 3)))

PLANTS = [pytest.param(False, id="python")]
if srb_mod._rk4_ext is not None:
    PLANTS.append(pytest.param(True, id="cython"))


@pytest.fixture(params=PLANTS)
def plant_backend(request, monkeypatch):
    monkeypatch.setattr(srb_mod, "_USE_EXT", request.param)


@pytest.fixture
def pair():
    return SrbPair()


def standing():
    # rear attachment points (x = -0.12) one metre apart
    return SrbState.from_parts([[0.0, 0.0, H0], [0.0, -1.0, H0]])


def test_free_fall(pair, plant_backend):
    s = standing()
    for _ in range(100):
        s = pair.integrate(s, NO_CONTACT, np.zeros(24), 1e-3)
    dz = s.com(0)[2] - H0
    assert dz == pytest.approx(-0.5 * GRAVITY * 0.1**2, abs=1e-9)
    assert s.com(1)[2] - H0 == pytest.approx(dz, abs=1e-12)


def test_free_fall_derivative(pair):
    xdot = pair.dynamics(standing(), NO_CONTACT, np.zeros(24), 0.0)
    for i in range(2):
        np.testing.assert_array_equal(xdot[12 * i + 3:12 * i + 6], [0.0, 0.0, -GRAVITY])
        np.testing.assert_array_equal(xdot[12 * i + 9:12 * i + 12], 0.0)


def test_identical_free_fall_needs_no_multiplier(pair):
    assert pair.resolve_lambda(standing(), NO_CONTACT, np.zeros(24)) == pytest.approx(0.0, abs=1e-12)


def test_static_stand_wrench_vanishes(pair):
    s = standing()
    c = static_stand_contacts(s, pair.agents)
    f = pair.static_forces(c)
    np.testing.assert_allclose(f.reshape(2, 4, 3)[:, :, 2], 12.45 * GRAVITY / 4)
    f_net, tau = pair.net_wrench(s, c, f, 0.0)
    np.testing.assert_allclose(f_net, 0.0, atol=1e-12)
    np.testing.assert_allclose(tau, 0.0, atol=1e-12)
    xdot = pair.dynamics(s, c, f, 0.0)
    accel = np.concatenate([xdot[3:6], xdot[9:12], xdot[15:18], xdot[21:24]])
    np.testing.assert_allclose(accel, 0.0, atol=1e-12)


def test_static_stand_is_equilibrium(pair, plant_backend):
    s0 = standing()
    c = static_stand_contacts(s0, pair.agents)
    f = pair.static_forces(c)
    s = s0
    for _ in range(1000):
        s = pair.integrate(s, c, f, 1e-3)
    assert np.abs(s.x - s0.x).max() <= 1e-9
    assert np.abs(s.R_op - s0.R_op).max() <= 1e-9


def test_single_foot_below_com(pair):
    s = standing()
    stance = np.zeros((2, 4), bool)
    stance[0, 0] = True
    feet = np.zeros((2, 4, 3))
    feet[0, 0] = [0.0, 0.0, 0.0]
    f = np.zeros(24)
    f[2] = 80.0
    f_net, tau = pair.net_wrench(s, ContactState(stance, feet), f, 0.0)
    np.testing.assert_allclose(tau[0], 0.0, atol=1e-14)
    np.testing.assert_allclose(f_net[0], [0.0, 0.0, 80.0 - 12.45 * GRAVITY])


def test_swing_forces_ignored(pair, rng):
    s, c, f, lam = random_point(rng)
    f_masked = f * c.mask
    for a, b in zip(pair.net_wrench(s, c, f, lam), pair.net_wrench(s, c, f_masked, lam)):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_action_reaction(pair, rng):
    for _ in range(20):
        s, c, f, lam = random_point(rng)
        with_l, _ = pair.net_wrench(s, c, f, lam)
        without, _ = pair.net_wrench(s, c, f, 0.0)
        inter = with_l - without
        np.testing.assert_allclose(inter[0] + inter[1], 0.0, atol=1e-12)


def test_momentum_changes_only_by_external_forces(pair, rng):
    s, c, f, lam = random_point(rng)
    xdot = pair.dynamics(s, c, f, lam)
    m = 12.45
    dp = m * (xdot[3:6] + xdot[15:18])
    ext = (f * c.mask).reshape(2, 4, 3).sum(axis=(0, 1)) + 2 * m * np.array([0, 0, -GRAVITY])
    np.testing.assert_allclose(dp, ext, atol=1e-9)


def test_resolve_lambda_residual(pair, rng):
    for _ in range(50):
        s, c, f, _ = random_point(rng)
        lam = pair.resolve_lambda(s, c, f)
        assert abs(pair.lambda_ddot(s, c, f, lam)) <= 1e-9


def test_pushed_agent():
    # agent 1 pushed away from agent 2 along the bar by a force through its COM;
    # bar attached at the COMs so no rotation couples in
    pair = SrbPair((AgentParams(attach_offset=(0, 0, 0)), AgentParams(attach_offset=(0, 0, 0))))
    s = standing()
    stance = np.zeros((2, 4), bool)
    stance[0, 0] = True
    feet = np.zeros((2, 4, 3))
    feet[0, 0] = s.com(0)
    f = np.zeros(24)
    f[1] = 10.0
    c = ContactState(stance, feet)
    lam = pair.resolve_lambda(s, c, f)
    assert abs(pair.lambda_ddot(s, c, f, lam)) <= 1e-9
    # equal masses, d = (0, 1, 0): the bar carries half the push
    assert lam == pytest.approx(-5.0, rel=1e-12)
    # finite-difference second derivative of |d|^2 along a short unstabilized trajectory
    h = 1e-4
    traj = [s]
    for _ in range(2):
        traj.append(pair.integrate(traj[-1], c, f, h, omega_b=0.0, zeta_b=0.0))
    lam_sq = [pair.constraint(t)[0] for t in traj]
    assert abs(lam_sq[2] - 2 * lam_sq[1] + lam_sq[0]) / h**2 <= 1e-6


def test_lambda_invariant_to_symmetric_orthogonal_force(pair):
    s = standing()
    stance = np.zeros((2, 4), bool)
    stance[:, 0] = True
    feet = np.zeros((2, 4, 3))
    feet[0, 0], feet[1, 0] = s.com(0), s.com(1)
    c = ContactState(stance, feet)
    f = np.zeros(24)
    f[1] = 10.0
    base = pair.resolve_lambda(s, c, f)
    f2 = f.copy()
    f2[0] += 7.0
    f2[12] += 7.0
    assert pair.resolve_lambda(s, c, f2) == pytest.approx(base, rel=1e-12)


def test_coincident_attachments_are_singular(pair):
    s = SrbState.from_parts([[0.0, 0.0, H0], [0.0, 0.0, H0]])
    with pytest.raises(SingularConstraintError):
        pair.resolve_lambda(s, NO_CONTACT, np.zeros(24))


def test_spin_about_principal_axis(pair):
    for axis in np.eye(3):
        s = SrbState.from_parts([[0.0, 0.0, H0], [0.0, -1.0, H0]], omega=[3.0 * axis, -2.0 * axis])
        xdot = pair.dynamics(s, NO_CONTACT, np.zeros(24), 0.0)
        np.testing.assert_allclose(xdot[9:12], 0.0, atol=1e-12)
        np.testing.assert_allclose(xdot[21:24], 0.0, atol=1e-12)


def test_jacobians_match_finite_differences(pair, rng):
    for _ in range(100):
        s, c, f, lam = random_point(rng)
        Jx, Jf, Jl, gx, gf, gl = pair.jacobians(s, c, f, lam)
        fx = lambda x: pair.dynamics(s.with_x(x), c, f, lam)
        ff = lambda u: pair.dynamics(s, c, u, lam)
        fl = lambda v: pair.dynamics(s, c, f, v[0])
        lx = lambda x: pair.lambda_ddot(s.with_x(x), c, f, lam)
        lf = lambda u: pair.lambda_ddot(s, c, u, lam)
        ll = lambda v: pair.lambda_ddot(s, c, f, v[0])
        pairs = [(Jx, central_jacobian(fx, s.x)), (Jf * c.mask, central_jacobian(ff, f) * c.mask),
                 (Jl, central_jacobian(fl, [lam])[:, 0]), (gx, central_jacobian(lx, s.x)[0]),
                 (gf * c.mask, central_jacobian(lf, f)[0] * c.mask), (gl, central_jacobian(ll, [lam])[0, 0])]
        for analytic, numeric in pairs:
            err = np.abs(analytic - numeric).max() / max(1.0, np.abs(numeric).max())
            assert err <= 1e-4


def test_ltv_reproduces_forward_euler(pair, rng):
    dt = 0.005
    for _ in range(10):
        s, c, f, lam = random_point(rng)
        step = pair.linearize(s, c, f, lam, dt)
        x_lin = step.A @ s.x + step.B @ f + step.C * lam + step.e
        np.testing.assert_allclose(x_lin, s.x + dt * pair.dynamics(s, c, f, lam), atol=1e-12)
        g_lin = step.Gx @ s.x + step.Gf @ f + step.Gl * lam + step.beta
        assert g_lin == pytest.approx(pair.lambda_ddot(s, c, f, lam), abs=1e-9)


def test_force_block_is_dt_over_mass(pair):
    s = standing()
    c = static_stand_contacts(s, pair.agents)
    dt = 0.005
    step = pair.linearize(s, c, pair.static_forces(c), 0.0, dt)
    for i in range(2):
        for ell in range(4):
            k = 12 * i + 3 * ell
            np.testing.assert_allclose(step.B[12 * i + 3:12 * i + 6, k:k + 3], dt / 12.45 * np.eye(3))


def test_linearize_rejects_bad_step(pair):
    s = standing()
    with pytest.raises(ValueError):
        pair.linearize(s, NO_CONTACT, np.zeros(24), 0.0, 0.0)
    with pytest.raises(ValueError):
        pair.integrate(s, NO_CONTACT, np.zeros(24), 0.02)


def test_plant_backends_agree(pair, rng):
    if srb_mod._rk4_ext is None:
        pytest.skip("compiled kernel not built")
    for _ in range(20):
        s, c, f, _ = random_point(rng)
        xs = []
        for flag in (False, True):
            srb_mod._USE_EXT = flag
            try:
                xs.append(pair.integrate(s, c, f, 1e-3, drift_bound=1.0))
            finally:
                srb_mod._USE_EXT = True
        np.testing.assert_allclose(xs[0].x, xs[1].x, atol=1e-10)
        np.testing.assert_allclose(xs[0].R_op, xs[1].R_op, atol=1e-12)


def test_baumgarte_pulls_back_drift(pair, plant_backend):
    s0 = SrbState.from_parts([[0.0, 0.0, H0], [0.0, -1.01, H0]])
    s = s0
    for _ in range(200):
        s = pair.integrate(s, NO_CONTACT, np.zeros(24), 1e-3)
    assert abs(pair.separation(s) - 1.0) < 1e-3


def test_drift_bound_aborts(pair):
    s = SrbState.from_parts([[0.0, 0.0, H0], [0.0, -1.2, H0]])
    with pytest.raises(ConstraintDriftError):
        pair.integrate(s, NO_CONTACT, np.zeros(24), 1e-3)


def test_reset_all_matches_polar(rng):
    s, _, _, _ = random_point(rng)
    new = reset_all(s)
    for i in range(2):
        expected = polar_orthonormalize(s.rotation_matrix(i))
        np.testing.assert_allclose(new.R_op[i], expected, atol=1e-12)
        assert RotationState(new.R_op[i], new.xi(i)).is_valid()
    np.testing.assert_array_equal(new.xi(0), 0.0)


def test_control_solution_swing_check():
    stance = np.ones((2, 4), bool)
    stance[0, 1] = False
    c = ContactState(stance, np.zeros((2, 4, 3)))
    f = np.zeros(24)
    f[5] = 1.0
    assert not ControlSolution(f, 0.0).check_swing(c)
    assert ControlSolution(f * c.mask, 0.0).check_swing(c)


def test_agent_params_validation():
    with pytest.raises(ValueError):
        AgentParams(mass=0.0)
    with pytest.raises(ValueError):
        AgentParams(inertia=np.diag([1.0, -1.0, 1.0]))
