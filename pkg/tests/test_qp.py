import numpy as np
import pytest
from hypothesis import given, strategies as st

from coopcbf.qp import (QpDimensionError, QpNotConvexError, QpProblem, QpSolution, QpStatus,
                        kkt_residual, solve_inequality_qp, solve_qp)
from coopcbf.qp import kernel
from oracles import enumerate_active_sets, random_qp

BACKENDS = [pytest.param(kernel.python_dual_active_set, id="python")]
if kernel.compiled_dual_active_set is not None:
    BACKENDS.append(pytest.param(kernel.compiled_dual_active_set, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    monkeypatch.setattr(kernel, "dual_active_set", request.param)
    return request.param


def test_unconstrained_projection(backend):
    ud = np.array([0.4, 0.05, 0.4, 0.05])
    sol = solve_qp(QpProblem(2 * np.eye(4), -2 * ud))
    assert sol.status is QpStatus.OPTIMAL
    np.testing.assert_allclose(sol.primal, ud, atol=1e-12)


def test_single_active_bound(backend):
    sol = solve_qp(QpProblem([[2.0]], [-2.0], [[1.0]], [2.0]))
    assert sol.status is QpStatus.OPTIMAL
    assert sol.primal[0] == pytest.approx(2.0, abs=1e-12)
    assert sol.dual_ineq[0] == pytest.approx(2.0, abs=1e-8)
    assert sol.active_set == (0,)


def test_symmetric_split(backend):
    sol = solve_qp(QpProblem(np.eye(2), np.zeros(2), [[1.0, 1.0]], [2.0]))
    np.testing.assert_allclose(sol.primal, [1.0, 1.0], atol=1e-12)
    assert sol.dual_ineq[0] == pytest.approx(1.0)


def test_equality_constraint(backend):
    # min 1/2|u|^2 s.t. u1 + u2 = 2, u1 >= 1.5
    sol = solve_qp(QpProblem(np.eye(2), np.zeros(2), [[1.0, 0.0]], [1.5], [[1.0, 1.0]], [2.0]))
    np.testing.assert_allclose(sol.primal, [1.5, 0.5], atol=1e-12)
    assert sol.kkt_residual <= 1e-10


def test_residual_at_exact_solution():
    prob = QpProblem(np.eye(2), np.zeros(2), [[1.0, 1.0]], [2.0])
    sol = QpSolution(np.array([1.0, 1.0]), np.array([1.0]), np.zeros(0), QpStatus.OPTIMAL, 0.0)
    assert kkt_residual(prob, sol) <= 1e-12


def test_residual_of_perturbed_primal():
    # stationarity at u = (1.1, 1) with mu = 1 is |(0.1, 0)| = 0.1; complementarity 0.1
    prob = QpProblem(np.eye(2), np.zeros(2), [[1.0, 1.0]], [2.0])
    sol = QpSolution(np.array([1.1, 1.0]), np.array([1.0]), np.zeros(0), QpStatus.OPTIMAL, 0.0)
    r = kkt_residual(prob, sol)
    assert r >= 0.05
    assert r == pytest.approx(0.1)


def test_residual_of_zero_problem():
    prob = QpProblem(np.zeros((3, 3)), np.zeros(3), np.zeros((2, 3)), np.zeros(2))
    sol = QpSolution(np.zeros(3), np.zeros(2), np.zeros(0), QpStatus.OPTIMAL, 0.0)
    assert kkt_residual(prob, sol) == 0.0


def test_residual_dimension_mismatch():
    prob = QpProblem(np.eye(2), np.zeros(2))
    with pytest.raises(QpDimensionError):
        kkt_residual(prob, QpSolution(np.zeros(3), np.zeros(0), np.zeros(0), QpStatus.OPTIMAL, 0.0))


def test_problem_dimension_checks():
    with pytest.raises(QpDimensionError):
        QpProblem(np.eye(3), np.zeros(2))
    with pytest.raises(QpDimensionError):
        QpProblem(np.eye(2), np.zeros(2), np.ones((2, 2)), np.ones(3))


def test_nonconvex_rejected():
    with pytest.raises((QpNotConvexError, ValueError)):
        solve_qp(QpProblem(np.diag([1.0, -1.0]), np.zeros(2)))


def test_infeasible_reported(backend):
    # u >= 1 and -u >= 0 cannot both hold
    sol = solve_qp(QpProblem([[1.0]], [0.0], [[1.0], [-1.0]], [1.0, 0.0]))
    assert sol.status is QpStatus.INFEASIBLE


def test_inconsistent_equalities():
    sol = solve_qp(QpProblem(np.eye(2), np.zeros(2), eq_matrix=[[1.0, 1.0], [1.0, 1.0]],
                             eq_vector=[1.0, 2.0]))
    assert sol.status is QpStatus.INFEASIBLE


def test_iteration_cap(backend):
    n = 6
    C = np.eye(n)
    b = np.ones(n)
    sol = solve_qp(QpProblem(np.eye(n), np.zeros(n), C, b), max_iter=2)
    assert sol.status is QpStatus.MAX_ITERATIONS


def test_semidefinite_cost_accepted(backend):
    # zero cost on the second coordinate; bounded by the constraints
    G = np.diag([1.0, 0.0])
    sol = solve_qp(QpProblem(G, [0.0, 1.0], [[0.0, 1.0]], [0.5]))
    assert sol.status is QpStatus.OPTIMAL
    np.testing.assert_allclose(sol.primal, [0.0, 0.5], atol=1e-8)


def test_oracle_equivalence(backend):
    rng = np.random.default_rng(7)
    for _ in range(200):
        G, c, C, b, E, e = random_qp(rng)
        sol = solve_qp(QpProblem(G, c, C, b, E, e))
        ref = enumerate_active_sets(G, c, C, b, E, e)
        assert sol.status is QpStatus.OPTIMAL
        assert np.abs(sol.primal - ref).max() <= 1e-6
        assert sol.kkt_residual <= 1e-8
        assert sol.dual_ineq @ (C @ sol.primal - b) <= 1e-6
        assert np.all(sol.dual_ineq >= -1e-9)


@given(st.integers(0, 2**32 - 1))
def test_oracle_equivalence_property(seed):
    G, c, C, b, E, e = random_qp(np.random.default_rng(seed))
    sol = solve_qp(QpProblem(G, c, C, b, E, e))
    ref = enumerate_active_sets(G, c, C, b, E, e)
    assert sol.status is QpStatus.OPTIMAL
    assert np.abs(sol.primal - ref).max() <= 1e-6


def test_backends_agree():
    if kernel.compiled_dual_active_set is None:
        pytest.skip("compiled kernel not built")
    rng = np.random.default_rng(3)
    for _ in range(100):
        G, c, C, b, _, _ = random_qp(rng, p_max=0)
        xp, mup, codep, _, actp = kernel.python_dual_active_set(G, c, C, b, 200)
        xc, muc, codec, _, actc = kernel.compiled_dual_active_set(G, c, C, b, 200)
        assert codep == codec
        assert sorted(actp) == sorted(actc)
        np.testing.assert_allclose(xp, xc, atol=1e-10)
        np.testing.assert_allclose(mup, muc, atol=1e-9)


def test_bitwise_determinism(backend):
    rng = np.random.default_rng(11)
    for _ in range(20):
        prob = QpProblem(*random_qp(rng))
        a, b = solve_qp(prob), solve_qp(prob)
        assert a.primal.tobytes() == b.primal.tobytes()
        assert a.dual_ineq.tobytes() == b.dual_ineq.tobytes()


def test_fast_path_matches_general(backend):
    rng = np.random.default_rng(5)
    for _ in range(50):
        G, c, C, b, _, _ = random_qp(rng, p_max=0)
        fast = solve_inequality_qp(G, c, C, b)
        full = solve_qp(QpProblem(G, c, C, b))
        assert fast.status is QpStatus.OPTIMAL
        np.testing.assert_allclose(fast.primal, full.primal, atol=1e-8)
