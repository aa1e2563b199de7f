"""Dense convex QP solver: null-space elimination + dual active set."""
from __future__ import annotations

import logging

import numpy as np
from scipy.linalg import qr, solve_triangular

from . import kernel
from .problem import QpProblem, QpSolution, QpStatus, kkt_residual

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
TIKHONOV = 1e-10


class QpNotConvexError(ValueError):
    pass


def solve_qp(problem: QpProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
             check: bool = True) -> QpSolution:
    """Solve a dense convex QP.

    Equality rows are eliminated with a pivoted QR of ``E'``; the reduced
    inequality problem goes to the dual active-set kernel (compiled when
    available).  A ``1e-10`` diagonal shift makes semidefinite costs
    strictly convex.

    Parameters
    ----------
    problem : QpProblem
    tol : float
        KKT residual accepted for ``Optimal``.
    max_iter : int
        Active-set change cap.
    check : bool
        Verify symmetry/PSD of the cost first (skipped by hot callers
        that build the cost themselves).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if check:
        problem.check_convex()
    n, m, p = problem.n, problem.m, problem.p
    G = problem.cost_matrix + TIKHONOV * np.eye(n)
    c = problem.cost_vector
    C, b = problem.ineq_matrix, problem.ineq_vector

    if p:
        E, e = problem.eq_matrix, problem.eq_vector
        Q, Rq, piv = qr(E.T, mode="full", pivoting=True)
        diag = np.abs(np.diag(Rq))
        rank = int((diag > 1e-12 * max(diag[0] if diag.size else 0.0, 1e-300)).sum())
        Y, Z = Q[:, :rank], Q[:, rank:]
        R1 = Rq[:rank, :rank]
        # E[piv[:rank]] is a basis; solve Y' u = R1^{-T} e[piv]
        w = solve_triangular(R1, e[piv[:rank]], trans="T", lower=False)
        u_p = Y @ w
        eq_gap = np.abs(E @ u_p - e).max()
        if eq_gap > max(tol, 1e-9 * (1.0 + np.abs(e).max())):
            return _infeasible(problem, u_p, "equality rows are inconsistent")
        Gr = Z.T @ G @ Z
        Gr = 0.5 * (Gr + Gr.T)
        cr = Z.T @ (G @ u_p + c)
        Cr = C @ Z
        br = b - C @ u_p
    else:
        Z = None
        u_p = np.zeros(n)
        Gr, cr, Cr, br = G, c, C, b

    z, mu, code, iters, active = kernel.dual_active_set(Gr, cr, Cr, br, max_iter)
    if code == kernel.NOT_CONVEX:
        raise QpNotConvexError("reduced Hessian is not positive definite")
    u = u_p + Z @ z if Z is not None else z

    if p:
        # equality multipliers from stationarity: E' nu = G u + c - C' mu
        rhs = problem.cost_matrix @ u + c - C.T @ mu
        nu_piv = solve_triangular(R1, Y.T @ rhs, lower=False)
        nu = np.zeros(p)
        nu[piv[:rank]] = nu_piv
    else:
        nu = np.zeros(0)

    if code == kernel.INFEASIBLE:
        status = QpStatus.INFEASIBLE
    elif code == kernel.MAX_ITER:
        status = QpStatus.MAX_ITERATIONS
    else:
        status = QpStatus.OPTIMAL
    sol = QpSolution(u, mu, nu, status, 0.0, iters, tuple(active))
    res = kkt_residual(problem, sol)
    if status is QpStatus.OPTIMAL and res > tol:
        log.debug("KKT residual %.3e above tol %.1e after %d iterations", res, tol, iters)
        status = QpStatus.MAX_ITERATIONS
    return QpSolution(u, mu, nu, status, res, iters, tuple(active))


def solve_inequality_qp(G, c, C, b, tol: float = DEFAULT_TOL,
                        max_iter: int = DEFAULT_MAX_ITER) -> QpSolution:
    """Fast path for small inequality-only problems with trusted inputs.

    Skips container validation; the caller guarantees ``G`` is SPD and the
    shapes agree.  Same certificate as :func:`solve_qp`.
    """
    n = c.shape[0]
    Gr = G + TIKHONOV * np.eye(n)
    x, mu, code, iters, active = kernel.dual_active_set(Gr, c, C, b, max_iter)
    if code == kernel.NOT_CONVEX:
        raise QpNotConvexError("cost matrix is not positive definite")
    grad = G @ x + c - C.T @ mu
    res = float(np.abs(grad).max())
    if b.shape[0]:
        slack = C @ x - b
        res = max(res, float(max(-slack.min(), 0.0)), float(max(-mu.min(), 0.0)),
                  float(np.abs(mu * slack).max()))
    if code == kernel.INFEASIBLE:
        status = QpStatus.INFEASIBLE
    elif code == kernel.MAX_ITER or res > tol:
        status = QpStatus.MAX_ITERATIONS
    else:
        status = QpStatus.OPTIMAL
    return QpSolution(x, mu, np.zeros(0), status, res, iters, tuple(active))


def _infeasible(problem, u, why):
    log.debug("QP infeasible: %s", why)
    sol = QpSolution(u, np.zeros(problem.m), np.zeros(problem.p), QpStatus.INFEASIBLE, 0.0)
    return QpSolution(u, sol.dual_ineq, sol.dual_eq, sol.status, kkt_residual(problem, sol))
