"""Dense convex QP containers and the KKT optimality certificate.

Problems are stated as::

    min  1/2 u' G u + c' u
    s.t. C u >= b        (inequality rows)
         E u  = e        (equality rows)
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"


class QpDimensionError(ValueError):
    pass


def _as_matrix(a, rows: int | None, cols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0 if rows is None else rows, cols))
    m = np.asarray(a, dtype=float)
    if m.size == 0:
        return np.zeros((0, cols))
    return np.atleast_2d(m)


def _as_vector(a) -> np.ndarray:
    if a is None:
        return np.zeros(0)
    return np.asarray(a, dtype=float).reshape(-1)


@dataclass(frozen=True)
class QpProblem:
    cost_matrix: np.ndarray
    cost_vector: np.ndarray
    ineq_matrix: np.ndarray = field(default=None)
    ineq_vector: np.ndarray = field(default=None)
    eq_matrix: np.ndarray = field(default=None)
    eq_vector: np.ndarray = field(default=None)

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.cost_matrix, dtype=float))
        c = _as_vector(self.cost_vector)
        n = c.shape[0]
        C = _as_matrix(self.ineq_matrix, None, n)
        b = _as_vector(self.ineq_vector)
        E = _as_matrix(self.eq_matrix, None, n)
        e = _as_vector(self.eq_vector)
        if G.shape != (n, n):
            raise QpDimensionError(f"cost_matrix shape {G.shape} does not match cost_vector length {n}")
        if C.shape[1] != n or C.shape[0] != b.shape[0]:
            raise QpDimensionError(f"ineq_matrix {C.shape} inconsistent with n={n}, m={b.shape[0]}")
        if E.shape[1] != n or E.shape[0] != e.shape[0]:
            raise QpDimensionError(f"eq_matrix {E.shape} inconsistent with n={n}, p={e.shape[0]}")
        for name, val in (("cost_matrix", G), ("cost_vector", c), ("ineq_matrix", C),
                          ("ineq_vector", b), ("eq_matrix", E), ("eq_vector", e)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.cost_vector.shape[0]

    @property
    def m(self) -> int:
        return self.ineq_vector.shape[0]

    @property
    def p(self) -> int:
        return self.eq_vector.shape[0]

    def check_convex(self) -> None:
        """Raise ``ValueError`` unless the cost matrix is symmetric PSD."""
        G = self.cost_matrix
        scale = max(np.abs(G).max(initial=0.0), 1.0)
        if not np.allclose(G, G.T, rtol=0.0, atol=1e-12 * scale):
            raise ValueError("cost_matrix is not symmetric")
        if self.n and np.linalg.eigvalsh(G)[0] < -1e-9 * np.linalg.norm(G, 2):
            raise ValueError("cost_matrix is not positive semidefinite")

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.cost_matrix @ u + self.cost_vector @ u)


@dataclass(frozen=True)
class QpSolution:
    primal: np.ndarray
    dual_ineq: np.ndarray
    dual_eq: np.ndarray
    status: QpStatus
    kkt_residual: float
    iterations: int = 0
    active_set: tuple = ()

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def kkt_residual(problem: QpProblem, solution: QpSolution) -> float:
    """Largest violation among the four KKT conditions (infinity norms).

    Stationarity ``G u + c - C' mu - E' nu``, primal feasibility of both
    row families, dual feasibility ``mu >= 0`` and complementarity
    ``mu_i (C u - b)_i``.  Zero exactly at a KKT point.
    """
    u = np.asarray(solution.primal, dtype=float).reshape(-1)
    mu = np.asarray(solution.dual_ineq, dtype=float).reshape(-1)
    nu = np.asarray(solution.dual_eq, dtype=float).reshape(-1)
    if u.shape[0] != problem.n or mu.shape[0] != problem.m or nu.shape[0] != problem.p:
        raise QpDimensionError(
            f"solution sizes ({u.shape[0]}, {mu.shape[0]}, {nu.shape[0]}) do not match "
            f"problem ({problem.n}, {problem.m}, {problem.p})"
        )
    if problem.n == 0:
        return 0.0
    G, c = problem.cost_matrix, problem.cost_vector
    C, b = problem.ineq_matrix, problem.ineq_vector
    E, e = problem.eq_matrix, problem.eq_vector
    grad = G @ u + c - C.T @ mu - E.T @ nu
    slack = C @ u - b
    parts = [np.abs(grad).max()]
    if problem.m:
        parts.append(np.maximum(-slack, 0.0).max())
        parts.append(np.maximum(-mu, 0.0).max())
        parts.append(np.abs(mu * slack).max())
    if problem.p:
        parts.append(np.abs(E @ u - e).max())
    return float(max(parts))
