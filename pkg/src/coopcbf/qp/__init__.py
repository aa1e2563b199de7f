from .problem import QpDimensionError, QpProblem, QpSolution, QpStatus, kkt_residual
from .solver import DEFAULT_TOL, QpNotConvexError, solve_inequality_qp, solve_qp

__all__ = [
    "QpProblem", "QpSolution", "QpStatus", "QpDimensionError", "QpNotConvexError",
    "kkt_residual", "solve_qp", "solve_inequality_qp", "DEFAULT_TOL",
]
