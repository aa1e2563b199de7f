# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled barrier stacking; mirrors ``planner._stack_rows_py``."""
from libc.math cimport sqrt


def stack_rows(const double[::1] phi, const double[:, ::1] centers, const double[::1] radii,
               double agent_radius, const double[::1] gammas, int n_agents, int holonomic,
               double psi, double eps, double[::1] H, double[:, ::1] grad):
    """Fill ``H`` and ``grad`` in place; returns 1 on a degenerate gradient."""
    cdef int D = centers.shape[0]
    cdef int eta = gammas.shape[0] if n_agents == 2 else 0
    cdef int i, z, c, row, k
    cdef double dx, dy, dist, g, rx, ry, sq
    for row in range(grad.shape[0]):
        for k in range(grad.shape[1]):
            grad[row, k] = 0.0
    row = 0
    for i in range(n_agents):
        for z in range(D):
            dx = phi[2 * i] - centers[z, 0]
            dy = phi[2 * i + 1] - centers[z, 1]
            dist = sqrt(dx * dx + dy * dy)
            if dist == 0.0:
                return 1
            H[row] = dist - (radii[z] + agent_radius)
            grad[row, 2 * i] = dx / dist
            grad[row, 2 * i + 1] = dy / dist
            row += 1
    for c in range(eta):
        g = gammas[c]
        rx = g * phi[0] + (1.0 - g) * phi[2]
        ry = g * phi[1] + (1.0 - g) * phi[3]
        for z in range(D):
            dx = rx - centers[z, 0]
            dy = ry - centers[z, 1]
            dist = sqrt(dx * dx + dy * dy)
            if dist == 0.0:
                return 1
            H[row] = dist - radii[z]
            grad[row, 0] = g * dx / dist
            grad[row, 1] = g * dy / dist
            grad[row, 2] = (1.0 - g) * dx / dist
            grad[row, 3] = (1.0 - g) * dy / dist
            row += 1
    if holonomic and n_agents == 2:
        dx = phi[0] - phi[2]
        dy = phi[1] - phi[3]
        sq = dx * dx + dy * dy
        H[row] = sq - (1.0 - eps) * psi
        H[row + 1] = (1.0 + eps) * psi - sq
        grad[row, 0] = 2.0 * dx
        grad[row, 1] = 2.0 * dy
        grad[row, 2] = -2.0 * dx
        grad[row, 3] = -2.0 * dy
        for k in range(4):
            grad[row + 1, k] = -grad[row, k]
    return 0
