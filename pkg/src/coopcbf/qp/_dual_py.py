"""Pure-Python/numpy Goldfarb-Idnani dual active-set kernel.

Reference implementation and fallback for ``_dual_ext``.  Both kernels
share the calling convention of :func:`dual_active_set`.
"""
import math

import numpy as np
from scipy.linalg import cholesky, solve_triangular

# status codes shared with the compiled kernel
OPTIMAL = 0
INFEASIBLE = 1
MAX_ITER = 2
NOT_CONVEX = 3


def dual_active_set(G, c, C, b, max_iter=200, feas_tol=1e-12):
    """Solve ``min 1/2 x'Gx + c'x  s.t.  Cx >= b`` for SPD ``G``.

    Returns ``(x, mu, status, iterations, active)`` where ``mu`` holds one
    multiplier per row of ``C`` and ``active`` lists the active rows in the
    order they were added.
    """
    G = np.asarray(G, dtype=float)
    c = np.asarray(c, dtype=float)
    C = np.asarray(C, dtype=float).reshape(-1, c.shape[0])
    b = np.asarray(b, dtype=float)
    n = c.shape[0]
    m = b.shape[0]
    mu = np.zeros(m)
    if n == 0:
        status = OPTIMAL if np.all(b <= feas_tol) else INFEASIBLE
        return np.zeros(0), mu, status, 0, []
    try:
        L = cholesky(G, lower=True)
    except np.linalg.LinAlgError:
        return np.zeros(n), mu, NOT_CONVEX, 0, []
    # J = L^{-T}, so J'GJ = I
    J = solve_triangular(L, np.eye(n), lower=True, trans="T")
    x = -(J @ (J.T @ c))
    R = np.zeros((n, n))
    u = np.zeros(n)
    active = []
    row_norm = np.sqrt((C * C).sum(axis=1)) if m else np.zeros(0)
    row_norm[row_norm == 0.0] = 1.0
    is_active = np.zeros(m, dtype=bool)
    it = 0

    while True:
        if m == 0:
            break
        s = C @ x - b
        scaled = s / row_norm
        scaled[is_active] = np.inf
        p = int(np.argmin(scaled))
        thresh = feas_tol * (1.0 + abs(b[p]) + row_norm[p] * np.abs(x).max())
        if s[p] >= -thresh:
            break
        npl = C[p]
        u_plus = 0.0
        while True:
            it += 1
            if it > max_iter:
                return (*_finish(x, mu, u, active), MAX_ITER, it - 1, list(active))
            q = len(active)
            d = J.T @ npl
            z = J[:, q:] @ d[q:]
            if q:
                r = solve_triangular(R[:q, :q], d[:q], lower=False)
            else:
                r = np.zeros(0)
            t1 = math.inf
            k = -1
            for j in range(q):
                if r[j] > 0.0:
                    ratio = u[j] / r[j]
                    if ratio < t1:
                        t1 = ratio
                        k = j
            dn = float(np.sqrt(d[q:] @ d[q:]))
            if dn <= 1e-12 * max(float(np.sqrt(d @ d)), 1e-300):
                t2 = math.inf
            else:
                t2 = -(npl @ x - b[p]) / (dn * dn)
                if t2 < 0.0:
                    t2 = 0.0
            t = min(t1, t2)
            if t == math.inf:
                return (*_finish(x, mu, u, active), INFEASIBLE, it, list(active))
            if t2 == math.inf:
                u[:q] -= t * r
                u_plus += t
                _drop(J, R, u, active, k)
                continue
            x = x + t * z
            u[:q] -= t * r
            u_plus += t
            if t == t2:
                _add(J, R, d, q)
                u[q] = u_plus
                active.append(p)
                is_active[p] = True
                break
            is_active[active[k]] = False
            _drop(J, R, u, active, k)
        # refresh the active mask after any drops in the inner loop
        is_active[:] = False
        is_active[active] = True

    return (*_finish(x, mu, u, active), OPTIMAL, it, list(active))


def _finish(x, mu, u, active):
    mu = mu.copy()
    for j, row in enumerate(active):
        mu[row] = u[j]
    return x, mu


def _add(J, R, d, q):
    n = J.shape[0]
    tail = d[q:].copy()
    alpha = float(np.sqrt(tail @ tail))
    if tail[0] > 0.0:
        alpha = -alpha
    v = tail
    v[0] -= alpha
    vv = float(v @ v)
    if q + 1 < n and vv > 0.0:
        # Householder reflection maps d[q:] onto alpha * e_1
        J[:, q:] -= np.outer(J[:, q:] @ v, (2.0 / vv) * v)
    elif q + 1 == n:
        alpha = float(d[q])
    R[:q, q] = d[:q]
    R[q, q] = alpha
    R[q + 1:, q] = 0.0


def _drop(J, R, u, active, k):
    q = len(active)
    R[:q, k:q - 1] = R[:q, k + 1:q]
    R[:, q - 1] = 0.0
    u[k:q - 1] = u[k + 1:q]
    u[q - 1] = 0.0
    del active[k]
    for j in range(k, q - 1):
        a = R[j, j]
        bb = R[j + 1, j]
        h = math.hypot(a, bb)
        if h == 0.0:
            continue
        cs = a / h
        sn = bb / h
        rj = R[j, j:q - 1].copy()
        rj1 = R[j + 1, j:q - 1].copy()
        R[j, j:q - 1] = cs * rj + sn * rj1
        R[j + 1, j:q - 1] = -sn * rj + cs * rj1
        R[j + 1, j] = 0.0
        Jj = J[:, j].copy()
        Jj1 = J[:, j + 1].copy()
        J[:, j] = cs * Jj + sn * Jj1
        J[:, j + 1] = -sn * Jj + cs * Jj1
