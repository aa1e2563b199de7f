# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Goldfarb-Idnani dual active-set kernel.

Same algorithm and calling convention as ``_dual_py.dual_active_set``;
plain C loops instead of numpy calls, which matters for the many tiny
planner QPs.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, hypot, INFINITY

cnp.import_array()

DEF OPTIMAL = 0
DEF INFEASIBLE = 1
DEF MAX_ITER = 2
DEF NOT_CONVEX = 3


cdef int _cholesky(double[:, ::1] A, int n) noexcept nogil:
    # in-place lower Cholesky; returns 0 on success
    cdef int i, j, k
    cdef double s
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= A[j, k] * A[j, k]
        if s <= 0.0:
            return 1
        A[j, j] = sqrt(s)
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= A[i, k] * A[j, k]
            A[i, j] = s / A[j, j]
    for i in range(n):
        for j in range(i + 1, n):
            A[i, j] = 0.0
    return 0


cdef void _lower_inverse_transpose(double[:, ::1] L, double[:, ::1] J, int n) noexcept nogil:
    # J = L^{-T}: solve L' J = I column by column (J upper triangular)
    cdef int i, j, k
    cdef double s
    for j in range(n):
        for i in range(n):
            J[i, j] = 0.0
    for j in range(n):
        for i in range(j, -1, -1):
            s = 1.0 if i == j else 0.0
            for k in range(i + 1, j + 1):
                s -= L[k, i] * J[k, j]
            J[i, j] = s / L[i, i]


def dual_active_set(G, c, C, b, int max_iter=200, double feas_tol=1e-12):
    """Solve ``min 1/2 x'Gx + c'x  s.t.  Cx >= b`` for SPD ``G``."""
    cdef double[:, ::1] Lm = np.array(G, dtype=np.float64, order="C", copy=True)
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef int n = cv.shape[0]
    cdef double[:, ::1] Cm = np.ascontiguousarray(np.asarray(C, dtype=np.float64).reshape(-1, n))
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef int m = bv.shape[0]
    cdef int i, j, k, l, p, q = 0, it = 0, status = OPTIMAL
    cdef double acc, t, t1, t2, dn, dd, ratio, u_plus, best, xmax, thresh
    cdef double alpha, vv, cs, sn, a, bb, h, tmp1, tmp2

    x_arr = np.zeros(n)
    mu_arr = np.zeros(m)
    cdef double[::1] x = x_arr
    cdef double[::1] mu = mu_arr
    if n == 0:
        for i in range(m):
            if bv[i] > feas_tol:
                return x_arr, mu_arr, INFEASIBLE, 0, []
        return x_arr, mu_arr, OPTIMAL, 0, []
    if _cholesky(Lm, n) != 0:
        return x_arr, mu_arr, NOT_CONVEX, 0, []

    cdef double[:, ::1] J = np.empty((n, n))
    cdef double[:, ::1] R = np.zeros((n, n))
    cdef double[::1] u = np.zeros(n)
    cdef double[::1] d = np.empty(n)
    cdef double[::1] z = np.empty(n)
    cdef double[::1] r = np.empty(n)
    cdef double[::1] v = np.empty(n)
    cdef double[::1] w = np.empty(n)
    cdef double[::1] s = np.empty(m)
    cdef double[::1] rn = np.empty(m)
    cdef int[::1] act = np.empty(n, dtype=np.intc)
    cdef char[::1] is_act = np.zeros(m, dtype=np.int8)


    _lower_inverse_transpose(Lm, J, n)
    # x = -J J' c
    for i in range(n):
        acc = 0.0
        for k in range(n):
            acc += J[k, i] * cv[k]
        w[i] = acc
    for i in range(n):
        acc = 0.0
        for k in range(n):
            acc += J[i, k] * w[k]
        x[i] = -acc
    for i in range(m):
        acc = 0.0
        for k in range(n):
            acc += Cm[i, k] * Cm[i, k]
        rn[i] = sqrt(acc) if acc > 0.0 else 1.0

    with nogil:
        while m > 0:
            best = INFINITY
            p = -1
            xmax = 0.0
            for k in range(n):
                if fabs(x[k]) > xmax:
                    xmax = fabs(x[k])
            for i in range(m):
                acc = -bv[i]
                for k in range(n):
                    acc += Cm[i, k] * x[k]
                s[i] = acc
                if not is_act[i] and acc / rn[i] < best:
                    best = acc / rn[i]
                    p = i
            if p < 0:
                break
            thresh = feas_tol * (1.0 + fabs(bv[p]) + rn[p] * xmax)
            if s[p] >= -thresh:
                break
            u_plus = 0.0
            while True:
                it += 1
                if it > max_iter:
                    it -= 1
                    status = MAX_ITER
                    break
                # d = J' n+
                dd = 0.0
                for j in range(n):
                    acc = 0.0
                    for k in range(n):
                        acc += J[k, j] * Cm[p, k]
                    d[j] = acc
                    dd += acc * acc
                dn = 0.0
                for j in range(q, n):
                    dn += d[j] * d[j]
                # z = J[:, q:] d[q:]
                for i in range(n):
                    acc = 0.0
                    for j in range(q, n):
                        acc += J[i, j] * d[j]
                    z[i] = acc
                # r = R^{-1} d[:q]
                for i in range(q - 1, -1, -1):
                    acc = d[i]
                    for j in range(i + 1, q):
                        acc -= R[i, j] * r[j]
                    r[i] = acc / R[i, i]
                t1 = INFINITY
                k = -1
                for j in range(q):
                    if r[j] > 0.0:
                        ratio = u[j] / r[j]
                        if ratio < t1:
                            t1 = ratio
                            k = j
                if sqrt(dn) <= 1e-12 * (sqrt(dd) if sqrt(dd) > 1e-300 else 1e-300):
                    t2 = INFINITY
                else:
                    acc = -bv[p]
                    for j in range(n):
                        acc += Cm[p, j] * x[j]
                    t2 = -acc / dn
                    if t2 < 0.0:
                        t2 = 0.0
                t = t1 if t1 < t2 else t2
                if t == INFINITY:
                    status = INFEASIBLE
                    break
                if t2 == INFINITY:
                    for j in range(q):
                        u[j] -= t * r[j]
                    u_plus += t
                    _drop(J, R, u, act, is_act, k, q, n)
                    q -= 1
                    continue
                for i in range(n):
                    x[i] += t * z[i]
                for j in range(q):
                    u[j] -= t * r[j]
                u_plus += t
                if t == t2:
                    # Householder on d[q:] -> alpha e_1
                    alpha = sqrt(dn)
                    if d[q] > 0.0:
                        alpha = -alpha
                    vv = 0.0
                    for j in range(q, n):
                        v[j] = d[j]
                    v[q] -= alpha
                    for j in range(q, n):
                        vv += v[j] * v[j]
                    if q + 1 < n and vv > 0.0:
                        for i in range(n):
                            acc = 0.0
                            for j in range(q, n):
                                acc += J[i, j] * v[j]
                            acc *= 2.0 / vv
                            for j in range(q, n):
                                J[i, j] -= acc * v[j]
                    elif q + 1 == n:
                        alpha = d[q]
                    for i in range(q):
                        R[i, q] = d[i]
                    R[q, q] = alpha
                    for i in range(q + 1, n):
                        R[i, q] = 0.0
                    u[q] = u_plus
                    act[q] = p
                    is_act[p] = 1
                    q += 1
                    break
                _drop(J, R, u, act, is_act, k, q, n)
                q -= 1
            if status != OPTIMAL:
                break

    for j in range(q):
        mu[act[j]] = u[j]
    active = [int(act[j]) for j in range(q)]
    return x_arr, mu_arr, status, it, active


cdef void _drop(double[:, ::1] J, double[:, ::1] R, double[::1] u, int[::1] act,
                char[::1] is_act, int k, int q, int n) noexcept nogil:
    cdef int i, j, l
    cdef double a, bb, h, cs, sn, t1, t2
    is_act[act[k]] = 0
    for j in range(k, q - 1):
        for i in range(q):
            R[i, j] = R[i, j + 1]
        u[j] = u[j + 1]
        act[j] = act[j + 1]
    for i in range(n):
        R[i, q - 1] = 0.0
    u[q - 1] = 0.0
    for j in range(k, q - 1):
        a = R[j, j]
        bb = R[j + 1, j]
        h = hypot(a, bb)
        if h == 0.0:
            continue
        cs = a / h
        sn = bb / h
        for l in range(j, q - 1):
            t1 = R[j, l]
            t2 = R[j + 1, l]
            R[j, l] = cs * t1 + sn * t2
            R[j + 1, l] = -sn * t1 + cs * t2
        R[j + 1, j] = 0.0
        for i in range(n):
            t1 = J[i, j]
            t2 = J[i, j + 1]
            J[i, j] = cs * t1 + sn * t2
            J[i, j + 1] = -sn * t1 + cs * t2
