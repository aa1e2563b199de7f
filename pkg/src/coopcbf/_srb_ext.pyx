# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled plant step; mirrors ``SrbPair._rk4_py``."""


cdef inline void _cross(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline void _matvec(const double* M, const double* v, double* out) noexcept nogil:
    cdef int r
    for r in range(3):
        out[r] = M[3 * r] * v[0] + M[3 * r + 1] * v[1] + M[3 * r + 2] * v[2]


cdef inline void _matTvec(const double* M, const double* v, double* out) noexcept nogil:
    cdef int r
    for r in range(3):
        out[r] = M[r] * v[0] + M[3 + r] * v[1] + M[6 + r] * v[2]


cdef int _rhs(const double* x, const double* Rop, const unsigned char* stance, const double* feet,
              const double* f, const double* mass, const double* I, const double* Iinv,
              const double* r, double gz, double psi, double wb, double zb, double* out) noexcept nogil:
    cdef double d[3]
    cdef double dd[3]
    cdef double base[24]
    cdef double slope[24]
    cdef double R[9]
    cdef double a[3]
    cdef double tmp[3]
    cdef double tmp2[3]
    cdef double tau[3]
    cdef double fsum[3]
    cdef double arm[3]
    cdef double Iw[3]
    cdef double pdd_b[3]
    cdef double pdd_s[3]
    cdef double s, coef_a, coef_b, Lam, Lam_dot, target, lam
    cdef int i, k, ell, b, q
    for k in range(3):
        d[k] = 0.0
        dd[k] = 0.0
    for i in range(2):
        s = 1.0 if i == 0 else -1.0
        b = 12 * i
        # R = Rop (I + [xi]x)
        for q in range(3):
            for k in range(3):
                R[3 * q + k] = Rop[9 * i + 3 * q + k]
        for q in range(3):
            # row q of Rop [xi]x : Rop[q,:] x-products
            R[3 * q + 0] += Rop[9 * i + 3 * q + 1] * x[b + 8] - Rop[9 * i + 3 * q + 2] * x[b + 7]
            R[3 * q + 1] += -Rop[9 * i + 3 * q + 0] * x[b + 8] + Rop[9 * i + 3 * q + 2] * x[b + 6]
            R[3 * q + 2] += Rop[9 * i + 3 * q + 0] * x[b + 7] - Rop[9 * i + 3 * q + 1] * x[b + 6]
        _matvec(R, &r[3 * i], a)
        _cross(&x[b + 9], &r[3 * i], tmp)
        _matvec(&Rop[9 * i], tmp, tmp2)
        for k in range(3):
            d[k] += s * (x[b + k] + a[k])
            dd[k] += s * (x[b + 3 + k] + tmp2[k])
    for i in range(2):
        s = 1.0 if i == 0 else -1.0
        b = 12 * i
        for q in range(3):
            for k in range(3):
                R[3 * q + k] = Rop[9 * i + 3 * q + k]
        for q in range(3):
            R[3 * q + 0] += Rop[9 * i + 3 * q + 1] * x[b + 8] - Rop[9 * i + 3 * q + 2] * x[b + 7]
            R[3 * q + 1] += -Rop[9 * i + 3 * q + 0] * x[b + 8] + Rop[9 * i + 3 * q + 2] * x[b + 6]
            R[3 * q + 2] += Rop[9 * i + 3 * q + 0] * x[b + 7] - Rop[9 * i + 3 * q + 1] * x[b + 6]
        _matvec(R, &r[3 * i], a)
        for k in range(3):
            fsum[k] = 0.0
            tau[k] = 0.0
        for ell in range(4):
            if stance[4 * i + ell]:
                for k in range(3):
                    fsum[k] += f[12 * i + 3 * ell + k]
                    arm[k] = feet[12 * i + 3 * ell + k] - x[b + k]
                _cross(arm, &f[12 * i + 3 * ell], tmp)
                for k in range(3):
                    tau[k] += tmp[k]
        for k in range(3):
            base[b + k] = x[b + 3 + k]
            base[b + 3 + k] = fsum[k] / mass[i]
            base[b + 6 + k] = x[b + 9 + k]
            slope[b + k] = 0.0
            slope[b + 3 + k] = s * d[k] / mass[i]
            slope[b + 6 + k] = 0.0
        base[b + 5] += gz
        _matvec(&I[9 * i], &x[b + 9], Iw)
        _cross(&x[b + 9], Iw, tmp)
        _matTvec(R, tau, tmp2)
        for k in range(3):
            tmp2[k] -= tmp[k]
        _matvec(&Iinv[9 * i], tmp2, &base[b + 9])
        _cross(a, d, tmp)
        for k in range(3):
            tmp[k] *= s
        _matTvec(R, tmp, tmp2)
        _matvec(&Iinv[9 * i], tmp2, &slope[b + 9])
    for k in range(3):
        pdd_b[k] = 0.0
        pdd_s[k] = 0.0
    for i in range(2):
        s = 1.0 if i == 0 else -1.0
        b = 12 * i
        _cross(&base[b + 9], &r[3 * i], tmp)
        _matvec(&Rop[9 * i], tmp, tmp2)
        for k in range(3):
            pdd_b[k] += s * (base[b + 3 + k] + tmp2[k])
        _cross(&slope[b + 9], &r[3 * i], tmp)
        _matvec(&Rop[9 * i], tmp, tmp2)
        for k in range(3):
            pdd_s[k] += s * (slope[b + 3 + k] + tmp2[k])
    coef_a = 0.0
    coef_b = 0.0
    Lam = 0.0
    Lam_dot = 0.0
    for k in range(3):
        coef_a += 2.0 * dd[k] * dd[k] + 2.0 * d[k] * pdd_b[k]
        coef_b += 2.0 * d[k] * pdd_s[k]
        Lam += d[k] * d[k]
        Lam_dot += 2.0 * d[k] * dd[k]
    if coef_b == 0.0:
        return 1
    target = -2.0 * zb * wb * Lam_dot - wb * wb * (Lam - psi)
    lam = (target - coef_a) / coef_b
    for k in range(24):
        out[k] = base[k] + lam * slope[k]
    return 0


def rk4_step(const double[::1] x0, const double[:, :, ::1] Rop, const unsigned char[:, ::1] stance,
             const double[:, :, ::1] feet, const double[::1] f, const double[::1] mass,
             const double[:, :, ::1] I, const double[:, :, ::1] Iinv, const double[:, ::1] r,
             double gz, double psi, double wb, double zb, double dt, double[::1] out):
    """Baumgarte-stabilized RK4 step into ``out``; returns 1 if singular."""
    cdef double k1[24]
    cdef double k2[24]
    cdef double k3[24]
    cdef double k4[24]
    cdef double xs[24]
    cdef int k, flag
    cdef const double* R = &Rop[0, 0, 0]
    cdef const unsigned char* st = &stance[0, 0]
    cdef const double* ft = &feet[0, 0, 0]
    cdef const double* Ip = &I[0, 0, 0]
    cdef const double* Ii = &Iinv[0, 0, 0]
    cdef const double* rp = &r[0, 0]
    with nogil:
        flag = _rhs(&x0[0], R, st, ft, &f[0], &mass[0], Ip, Ii, rp, gz, psi, wb, zb, k1)
        for k in range(24):
            xs[k] = x0[k] + 0.5 * dt * k1[k]
        flag |= _rhs(xs, R, st, ft, &f[0], &mass[0], Ip, Ii, rp, gz, psi, wb, zb, k2)
        for k in range(24):
            xs[k] = x0[k] + 0.5 * dt * k2[k]
        flag |= _rhs(xs, R, st, ft, &f[0], &mass[0], Ip, Ii, rp, gz, psi, wb, zb, k3)
        for k in range(24):
            xs[k] = x0[k] + dt * k3[k]
        flag |= _rhs(xs, R, st, ft, &f[0], &mass[0], Ip, Ii, rp, gz, psi, wb, zb, k4)
        for k in range(24):
            out[k] = x0[k] + dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
    return flag
