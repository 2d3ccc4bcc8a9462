# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled geodesic-flow kernels.

Mirrors :mod:`birkhoff_lab._pykernels` exactly (same packed parameters,
same DOP853 stepping, same event logic). The state vector is
``[u, v, du, dv, J1, dJ1, J2, dJ2]``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, exp, sqrt, fabs, floor, pow, M_PI
from libc.stdlib cimport malloc, realloc, free

from scipy.integrate._ivp import dop853_coefficients as _dop

cnp.import_array()

cdef enum:
    NS = 12
    NY = 8
    MAXSEC = 16

cdef double A[NS + 1][NS + 1]
cdef double B[NS]
cdef double C[NS + 1]
cdef double E3[NS + 1]
cdef double E5[NS + 1]


def _load_tables():
    cdef int i, j
    for i in range(NS + 1):
        C[i] = float(_dop.C[i])
        E3[i] = float(_dop.E3[i])
        E5[i] = float(_dop.E5[i])
        for j in range(NS + 1):
            A[i][j] = float(_dop.A[i, j])
    for i in range(NS):
        B[i] = float(_dop.B[i])


_load_tables()

IMPLEMENTATION = "cython"


cdef struct Surf:
    int kind
    const double *par
    int npar


cdef void _metric(Surf *s, double u, double v, double *out) noexcept nogil:
    # out: g11 g12 g22 G111 G112 G122 G211 G212 G222 K
    cdef int k, nr, nz, nm
    cdef double r, r1, r2, z1, z2, a2, a, a1, K0, amp
    cdef double st, ct, cth, sth, h, ht, hth, htt, hthth, lap, e2h
    cdef double E, Gm, Et, Gt, rho, rv, f, fu, fv, fuu, fvv, ph, m, n, cc, ss, w
    cdef double gt111, gt122, gt212
    for k in range(10):
        out[k] = 0.0
    if s.kind == 0:
        nr = <int>s.par[0]
        nz = <int>s.par[1]
        amp = s.par[2]
        r = 0.0; r1 = 0.0; r2 = 0.0
        for k in range(nr):
            w = (k + 1.0)
            r += s.par[3 + k] * sin(w * u)
            r1 += s.par[3 + k] * w * cos(w * u)
            r2 -= s.par[3 + k] * w * w * sin(w * u)
        z1 = 0.0; z2 = 0.0
        for k in range(nz):
            w = (k + 1.0)
            z1 -= s.par[3 + nr + k] * w * sin(w * u)
            z2 -= s.par[3 + nr + k] * w * w * cos(w * u)
        a2 = r1 * r1 + z1 * z1
        a = sqrt(a2)
        a1 = (r1 * r2 + z1 * z2) / a
        K0 = -(r2 / a - r1 * a1 / a2) / (a * r)
        E = a2
        Gm = r * r
        Et = 2.0 * a * a1
        Gt = 2.0 * r * r1
        gt111 = Et / (2.0 * E)
        gt122 = -Gt / (2.0 * E)
        gt212 = Gt / (2.0 * Gm)
        if amp == 0.0:
            out[0] = E; out[2] = Gm
            out[3] = gt111; out[5] = gt122; out[7] = gt212
            out[9] = K0
            return
        st = sin(u); ct = cos(u); cth = cos(v); sth = sin(v)
        h = amp * st * ct * ct * cth
        ht = amp * cth * ct * (ct * ct - 2.0 * st * st)
        htt = amp * cth * st * (2.0 * st * st - 7.0 * ct * ct)
        hth = -amp * st * ct * ct * sth
        hthth = -h
        e2h = exp(2.0 * h)
        out[0] = e2h * E; out[2] = e2h * Gm
        # conformal change: G~^k_ij = G^k_ij + d^k_i h_j + d^k_j h_i - g_ij g^kl h_l
        out[3] = gt111 + ht                  # G^1_11
        out[4] = hth                         # G^1_12
        out[5] = gt122 - Gm / E * ht         # G^1_22
        out[6] = -E / Gm * hth               # G^2_11
        out[7] = gt212 + ht                  # G^2_12
        out[8] = hth                         # G^2_22
        lap = ((r1 / a - r * a1 / a2) * ht + (r / a) * htt) / (a * r) + hthth / Gm
        out[9] = (K0 - lap) / e2h
    elif s.kind == 1:
        rho = s.par[0] + s.par[1] * cos(v)
        rv = -s.par[1] * sin(v)
        out[0] = rho * rho
        out[2] = s.par[1] * s.par[1]
        out[4] = rv / rho                    # G^u_uv
        out[6] = -rho * rv / (s.par[1] * s.par[1])  # G^v_uu
        out[9] = cos(v) / (s.par[1] * rho)
    else:
        nm = <int>s.par[0]
        f = 0.0; fu = 0.0; fv = 0.0; fuu = 0.0; fvv = 0.0
        for k in range(nm):
            m = s.par[1 + 4 * k]
            n = s.par[2 + 4 * k]
            cc = s.par[3 + 4 * k]
            ss = s.par[4 + 4 * k]
            ph = 2.0 * M_PI * (m * u + n * v)
            w = cc * cos(ph) + ss * sin(ph)
            f += w
            h = 2.0 * M_PI * (-cc * sin(ph) + ss * cos(ph))
            fu += m * h
            fv += n * h
            fuu -= 4.0 * M_PI * M_PI * m * m * w
            fvv -= 4.0 * M_PI * M_PI * n * n * w
        e2h = exp(2.0 * f)
        out[0] = e2h; out[2] = e2h
        out[3] = fu; out[4] = fv; out[5] = -fu
        out[6] = -fv; out[7] = fu; out[8] = fv
        out[9] = -(fuu + fvv) / e2h


cdef void _rhs(Surf *s, const double *y, double *dy) noexcept nogil:
    cdef double m[10]
    _metric(s, y[0], y[1], m)
    cdef double du = y[2], dv = y[3]
    dy[0] = du
    dy[1] = dv
    dy[2] = -(m[3] * du * du + 2.0 * m[4] * du * dv + m[5] * dv * dv)
    dy[3] = -(m[6] * du * du + 2.0 * m[7] * du * dv + m[8] * dv * dv)
    dy[4] = y[5]
    dy[5] = -m[9] * y[4]
    dy[6] = y[7]
    dy[7] = -m[9] * y[6]


cdef void _renorm(Surf *s, double *y) noexcept nogil:
    cdef double m[10]
    _metric(s, y[0], y[1], m)
    cdef double nn = m[0] * y[2] * y[2] + 2.0 * m[1] * y[2] * y[3] + m[2] * y[3] * y[3]
    if nn > 0.0:
        nn = 1.0 / sqrt(nn)
        y[2] *= nn
        y[3] *= nn


cdef double _step(Surf *s, const double *y, const double *f0, double h,
                  double rtol, double atol, double *ynew, double *fnew) noexcept nogil:
    """One DOP853 step; returns the scaled error norm."""
    cdef double K[NS + 1][NY]
    cdef double yt[NY]
    cdef double e3, e5, sc, err5, err3, denom, corr, acc
    cdef int i, j, k
    for k in range(NY):
        K[0][k] = f0[k]
    for i in range(1, NS):
        for k in range(NY):
            acc = 0.0
            for j in range(i):
                acc += A[i][j] * K[j][k]
            yt[k] = y[k] + h * acc
        _rhs(s, yt, K[i])
    for k in range(NY):
        acc = 0.0
        for j in range(NS):
            acc += B[j] * K[j][k]
        ynew[k] = y[k] + h * acc
    _rhs(s, ynew, K[NS])
    for k in range(NY):
        fnew[k] = K[NS][k]
    err5 = 0.0
    err3 = 0.0
    for k in range(NY):
        sc = atol + rtol * (fabs(y[k]) if fabs(y[k]) > fabs(ynew[k]) else fabs(ynew[k]))
        e5 = 0.0
        e3 = 0.0
        for j in range(NS + 1):
            e5 += E5[j] * K[j][k]
            e3 += E3[j] * K[j][k]
        err5 += (e5 / sc) * (e5 / sc)
        err3 += (e3 / sc) * (e3 / sc)
    denom = err5 + 0.01 * err3
    if denom <= 0.0:
        return 0.0
    corr = fabs(h) / sqrt(denom)
    return err5 * corr / sqrt(<double>NY)


cdef double _secval(const double *y, const double *sec) noexcept nogil:
    # lifted offset of the section coordinate from its level
    return y[<int>sec[0]] - sec[1]


cdef int _side(double x, double period, double nudge) noexcept nogil:
    if period > 0.0:
        return <int>floor(x / period + nudge)
    if x + nudge > 0.0:
        return 1
    return 0


cdef double _locate(Surf *s, const double *y, const double *f, double h,
                    int comp, double level, double period, int target,
                    double *yout) noexcept nogil:
    """Illinois root search on re-stepped states for comp(y(h')) hitting the target lift."""
    cdef double ya[NY]
    cdef double fa[NY]
    cdef double goal, lo, hi, flo, fhi, mid, fmid
    cdef int it, last = 0
    if period > 0.0:
        goal = level + period * target
    else:
        goal = level
    lo = 0.0
    hi = h
    flo = y[comp] - goal
    _step(s, y, f, hi, 1.0, 1.0, ya, fa)
    fhi = ya[comp] - goal
    mid = hi
    for it in range(200):
        if fhi == flo:
            mid = 0.5 * (lo + hi)
        else:
            mid = hi - fhi * (hi - lo) / (fhi - flo)
            if (mid - lo) * (mid - hi) > 0.0:
                mid = 0.5 * (lo + hi)
        _step(s, y, f, mid, 1.0, 1.0, ya, fa)
        fmid = ya[comp] - goal
        if fmid == 0.0:
            break
        if (fmid > 0.0) == (fhi > 0.0):
            hi = mid
            fhi = fmid
            if last == 1:
                flo *= 0.5
            last = 1
        else:
            lo = mid
            flo = fmid
            if last == -1:
                fhi *= 0.5
            last = -1
        if fabs(hi - lo) < 1e-13 * (1.0 + fabs(h)):
            break
    _step(s, y, f, mid, 1.0, 1.0, yout, fa)
    return mid


def metric(int kind, double[::1] par, double u, double v):
    cdef Surf s
    cdef double out[10]
    s.kind = kind
    s.par = &par[0]
    s.npar = par.shape[0]
    _metric(&s, u, v, out)
    return tuple([out[i] for i in range(10)])


def step(int kind, double[::1] par, double[::1] y, double h):
    """Single DOP853 step of size h (dense-output evaluation)."""
    cdef Surf s
    cdef double f0[NY]
    cdef double fn[NY]
    cdef cnp.ndarray[cnp.double_t, ndim=1] out = np.empty(NY)
    cdef double[::1] ov = out
    s.kind = kind
    s.par = &par[0]
    s.npar = par.shape[0]
    _rhs(&s, &y[0], f0)
    _step(&s, &y[0], f0, h, 1.0, 1.0, &ov[0], fn)
    _renorm(&s, &ov[0])
    return out


def integrate(int kind, double[::1] par, double[::1] y0, double t_end,
              double rtol=1e-11, double atol=1e-12, double hmax=0.5,
              double[:, ::1] sections=None, bint jzeros=False, int max_jzeros=64,
              bint store=False, double lo=-1e300, double hi=1e300,
              int max_steps=2000000):
    """Integrate the geodesic + Jacobi system from t=0 to t_end.

    Returns ``(status, t, y, sec_index, jzero_times, step_t, step_y)``.
    status: 0 reached t_end, 1 section crossing, 2 chart exit, 3 step failure.
    """
    cdef Surf s
    s.kind = kind
    s.par = &par[0]
    s.npar = par.shape[0]
    cdef int nsec = 0 if sections is None else sections.shape[0]
    if nsec > MAXSEC:
        raise ValueError("too many sections")
    cdef double sec[MAXSEC][4]
    cdef int side0[MAXSEC]
    cdef int i, k, status = 0, hit = -1, nst = 0, cap = 0, nz = 0, target, nside
    cdef double y[NY]
    cdef double f[NY]
    cdef double yn[NY]
    cdef double fn[NY]
    cdef double yev[NY]
    cdef double ybest[NY]
    cdef double zt[256]
    cdef double t = 0.0, h, err, fac, hev, best, direction, dtz
    cdef double *st_t = NULL
    cdef double *st_y = NULL
    cdef int comp
    cdef double vel
    if max_jzeros > 256:
        max_jzeros = 256
    for i in range(nsec):
        for k in range(4):
            sec[i][k] = sections[i, k]
    for k in range(NY):
        y[k] = y0[k]
    direction = 1.0 if t_end >= 0.0 else -1.0
    _rhs(&s, y, f)
    for i in range(nsec):
        comp = <int>sec[i][0]
        vel = y[2 + comp] * direction
        side0[i] = _side(_secval(y, sec[i]), sec[i][2], 1e-13 if vel > 0 else -1e-13)
    h = direction * (hmax if hmax < 0.05 else 0.05)
    if store:
        cap = 1024
        st_t = <double *>malloc(cap * sizeof(double))
        st_y = <double *>malloc(cap * NY * sizeof(double))
    with nogil:
        while True:
            if direction * (t - t_end) >= 0.0:
                status = 0
                break
            if nst >= max_steps:
                status = 3
                break
            if direction * (t + h - t_end) > 0.0:
                h = t_end - t
            err = _step(&s, y, f, h, rtol, atol, yn, fn)
            if not err <= 1.0:
                fac = 0.9 * pow(err, -1.0 / 8.0)
                if not fac >= 0.2:
                    fac = 0.2
                h *= fac
                if fabs(h) < 1e-14:
                    status = 3
                    break
                continue
            _renorm(&s, yn)
            if store:
                if nst + 1 >= cap:
                    cap *= 2
                    st_t = <double *>realloc(st_t, cap * sizeof(double))
                    st_y = <double *>realloc(st_y, cap * NY * sizeof(double))
                st_t[nst] = t
                for k in range(NY):
                    st_y[nst * NY + k] = y[k]
            nst += 1
            # Jacobi zeros of the second pair
            if jzeros and nz < max_jzeros and y[6] * yn[6] < 0.0:
                dtz = _locate(&s, y, f, h, 6, 0.0, 0.0, 0, yev)
                zt[nz] = t + dtz
                nz += 1
            # section events
            hit = -1
            best = 1e300
            for i in range(nsec):
                comp = <int>sec[i][0]
                nside = _side(_secval(yn, sec[i]), sec[i][2], 0.0)
                if nside != side0[i]:
                    if sec[i][2] > 0.0:
                        target = side0[i] + 1 if nside > side0[i] else side0[i]
                    else:
                        target = 0
                    hev = _locate(&s, y, f, h, comp, sec[i][1], sec[i][2], target, yev)
                    vel = yev[2 + comp]
                    side0[i] = nside
                    if sec[i][3] != 0.0 and vel * sec[i][3] <= 0.0:
                        continue
                    if fabs(hev) < best:
                        best = fabs(hev)
                        hit = i
                        for k in range(NY):
                            ybest[k] = yev[k]
            if hit >= 0:
                _renorm(&s, ybest)
                t = t + direction * best
                for k in range(NY):
                    y[k] = ybest[k]
                status = 1
                break
            t += h
            for k in range(NY):
                y[k] = yn[k]
                f[k] = fn[k]
            if s.kind == 0 and (y[0] < lo or y[0] > hi):
                status = 2
                break
            fac = 0.9 * pow(err, -1.0 / 8.0) if err > 0.0 else 10.0
            if fac > 10.0:
                fac = 10.0
            h *= fac
            if fabs(h) > hmax:
                h = direction * hmax
    cdef cnp.ndarray[cnp.double_t, ndim=1] yout = np.empty(NY)
    for k in range(NY):
        yout[k] = y[k]
    ztimes = np.array([zt[i] for i in range(nz)], dtype=float)
    steps_t = None
    steps_y = None
    if store:
        steps_t = np.empty(nst + 1)
        steps_y = np.empty((nst + 1, NY))
        for i in range(nst):
            steps_t[i] = st_t[i]
            for k in range(NY):
                steps_y[i, k] = st_y[i * NY + k]
        steps_t[nst] = t
        steps_y[nst, :] = yout
        free(st_t)
        free(st_y)
    return status, t, yout, hit, ztimes, steps_t, steps_y
