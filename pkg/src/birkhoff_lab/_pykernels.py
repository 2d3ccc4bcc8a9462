"""Pure-Python fallback for the geodesic-flow kernels.

Line-for-line mirror of ``_ckernels.pyx``; used when the extension is not
built or when ``BIRKHOFF_LAB_PURE=1`` is set.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

IMPLEMENTATION = "python"

NS = 12
NY = 8
_A = [[float(x) for x in row[:NS]] for row in _dop.A[:NS]]
_B = [float(x) for x in _dop.B]
_E3 = [float(x) for x in _dop.E3]
_E5 = [float(x) for x in _dop.E5]


def metric(kind, par, u, v):
    """Return ``(g11, g12, g22, G111, G112, G122, G211, G212, G222, K)``."""
    sin, cos = math.sin, math.cos
    if kind == 0:
        nr = int(par[0])
        nz = int(par[1])
        amp = par[2]
        r = r1 = r2 = 0.0
        for k in range(nr):
            w = k + 1.0
            c = par[3 + k]
            r += c * sin(w * u)
            r1 += c * w * cos(w * u)
            r2 -= c * w * w * sin(w * u)
        z1 = z2 = 0.0
        for k in range(nz):
            w = k + 1.0
            c = par[3 + nr + k]
            z1 -= c * w * sin(w * u)
            z2 -= c * w * w * cos(w * u)
        a2 = r1 * r1 + z1 * z1
        a = math.sqrt(a2)
        a1 = (r1 * r2 + z1 * z2) / a
        K0 = -(r2 / a - r1 * a1 / a2) / (a * r)
        E, Gm = a2, r * r
        g111 = a * a1 / E
        g122 = -r * r1 / E
        g212 = r1 / r
        if amp == 0.0:
            return (E, 0.0, Gm, g111, 0.0, g122, 0.0, g212, 0.0, K0)
        st, ct, cth, sth = sin(u), cos(u), cos(v), sin(v)
        h = amp * st * ct * ct * cth
        ht = amp * cth * ct * (ct * ct - 2.0 * st * st)
        htt = amp * cth * st * (2.0 * st * st - 7.0 * ct * ct)
        hth = -amp * st * ct * ct * sth
        e2h = math.exp(2.0 * h)
        lap = ((r1 / a - r * a1 / a2) * ht + (r / a) * htt) / (a * r) - h / Gm
        return (e2h * E, 0.0, e2h * Gm,
                g111 + ht, hth, g122 - Gm / E * ht,
                -E / Gm * hth, g212 + ht, hth,
                (K0 - lap) / e2h)
    if kind == 1:
        R, rr = par[0], par[1]
        rho = R + rr * cos(v)
        rv = -rr * sin(v)
        return (rho * rho, 0.0, rr * rr, 0.0, rv / rho, 0.0,
                -rho * rv / (rr * rr), 0.0, 0.0, cos(v) / (rr * rho))
    nm = int(par[0])
    f = fu = fv = fuu = fvv = 0.0
    tp = 2.0 * math.pi
    for k in range(nm):
        m, n, cc, ss = par[1 + 4 * k], par[2 + 4 * k], par[3 + 4 * k], par[4 + 4 * k]
        ph = tp * (m * u + n * v)
        w = cc * cos(ph) + ss * sin(ph)
        f += w
        d = tp * (-cc * sin(ph) + ss * cos(ph))
        fu += m * d
        fv += n * d
        fuu -= tp * tp * m * m * w
        fvv -= tp * tp * n * n * w
    e2f = math.exp(2.0 * f)
    return (e2f, 0.0, e2f, fu, fv, -fu, -fv, fu, fv, -(fuu + fvv) / e2f)


def _rhs(kind, par, y):
    m = metric(kind, par, y[0], y[1])
    du, dv = y[2], y[3]
    return [du, dv,
            -(m[3] * du * du + 2.0 * m[4] * du * dv + m[5] * dv * dv),
            -(m[6] * du * du + 2.0 * m[7] * du * dv + m[8] * dv * dv),
            y[5], -m[9] * y[4], y[7], -m[9] * y[6]]


def _renorm(kind, par, y):
    m = metric(kind, par, y[0], y[1])
    nn = m[0] * y[2] * y[2] + 2.0 * m[1] * y[2] * y[3] + m[2] * y[3] * y[3]
    if nn > 0.0:
        nn = 1.0 / math.sqrt(nn)
        y[2] *= nn
        y[3] *= nn


def _step(kind, par, y, f0, h, rtol, atol):
    K = [f0]
    for i in range(1, NS):
        Ai = _A[i]
        yt = [y[k] + h * sum(Ai[j] * K[j][k] for j in range(i)) for k in range(NY)]
        K.append(_rhs(kind, par, yt))
    ynew = [y[k] + h * sum(_B[j] * K[j][k] for j in range(NS)) for k in range(NY)]
    fnew = _rhs(kind, par, ynew)
    K.append(fnew)
    err5 = err3 = 0.0
    for k in range(NY):
        sc = atol + rtol * max(abs(y[k]), abs(ynew[k]))
        e5 = sum(_E5[j] * K[j][k] for j in range(NS + 1)) / sc
        e3 = sum(_E3[j] * K[j][k] for j in range(NS + 1)) / sc
        err5 += e5 * e5
        err3 += e3 * e3
    denom = err5 + 0.01 * err3
    if denom <= 0.0:
        return 0.0, ynew, fnew
    return err5 * abs(h) / math.sqrt(denom) / math.sqrt(NY), ynew, fnew


def _side(x, period, nudge):
    if period > 0.0:
        return int(math.floor(x / period + nudge))
    return 1 if x + nudge > 0.0 else 0


def _locate(kind, par, y, f, h, comp, level, period, target):
    goal = level + period * target if period > 0.0 else level
    lo, hi = 0.0, h
    flo = y[comp] - goal
    _, ya, _ = _step(kind, par, y, f, hi, 1.0, 1.0)
    fhi = ya[comp] - goal
    mid = hi
    last = 0
    for _it in range(200):
        if fhi == flo:
            mid = 0.5 * (lo + hi)
        else:
            mid = hi - fhi * (hi - lo) / (fhi - flo)
            if (mid - lo) * (mid - hi) > 0.0:
                mid = 0.5 * (lo + hi)
        _, ya, _ = _step(kind, par, y, f, mid, 1.0, 1.0)
        fmid = ya[comp] - goal
        if fmid == 0.0:
            break
        if (fmid > 0.0) == (fhi > 0.0):
            hi, fhi = mid, fmid
            if last == 1:
                flo *= 0.5
            last = 1
        else:
            lo, flo = mid, fmid
            if last == -1:
                fhi *= 0.5
            last = -1
        if abs(hi - lo) < 1e-13 * (1.0 + abs(h)):
            break
    _, yout, _ = _step(kind, par, y, f, mid, 1.0, 1.0)
    return mid, yout


def step(kind, par, y, h):
    y = [float(x) for x in y]
    f0 = _rhs(kind, par, y)
    _, yn, _ = _step(kind, par, y, f0, h, 1.0, 1.0)
    _renorm(kind, par, yn)
    return np.array(yn)


def integrate(kind, par, y0, t_end, rtol=1e-11, atol=1e-12, hmax=0.5,
              sections=None, jzeros=False, max_jzeros=64, store=False,
              lo=-1e300, hi=1e300, max_steps=2000000):
    """See ``_ckernels.integrate``."""
    par = [float(x) for x in par]
    secs = [] if sections is None else [list(map(float, row)) for row in sections]
    max_jzeros = min(max_jzeros, 256)
    y = [float(x) for x in y0]
    direction = 1.0 if t_end >= 0.0 else -1.0
    f = _rhs(kind, par, y)
    side0 = []
    for sec in secs:
        comp = int(sec[0])
        vel = y[2 + comp] * direction
        side0.append(_side(y[comp] - sec[1], sec[2], 1e-13 if vel > 0 else -1e-13))
    h = direction * min(hmax, 0.05)
    t = 0.0
    status = 0
    hit = -1
    nst = 0
    zt = []
    st_t, st_y = [], []
    while True:
        if direction * (t - t_end) >= 0.0:
            status = 0
            break
        if nst >= max_steps:
            status = 3
            break
        if direction * (t + h - t_end) > 0.0:
            h = t_end - t
        err, yn, fn = _step(kind, par, y, f, h, rtol, atol)
        if not err <= 1.0:  # NaN from a blown-up trial step counts as rejection
            h *= max(0.2, 0.9 * err ** (-1.0 / 8.0))
            if abs(h) < 1e-14:
                status = 3
                break
            continue
        _renorm(kind, par, yn)
        if store:
            st_t.append(t)
            st_y.append(list(y))
        nst += 1
        if jzeros and len(zt) < max_jzeros and y[6] * yn[6] < 0.0:
            dtz, _ = _locate(kind, par, y, f, h, 6, 0.0, 0.0, 0)
            zt.append(t + dtz)
        hit = -1
        best = 1e300
        ybest = None
        for i, sec in enumerate(secs):
            comp = int(sec[0])
            nside = _side(yn[comp] - sec[1], sec[2], 0.0)
            if nside != side0[i]:
                if sec[2] > 0.0:
                    target = side0[i] + 1 if nside > side0[i] else side0[i]
                else:
                    target = 0
                hev, yev = _locate(kind, par, y, f, h, comp, sec[1], sec[2], target)
                vel = yev[2 + comp]
                side0[i] = nside
                if sec[3] != 0.0 and vel * sec[3] <= 0.0:
                    continue
                if abs(hev) < best:
                    best = abs(hev)
                    hit = i
                    ybest = list(yev)
        if hit >= 0:
            _renorm(kind, par, ybest)
            t = t + direction * best
            y = ybest
            status = 1
            break
        t += h
        y, f = yn, fn
        if kind == 0 and (y[0] < lo or y[0] > hi):
            status = 2
            break
        fac = min(10.0, 0.9 * err ** (-1.0 / 8.0)) if err > 0.0 else 10.0
        h *= fac
        if abs(h) > hmax:
            h = direction * hmax
    yout = np.array(y)
    steps_t = steps_y = None
    if store:
        steps_t = np.array(st_t + [t])
        steps_y = np.array(st_y + [list(y)])
    return status, t, yout, hit, np.array(zt, dtype=float), steps_t, steps_y
