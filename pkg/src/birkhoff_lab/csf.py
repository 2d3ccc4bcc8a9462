"""Discrete curve shortening flow on parametrized surfaces.

Curves are stored as lifted chart polygons ``X[0..n-1]`` together with a
closure shift ``W`` (``X[n] == X[0] + W``), so non-contractible loops on tori
and loops around the axis of a sphere of revolution are handled without
seams. Parametrized by metric arclength ``sigma`` the flow reads

    dX/ds = D_sigma X_sigma = X_sigma,sigma + Gamma(X_sigma, X_sigma),

whose right-hand side is the curvature vector ``k nu``. The second
derivative is taken implicitly (cyclic tridiagonal arclength Laplacian) and
the Christoffel term explicitly; the curve is resampled to uniform metric
arclength after every step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from . import flow, geom
from .errors import (BudgetExhausted, ConvexityViolation, DegenerateCurve, EmbeddednessLost,
                     PreconditionError)


@dataclass
class DiscreteCurve:
    """Closed polygon in a lifted chart; ``points[n] == points[0] + shift``."""

    points: np.ndarray
    shift: tuple = (0.0, 0.0)
    resampled: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.shift = (float(self.shift[0]), float(self.shift[1]))

    @property
    def n(self) -> int:
        return len(self.points)

    def closed(self) -> np.ndarray:
        """Points with the closing vertex appended."""
        return np.vstack([self.points, self.points[:1] + np.asarray(self.shift)])

    def neighbours(self):
        W = np.asarray(self.shift)
        nxt = np.vstack([self.points[1:], self.points[:1] + W])
        prv = np.vstack([self.points[-1:] - W, self.points[:-1]])
        return prv, nxt

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "v"])
            for p in self.points:
                w.writerow([f"{p[0]:.12g}", f"{p[1]:.12g}"])


def from_function(f, n=256, shift=(0.0, 0.0)) -> DiscreteCurve:
    """Sample ``f(theta)`` for ``theta`` in ``[0, 2 pi)``."""
    th = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    return DiscreteCurve(np.array([f(t) for t in th]), shift)


def circle(center, radius, n=256) -> DiscreteCurve:
    """Chart circle (a metric circle on the flat torus)."""
    c = np.asarray(center, float)
    return from_function(lambda t: c + radius * np.array([math.cos(t), math.sin(t)]), n)


def coordinate_loop(m, index, level, amplitude=0.0, mode=1, phase=0.0, n=256,
                    orientation=1) -> DiscreteCurve:
    """Loop running once around coordinate ``1 - index`` at ``level``.

    The fixed coordinate is perturbed by ``amplitude * sin(mode * theta + phase)``.
    """
    j = 1 - index
    per = m.periods[j]
    th = np.linspace(0.0, per, n, endpoint=False)
    pts = np.zeros((n, 2))
    pts[:, j] = th if orientation > 0 else -th
    pts[:, index] = level + amplitude * np.sin(mode * 2 * math.pi * th / per + phase)
    shift = [0.0, 0.0]
    shift[j] = per if orientation > 0 else -per
    return DiscreteCurve(pts, tuple(shift))


def class_loop(m, p, q, n=256, amplitude=0.0, base=(0.0, 0.0)) -> DiscreteCurve:
    """Straight chart loop in homotopy class ``(p, q)`` on a torus model."""
    if m.is_sphere:
        raise PreconditionError("homotopy classes are defined on torus models")
    W = np.array([p * m.periods[0], q * m.periods[1]])
    th = np.linspace(0.0, 1.0, n, endpoint=False)
    pts = np.asarray(base, float) + np.outer(th, W)
    perp = np.array([-W[1], W[0]]) / np.hypot(*W)
    pts = pts + amplitude * np.outer(np.sin(2 * math.pi * th), perp)
    return DiscreteCurve(pts, tuple(W))


# --- discrete geometry ---------------------------------------------------------------------

def _metric_mid(m, A, B):
    M = 0.5 * (A + B)
    return geom.metric_arrays(m, M[:, 0], M[:, 1])


def edge_lengths(m, c: DiscreteCurve) -> np.ndarray:
    """Metric length of each edge ``X_i -> X_{i+1}`` (midpoint rule)."""
    _, nxt = c.neighbours()
    D = nxt - c.points
    d = _metric_mid(m, c.points, nxt)
    return np.sqrt(d["g11"] * D[:, 0] ** 2 + 2 * d["g12"] * D[:, 0] * D[:, 1] + d["g22"] * D[:, 1] ** 2)


def length(m, c: DiscreteCurve) -> float:
    return float(np.sum(edge_lengths(m, c)))


def _derivs(m, c: DiscreteCurve, h=None):
    """Nonuniform three-point first and second arclength derivatives."""
    if h is None:
        h = edge_lengths(m, c)
    prv, nxt = c.neighbours()
    hm = np.roll(h, 1)      # length of edge (i-1, i)
    hp = h                  # length of edge (i, i+1)
    X = c.points
    Xs = ((X - prv) * (hp / (hm * (hm + hp)))[:, None]
          + (nxt - X) * (hm / (hp * (hm + hp)))[:, None])
    Xss = 2 * ((nxt - X) / hp[:, None] - (X - prv) / hm[:, None]) / (hm + hp)[:, None]
    return Xs, Xss, hm, hp


def _gamma_term(d, V):
    G = d["G"]
    out = np.empty_like(V)
    for k in (0, 1):
        out[:, k] = (G[k][0][0] * V[:, 0] ** 2 + 2 * G[k][0][1] * V[:, 0] * V[:, 1]
                     + G[k][1][1] * V[:, 1] ** 2)
    return out


def curvature_profile(m, c: DiscreteCurve):
    """Geodesic curvature ``k_i``, left unit normals ``nu_i`` and total length.

    ``k = g(D_sigma T, nu)`` with the nonuniform three-point stencils, second
    order accurate on smooth curves.
    """
    if c.n < 16:
        raise PreconditionError("curvature needs at least 16 vertices")
    h = edge_lengths(m, c)
    if np.any(h <= 1e-14 * max(1.0, float(np.max(h)))):
        raise DegenerateCurve("zero-length edge")
    Xs, Xss, _, _ = _derivs(m, c, h)
    d = geom.metric_arrays(m, c.points[:, 0], c.points[:, 1])
    acc = Xss + _gamma_term(d, Xs)
    g11, g12, g22 = d["g11"], d["g12"], d["g22"]
    nrm = np.sqrt(g11 * Xs[:, 0] ** 2 + 2 * g12 * Xs[:, 0] * Xs[:, 1] + g22 * Xs[:, 1] ** 2)
    T = Xs / nrm[:, None]
    sq = np.sqrt(g11 * g22 - g12 ** 2)
    nu = np.column_stack([-(g12 * T[:, 0] + g22 * T[:, 1]) / sq, (g11 * T[:, 0] + g12 * T[:, 1]) / sq])
    k = (g11 * acc[:, 0] * nu[:, 0] + g12 * (acc[:, 0] * nu[:, 1] + acc[:, 1] * nu[:, 0])
         + g22 * acc[:, 1] * nu[:, 1])
    return k, nu, float(np.sum(h))


def resample(m, c: DiscreteCurve, n: int | None = None) -> DiscreteCurve:
    """Uniform metric-arclength resampling via a periodic cubic spline."""
    n = n or c.n
    h = edge_lengths(m, c)
    s = np.concatenate([[0.0], np.cumsum(h)])
    L = s[-1]
    W = np.asarray(c.shift)
    P = c.closed() - np.outer(s / L, W)
    P[-1] = P[0]
    sp = CubicSpline(s, P, bc_type="periodic")
    su = np.linspace(0.0, L, n, endpoint=False)
    Q = sp(su) + np.outer(su / L, W)
    return DiscreteCurve(Q, c.shift, resampled=True)


def uniformity(m, c: DiscreteCurve) -> float:
    h = edge_lengths(m, c)
    return float(np.max(np.abs(h / np.mean(h) - 1.0)))


def _segments_cross(P, Q, R, S):
    """Proper intersection test for segment arrays ``PQ`` vs ``RS`` (broadcast)."""
    def orient(a, b, cc):
        return (b[..., 0] - a[..., 0]) * (cc[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (cc[..., 0] - a[..., 0])
    d1 = orient(R, S, P)
    d2 = orient(R, S, Q)
    d3 = orient(P, Q, R)
    d4 = orient(P, Q, S)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def is_embedded(c: DiscreteCurve) -> bool:
    """O(n^2) test for crossings of non-adjacent edges in the lift (including +-shift)."""
    X = c.closed()
    A, B = X[:-1], X[1:]
    n = len(A)
    idx = np.arange(n)
    W = np.asarray(c.shift)
    gap = np.abs(idx[:, None] - idx[None, :])
    far = (gap > 1) & (gap < n - 1)
    if np.any(W):
        proj = X @ W
        span = float(np.max(proj) - np.min(proj))
    for t in (0.0, 1.0, -1.0):
        if t != 0.0 and (not np.any(W) or span < float(W @ W)):
            # the translated copy lies in a disjoint slab: only the shared vertex can touch
            continue
        R, S = A + t * W, B + t * W
        hit = _segments_cross(A[:, None, :], B[:, None, :], R[None, :, :], S[None, :, :])
        mask = far if t == 0.0 else np.ones_like(far)
        if t != 0.0:
            # edges touching through the closing vertex are adjacent in the lift
            mask = mask & ~((idx[:, None] == n - 1) & (idx[None, :] == 0)) if t > 0 else \
                mask & ~((idx[:, None] == 0) & (idx[None, :] == n - 1))
        if np.any(hit & mask):
            return False
    return True


def diameter(m, c: DiscreteCurve) -> float:
    """Metric diameter estimate with the metric frozen at the centroid."""
    P = c.points
    ctr = P.mean(axis=0)
    d = geom.metric_arrays(m, ctr[0], ctr[1])
    D = P[:, None, :] - P[None, :, :]
    q = d["g11"] * D[..., 0] ** 2 + 2 * d["g12"] * D[..., 0] * D[..., 1] + d["g22"] * D[..., 1] ** 2
    return float(math.sqrt(max(float(np.max(q)), 0.0)))


# --- funnel windows -------------------------------------------------------------------------

@dataclass(frozen=True)
class FunnelWindow:
    """Curves with ``|L - ell| < eps^2`` and ``max|k| < eps``."""

    ell: float
    eps: float

    def contains(self, L, kmax) -> bool:
        return abs(L - self.ell) < self.eps ** 2 and kmax < self.eps


def funnel_check(m, c, w: FunnelWindow) -> bool:
    """Membership of a curve (``DiscreteCurve`` or ``ClosedGeodesicRecord``) in ``w``."""
    if isinstance(c, flow.ClosedGeodesicRecord):
        c = record_curve(c)
    k, _, L = curvature_profile(m, c)
    return w.contains(L, float(np.max(np.abs(k))))


def record_curve(rec, n=None) -> DiscreteCurve:
    """Polygon through the uniform samples of a closed-geodesic record."""
    S = rec.samples
    if n is not None and n != len(S) - 1:
        raise PreconditionError("record curve resolution is fixed by the record samples")
    return DiscreteCurve(S[:-1, :2].copy(), tuple(S[-1, :2] - S[0, :2]), resampled=True)


# --- evolution ---------------------------------------------------------------------------------

@dataclass
class StepPolicy:
    """Numerical controls for :func:`evolve`.

    ``n`` is the vertex count after resampling (``h_min = L/n``), ``cfl`` the
    step clamp factor ``ds <= cfl * min_edge^2``.
    """

    n: int = 256
    cfl: float = 0.4
    eps_target: float = 1e-3
    max_steps: int = 200000
    s_max: float = math.inf
    collapse_factor: float = 1e-3
    polish: bool = True
    check_embedded: bool = True
    trace: bool = True
    stall_window: int = 50


@dataclass
class FlowOutcome:
    """Result of a curve shortening run.

    ``kind`` is ``"ConvergedGeodesic"``, ``"Collapsed"`` or ``"Running"``.
    """

    kind: str
    s: float
    curve: DiscreteCurve
    record: object = None
    point: tuple | None = None
    lengths: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    steps: int = 0
    halvings: int = 0
    monotone_violations: int = 0

    def trace_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "L", "max|k|", "n"])
            for row in self.trace:
                w.writerow([f"{row[0]:.12g}", f"{row[1]:.12g}", f"{row[2]:.6g}", row[3]])


@dataclass(frozen=True)
class RegionSpec:
    """Open chart rectangle ``lo_i < x_i < hi_i`` (lifted coordinates).

    Every shipped region (disks bounded by a parallel, annuli between
    parallels, the complement of an equator and a meridian) has coordinate-line
    boundary, so a rectangle describes it exactly. ``None`` means unbounded.
    """

    bounds: tuple = ((None, None), (None, None))
    label: str = ""
    boundary: tuple = ()

    def inside(self, P) -> np.ndarray:
        P = np.atleast_2d(P)
        ok = np.ones(len(P), bool)
        for i, (lo, hi) in enumerate(self.bounds):
            if lo is not None:
                ok &= P[:, i] > lo
            if hi is not None:
                ok &= P[:, i] < hi
        return ok

    def margin(self, P) -> float:
        P = np.atleast_2d(P)
        best = math.inf
        for i, (lo, hi) in enumerate(self.bounds):
            if lo is not None:
                best = min(best, float(np.min(P[:, i] - lo)))
            if hi is not None:
                best = min(best, float(np.min(hi - P[:, i])))
        return best


def _implicit_step(m, c: DiscreteCurve, ds: float) -> DiscreteCurve:
    h = edge_lengths(m, c)
    Xs, _, hm, hp = _derivs(m, c, h)
    d = geom.metric_arrays(m, c.points[:, 0], c.points[:, 1])
    rhs = c.points + ds * _gamma_term(d, Xs)
    n = c.n
    a = 2.0 / (hm * (hm + hp))   # coefficient of X_{i-1}
    b = 2.0 / (hp * (hm + hp))   # coefficient of X_{i+1}
    idx = np.arange(n)
    rows = np.concatenate([idx, idx, idx])
    cols = np.concatenate([idx, (idx - 1) % n, (idx + 1) % n])
    vals = np.concatenate([1.0 + ds * (a + b), -ds * a, -ds * b])
    A = csc_matrix((vals, (rows, cols)), shape=(n, n))
    W = np.asarray(c.shift)
    # closure shift contributions of the wrapped neighbours
    rhs[0] -= ds * a[0] * W
    rhs[-1] += ds * b[-1] * W
    lu = splu(A)
    X = np.column_stack([lu.solve(rhs[:, 0]), lu.solve(rhs[:, 1])])
    return DiscreteCurve(X, c.shift)


def _record_from_curve(m, c: DiscreteCurve, L: float, policy: StepPolicy, name=""):
    p0 = c.points[0]
    t0 = c.points[1] - (c.points[-1] - np.asarray(c.shift))
    z0 = flow.UnitTangent.normalized(m, p0, t0)
    if policy.polish:
        z0, L = flow.polish_closed(m, z0, L)
    return flow.make_record(m, z0, L, name=name)


def evolve(m, c0: DiscreteCurve, policy: StepPolicy | None = None, region: RegionSpec | None = None,
           name: str = "") -> FlowOutcome:
    """Run curve shortening from ``c0`` until convergence, collapse or budget.

    Each accepted step must not increase length (unless the curve is already
    in the target funnel) and must keep the curve embedded; otherwise the
    step is retried with half the step size, at most 8 times.
    """
    policy = policy or StepPolicy()
    if c0.n < 16:
        raise PreconditionError("need at least 16 vertices")
    if not is_embedded(c0):
        raise EmbeddednessLost("initial curve is not embedded")
    if region is not None and not np.all(region.inside(c0.points)):
        raise PreconditionError("initial curve is not strictly inside the region")
    c = resample(m, c0, policy.n)
    collapse_tol = policy.collapse_factor * m.inj_radius_estimate
    eps = policy.eps_target
    s = 0.0
    k, _, L = curvature_profile(m, c)
    kmax = float(np.max(np.abs(k)))
    out = FlowOutcome("Running", s, c, lengths=[L])
    if policy.trace:
        out.trace.append((s, L, kmax, c.n))
    for step in range(policy.max_steps):
        if s >= policy.s_max:
            break
        if kmax < eps and len(out.lengths) > policy.stall_window and \
                abs(out.lengths[-policy.stall_window] - L) < eps ** 2:
            out.kind = "ConvergedGeodesic"
            out.record = _record_from_curve(m, c, L, policy, name)
            break
        if diameter(m, c) < collapse_tol:
            out.kind = "Collapsed"
            out.point = tuple(float(x) for x in c.points.mean(axis=0))
            break
        ds = policy.cfl * float(np.min(edge_lengths(m, c))) ** 2
        ds = min(ds, policy.s_max - s)
        for halving in range(9):
            if halving == 8:
                raise EmbeddednessLost(f"step rejected after 8 halvings at s={s:.6g}")
            try:
                cn = resample(m, _implicit_step(m, c, ds), policy.n)
                kn, _, Ln = curvature_profile(m, cn)
            except (DegenerateCurve, ValueError):
                ds *= 0.5
                out.halvings += 1
                continue
            if policy.check_embedded and not is_embedded(cn):
                ds *= 0.5
                out.halvings += 1
                continue
            if Ln > L and kmax >= eps:
                ds *= 0.5
                out.halvings += 1
                continue
            break
        if region is not None and not np.all(region.inside(cn.points)):
            raise ConvexityViolation(
                f"curve left region {region.label!r} at s={s + ds:.6g} (margin {region.margin(cn.points):.3g})")
        if Ln > L:
            out.monotone_violations += 1
        c, L, s = cn, Ln, s + ds
        kmax = float(np.max(np.abs(kn)))
        out.lengths.append(L)
        out.steps = step + 1
        if policy.trace:
            out.trace.append((s, L, kmax, c.n))
    out.s = s
    out.curve = c
    return out


def region_confined_evolve(m, c0: DiscreteCurve, region: RegionSpec,
                           policy: StepPolicy | None = None, name: str = "") -> FlowOutcome:
    """:func:`evolve` with a per-step check that the curve stays in ``region``."""
    return evolve(m, c0, policy, region=region, name=name)


def evolve_or_raise(m, c0, policy=None, region=None, name=""):
    """Like :func:`evolve` but raise ``BudgetExhausted`` on a ``Running`` outcome."""
    out = evolve(m, c0, policy, region, name)
    if out.kind == "Running":
        raise BudgetExhausted(f"no convergence after {out.steps} steps (s={out.s:.4g})")
    return out
