"""Searches for closed geodesic configurations.

Combines curve shortening (:mod:`csf`) with the orbit tools of :mod:`flow`
to produce homotopy-class minimizers, minmax geodesics between waists, nested
alternating chains in disks, the 2-chain of a torus, and complete systems.

The disk and annulus searches work on surfaces whose relevant geodesics are
parallels of a surface of revolution (or coordinate lines of a torus); the
sweepouts are families of parallels, i.e. the tubular-coordinate annulus
chart is the profile coordinate itself.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import csf, flow, geom
from .errors import (BudgetExhausted, FlowCollapsed, IntersectionPatternFailed, PreconditionError,
                     SweepoutDegenerated, WrongGenus)

WAIST = "Waist"
CONJUGATE = "ConjugatePointType"


@dataclass
class ConfigurationChain:
    geodesics: list
    intersections: np.ndarray
    roles: list
    tag: str = "General"   # "Chain2G" for the lemma chain, "Nested" for the disk chain
    region: object = None

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "geodesics": [g.to_dict() for g in self.geodesics],
            "roles": list(self.roles),
            "intersection_matrix": np.asarray(self.intersections, int).tolist(),
        }

    def check_nested(self) -> bool:
        """Alternation (waist first), even count, pairwise disjointness."""
        if len(self.geodesics) % 2:
            return False
        for i, r in enumerate(self.roles):
            if r != (WAIST if i % 2 == 0 else CONJUGATE):
                return False
        return not np.any(np.asarray(self.intersections))

    def check_chain(self) -> bool:
        M = np.asarray(self.intersections)
        n = len(M)
        for i in range(n):
            for j in range(n):
                want = 1 if abs(i - j) == 1 else 0
                if M[i, j] != want:
                    return False
        return True


@dataclass
class CompleteSystem:
    all: list
    limit_sub: list
    return_bound: object = "unverified"
    chain: ConfigurationChain | None = None
    extras: list = field(default_factory=list)

    def to_dict(self) -> dict:
        names = [g.name for g in self.limit_sub]
        return {
            "geodesics": [g.to_dict() for g in self.all],
            "limit_sub": names,
            "extras": [g.name for g in self.extras],
            "return_bound": self.return_bound,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


# --- single geodesics ---------------------------------------------------------------------

def _run(m, c0, policy, region=None, name=""):
    out = csf.evolve(m, c0, policy, region=region, name=name)
    if out.kind == "Collapsed":
        raise FlowCollapsed(f"seed curve collapsed at s={out.s:.4g}")
    if out.kind == "Running":
        raise BudgetExhausted(f"no convergence after {out.steps} steps")
    return out.record


def class_minimizer(m, seed_class=None, curve=None, policy=None, region=None, name=""):
    """Shortest closed geodesic in a free homotopy class, found by curve shortening.

    ``seed_class`` is an integer pair on torus models; alternatively an explicit
    seed ``curve`` can be given. Raises ``FlowCollapsed`` when the seed turns
    out to be contractible.
    """
    policy = policy or csf.StepPolicy(n=64)
    if curve is None:
        if seed_class is None:
            raise PreconditionError("need a homotopy class or a seed curve")
        p, q = seed_class
        if (p, q) == (0, 0):
            raise PreconditionError("class (0, 0) is contractible")
        amp = 0.05 * min(m.periods)
        curve = csf.class_loop(m, p, q, n=policy.n, amplitude=amp,
                               base=(0.1 * m.periods[0], 0.37 * m.periods[1]))
    rec = _run(m, curve, policy, region, name or (f"class{tuple(seed_class)}" if seed_class else "minimizer"))
    return rec


def parallel_record(m, t0, name="", orientation=1):
    """Record of the parallel ``t = t0`` on a sphere of revolution (must be a geodesic)."""
    p = (t0, 0.0)
    z = flow.UnitTangent.normalized(m, p, (0.0, float(orientation)))
    L = 2 * math.pi * geom.rotation_radius(m, p)
    return flow.make_record(m, z, L, name=name)


def _level_curve(m, level, n, amp=0.0, mode=3):
    return csf.coordinate_loop(m, 0, level, amplitude=amp, mode=mode, n=n)


def _profile_check(m):
    if m.kind is not geom.SurfaceKind.SPHERE_OF_REVOLUTION:
        raise WrongGenus("parallel-family searches need a sphere of revolution")


def _is_parallel_geodesic(m, t0, tol=1e-7):
    r1 = geom._profile(m, np.array([t0]))[1][0]
    return abs(r1) < tol


def _sweep_max(m, a, b, n_curves, policy, dwell, region, max_iter=12, name=""):
    """Minmax over the family of parallels between levels ``a`` and ``b``.

    Each member is pushed by curve shortening for time ``dwell`` inside
    ``region``; the longest pushed curve brackets a refined family. Stops when
    the longest curve lies in the target funnel, then polishes it.
    """
    lo, hi = a, b
    eps = policy.eps_target
    best = None
    for it in range(max_iter):
        levels = np.linspace(lo, hi, n_curves)
        pushed = []
        for lev in levels:
            c0 = _level_curve(m, lev, policy.n)
            pol = csf.StepPolicy(**{**policy.__dict__, "s_max": dwell, "polish": False, "trace": False})
            out = csf.evolve(m, c0, pol, region=region)
            k, _, L = csf.curvature_profile(m, out.curve)
            pushed.append((L, float(np.max(np.abs(k))), out.curve))
        Ls = np.array([p[0] for p in pushed])
        j = int(np.argmax(Ls))
        if it == 0 and j in (0, n_curves - 1):
            raise SweepoutDegenerated(
                f"sweepout maximum sits at an endpoint (levels {a:.4g}..{b:.4g}); no interior candidate")
        best = pushed[j]
        if best[1] < eps:
            break
        j = min(max(j, 1), n_curves - 2)
        lo, hi = levels[j - 1], levels[j + 1]
    else:
        raise BudgetExhausted("minmax refinement did not reach the funnel")
    level = float(np.mean(best[2].points[:, 0]))
    z0 = flow.UnitTangent.normalized(m, (level, 0.0), (0.0, 1.0))
    z0, ell = flow.polish_closed(m, z0, best[0])
    return flow.make_record(m, z0, ell, name=name)


def minmax_geodesic(m, w1, w2, sweepout=None, n_curves=33, policy=None, dwell=0.02, name="minmax"):
    """Minmax closed geodesic in the annulus between the parallels ``w1`` and ``w2``.

    The default sweepout is the 33-member family of parallels interpolating
    linearly between the two boundary levels. Raises ``SweepoutDegenerated``
    when the family has no interior maximum.
    """
    _profile_check(m)
    l1 = w1.coordinate_line
    l2 = w2.coordinate_line
    if l1 is None or l2 is None or l1[0] != 0 or l2[0] != 0:
        raise PreconditionError("minmax sweepouts are built between parallels")
    a, b = sorted([l1[1], l2[1]])
    if b - a < 1e-9:
        raise PreconditionError("w1 and w2 coincide")
    if sweepout is not None:
        n_curves = len(sweepout)
    policy = policy or csf.StepPolicy(n=64)
    region = csf.RegionSpec(((a - 1e-12, b + 1e-12), (None, None)), "annulus")
    rec = _sweep_max(m, a, b, n_curves, policy, dwell, region, name=name)
    if rec.length <= max(w1.length, w2.length):
        raise SweepoutDegenerated("minmax value does not exceed the boundary lengths")
    return rec


# --- nested chains ------------------------------------------------------------------------------

def _disk_side(disk: csf.RegionSpec):
    lo, hi = disk.bounds[0]
    if (lo is None) == (hi is None):
        raise PreconditionError("a disk on a sphere of revolution is a polar cap: one finite bound")
    return (lo, 1) if lo is not None else (hi, -1)


def _pole_level(m, sign):
    """Profile level near the pole on the ``sign`` side where the radius is tiny."""
    return math.pi - 0.02 if sign > 0 else 0.02


def nested_chain(m, disk: csf.RegionSpec, policy=None, dwell=0.02, max_depth=8):
    """Alternating chain of waists and conjugate-point geodesics inside a polar cap.

    ``disk`` bounds the profile coordinate on one side (``t > t_b`` or
    ``t < t_b``), its boundary parallel must be a geodesic. The outermost waist
    is found by flowing a curve hugging the boundary inward; then the minmax
    over parallels between that waist and the pole gives the next
    (conjugate-point) geodesic, and so on until a hugging curve collapses.
    An empty chain means no closed geodesic was found at resolution.
    """
    _profile_check(m)
    tb, sign = _disk_side(disk)
    if not _is_parallel_geodesic(m, tb):
        raise PreconditionError(f"disk boundary t={tb:.6g} is not a closed geodesic")
    policy = policy or csf.StepPolicy(n=64)
    floor = 1e-2 * m.inj_radius_estimate
    geos, roles = [], []
    outer = tb
    while len(geos) < 2 * max_depth:
        region = csf.RegionSpec(((outer, None) if sign > 0 else (None, outer), (None, None)), "disk")
        hug = _level_curve(m, outer + sign * 0.03, policy.n, amp=0.005)
        out = csf.evolve(m, hug, policy, region=region, name=f"waist{len(geos) // 2 + 1}")
        if out.kind == "Collapsed":
            break
        if out.kind == "Running":
            raise BudgetExhausted("waist search did not converge")
        w = out.record
        if w.length < floor:
            break
        geos.append(w)
        roles.append(WAIST)
        wl = w.coordinate_line[1]
        pole = _pole_level(m, sign)
        a, b = sorted([wl, pole])
        # only the waist side of the sweep is a geodesic boundary
        reg2 = csf.RegionSpec(((wl - 1e-12, None) if sign > 0 else (None, wl + 1e-12), (None, None)),
                              "inner disk")
        try:
            c = _sweep_max(m, a, b, 33, policy, dwell, reg2, name=f"conj{len(geos) // 2 + 1}")
        except SweepoutDegenerated:
            break
        geos.append(c)
        roles.append(CONJUGATE if c.has_conjugate_points else WAIST)
        outer = c.coordinate_line[1]
    n = len(geos)
    chain = ConfigurationChain(geos, np.zeros((n, n), int), roles, "Nested", disk)
    return chain


# --- torus 2-chain ------------------------------------------------------------------------

def count_intersections(m, a: csf.DiscreteCurve, b: csf.DiscreteCurve, min_angle=1e-3):
    """Transverse intersection count of two closed polygons on a torus.

    One period of ``a`` is tested against every lattice translate of one
    period of ``b`` that can reach it. Returns ``(count, transverse)``.
    """
    P0, P1 = m.periods
    A = a.closed()
    B = b.closed()
    lo = A.min(axis=0) - B.max(axis=0)
    hi = A.max(axis=0) - B.min(axis=0)
    count, transverse = 0, True
    for i in range(int(math.floor(lo[0] / P0)) - 1, int(math.ceil(hi[0] / P0)) + 2):
        for j in range(int(math.floor(lo[1] / P1)) - 1, int(math.ceil(hi[1] / P1)) + 2):
            Bt = B + np.array([i * P0, j * P1])
            hit = csf._segments_cross(A[:-1, None, :], A[1:, None, :], Bt[None, :-1, :], Bt[None, 1:, :])
            for ia, ib in zip(*np.nonzero(hit)):
                count += 1
                da = A[ia + 1] - A[ia]
                db = Bt[ib + 1] - Bt[ib]
                s = abs(da[0] * db[1] - da[1] * db[0]) / (np.hypot(*da) * np.hypot(*db))
                transverse &= s > min_angle
    return count, transverse


def genus_chain(m, policy=None):
    """The 2-chain ``(gamma_1, gamma_2)`` of class (1,0) and (0,1) minimizers on a torus."""
    if m.is_sphere:
        raise WrongGenus("the 2G-chain needs a torus model")
    g1 = class_minimizer(m, (1, 0), policy=policy, name="gamma1")
    g2 = class_minimizer(m, (0, 1), policy=policy, name="gamma2")
    n, transverse = count_intersections(m, csf.record_curve(g1), csf.record_curve(g2))
    if n != 1 or not transverse:
        raise IntersectionPatternFailed(f"class minimizers meet {n} times (transverse={transverse})")
    M = np.array([[0, 1], [1, 0]])
    roles = [WAIST if g.is_waist else CONJUGATE for g in (g1, g2)]
    return ConfigurationChain([g1, g2], M, roles, "Chain2G")


def _torus_complement(m, chain):
    """Open lifted rectangle cut out by a (1,0) coordinate loop and a (0,1) coordinate loop."""
    lines = [g.coordinate_line for g in chain.geodesics]
    u0 = v0 = None
    for g, ln in zip(chain.geodesics, lines):
        if ln is None:
            continue
        if ln[0] == 0:
            u0 = ln[1]
        else:
            v0 = ln[1]
    if u0 is None or v0 is None:
        # non-coordinate minimizers (never for shipped models): fall back to their base point
        u0 = chain.geodesics[1].z0.base[0]
        v0 = chain.geodesics[0].z0.base[1]
    P0, P1 = m.periods
    return csf.RegionSpec(((u0, u0 + P0), (v0, v0 + P1)), "complement disk")


def _search_torus_disk(m, region, policy):
    (u0, u1), (v0, v1) = region.bounds
    cu, cv = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
    ru, rv = 0.45 * (u1 - u0), 0.45 * (v1 - v0)
    th = np.linspace(0, 2 * math.pi, policy.n, endpoint=False)
    # rounded rectangle hugging the boundary (superellipse of exponent 8)
    e = 0.25
    x = cu + ru * np.sign(np.cos(th)) * np.abs(np.cos(th)) ** e
    y = cv + rv * np.sign(np.sin(th)) * np.abs(np.sin(th)) ** e
    c0 = csf.DiscreteCurve(np.column_stack([x, y]))
    out = csf.evolve(m, c0, policy, region=region, name="interior")
    return out


def assemble_complete_system(m, chain: ConfigurationChain, extra_disks="auto", policy=None):
    """Chain plus the nested chains of its complementary disks.

    ``limit_sub`` collects the hyperbolic contractible waists among the extras.
    """
    policy = policy or csf.StepPolicy(n=64)
    extras = []
    if m.is_sphere:
        levels = sorted(g.coordinate_line[1] for g in chain.geodesics)
        if len(levels) != 1:
            raise PreconditionError("sphere systems are assembled from a single separating parallel")
        t = levels[0]
        disks = [csf.RegionSpec(((None, t), (None, None)), "north cap"),
                 csf.RegionSpec(((t, None), (None, None)), "south cap")]
        if extra_disks != "auto":
            disks = list(extra_disks)
        for d in disks:
            extras += nested_chain(m, d, policy).geodesics
    else:
        region = _torus_complement(m, chain) if extra_disks == "auto" else extra_disks[0]
        out = _search_torus_disk(m, region, policy)
        if out.kind == "ConvergedGeodesic":
            extras.append(out.record)
        elif out.kind == "Running":
            raise BudgetExhausted("complement search did not terminate")
    allg = list(chain.geodesics) + extras
    limit = [g for g in extras if g.type is flow.OrbitType.HYPERBOLIC and g.contractible and g.is_waist]
    return CompleteSystem(allg, limit, "unverified", chain, extras)


def separating_chain(m, t0, name="gamma1"):
    """Single-parallel chain on a sphere of revolution (the system's seed geodesic)."""
    _profile_check(m)
    if not _is_parallel_geodesic(m, t0):
        raise PreconditionError(f"t={t0:.6g} is not a geodesic parallel")
    g = parallel_record(m, t0, name)
    return ConfigurationChain([g], np.zeros((1, 1), int), [WAIST if g.is_waist else CONJUGATE], "General")


# --- property surrogates -------------------------------------------------------------------

def bangert_check(m, rec, offset=1e-2, dwell=0.5, n=64):
    """Curve shortening from push-offs on both sides of ``rec`` reaches shorter curves.

    Returns ``{side: (shortest length reached, ok)}``.
    """
    S = rec.samples
    idx = np.linspace(0, len(S) - 1, n, endpoint=False).astype(int)
    res = {}
    for side in (1, -1):
        P = np.array([S[i, :2] + side * offset * geom.left_normal(m, S[i, :2], S[i, 2:4]) for i in idx])
        c0 = csf.DiscreteCurve(P, tuple(S[-1, :2] - S[0, :2]))
        pol = csf.StepPolicy(n=n, s_max=dwell, polish=False, trace=False)
        out = csf.evolve(m, c0, pol)
        Lmin = min(out.lengths)
        res["left" if side > 0 else "right"] = (Lmin, Lmin < rec.length)
    return res
