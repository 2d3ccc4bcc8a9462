"""Birkhoff annuli, first-return maps, trapped sets and homoclinic detection.

An annulus ``A(gamma')`` over an oriented closed geodesic carries coordinates
``(s, phi)``: ``s`` is arclength from the start of the geodesic and ``phi``
the angle of the unit vector from the left normal ``nu`` towards ``gamma'``,

    w = cos(phi) nu + sin(phi) T,   phi in [-pi/2, pi/2],

so the boundary circles ``phi = +-pi/2`` are ``+-gamma'`` and the Liouville
area form restricts to ``cos(phi) ds dphi``.

Crossings are detected by the kernels on coordinate lines: every shipped base
geodesic is a parallel, an equator or a meridian, so the signed distance to
the base in the tubular chart is simply the difference of one chart
coordinate. An orbit crosses the interior of ``A(gamma')`` exactly when it
passes the line moving to the left of ``gamma``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline
from scipy.optimize import root

from . import flow, geom
from .errors import NotHyperbolic, PreconditionError

RETURNED = "Returned"
TRAPPED = "TrappedForward"
BUDGET = "Budget"


# --- annuli -------------------------------------------------------------------------------

class BirkhoffAnnulus:
    """The Birkhoff annulus ``A(orientation * gamma')`` over a coordinate-line geodesic."""

    def __init__(self, m, base: flow.ClosedGeodesicRecord, orientation: int = 1, name: str = ""):
        line = base.coordinate_line
        if line is None:
            raise PreconditionError("Birkhoff annuli are built over coordinate-line geodesics")
        self.m = m
        self.base = base
        self.index, self.level = line
        self.j = 1 - self.index
        along = base.z0.dir[self.j]
        self.o = int(orientation) * (1 if along > 0 else -1)
        self.orientation = int(orientation)
        self.length = base.length
        self.start = float(base.z0.base[self.j])
        self.name = name or f"{'+' if orientation > 0 else '-'}{base.name}"
        self.direction = self.o * (1 if self.index == 1 else -1)
        self._build_arclength()

    def _build_arclength(self):
        m, j = self.m, self.j
        per = m.periods[j]
        x = self.start + self.o * np.linspace(0.0, per, 2049)
        p = np.empty((len(x), 2))
        p[:, self.index] = self.level
        p[:, j] = x
        d = geom.metric_arrays(m, p[:, 0], p[:, 1])
        w = np.sqrt(d["g22"] if j == 1 else d["g11"])
        if np.ptp(w) < 1e-13 * np.max(w):
            self._scale = float(w[0])
            self._s_of = None
        else:
            s = cumulative_simpson(w, x=np.abs(x - self.start), initial=0.0)
            self._s_of = CubicSpline(np.abs(x - self.start), s)
            self._x_of = CubicSpline(s, np.abs(x - self.start))

    @property
    def section_row(self):
        per = self.m.periods[self.index]
        return (self.index, self.level, per, self.direction)

    def _s_from_offset(self, dx):
        return self._scale * dx if self._s_of is None else float(self._s_of(dx))

    def _offset_from_s(self, s):
        return s / self._scale if self._s_of is None else float(self._x_of(s))

    def frame(self, p):
        T = np.zeros(2)
        T[self.j] = self.o
        T = geom.normalize(self.m, p, T)
        return T, geom.left_normal(self.m, p, T)

    def point(self, s: float) -> np.ndarray:
        p = np.empty(2)
        p[self.index] = self.level
        p[self.j] = self.start + self.o * self._offset_from_s(s % self.length)
        return p

    def to_tangent(self, s: float, phi: float) -> flow.UnitTangent:
        """Unit vector with annulus coordinates ``(s, phi)``."""
        p = self.point(s)
        T, nu = self.frame(p)
        w = math.cos(phi) * nu + math.sin(phi) * T
        return flow.UnitTangent((float(p[0]), float(p[1])), (float(w[0]), float(w[1])))

    def coords(self, y) -> tuple[float, float]:
        """``(s, phi)`` of a state lying on the base line."""
        p = np.asarray(y[:2], float)
        dx = self.o * (p[self.j] - self.start)
        per = self.m.periods[self.j]
        dx = dx % per
        s = self._s_from_offset(dx) % self.length
        T, nu = self.frame(p)
        w = y[2:4]
        phi = math.atan2(geom.gram(self.m, p, w, T), geom.gram(self.m, p, w, nu))
        return s, phi

    def contains(self, y, tol=1e-9) -> bool:
        d = y[self.index] - self.level
        per = self.m.periods[self.index]
        if per > 0:
            d -= per * round(d / per)
        return abs(d) < tol

    def __repr__(self):
        return f"BirkhoffAnnulus({self.name}, line x{self.index}={self.level:.6g})"


def annuli_pair(m, rec):
    """Both Birkhoff annuli ``A(gamma')`` and ``A(-gamma')``."""
    return [BirkhoffAnnulus(m, rec, 1), BirkhoffAnnulus(m, rec, -1)]


def system_annuli(m, geodesics):
    out = []
    for g in geodesics:
        out += annuli_pair(m, g)
    return out


def _rows(annuli):
    return np.array([a.section_row for a in annuli], float)


# --- first return ----------------------------------------------------------------------------

@dataclass
class ReturnSample:
    start: tuple | None
    hit: tuple | None
    annulus: int
    tau: float
    status: str
    end: np.ndarray = field(repr=False, default=None)
    waist_distance: float | None = None


def _late_distances(m, y0, T, waists, n=64):
    """Lift distances to each waist at ``n`` uniform times of the last quarter."""
    tr = flow.integrate(m, flow.UnitTangent.from_state(y0), T)
    times = np.linspace(0.75 * T, T, n)
    ys = tr.sample(times)
    return [np.array([flow.lift_distance(m, w, y) for y in ys]) for w in waists]


def classify_untouched(m, y0, T, waists):
    """Trapped if the distance to some waist lift decreases over the last quarter."""
    if not waists:
        return BUDGET, None
    best = None
    for d in _late_distances(m, y0, T, waists):
        if np.all(np.diff(d) < 0):
            if best is None or d[-1] < best:
                best = float(d[-1])
    return (TRAPPED, best) if best is not None else (BUDGET, None)


def first_return(m, annuli, z0, T_budget: float, waists=(), start_annulus=None) -> ReturnSample:
    """First transverse crossing of any annulus interior along the orbit of ``z0``.

    ``z0`` is a ``UnitTangent`` or a state vector. Crossings are located to
    about ``1e-12`` in time. Without a crossing the sample is ``TrappedForward``
    if the orbit closes in on one of ``waists`` over the last quarter of the
    budget, else ``Budget``.
    """
    y0 = z0.state() if isinstance(z0, flow.UnitTangent) else np.asarray(z0, float)
    for a in annuli:
        if a.contains(y0):
            s, phi = a.coords(y0)
            if abs(abs(phi) - math.pi / 2) < 1e-12:
                raise PreconditionError("start point lies on an annulus boundary")
    start = None
    if start_annulus is not None:
        start = start_annulus.coords(y0)
    out = flow.run_kernel(m, y0, T_budget, sections=_rows(annuli))
    status, t, y, hit = out[0], out[1], out[2], out[3]
    if status == 1:
        a = annuli[hit]
        return ReturnSample(start, a.coords(y), int(hit), float(t), RETURNED, y)
    st, dist = classify_untouched(m, y0, T_budget, list(waists))
    return ReturnSample(start, None, -1, float(t), st, y, dist)


# --- sampling ---------------------------------------------------------------------------------

def sample_unit_tangents(m, n: int, seed: int) -> np.ndarray:
    """``n`` states uniform for the Liouville measure (area-weighted base, uniform angle).

    Uses a counter-based Philox stream, so the draw depends only on ``seed``.
    """
    rng = np.random.Generator(np.random.Philox(int(seed)))
    (a0, a1), (b0, b1) = m.chart_domain
    U, V = np.meshgrid(np.linspace(a0, a1, 257), np.linspace(b0, b1, 257), indexing="ij")
    d = geom.metric_arrays(m, U, V)
    dmax = 1.05 * float(np.max(np.sqrt(d["g11"] * d["g22"] - d["g12"] ** 2)))
    pts = []
    while len(pts) < n:
        k = 2 * (n - len(pts)) + 16
        u = a0 + (a1 - a0) * rng.random(k)
        v = b0 + (b1 - b0) * rng.random(k)
        acc = rng.random(k) * dmax
        dd = geom.metric_arrays(m, u, v)
        dens = np.sqrt(dd["g11"] * dd["g22"] - dd["g12"] ** 2)
        keep = acc < dens
        pts += list(zip(u[keep], v[keep]))
    pts = np.array(pts[:n])
    ang = 2 * math.pi * rng.random(n)
    out = np.zeros((n, 8))
    for i, (p, a) in enumerate(zip(pts, ang)):
        w = geom.direction(m, p, a)
        out[i, :2] = p
        out[i, 2:4] = w
        out[i, 4] = out[i, 7] = 1.0
    return out


def verify_birkhoff(m, annuli, n_samples: int, ell_bound: float, seed: int, threads: int = 1,
                    T_budget: float | None = None, bins: int = 32) -> dict:
    """Monte-Carlo evidence that ``annuli`` form a Birkhoff section with return bound ``ell_bound``.

    Every sample orbit is followed for ``T_budget`` (default ``2 * ell_bound``);
    the evidence holds iff each one crosses an annulus interior within
    ``ell_bound``. The report is identical for every thread count.
    """
    if n_samples < 1:
        raise PreconditionError("n_samples must be positive")
    T = float(T_budget if T_budget is not None else 2 * ell_bound)
    states = sample_unit_tangents(m, n_samples, seed)
    rows = _rows(annuli)
    res = flow.map_threads(lambda y: flow.run_kernel(m, y, T, sections=rows)[:4], list(states), threads)
    taus = np.array([r[1] if r[0] == 1 else math.inf for r in res])
    returned = np.isfinite(taus)
    hist_max = max(ell_bound, float(np.max(taus[returned])) if returned.any() else ell_bound)
    counts, edges = np.histogram(taus[returned], bins=bins, range=(0.0, hist_max))
    bad = np.nonzero(~returned | (taus > ell_bound))[0]
    return {
        "is_section_evidence": bool(len(bad) == 0),
        "n_samples": int(n_samples),
        "seed": int(seed),
        "ell_bound": float(ell_bound),
        "T_budget": T,
        "n_returned": int(returned.sum()),
        "n_budget": int((~returned).sum()),
        "max_tau": float(np.max(taus[returned])) if returned.any() else None,
        "mean_tau": float(np.mean(taus[returned])) if returned.any() else None,
        "histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
        "counterexamples": [states[i, :4].tolist() for i in bad[:16]],
        "hits_per_annulus": np.bincount([r[3] for r in res if r[0] == 1], minlength=len(annuli)).tolist(),
    }


def histogram_csv(report: dict, path):
    h = report["histogram"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau_lo", "tau_hi", "count"])
        for lo, hi, c in zip(h["edges"][:-1], h["edges"][1:], h["counts"]):
            w.writerow([f"{lo:.10g}", f"{hi:.10g}", c])


# --- trapped sets ---------------------------------------------------------------------------------

@dataclass
class TrapReport:
    samples: int
    trapped_forward: list
    trapped_backward: list
    n_budget_forward: int
    n_budget_backward: int
    witnesses: list
    anomalies: list
    seed: int
    T_budget: float

    @property
    def trapped_fraction(self) -> float:
        return len(self.trapped_forward) / self.samples if self.samples else 0.0

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "seed": self.seed,
            "T_budget": self.T_budget,
            "trapped_forward": self.trapped_forward,
            "trapped_backward": self.trapped_backward,
            "n_trapped_forward": len(self.trapped_forward),
            "n_trapped_backward": len(self.trapped_backward),
            "n_budget_forward": self.n_budget_forward,
            "n_budget_backward": self.n_budget_backward,
            "witnesses": self.witnesses,
            "n_witnesses": len(self.witnesses),
            "anomalies": self.anomalies,
        }


def _classify_batch(m, states, annuli, T, waists, threads):
    rows = _rows(annuli)
    res = flow.map_threads(lambda y: flow.run_kernel(m, y, T, sections=rows, raise_on_pole=False)[:3],
                           list(states), threads)
    trapped, budget = [], 0
    for y0, r in zip(states, res):
        if r[0] == 1:
            continue
        if r[0] == 2:
            budget += 1
            continue
        st, dist = classify_untouched(m, y0, T, waists)
        if st == TRAPPED:
            trapped.append({"state": [float(x) for x in y0[:4]], "late_distance": dist})
        else:
            budget += 1
    return trapped, budget


def _crosses(annuli, ys):
    for a in annuli:
        d = ys[:, a.index] - a.level
        per = a.m.periods[a.index]
        if per > 0:
            d = d - per * np.floor((ys[0, a.index] - a.level) / per + 0.5)
        sgn = np.sign(d)
        if np.any(sgn[1:] * sgn[:-1] < 0):
            return True
    return False


def stable_witnesses(m, waist, annuli, n_per_side=8, T_budget=200.0, seed=0, delta=None):
    """Points of ``W^s(waist)`` followed with the Clairaut-reduced flow.

    Seeds on the local stable manifold are flowed backward to a random
    distance (before the first annulus crossing) and then forward for
    ``T_budget``. Each witness reports its late lift distance to the waist and
    its Clairaut residual against the waist radius (taken over the
    linear-theory seed and the witness start, so it is not zero by construction).
    """
    rng = np.random.Generator(np.random.Philox(int(seed) + 7919))
    radius = geom.rotation_radius(m, waist.z0.base)
    i, level = waist.coordinate_line
    per_i = m.periods[i]
    per_j = m.periods[1 - i]
    out = []
    for side in (1, -1):
        seeds = flow.invariant_manifold_seed(m, waist, side, stable=True, delta=delta, n=n_per_side)
        for z in seeds:
            tb, yb = flow.clairaut_orbit(m, z, -40.0, n_out=800)
            # yb[0] is the seed; walk back until a random fraction of the gap to the next annulus
            off = yb[:, i] - level
            if per_i > 0:
                off = off - per_i * np.round(off / per_i)
            cut = len(yb) - 1
            while cut > 0 and _crosses(annuli, yb[:cut + 1]):
                cut -= 1
            frac = 0.2 + 0.7 * rng.random()
            reach = frac * np.max(np.abs(off[:cut + 1]))
            cut = int(np.argmax(np.abs(off[:cut + 1]) >= reach))
            y = yb[cut].copy()
            y[1 - i] %= per_j
            w0 = flow.UnitTangent.from_state(y)
            tf, yf = flow.clairaut_orbit(m, w0, T_budget, n_out=400)
            crossed = _crosses(annuli, yf)
            late = [flow.lift_distance(m, waist, y) for y in yf[int(0.75 * len(yf)):]]
            out.append({
                "state": [float(x) for x in w0.base + w0.dir],
                "side": side,
                "crossed": bool(crossed),
                "late_distance": float(late[-1]),
                "late_monotone": bool(np.all(np.diff(late) <= 1e-15)),
                # the witness inherits c from its linear-theory seed; report the worse of the two
                "clairaut_residual": float(max(abs(abs(geom.clairaut_constant(m, q.state())) - radius)
                                               for q in (z, w0))),
                "waist": waist.name,
            })
    return out


def trapped_sets(m, system, n_samples: int, T_budget: float, seed: int, threads: int = 1,
                 witnesses_per_side: int = 8) -> TrapReport:
    """Sample SM and classify orbits that never cross the system's annuli.

    Uniform samples land on the measure-zero stable sets with probability
    zero, so on revolution models the report also carries witnesses built on
    the stable manifolds of the ``limit_sub`` waists (see
    :func:`stable_witnesses`). Trapped orbits that do not approach a waist lift
    within ``1e-3`` are listed as anomalies.
    """
    annuli = system_annuli(m, system.all)
    waists = list(system.limit_sub)
    states = sample_unit_tangents(m, n_samples, seed)
    tf, bf = _classify_batch(m, states, annuli, T_budget, waists, threads)
    flipped = np.array([flow.flip_state(y) for y in states])
    tb, bb = _classify_batch(m, flipped, annuli, T_budget, waists, threads)
    wit = []
    if m.is_revolution:
        for w in waists:
            wit += stable_witnesses(m, w, annuli, witnesses_per_side, T_budget, seed)
    anomalies = [t for t in tf + tb if t["late_distance"] is None or t["late_distance"] >= 1e-3]
    anomalies += [w for w in wit if w["crossed"] or w["late_distance"] >= 1e-3]
    return TrapReport(n_samples, tf, tb, bf, bb, wit, anomalies, int(seed), float(T_budget))


# --- area preservation ----------------------------------------------------------------------------

def return_map_area_check(m, annulus: BirkhoffAnnulus, grid=(32, 32), seed: int = 0, targets=None,
                          T_budget: float = 60.0, h: float = 1e-5, phis=None) -> dict:
    """Finite-difference test that the return map preserves ``cos(phi) ds dphi``.

    The map sends ``(s, phi)`` on ``annulus`` to the first hit on ``targets``
    (default: both annuli over the same geodesic). Grid points are cell
    centres, so ``phi = +-pi/2`` is never sampled; passing explicit ``phis``
    on the boundary raises ``PreconditionError``. ``seed`` shifts the grid by a
    random sub-cell offset in ``s``.
    """
    ns, nphi = grid
    if phis is None:
        phis = -math.pi / 2 + (np.arange(nphi) + 0.5) * math.pi / nphi
    phis = np.asarray(phis, float)
    if np.any(np.abs(phis) >= math.pi / 2 - 2 * h):
        raise PreconditionError("grid touches the annulus boundary")
    targets = targets or annuli_pair(m, annulus.base)
    rng = np.random.Generator(np.random.Philox(int(seed)))
    off = rng.random() if seed else 0.5
    ss = (np.arange(ns) + off) * annulus.length / ns
    rows = _rows(targets)

    def psi(s, phi):
        z = annulus.to_tangent(s, phi)
        out = flow.run_kernel(m, z.state(), T_budget, sections=rows)
        if out[0] != 1:
            return None
        a = targets[out[3]]
        return out[3], a.coords(out[2]), a.length

    worst, excluded, defects = 0.0, 0, []
    for s in ss:
        for phi in phis:
            c = psi(s, phi)
            nb = [psi(s + h, phi), psi(s - h, phi), psi(s, phi + h), psi(s, phi - h)]
            if c is None or any(x is None or x[0] != c[0] for x in nb):
                excluded += 1
                continue
            L = c[2]

            def dd(a, b):
                d = a - b
                return d - L * round(d / L)
            ds_s = dd(nb[0][1][0], nb[1][1][0]) / (2 * h)
            dp_s = (nb[0][1][1] - nb[1][1][1]) / (2 * h)
            ds_p = dd(nb[2][1][0], nb[3][1][0]) / (2 * h)
            dp_p = (nb[2][1][1] - nb[3][1][1]) / (2 * h)
            det = ds_s * dp_p - ds_p * dp_s
            defect = abs(abs(det) * math.cos(c[1][1]) / math.cos(phi) - 1.0)
            defects.append(defect)
            worst = max(worst, defect)
    return {"max_defect": worst, "excluded": excluded, "evaluated": len(defects),
            "median_defect": float(np.median(defects)) if defects else None}


# --- homoclinics ------------------------------------------------------------------------------------

@dataclass(frozen=True)
class HomoclinicPoint(flow.UnitTangent):
    """A transverse homoclinic point with its confirmation distances."""

    forward_distance: float = math.nan
    backward_distance: float = math.nan
    theta: float = math.nan


def _line_coords(m, index, level, y):
    j = 1 - index
    p = np.asarray(y[:2], float)
    T = np.zeros(2)
    T[j] = 1.0
    T = geom.normalize(m, p, T)
    nu = geom.left_normal(m, p, T)
    w = y[2:4]
    per = m.periods[j]
    x = p[j] % per if per > 0 else p[j]
    return x, math.atan2(geom.gram(m, p, w, T), geom.gram(m, p, w, nu))


def _default_section_level(m, waist_level, tside):
    if m.is_sphere:
        cands = [t for t in geom.critical_parallels(m) if (t - waist_level) * tside > 1e-6]
        if cands:
            return min(cands, key=lambda t: abs(t - waist_level))
        return waist_level + tside * 0.5 * (waist_level if tside < 0 else math.pi - waist_level)
    return waist_level + tside * 0.5 * m.periods[0 if m.is_sphere else 1] / 2


def detect_homoclinic(m, waist: flow.ClosedGeodesicRecord, side_u=1, side_s=1, T_budget: float = 40.0,
                      n_seeds: int = 64, gap_tol: float = 1e-6, refill: float = 1e-2, delta=None,
                      section_level=None, confirm_tol: float = 1e-3, max_seeds: int = 2048):
    """Transverse intersections of ``W^u`` and ``W^s`` of a hyperbolic waist.

    Both manifolds are grown from a loop of ``n_seeds`` local seeds (see
    :func:`birkhoff_lab.flow.manifold_point`) up to their first crossing,
    moving towards the waist, of the parallel ``section_level`` on the
    ``side_s`` side (default: the nearest profile critical parallel). Seeds are
    refilled wherever consecutive trace points are more than ``refill`` apart,
    which turns each trace into a polyline in the ``(theta, phi)`` cylinder.
    Crossings of the two polylines are refined by Newton on the seed
    parameters and confirmed by re-integration: the orbit must come within
    ``confirm_tol`` of the waist lift both forward and backward within
    ``T_budget``. Traces that coincide to ``gap_tol`` (the saddle connections of
    an exact surface of revolution) give an empty list.
    """
    if waist.type is not flow.OrbitType.HYPERBOLIC:
        raise NotHyperbolic(f"{waist.name!r} is {waist.type.value}")
    line = waist.coordinate_line
    if line is None:
        raise PreconditionError("homoclinic detection is implemented for coordinate-line waists")
    i, level = line
    j = 1 - i
    o = 1 if waist.z0.dir[j] > 0 else -1
    # chart direction of the left normal
    nu_dir = -o if i == 0 else o
    tside_s = nu_dir * flow._side_sign(side_s)
    if delta is None:
        delta = 1e-4 * m.inj_radius_estimate
    if section_level is None:
        section_level = _default_section_level(m, level, tside_s)
    inward = 1 if level > section_level else -1
    row = np.array([[i, section_level, m.periods[i], inward]], float)
    ell = waist.length
    per = m.periods[j]

    def hit(xi, stable):
        side = side_s if stable else side_u
        z = flow.manifold_point(m, waist, stable, side, xi % ell, delta)
        out = flow.run_kernel(m, z.state(), -T_budget if stable else T_budget, sections=row,
                              raise_on_pole=False)
        return out[2] if out[0] == 1 else None

    def coords(y):
        return np.array(_line_coords(m, i, section_level, y))

    def wrap(d):
        return (d + per / 2) % per - per / 2

    def trace(stable):
        pts = {x: hit(x, stable) for x in np.linspace(0.0, ell, n_seeds, endpoint=False)}
        frontier = True
        while frontier and len(pts) < max_seeds:
            frontier = False
            keys = sorted(pts)
            for a, b in zip(keys, keys[1:] + [keys[0] + ell]):
                ya, yb = pts[a], pts[b % ell]
                if ya is None or yb is None or b - a < 1e-9 * ell:
                    continue
                ca, cb = coords(ya), coords(yb)
                if math.hypot(wrap(ca[0] - cb[0]), ca[1] - cb[1]) > refill and len(pts) < max_seeds:
                    pts[0.5 * (a + b) % ell] = hit(0.5 * (a + b), stable)
                    frontier = True
        keys = sorted(pts)
        xs = np.array(keys + [keys[0] + ell])
        cs = np.array([coords(pts[k]) if pts[k] is not None else (np.nan, np.nan) for k in keys])
        return xs, np.vstack([cs, cs[:1]])

    xu, cu = trace(False)
    xs_, cs_ = trace(True)
    ok_u, ok_s = np.isfinite(cu[:, 0]), np.isfinite(cs_[:, 0])
    if ok_u.sum() < 4 or ok_s.sum() < 4:
        return []
    # saddle connection: every unstable trace point lies on the stable trace
    su, ss = cu[ok_u], cs_[ok_s]
    dist = np.min(np.hypot(wrap(su[:, None, 0] - ss[None, :, 0]), su[:, None, 1] - ss[None, :, 1]), axis=1)
    if np.max(dist) < max(gap_tol, 0.0) or _polyline_gap(su, ss, wrap) < gap_tol:
        return []

    cands = []
    for k in range(len(xu) - 1):
        p0, p1 = cu[k], cu[k + 1]
        if not (np.all(np.isfinite(p0)) and np.all(np.isfinite(p1))):
            continue
        dp = np.array([wrap(p1[0] - p0[0]), p1[1] - p0[1]])
        if np.hypot(*dp) > 4 * refill:
            continue
        q0 = cs_[:-1]
        q1 = cs_[1:]
        good = np.isfinite(q0[:, 0]) & np.isfinite(q1[:, 0])
        dq = np.column_stack([wrap(q1[:, 0] - q0[:, 0]), q1[:, 1] - q0[:, 1]])
        good &= np.hypot(dq[:, 0], dq[:, 1]) <= 4 * refill
        r = np.column_stack([wrap(q0[:, 0] - p0[0]), q0[:, 1] - p0[1]])
        den = dp[0] * dq[:, 1] - dp[1] * dq[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            a = (r[:, 0] * dq[:, 1] - r[:, 1] * dq[:, 0]) / den
            b = (r[:, 0] * dp[1] - r[:, 1] * dp[0]) / den
            sine = np.abs(den) / (np.hypot(*dp) * np.hypot(dq[:, 0], dq[:, 1]))
        sel = good & (a >= 0) & (a < 1) & (b >= 0) & (b < 1) & (sine > 1e-6)
        for l in np.nonzero(sel)[0]:
            cands.append((xu[k] + a[l] * (xu[k + 1] - xu[k]), xs_[l] + b[l] * (xs_[l + 1] - xs_[l])))

    def F(x):
        ya, yb = hit(x[0], False), hit(x[1], True)
        if ya is None or yb is None:
            return np.array([1.0, 1.0])
        ca, cb = coords(ya), coords(yb)
        return np.array([wrap(ca[0] - cb[0]), ca[1] - cb[1]])

    found = []
    for x0 in cands:
        sol = root(F, np.array(x0), method="hybr", options={"xtol": 1e-13})
        if np.max(np.abs(F(sol.x))) > 1e-9:
            continue
        y = hit(sol.x[0], False)
        th = coords(y)[0]
        if any(abs(wrap(th - p.theta)) < 1e-7 for p in found):
            continue
        dist_f = _min_lift_distance(m, waist, y, T_budget)
        dist_b = _min_lift_distance(m, waist, y, -T_budget)
        if dist_f < confirm_tol and dist_b < confirm_tol:
            z = flow.UnitTangent.from_state(y)
            found.append(HomoclinicPoint(z.base, z.dir, dist_f, dist_b, float(th)))
    found.sort(key=lambda p: p.theta)
    return found


def _polyline_gap(a, b, wrap):
    """Largest distance from a point of ``a`` to the polyline through ``b``."""
    worst = 0.0
    q0, q1 = b[:-1], b[1:]
    d = np.column_stack([wrap(q1[:, 0] - q0[:, 0]), q1[:, 1] - q0[:, 1]])
    dd = np.maximum(np.sum(d * d, axis=1), 1e-300)
    for p in a:
        r = np.column_stack([wrap(p[0] - q0[:, 0]), p[1] - q0[:, 1]])
        t = np.clip(np.sum(r * d, axis=1) / dd, 0.0, 1.0)
        e = r - t[:, None] * d
        worst = max(worst, float(np.min(np.hypot(e[:, 0], e[:, 1]))))
    return worst


def _min_lift_distance(m, waist, y, T, n=2000):
    out = flow.run_kernel(m, y, T, store=True, raise_on_pole=False)
    tr = flow.Trajectory(m, out[5], out[6], out[1])
    ts = np.linspace(0.0, out[1], n)
    return float(min(flow.lift_distance(m, waist, tr(t)) for t in ts))


def report_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
