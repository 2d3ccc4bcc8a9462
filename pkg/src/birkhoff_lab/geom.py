"""Parametrized closed orientable surfaces.

Three families are supported, each with closed-form metric coefficients:

* ``SphereOfRevolution`` -- chart ``(t, theta)`` with ``t`` in ``(0, pi)`` the
  profile parameter and ``theta`` the azimuth. The embedded profile is
  ``r(t) = sum_k p_k sin(k t)``, ``z(t) = sum_k q_k cos(k t)``, optionally
  multiplied by the conformal factor ``exp(2 h)`` with
  ``h = bump * sin t cos^2 t cos theta`` (a smooth symmetry-breaking bump
  that leaves the parallel ``t = pi/2`` a geodesic).
* ``TorusOfRevolution`` -- chart ``(u, v)``, both ``2 pi`` periodic,
  ``g = (R + r cos v)^2 du^2 + r^2 dv^2``.
* ``ConformalTorus`` -- chart ``(u, v)`` on the unit square torus with
  ``g = exp(2 f) (du^2 + dv^2)``, ``f`` a finite Fourier sum.

Metric coefficients are always diagonal in these charts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from .errors import PointOutsideChart, WrongGenus

POLAR_CAP = 1e-6


class SurfaceKind(str, Enum):
    SPHERE_OF_REVOLUTION = "SphereOfRevolution"
    TORUS_OF_REVOLUTION = "TorusOfRevolution"
    CONFORMAL_TORUS = "ConformalTorus"


_KIND_CODE = {
    SurfaceKind.SPHERE_OF_REVOLUTION: 0,
    SurfaceKind.TORUS_OF_REVOLUTION: 1,
    SurfaceKind.CONFORMAL_TORUS: 2,
}


class MetricSample(NamedTuple):
    g: np.ndarray            # (2, 2) first fundamental form
    christoffel: np.ndarray  # (2, 2, 2), christoffel[k, i, j] = Gamma^k_ij
    K: float


@dataclass(frozen=True, eq=False)
class SurfaceMetric:
    """Immutable description of a parametrized closed surface.

    Use the factory functions (:func:`round_sphere`, :func:`torus_of_revolution`,
    ...) rather than constructing this directly.
    """

    kind: SurfaceKind
    params: dict
    name: str = ""
    inj_radius_estimate: float = field(default=float("nan"))

    # --- chart description -------------------------------------------------
    @property
    def periods(self) -> tuple[float, float]:
        if self.kind is SurfaceKind.SPHERE_OF_REVOLUTION:
            return (0.0, 2 * math.pi)
        if self.kind is SurfaceKind.TORUS_OF_REVOLUTION:
            return (2 * math.pi, 2 * math.pi)
        return (1.0, 1.0)

    @property
    def chart_domain(self) -> tuple[tuple[float, float], tuple[float, float]]:
        if self.kind is SurfaceKind.SPHERE_OF_REVOLUTION:
            return ((POLAR_CAP, math.pi - POLAR_CAP), (0.0, 2 * math.pi))
        p0, p1 = self.periods
        return ((0.0, p0), (0.0, p1))

    @property
    def is_sphere(self) -> bool:
        return self.kind is SurfaceKind.SPHERE_OF_REVOLUTION

    @property
    def genus(self) -> int:
        return 0 if self.is_sphere else 1

    @property
    def euler_characteristic(self) -> int:
        return 2 - 2 * self.genus

    @property
    def is_revolution(self) -> bool:
        """True when the metric is invariant under the second-coordinate rotation."""
        if self.kind is SurfaceKind.SPHERE_OF_REVOLUTION:
            return self.params.get("bump", 0.0) == 0.0
        return self.kind is SurfaceKind.TORUS_OF_REVOLUTION

    # --- kernel interface ----------------------------------------------------
    def kernel_params(self) -> tuple[int, np.ndarray]:
        """Packed ``(kind_code, params)`` understood by the integration kernels."""
        code = _KIND_CODE[self.kind]
        if self.kind is SurfaceKind.SPHERE_OF_REVOLUTION:
            p = list(self.params["r_sin"])
            q = list(self.params["z_cos"])
            par = [len(p), len(q), self.params.get("bump", 0.0)] + p + q
        elif self.kind is SurfaceKind.TORUS_OF_REVOLUTION:
            par = [self.params["R"], self.params["r"]]
        else:
            modes = self.params["modes"]
            par = [len(modes)]
            for m, n, c, s in modes:
                par += [m, n, c, s]
            if not modes:
                par += [0.0, 0.0, 0.0, 0.0]
        return code, np.ascontiguousarray(par, dtype=float)

    def __repr__(self) -> str:
        return f"SurfaceMetric({self.name or self.kind.value}, {self.params})"


# --- vectorized metric evaluation ----------------------------------------------

def _profile(m: SurfaceMetric, t):
    p = m.params["r_sin"]
    q = m.params["z_cos"]
    t = np.asarray(t, dtype=float)
    r = np.zeros_like(t); r1 = np.zeros_like(t); r2 = np.zeros_like(t)
    z1 = np.zeros_like(t); z2 = np.zeros_like(t)
    for k, c in enumerate(p, start=1):
        r = r + c * np.sin(k * t)
        r1 = r1 + c * k * np.cos(k * t)
        r2 = r2 - c * k * k * np.sin(k * t)
    for k, c in enumerate(q, start=1):
        z1 = z1 - c * k * np.sin(k * t)
        z2 = z2 - c * k * k * np.cos(k * t)
    return r, r1, r2, z1, z2


def profile_radius(m: SurfaceMetric, t):
    """Distance to the rotation axis, ``r(t)`` (unperturbed profile)."""
    return _profile(m, t)[0]


def metric_arrays(m: SurfaceMetric, u, v) -> dict:
    """Vectorized metric data at chart points ``(u, v)`` (no chart checks).

    Returns a dict with keys ``g11, g12, g22, G`` (``G[k][i][j]`` nested lists of
    arrays) and ``K``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    zero = np.zeros(np.broadcast(u, v).shape)
    if m.kind is SurfaceKind.SPHERE_OF_REVOLUTION:
        r, r1, r2, z1, z2 = _profile(m, u)
        a2 = r1 ** 2 + z1 ** 2
        a = np.sqrt(a2)
        a1 = (r1 * r2 + z1 * z2) / a
        K0 = -(r2 / a - r1 * a1 / a2) / (a * r)
        E, Gm = a2 + zero, r ** 2 + zero
        g111, g122, g212 = a1 / a + zero, -r * r1 / E, r1 / r + zero
        amp = m.params.get("bump", 0.0)
        st, ct, cth, sth = np.sin(u), np.cos(u), np.cos(v), np.sin(v)
        h = amp * st * ct ** 2 * cth
        ht = amp * cth * ct * (ct ** 2 - 2 * st ** 2)
        htt = amp * cth * st * (2 * st ** 2 - 7 * ct ** 2)
        hth = -amp * st * ct ** 2 * sth
        e2h = np.exp(2 * h)
        lap = ((r1 / a - r * a1 / a2) * ht + (r / a) * htt) / (a * r) - h / Gm
        G = [[[g111 + ht, hth], [hth, g122 - Gm / E * ht]],
             [[-E / Gm * hth, g212 + ht], [g212 + ht, hth + zero]]]
        return dict(g11=e2h * E, g12=zero, g22=e2h * Gm, G=G, K=(K0 - lap) / e2h)
    if m.kind is SurfaceKind.TORUS_OF_REVOLUTION:
        R, rr = m.params["R"], m.params["r"]
        rho = R + rr * np.cos(v) + zero
        rv = -rr * np.sin(v) + zero
        G = [[[zero, rv / rho], [rv / rho, zero]],
             [[-rho * rv / rr ** 2, zero], [zero, zero]]]
        return dict(g11=rho ** 2, g12=zero, g22=rr ** 2 + zero, G=G,
                    K=np.cos(v) / (rr * rho) + zero)
    f = zero.copy(); fu = zero.copy(); fv = zero.copy(); lap = zero.copy()
    tp = 2 * math.pi
    for mm, nn, cc, ss in m.params["modes"]:
        ph = tp * (mm * u + nn * v)
        w = cc * np.cos(ph) + ss * np.sin(ph)
        d = tp * (-cc * np.sin(ph) + ss * np.cos(ph))
        f = f + w
        fu = fu + mm * d
        fv = fv + nn * d
        lap = lap - tp * tp * (mm * mm + nn * nn) * w
    e2f = np.exp(2 * f)
    G = [[[fu, fv], [fv, -fu]], [[-fv, fu], [fu, fv]]]
    return dict(g11=e2f, g12=zero, g22=e2f, G=G, K=-lap / e2f)


# --- chart handling ---------------------------------------------------------------

def reduce_point(m: SurfaceMetric, p: Sequence[float]) -> tuple[float, float]:
    """Reduce chart coordinates into the fundamental domain.

    Idempotent: ``reduce_point(m, reduce_point(m, p)) == reduce_point(m, p)``.
    """
    out = []
    for x, per in zip(p, m.periods):
        x = float(x)
        if per > 0.0:
            x = x % per
            if x >= per:
                x -= per
        out.append(x)
    if m.is_sphere:
        lo, hi = m.chart_domain[0]
        if not (lo <= out[0] <= hi):
            raise PointOutsideChart(f"t={out[0]!r} lies in an excluded polar cap")
    return out[0], out[1]


def metric_at(m: SurfaceMetric, p: Sequence[float]) -> MetricSample:
    """First fundamental form, Christoffel symbols and Gaussian curvature at ``p``."""
    u, v = reduce_point(m, p)
    d = metric_arrays(m, u, v)
    g = np.array([[d["g11"], d["g12"]], [d["g12"], d["g22"]]], dtype=float)
    G = np.array(d["G"], dtype=float)
    return MetricSample(g, G, float(d["K"]))


def gram(m: SurfaceMetric, p, w1, w2=None) -> float:
    """Metric inner product ``g_p(w1, w2)``."""
    d = metric_arrays(m, p[0], p[1])
    w2 = w1 if w2 is None else w2
    return float(d["g11"] * w1[0] * w2[0] + d["g12"] * (w1[0] * w2[1] + w1[1] * w2[0])
                 + d["g22"] * w1[1] * w2[1])


def normalize(m: SurfaceMetric, p, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return w / math.sqrt(gram(m, p, w))


def left_normal(m: SurfaceMetric, p, w) -> np.ndarray:
    """Rotate ``w`` by +90 degrees in the metric (positively oriented normal)."""
    d = metric_arrays(m, p[0], p[1])
    g11, g12, g22 = float(d["g11"]), float(d["g12"]), float(d["g22"])
    s = math.sqrt(g11 * g22 - g12 * g12)
    return np.array([-(g12 * w[0] + g22 * w[1]) / s, (g11 * w[0] + g12 * w[1]) / s])


def orthonormal_frame(m: SurfaceMetric, p) -> tuple[np.ndarray, np.ndarray]:
    """Positively oriented orthonormal frame ``(e1, e2)`` with ``e1`` along the first axis."""
    e1 = normalize(m, p, [1.0, 0.0])
    return e1, left_normal(m, p, e1)


def direction(m: SurfaceMetric, p, angle: float) -> np.ndarray:
    """Unit vector at ``p`` making ``angle`` with the first coordinate axis."""
    e1, e2 = orthonormal_frame(m, p)
    return math.cos(angle) * e1 + math.sin(angle) * e2


# --- quadrature ------------------------------------------------------------------

def _grid(m: SurfaceMetric, n0: int, n1: int):
    if m.is_sphere:
        x, w = np.polynomial.legendre.leggauss(n0)
        t = 0.5 * math.pi * (x + 1.0)
        wt = 0.5 * math.pi * w
        th = np.arange(n1) * (2 * math.pi / n1)
        T, TH = np.meshgrid(t, th, indexing="ij")
        W = np.outer(wt, np.full(n1, 2 * math.pi / n1))
        return T, TH, W
    p0, p1 = m.periods
    u = np.arange(n0) * (p0 / n0)
    v = np.arange(n1) * (p1 / n1)
    U, V = np.meshgrid(u, v, indexing="ij")
    return U, V, np.full(U.shape, p0 * p1 / (n0 * n1))


def total_area(m: SurfaceMetric, n: int = 256) -> float:
    """Riemannian area by Gauss-Legendre (profile) / trapezoid (periodic) quadrature."""
    U, V, W = _grid(m, n, n)
    d = metric_arrays(m, U, V)
    return float(np.sum(W * np.sqrt(d["g11"] * d["g22"] - d["g12"] ** 2)))


def total_curvature(m: SurfaceMetric, n: int = 256) -> float:
    """``integral K dA``; equals ``2 pi chi`` by Gauss-Bonnet."""
    U, V, W = _grid(m, n, n)
    d = metric_arrays(m, U, V)
    return float(np.sum(W * d["K"] * np.sqrt(d["g11"] * d["g22"] - d["g12"] ** 2)))


def curvature_grid(m: SurfaceMetric, n: int = 256) -> np.ndarray:
    if m.is_sphere:
        t = np.linspace(POLAR_CAP, math.pi - POLAR_CAP, n)
        th = np.linspace(0, 2 * math.pi, n, endpoint=False)
        U, V = np.meshgrid(t, th, indexing="ij")
    else:
        U, V, _ = _grid(m, n, n)
    return metric_arrays(m, U, V)["K"]


def check_curvature_bound(m: SurfaceMetric, n: int = 512) -> dict:
    """Test ``max K <= 2 pi / area`` on a dense grid (positive genus only)."""
    if m.genus < 1:
        raise WrongGenus("curvature bound test applies to positive-genus surfaces")
    max_K = float(np.max(curvature_grid(m, n)))
    threshold = 2 * math.pi / total_area(m)
    return {"holds": max_K <= threshold, "max_K": max_K, "threshold": threshold}


# --- revolution helpers -----------------------------------------------------------

def critical_parallels(m: SurfaceMetric, n: int = 4001) -> list[float]:
    """Profile parameters ``t`` where ``r'(t) = 0`` (geodesic parallels when unperturbed)."""
    if not m.is_sphere:
        raise WrongGenus("critical parallels are defined for spheres of revolution")
    t = np.linspace(1e-3, math.pi - 1e-3, n)
    r1 = _profile(m, t)[1]
    out = []
    for i in range(n - 1):
        if r1[i] == 0.0:
            out.append(float(t[i]))
        elif r1[i] * r1[i + 1] < 0:
            out.append(brentq(lambda s: float(_profile(m, s)[1]), t[i], t[i + 1], xtol=1e-15))
    return out


def clairaut_constant(m: SurfaceMetric, y) -> float:
    """Clairaut integral ``rho sin(psi)`` = angular momentum about the axis."""
    if m.kind is SurfaceKind.SPHERE_OF_REVOLUTION:
        return float(metric_arrays(m, y[0], y[1])["g22"] * y[3])
    if m.kind is SurfaceKind.TORUS_OF_REVOLUTION:
        return float(metric_arrays(m, y[0], y[1])["g11"] * y[2])
    raise WrongGenus("Clairaut integral requires a surface of revolution")


def rotation_radius(m: SurfaceMetric, p) -> float:
    """Distance to the symmetry axis at chart point ``p``."""
    if m.kind is SurfaceKind.SPHERE_OF_REVOLUTION:
        return float(math.sqrt(metric_arrays(m, p[0], p[1])["g22"]))
    if m.kind is SurfaceKind.TORUS_OF_REVOLUTION:
        return m.params["R"] + m.params["r"] * math.cos(p[1])
    raise WrongGenus("rotation radius requires a surface of revolution")


# --- factories ---------------------------------------------------------------------

def _with_inj(m: SurfaceMetric) -> SurfaceMetric:
    Kmax = float(np.max(curvature_grid(m, 256)))
    curv = math.pi / math.sqrt(Kmax) if Kmax > 0 else math.inf
    if m.kind is SurfaceKind.SPHERE_OF_REVOLUTION:
        t = np.linspace(0, math.pi, 2001)
        r, r1, _, z1, _ = _profile(m, t)
        meridian = 2 * float(trapezoid(np.sqrt(r1 ** 2 + z1 ** 2), t))
        lengths = [meridian] + [2 * math.pi * float(profile_radius(m, s)) for s in critical_parallels(m)]
        scale = math.exp(-abs(m.params.get("bump", 0.0)))
    elif m.kind is SurfaceKind.TORUS_OF_REVOLUTION:
        R, rr = m.params["R"], m.params["r"]
        lengths = [2 * math.pi * (R - rr), 2 * math.pi * rr]
        scale = 1.0
    else:
        fmin = math.log(float(np.min(metric_arrays(m, *_grid(m, 128, 128)[:2])["g11"]))) / 2
        lengths = [1.0]
        scale = math.exp(fmin)
    inj = min(0.5 * scale * min(lengths), curv)
    object.__setattr__(m, "inj_radius_estimate", inj)
    return m


def sphere_of_revolution(r_sin, z_cos, bump: float = 0.0, name: str = "") -> SurfaceMetric:
    """Sphere with profile ``r = sum p_k sin(kt)``, ``z = sum q_k cos(kt)``."""
    m = SurfaceMetric(SurfaceKind.SPHERE_OF_REVOLUTION,
                      {"r_sin": tuple(float(x) for x in r_sin),
                       "z_cos": tuple(float(x) for x in z_cos),
                       "bump": float(bump)}, name or "sphere_of_revolution")
    t = np.linspace(1e-4, math.pi - 1e-4, 2001)
    r, r1, _, z1, _ = _profile(m, t)
    if np.any(r <= 0) or np.any(r1 ** 2 + z1 ** 2 <= 0):
        raise ValueError("profile must have r > 0 inside (0, pi) and be regular")
    return _with_inj(m)


def round_sphere(radius: float = 1.0) -> SurfaceMetric:
    return sphere_of_revolution([radius], [radius], name="round_sphere")


def spheroid(c: float = 0.9) -> SurfaceMetric:
    """Ellipsoid of revolution with semi-axes ``(1, 1, c)``."""
    return sphere_of_revolution([1.0], [c], name="spheroid")


def dumbbell_sphere(beta: float = 0.5, bump: float = 0.0) -> SurfaceMetric:
    """Two bulges joined by a neck at ``t = pi/2``.

    ``r = sin t (1 + beta cos 2t)``; for ``beta = 0.5`` the neck has radius 1/2
    and curvature -3, the bulges sit at ``t = pi/4, 3pi/4`` with radius
    ``sqrt(2)/2``.
    """
    return sphere_of_revolution([1 - beta / 2, 0.0, beta / 2], [1.0], bump=bump,
                                name="dumbbell_sphere" if bump == 0 else "perturbed_dumbbell")


def three_bulge_sphere(beta: float = 0.5) -> SurfaceMetric:
    """Profile ``r = sin t (1 + beta cos 4t)``: a middle bulge at ``t = pi/2``
    flanked by two necks, with smaller bulges towards the poles."""
    return sphere_of_revolution([1.0, 0.0, -beta / 2, 0.0, beta / 2], [1.0], name="three_bulge_sphere")


def torus_of_revolution(R: float = 2.0, r: float = 1.0) -> SurfaceMetric:
    if not (R > r > 0):
        raise ValueError("need R > r > 0")
    return _with_inj(SurfaceMetric(SurfaceKind.TORUS_OF_REVOLUTION,
                                   {"R": float(R), "r": float(r)}, "torus_of_revolution"))


def conformal_torus(modes=()) -> SurfaceMetric:
    """Unit square torus with metric ``exp(2 f)(du^2 + dv^2)``.

    ``modes`` is a sequence of ``(m, n, c, s)``; ``f = sum c cos 2pi(mu+nv) + s sin 2pi(mu+nv)``.
    """
    modes = tuple(tuple(float(x) for x in md) for md in modes)
    for md in modes:
        if len(md) != 4 or md[0] != int(md[0]) or md[1] != int(md[1]):
            raise ValueError("modes are (m, n, c, s) with integer m, n")
    return _with_inj(SurfaceMetric(SurfaceKind.CONFORMAL_TORUS, {"modes": modes},
                                   "flat_torus" if not modes else "conformal_torus"))


def flat_torus() -> SurfaceMetric:
    return conformal_torus(())


def from_config(block: dict) -> SurfaceMetric:
    """Build a surface from a scenario ``[surface]`` table."""
    from .errors import ConfigError

    block = dict(block)
    kind = block.pop("kind", None)
    try:
        if kind in ("round_sphere",):
            return round_sphere(**block)
        if kind == "spheroid":
            return spheroid(**block)
        if kind == "dumbbell_sphere":
            return dumbbell_sphere(**block)
        if kind == "three_bulge_sphere":
            return three_bulge_sphere(**block)
        if kind in ("SphereOfRevolution", "sphere_of_revolution"):
            return sphere_of_revolution(**block)
        if kind in ("TorusOfRevolution", "torus_of_revolution"):
            return torus_of_revolution(**block)
        if kind in ("ConformalTorus", "conformal_torus"):
            return conformal_torus(**block)
        if kind == "flat_torus":
            return flat_torus(**block)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for surface kind {kind!r}: {exc}") from exc
    raise ConfigError(f"unknown surface kind {kind!r}")
