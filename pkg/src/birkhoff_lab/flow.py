"""Geodesic flow on the unit tangent bundle with normal Jacobi fields.

The state integrated by the kernels is ``(u, v, u', v', J1, J1', J2, J2')``.
The two scalar Jacobi solutions measure the normal component of a Jacobi
field in the positively oriented frame ``(gamma', nu)``, where ``nu`` is the
left normal. Pair 1 starts at ``(J, J') = (1, 0)`` and pair 2 at ``(0, 1)``,
so after one period of a closed geodesic the columns form the monodromy of
the linearized Poincare map.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import geom, kernels
from .errors import NotClosed, NotHyperbolic, PoleTransit, PreconditionError, StepFailure

RTOL = 1e-11
ATOL = 1e-12
CLASSIFY_TOL = 1e-6
CLOSURE_TOL = 1e-6


class OrbitType(str, Enum):
    HYPERBOLIC = "Hyperbolic"
    ELLIPTIC = "Elliptic"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class UnitTangent:
    """A point of the unit tangent bundle: chart base point and direction."""

    base: tuple
    dir: tuple

    @classmethod
    def from_angle(cls, m, p, angle):
        """Unit vector at ``p`` at ``angle`` from the first coordinate axis."""
        w = geom.direction(m, p, angle)
        return cls((float(p[0]), float(p[1])), (float(w[0]), float(w[1])))

    @classmethod
    def from_state(cls, y):
        return cls((float(y[0]), float(y[1])), (float(y[2]), float(y[3])))

    @classmethod
    def normalized(cls, m, p, w):
        w = geom.normalize(m, p, w)
        return cls((float(p[0]), float(p[1])), (float(w[0]), float(w[1])))

    def flipped(self):
        return UnitTangent(self.base, (-self.dir[0], -self.dir[1]))

    def state(self, jacobi=True) -> np.ndarray:
        y = np.zeros(8)
        y[:2] = self.base
        y[2:4] = self.dir
        if jacobi:
            y[4] = 1.0
            y[7] = 1.0
        return y

    def angle(self, m) -> float:
        e1, e2 = geom.orthonormal_frame(m, self.base)
        return math.atan2(geom.gram(m, self.base, self.dir, e2),
                          geom.gram(m, self.base, self.dir, e1))


POLE_HOP = 1e-4     # parameter radius of the cap crossed by the straight-line hop
MAX_HOPS = 100000


def _chart_bounds(m):
    if m.is_sphere:
        return POLE_HOP, math.pi - POLE_HOP
    return (-1e300, 1e300)


def _pole_hop(m, y, t_left, direction=1.0):
    """Carry a state that stepped into a polar cap straight across it.

    Near a pole the metric is ``a0^2 (ds^2 + s^2 dphi^2)`` up to ``O(s^2)``,
    with ``s`` the parameter distance to the pole and ``a0 = |r'(pole)|``, so
    in ``X = s (cos phi, sin phi)`` geodesics are straight lines up to
    ``O(s^3)`` over the crossing. The state is carried to the parameter
    radius ``2 * POLE_HOP`` on the far side (or until ``t_left`` runs out),
    backward in time when ``direction < 0``.
    Returns ``(state, elapsed, jacobi_zero_offsets)``.
    """
    y = np.array(y, dtype=float)
    y[2:4] *= direction
    north = y[0] < math.pi / 2
    pole = 0.0 if north else math.pi
    sgn = 1.0 if north else -1.0
    s, sd, phi, phid = sgn * (y[0] - pole), sgn * y[2], y[1], y[3]
    if s < 0:   # the step went through the pole: use the chart symmetry (s, phi) ~ (-s, phi + pi)
        s, sd, phi = -s, -sd, phi + math.pi
    R = 2 * POLE_HOP
    if s >= R:  # already clear of the cap on the far side
        out = y.copy()
        out[0], out[1] = pole + sgn * s, phi
        out[2:4] = direction * geom.normalize(m, out[:2], (sgn * sd, phid))
        return out, 0.0, []
    a0 = abs(float(geom._profile(m, np.array([pole]))[1][0]))
    c, si = math.cos(phi), math.sin(phi)
    X = np.array([s * c, s * si])
    V = np.array([sd * c - s * phid * si, sd * si + s * phid * c])
    speed = a0 * float(np.hypot(*V))
    vv, xv, xx = V @ V, X @ V, X @ X
    tau = (-xv + math.sqrt(xv * xv - vv * (xx - R * R))) / vv
    dt = speed * tau
    if dt > t_left:
        tau, dt = t_left / speed, t_left
    X2 = X + tau * V
    s2 = float(np.hypot(*X2))
    dphi = math.atan2(X2[1], X2[0]) - phi
    phi2 = phi + dphi - 2 * math.pi * round(dphi / (2 * math.pi))
    sd2 = float(X2 @ V) / s2
    phid2 = float(X2[0] * V[1] - X2[1] * V[0]) / s2 ** 2
    out = np.array(y, dtype=float)
    out[0], out[1] = pole + sgn * s2, phi2
    out[2:4] = direction * geom.normalize(m, out[:2], (sgn * sd2, phid2))
    K0 = geom.metric_at(m, (pole + sgn * R, 0.0)).K
    zeros = []
    h = direction * dt
    for i in (4, 6):
        J, Jp = out[i], out[i + 1]
        out[i] = J + h * Jp - 0.5 * K0 * h * h * J
        out[i + 1] = Jp - K0 * h * J - 0.5 * K0 * h * h * Jp
        if i == 6 and J * out[i] < 0:
            zeros.append(dt * J / (J - out[i]))
    return out, dt, zeros


def run_kernel(m, y0, T, sections=None, jzeros=False, store=False, max_jzeros=64,
               rtol=RTOL, atol=ATOL, hmax=0.5, raise_on_pole=True, impl=None, pole_hop=True):
    """Thin wrapper around the compiled/pure kernel ``integrate``.

    Returns the raw kernel tuple ``(status, t, y, sec, zeros, step_t, step_y)``.
    On spheres of revolution an orbit entering a polar cap is carried across
    it by :func:`_pole_hop` and the kernel restarted; with ``pole_hop=False``
    the cap entry ends the run (status 2, ``PoleTransit`` if ``raise_on_pole``).
    """
    kind, par = m.kernel_params()
    lo, hi = _chart_bounds(m)
    secs = None if sections is None or len(sections) == 0 else np.ascontiguousarray(sections, float)
    k = kernels.get(impl)
    y = np.ascontiguousarray(y0, float)
    direction = 1.0 if T >= 0 else -1.0
    t_acc, zeros, st_t, st_y = 0.0, [], [], []
    for _ in range(MAX_HOPS):
        out = k.integrate(kind, par, y, float(T) - t_acc, rtol, atol, hmax,
                          secs, jzeros, max_jzeros - len(zeros), store, lo, hi)
        status, t1, y1 = out[0], out[1], out[2]
        zeros.extend(t_acc + z for z in out[4])
        if store:
            st_t.append(t_acc + out[5])
            st_y.append(out[6])
        t_acc += t1
        if status != 2 or not pole_hop:
            break
        y2, dt, zh = _pole_hop(m, y1, abs(T - t_acc), direction)
        if jzeros:
            zeros.extend(t_acc + direction * z for z in zh)
        t_acc += direction * dt
        y = np.ascontiguousarray(y2)
        if store:
            st_t.append(np.array([t_acc]))
            st_y.append(y[None, :].copy())
        if direction * (T - t_acc) <= 0:
            out = (0, t_acc, y, -1)
            y1 = y
            break
    else:
        raise PoleTransit(f"more than {MAX_HOPS} polar crossings")
    status = out[0]
    if status == 2 and raise_on_pole:
        raise PoleTransit(f"orbit entered a polar cap at t={t_acc:.6g}")
    if status == 3:
        raise StepFailure(f"integration failed at t={t_acc:.6g}")
    zeros = np.array(zeros[:max_jzeros], dtype=float)
    steps_t = np.concatenate(st_t) if store else None
    steps_y = np.concatenate(st_y) if store else None
    return status, t_acc, np.asarray(y1), out[3], zeros, steps_t, steps_y


class Trajectory:
    """Integrated orbit with dense output.

    Dense values are produced by a single re-step of the high-order scheme
    from the stored accepted-step start nearest below the query time.
    """

    def __init__(self, m, step_t, step_y, T, with_jacobi=True):
        self.m = m
        self.T = float(T)
        self.step_t = np.asarray(step_t)
        self.step_y = np.asarray(step_y)
        self.with_jacobi = with_jacobi
        self._kind, self._par = m.kernel_params()
        self._fwd = self.T >= 0

    @property
    def end(self) -> np.ndarray:
        return self.step_y[-1].copy()

    def __call__(self, t) -> np.ndarray:
        t = float(t)
        ts = self.step_t if self._fwd else -self.step_t
        q = t if self._fwd else -t
        i = int(np.searchsorted(ts, q, side="right")) - 1
        i = min(max(i, 0), len(ts) - 1)
        h = t - self.step_t[i]
        if h == 0.0:
            return self.step_y[i].copy()
        return kernels.backend.step(self._kind, self._par,
                                    np.ascontiguousarray(self.step_y[i]), h)

    def sample(self, times) -> np.ndarray:
        return np.array([self(t) for t in times])

    def uniform(self, n) -> tuple[np.ndarray, np.ndarray]:
        times = np.linspace(0.0, self.T, n + 1)
        return times, self.sample(times)

    def energy_drift(self, n=200) -> float:
        _, ys = self.uniform(n)
        return float(max(abs(geom.gram(self.m, y[:2], y[2:4]) - 1.0) for y in ys))

    def to_csv(self, path, n=None, stride=None):
        """Write ``t,u,v,u̇,v̇,J,J′`` rows at uniform sample times.

        ``n`` sets the number of intervals; ``stride`` (a time step) wins when given.
        The Jacobi columns hold the solution with ``J(0)=0, J'(0)=1``.
        """
        if stride is not None:
            n = max(1, int(math.ceil(abs(self.T) / stride)))
        times, ys = self.uniform(n or 200)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "u", "v", "u̇", "v̇", "J", "J′"])
            for t, y in zip(times, ys):
                w.writerow([f"{t:.12g}"] + [f"{x:.12g}" for x in (y[0], y[1], y[2], y[3], y[6], y[7])])


def integrate(m, z0: UnitTangent, T: float, with_jacobi: bool = True, **kw) -> Trajectory:
    """Integrate the geodesic (and Jacobi) equations from ``z0`` for time ``T``.

    Negative ``T`` integrates backward. Raises ``PoleTransit`` if a sphere
    orbit enters an excluded polar cap and ``StepFailure`` if the tolerance
    cannot be met.
    """
    if not math.isfinite(T):
        raise PreconditionError("T must be finite")
    y0 = z0.state(jacobi=True)
    if abs(geom.gram(m, y0[:2], y0[2:4]) - 1.0) > 1e-10:
        raise PreconditionError("initial direction is not unit")
    out = run_kernel(m, y0, T, store=True, **kw)
    return Trajectory(m, out[5], out[6], T, with_jacobi)


def flow_state(m, y0, T, **kw) -> np.ndarray:
    """Endpoint state ``phi_T(y0)`` (8-vector)."""
    return run_kernel(m, y0, T, **kw)[2]


def conjugate_points(m, z0: UnitTangent, T: float, max_count=64) -> list[float]:
    """Zeros in ``(0, T]`` of the normal Jacobi field with ``J(0)=0, J'(0)=1``."""
    if not T > 0:
        raise PreconditionError("T must be positive")
    out = run_kernel(m, z0.state(), T, jzeros=True, max_jzeros=max_count)
    return [float(t) for t in out[4] if 0.0 < t <= T]


def flip_state(y) -> np.ndarray:
    """Reverse the direction of motion (Jacobi data reset)."""
    z = np.zeros(8)
    z[:2] = y[:2]
    z[2:4] = -np.asarray(y[2:4])
    z[4] = z[7] = 1.0
    return z


# --- closed geodesics ----------------------------------------------------------------

def wrap_diff(m, a, b) -> np.ndarray:
    """Chart difference ``a - b`` reduced by the periods (first two coordinates)."""
    d = np.asarray(a[:2], float) - np.asarray(b[:2], float)
    for i, per in enumerate(m.periods):
        if per > 0:
            d[i] -= per * np.round(d[i] / per)
    return d


def closure_gap(m, y0, y1) -> float:
    d = wrap_diff(m, y1, y0)
    dv = np.asarray(y1[2:4]) - np.asarray(y0[2:4])
    return float(max(np.max(np.abs(d)), np.max(np.abs(dv))))


def classify(tr: float, tol: float = CLASSIFY_TOL) -> OrbitType:
    if abs(tr) > 2 + tol:
        return OrbitType.HYPERBOLIC
    if abs(tr) < 2 - tol:
        return OrbitType.ELLIPTIC
    return OrbitType.DEGENERATE


@dataclass
class ClosedGeodesicRecord:
    """A closed geodesic with its linear stability data.

    ``samples`` holds unit-speed states at ``n+1`` uniform times over one period.
    ``monodromy`` is the 2x2 matrix of ``(J, J')`` after one period.
    """

    z0: UnitTangent
    length: float
    samples: np.ndarray
    monodromy: np.ndarray
    floquet: tuple
    type: OrbitType
    conjugate_times: list
    has_conjugate_points: bool
    is_waist: bool
    homotopy_tag: tuple | None
    contractible: bool
    closure_gap: float
    name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def points(self) -> np.ndarray:
        return self.samples[:-1, :2]

    @property
    def coordinate_line(self):
        """``(index, level)`` if the geodesic is a coordinate line, else ``None``."""
        pts = self.samples[:, :2]
        for i in (0, 1):
            dev = pts[:, i] - pts[0, i]
            per = self.m_periods[i] if self.m_periods else 0.0
            if per > 0:
                dev = dev - per * np.round(dev / per)
            if np.max(np.abs(dev)) < 1e-8:
                return i, float(pts[0, i] % per if per > 0 else pts[0, i])
        return None

    m_periods: tuple = (0.0, 0.0)

    def to_dict(self) -> dict:
        s, si = self.floquet
        return {
            "name": self.name,
            "length": self.length,
            "type": self.type.value,
            "floquet": [[s.real, s.imag], [si.real, si.imag]],
            "trace": float(np.trace(self.monodromy)),
            "has_conjugate_points": self.has_conjugate_points,
            "first_conjugate_time": self.conjugate_times[0] if self.conjugate_times else None,
            "is_waist": self.is_waist,
            "contractible": self.contractible,
            "homotopy_tag": list(self.homotopy_tag) if self.homotopy_tag is not None else None,
            "closure_gap": self.closure_gap,
            "start": list(self.z0.base) + list(self.z0.dir),
        }


def _monodromy(m, z0, ell):
    y1 = flow_state(m, z0.state(), ell)
    M = np.array([[y1[4], y1[6]], [y1[5], y1[7]]])
    return y1, M


def floquet(m, rec: ClosedGeodesicRecord, tol: float = CLASSIFY_TOL):
    """Floquet multipliers ``(sigma, 1/sigma)`` and type of a closed geodesic.

    Raises ``NotClosed`` when the orbit of ``rec.z0`` misses its start by more
    than ``1e-6`` after one period.
    """
    y1, M = _monodromy(m, rec.z0, rec.length)
    gap = closure_gap(m, rec.z0.state(), y1)
    if gap > CLOSURE_TOL:
        raise NotClosed(f"closure gap {gap:.3g} exceeds {CLOSURE_TOL}")
    return _multipliers(M, tol)


def _multipliers(M, tol=CLASSIFY_TOL):
    tr = float(np.trace(M))
    det = float(np.linalg.det(M))
    kind = classify(tr, tol)
    disc = complex(tr * tr / 4 - det)
    root = disc ** 0.5
    s1, s2 = tr / 2 + root, tr / 2 - root
    if kind is OrbitType.HYPERBOLIC:
        s1, s2 = complex(s1.real, 0.0), complex(s2.real, 0.0)
        if abs(s1) < abs(s2):
            s1, s2 = s2, s1
    elif kind is OrbitType.ELLIPTIC:
        ang = math.acos(max(-1.0, min(1.0, tr / 2)))
        s1, s2 = complex(math.cos(ang), math.sin(ang)), complex(math.cos(ang), -math.sin(ang))
    else:
        s1 = s2 = complex(math.copysign(1.0, tr), 0.0)
    return s1, s2, kind


def rotation_angle(rec: ClosedGeodesicRecord) -> float:
    """Rotation angle in ``[0, 2pi)`` of an elliptic monodromy.

    The Jacobi pair ``(J, J')`` turns clockwise where ``K > 0``; for the
    harmonic monodromy ``[[cos a, sin a / w], [-w sin a, cos a]]`` the sign of
    the upper-right entry is the sign of ``sin a``, which fixes the branch.
    """
    M = rec.monodromy
    c = max(-1.0, min(1.0, float(np.trace(M)) / 2))
    s = math.copysign(math.sqrt(1.0 - c * c), float(M[0, 1]))
    return math.atan2(s, c) % (2 * math.pi)


def homotopy_class(m, y_start, y_end):
    """Winding vector on tori; ``None`` on spheres (everything is contractible)."""
    if m.is_sphere:
        return None
    d = np.asarray(y_end[:2]) - np.asarray(y_start[:2])
    return tuple(int(round(d[i] / m.periods[i])) for i in (0, 1))


def local_minimality(m, rec, n_trials=50, amplitude=1e-3, seed=0, n=512, tol=1e-9):
    """Random C0-small normal perturbations of ``rec``; are they all no shorter?

    Each perturbation is ``gamma + amplitude * w(s) nu`` with ``w`` a random
    trigonometric polynomial (5 modes, unit sup norm). Lengths are computed
    spectrally from uniform samples, so the base length is reproduced to
    roughly machine precision. Returns ``(ok, min_excess)``.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    tr = integrate(m, rec.z0, rec.length)
    s = np.linspace(0.0, rec.length, n, endpoint=False)
    ys = tr.sample(s)
    nus = np.array([geom.left_normal(m, y[:2], y[2:4]) for y in ys])
    drift = (tr.end[:2] - ys[0, :2]) / rec.length

    def length_of(P):
        base = P - np.outer(s, drift)
        k = np.fft.rfftfreq(n, d=rec.length / n) * 2 * math.pi
        D = np.fft.irfft(1j * k[:, None] * np.fft.rfft(base, axis=0), n=n, axis=0) + drift
        d = geom.metric_arrays(m, P[:, 0], P[:, 1])
        sp = np.sqrt(d["g11"] * D[:, 0] ** 2 + 2 * d["g12"] * D[:, 0] * D[:, 1] + d["g22"] * D[:, 1] ** 2)
        return float(np.mean(sp) * rec.length)

    L0 = length_of(ys[:, :2])
    worst = math.inf
    for _ in range(n_trials):
        a = rng.normal(size=5)
        b = rng.normal(size=5)
        ks = np.arange(1, 6)
        w = (np.cos(np.outer(s, ks) * 2 * math.pi / rec.length) @ a
             + np.sin(np.outer(s, ks) * 2 * math.pi / rec.length) @ b + rng.normal())
        w = amplitude * w / np.max(np.abs(w))
        worst = min(worst, length_of(ys[:, :2] + w[:, None] * nus) - L0)
    return worst >= -tol, worst


def make_record(m, z0: UnitTangent, length: float, name="", n=256, waist_trials=50,
                seed=0) -> ClosedGeodesicRecord:
    """Build a record for a closed geodesic starting at ``z0`` with period ``length``."""
    tr = integrate(m, z0, length)
    times, ys = tr.uniform(n)
    M = np.array([[ys[-1, 4], ys[-1, 6]], [ys[-1, 5], ys[-1, 7]]])
    gap = closure_gap(m, ys[0], ys[-1])
    if gap > CLOSURE_TOL:
        raise NotClosed(f"closure gap {gap:.3g} exceeds {CLOSURE_TOL}")
    s1, s2, kind = _multipliers(M)
    ct = conjugate_points(m, z0, 2 * length)
    has_conj = bool(ct) or kind is OrbitType.ELLIPTIC
    tag = homotopy_class(m, ys[0], ys[-1])
    contractible = tag is None or tag == (0, 0)
    rec = ClosedGeodesicRecord(z0, float(length), ys, M, (s1, s2), kind, ct, has_conj,
                               False, tag, contractible, gap, name, m_periods=m.periods)
    if kind is OrbitType.HYPERBOLIC:
        rec.is_waist = not has_conj
    elif kind is OrbitType.DEGENERATE and not has_conj:
        ok, excess = local_minimality(m, rec, n_trials=waist_trials, seed=seed)
        rec.is_waist = ok
        rec.meta["perturbation_excess"] = excess
    return rec


def polish_closed(m, z0: UnitTangent, length_guess: float, tol=1e-13, max_iter=30, fd_step=1e-7):
    """Newton (least-squares) shooting for a closed geodesic near ``z0``.

    Unknowns are a normal offset of the base point, the direction angle and
    the period; the residual is the chart-space mismatch after one period.
    Gauss-Newton steps use a least-squares solve of the finite-difference
    Jacobian, which handles the rank deficiency of degenerate families.
    """
    p0 = np.array(z0.base, float)
    nu = geom.left_normal(m, p0, z0.dir)
    ang0 = z0.angle(m)

    def start(x):
        p = p0 + x[0] * nu
        return UnitTangent.from_angle(m, p, ang0 + x[1])

    def resid(x):
        z = start(x)
        y = z.state()
        y1 = flow_state(m, y, x[2])
        d = wrap_diff(m, y1, y)
        return np.array([d[0], d[1], y1[2] - y[2], y1[3] - y[3]])

    x = np.array([0.0, 0.0, float(length_guess)])
    r = resid(x)
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol:
            break
        Jm = np.empty((4, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = fd_step
            Jm[:, k] = (resid(x + e) - resid(x - e)) / (2 * fd_step)
        dx = np.linalg.lstsq(Jm, -r, rcond=1e-10)[0]
        lam = 1.0
        while lam > 1e-4:
            xn = x + lam * dx
            rn = resid(xn)
            if np.max(np.abs(rn)) < np.max(np.abs(r)):
                break
            lam *= 0.5
        else:
            break
        x, r = xn, rn
    return start(x), float(x[2])


# --- invariant manifolds -------------------------------------------------------------

def _side_sign(side) -> int:
    if side in (1, "+", "left", "A", "a", +1.0):
        return 1
    if side in (-1, "-", "right", "B", "b", -1.0):
        return -1
    raise PreconditionError(f"side must be left/right (+1/-1), got {side!r}")


def eigen_solution(rec: ClosedGeodesicRecord, stable: bool) -> np.ndarray:
    """Initial ``(J, J')`` of the stable (|sigma|<1) or unstable eigen-solution."""
    if rec.type is not OrbitType.HYPERBOLIC:
        raise NotHyperbolic(f"record {rec.name!r} is {rec.type.value}")
    w, V = np.linalg.eig(rec.monodromy)
    w = np.real(w)
    i = int(np.argmin(np.abs(w))) if stable else int(np.argmax(np.abs(w)))
    vec = np.real(V[:, i])
    return vec / np.hypot(*vec)


def manifold_point(m, rec, stable, side, xi, delta):
    """Seed on the local (un)stable manifold at orbit time ``xi`` with normal offset ``delta``.

    The eigen-solution is rescaled so that ``|J(xi)| = 1``; seeds at different
    ``xi`` then lie on different orbits and ``xi in [0, length)`` sweeps a loop
    transverse to the flow inside the local manifold.
    """
    e = eigen_solution(rec, stable)
    y = flow_state(m, rec.z0.state(), xi) if xi != 0.0 else rec.z0.state()
    J = e[0] * y[4] + e[1] * y[6]
    Jp = e[0] * y[5] + e[1] * y[7]
    if J == 0.0:
        raise PreconditionError("eigen-solution vanishes at the requested seed time")
    sgn = _side_sign(side) / J
    J, Jp = sgn * J, sgn * Jp
    p, w = y[:2], y[2:4]
    nu = geom.left_normal(m, p, w)
    dx = delta * J * nu
    wn = w + delta * Jp * nu
    G = geom.metric_at(m, p).christoffel
    wn = wn - np.einsum("kij,i,j->k", G, dx, w)
    q = p + dx
    return UnitTangent.normalized(m, q, wn)


def invariant_manifold_seed(m, rec: ClosedGeodesicRecord, side, stable: bool,
                            delta: float | None = None, n: int = 64) -> list:
    """Seeds on the local stable/unstable manifold on one side of ``rec``.

    Points are placed at ``n`` uniform orbit times, displaced by ``delta`` along
    the left normal in the direction of the eigen Jacobi field (normalised to
    ``|J| = 1`` at each seed), with the matching velocity correction. ``side`` is ``+1``
    (left of the oriented geodesic) or ``-1``.
    """
    if rec.type is not OrbitType.HYPERBOLIC:
        raise NotHyperbolic(f"record {rec.name!r} is {rec.type.value}")
    if delta is None:
        delta = 1e-4 * m.inj_radius_estimate
    return [manifold_point(m, rec, stable, side, xi, delta)
            for xi in np.linspace(0.0, rec.length, n, endpoint=False)]


def lift_distance(m, rec: ClosedGeodesicRecord, y) -> float:
    """Distance in SM from ``y`` to the tangent lift of a coordinate-line geodesic.

    Combines the normal offset of the base point and the normal component of
    the velocity, both measured with the metric.
    """
    line = rec.coordinate_line
    if line is None:
        raise PreconditionError("lift distance is implemented for coordinate-line geodesics")
    i, level = line
    j = 1 - i
    d = y[i] - level
    per = m.periods[i]
    if per > 0:
        d -= per * round(d / per)
    md = geom.metric_arrays(m, y[0], y[1])
    gii = float(md["g11"] if i == 0 else md["g22"])
    off = math.sqrt(gii) * abs(d)
    vel = math.sqrt(gii) * abs(y[2 + i])
    return math.hypot(off, vel)


# --- Clairaut-reduced flow (revolution models) --------------------------------------------

def _profile_fns(m):
    """Scalar profile data ``(rho^2, a^2, Gamma_xxx, Gamma_xpp)`` and the profile index."""
    if m.kind is geom.SurfaceKind.SPHERE_OF_REVOLUTION:
        if not m.is_revolution:
            raise PreconditionError("Clairaut reduction needs an exact surface of revolution")
        xi, sel = 0, (2, 0, 3, 5)
    elif m.kind is geom.SurfaceKind.TORUS_OF_REVOLUTION:
        xi, sel = 1, (0, 2, 8, 6)
    else:
        raise PreconditionError("Clairaut reduction needs a surface of revolution")
    kind, par = m.kernel_params()
    met = kernels.backend.metric

    def prof(x):
        q = met(kind, par, x, 0.0) if xi == 0 else met(kind, par, 0.0, x)
        return tuple(q[i] for i in sel)
    return prof, xi


def clairaut_orbit(m, z0: UnitTangent, T: float, n_out=400, switch=None):
    """Integrate a geodesic on a surface of revolution with the Clairaut constant fixed.

    The profile coordinate ``x`` obeys the reduced geodesic equation with
    ``phi' = c/rho^2`` and conserved energy ``x'^2 = F(x) = (rho^2 - c^2)/(a rho)^2``.
    Within ``switch`` of a profile critical point where ``F`` has a double zero
    the first-order branch ``x' = sign * sqrt(F)`` is used instead, which keeps
    orbits on the stable manifold of a waist parallel for arbitrarily long times
    (the unreduced flow loses them at rate ``exp(lambda t)``).

    Returns ``(times, states)`` with states in the usual chart layout (no Jacobi data).
    """
    prof, xi = _profile_fns(m)
    ai = 1 - xi
    y = np.array(z0.state(jacobi=False))
    c = geom.clairaut_constant(m, y)
    x0, ph0, xd0 = y[xi], y[ai], y[2 + xi]

    def rho_a(x):
        r2, a2, _, _ = prof(x)
        return math.sqrt(r2), math.sqrt(a2)

    def F(x):
        r2, a2, _, _ = prof(x)
        return (r2 - c * c) / (a2 * r2)

    crit = []
    if m.is_sphere:
        crit = [t for t in geom.critical_parallels(m) if abs(rho_a(t)[0] - abs(c)) < 1e-6]
    else:
        for t in (0.0, math.pi):
            if abs(rho_a(t)[0] - abs(c)) < 1e-6:
                crit.append(t)
    if switch is None:
        switch = 0.25

    def near(x):
        for t0 in crit:
            dd = x - t0
            if not m.is_sphere:
                dd -= 2 * math.pi * round(dd / (2 * math.pi))
            if abs(dd) <= switch * (1 + 1e-9):
                return t0
        return None

    def rhs2(s, z):
        r2, _, gx, gp = prof(z[0])
        w = c / r2
        return [z[1], -gx * z[1] * z[1] - gp * w * w, w]

    qfits = {}

    def q_of(x, t0):
        # sqrt(F) / |x - t0| is analytic through the double zero of F at t0, but the
        # direct quotient is swamped by cancellation there; use a Chebyshev fit
        # built from nodes away from t0
        if t0 not in qfits:
            w = 1.25 * switch
            xs = t0 + np.concatenate([np.linspace(-w, -0.05 * w, 80), np.linspace(0.05 * w, w, 80)])
            qs = [math.sqrt(max(F(v), 0.0)) / abs(v - t0) for v in xs]
            qfits[t0] = np.polynomial.Chebyshev.fit(xs, qs, 24, domain=[t0 - w, t0 + w])
        return float(qfits[t0](x))

    def rhs1(s, z, t0, side):
        x = t0 + side * math.exp(z[0])
        rho, _ = rho_a(x)
        return [-sgnT * q_of(x, t0), c / rho ** 2]

    ts_out = np.linspace(0.0, T, n_out + 1)
    s, z = 0.0, [x0, xd0, ph0]
    res_t, res = [0.0], [[x0, xd0, ph0]]
    sgnT = 1.0 if T >= 0 else -1.0
    while sgnT * (T - s) > 1e-12:
        t0 = near(z[0])
        heading_in = t0 is not None and sgnT * z[1] * (t0 - z[0]) > 0
        if heading_in:
            # on the stable set of the critical parallel: snap c and follow log|x - t0|
            c = math.copysign(rho_a(t0)[0], c)
            side = math.copysign(1.0, z[0] - t0)
            sol = solve_ivp(rhs1, (s, T), [math.log(abs(z[0] - t0)), z[2]], args=(t0, side),
                            rtol=1e-12, atol=1e-14, dense_output=True, method="DOP853")
            sub = ts_out[(sgnT * ts_out > sgnT * s) & (sgnT * ts_out <= sgnT * T)]
            for tt in sub:
                q = sol.sol(tt)
                x = t0 + side * math.exp(q[0])
                res_t.append(tt)
                res.append([x, side * math.exp(q[0]) * rhs1(tt, q, t0, side)[0], q[1]])
            s = T
            break

        def enter(_, zz):
            best = math.inf
            for t1 in crit:
                dd = zz[0] - t1
                if not m.is_sphere:
                    dd -= 2 * math.pi * round(dd / (2 * math.pi))
                best = min(best, abs(dd))
            return best - switch
        enter.terminal = True
        enter.direction = -1.0
        sol = solve_ivp(rhs2, (s, T), z, rtol=1e-12, atol=1e-14, dense_output=True,
                        method="DOP853", events=enter if crit else None)
        s_end = sol.t[-1]
        sub = ts_out[(sgnT * ts_out > sgnT * s) & (sgnT * ts_out <= sgnT * s_end)]
        for tt in sub:
            q = sol.sol(tt)
            res_t.append(tt)
            res.append(list(q))
        z = list(sol.y[:, -1])
        if sol.status != 1:
            break
        # project onto the energy shell before switching branch
        z[1] = math.copysign(math.sqrt(max(F(z[0]), 0.0)), z[1])
        s = s_end
    times = np.array(res_t)
    arr = np.array(res)
    out = np.zeros((len(times), 4))
    out[:, xi] = arr[:, 0]
    out[:, ai] = arr[:, 2]
    out[:, 2 + xi] = arr[:, 1]
    for k in range(len(times)):
        rho, _ = rho_a(arr[k, 0])
        out[k, 2 + ai] = c / rho ** 2
    order = np.argsort(sgnT * times)
    return times[order], out[order]


# --- batch evaluation ----------------------------------------------------------------------

def map_threads(fn, items: Sequence, threads: int = 1) -> list:
    """Order-preserving map over ``items``; results do not depend on ``threads``."""
    if threads is None or threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def integrate_many(m, states: Iterable, T: float, threads: int = 1, **kw) -> list:
    """Endpoint kernel tuples for many initial states (thread-pool, order preserved)."""
    return map_threads(lambda y: run_kernel(m, y, T, **kw), list(states), threads)
