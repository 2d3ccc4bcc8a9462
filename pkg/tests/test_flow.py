import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from birkhoff_lab import finder, flow, geom
from birkhoff_lab.errors import NotClosed, NotHyperbolic, PreconditionError

from conftest import SURFACES

surfaces = st.sampled_from(sorted(SURFACES))
unit = st.floats(0.0, 1.0)
angles = st.floats(-math.pi, math.pi)


def _tangent(m, a, b, ang):
    (l0, h0), (l1, h1) = m.chart_domain
    p = (l0 + 0.2 + (h0 - l0 - 0.4) * a, l1 + (h1 - l1) * b)
    return flow.UnitTangent.from_angle(m, p, ang)


@given(surfaces, unit, unit, angles, st.floats(0.5, 20.0))
def test_time_reversal(name, a, b, ang, T):
    m = SURFACES[name]()
    z = _tangent(m, a, b, ang)
    y1 = flow.flow_state(m, z.state(), T)
    back = flow.flow_state(m, flow.flip_state(y1), T)
    assert flow.closure_gap(m, z.state(), flow.flip_state(back)) < 1e-7


@given(surfaces, unit, unit, angles)
def test_unit_speed_preserved(name, a, b, ang):
    m = SURFACES[name]()
    tr = flow.integrate(m, _tangent(m, a, b, ang), 20.0)
    assert tr.energy_drift() < 1e-9


@given(st.sampled_from(["round_sphere", "spheroid", "dumbbell", "torus"]), unit, unit, angles)
def test_clairaut_drift(name, a, b, ang):
    m = SURFACES[name]()
    tr = flow.integrate(m, _tangent(m, a, b, ang), 100.0, with_jacobi=False)
    _, ys = tr.uniform(1000)
    c = np.array([geom.clairaut_constant(m, y) for y in ys])
    assert np.max(np.abs(c - c[0])) < 1e-8


def test_integrate_rejects_bad_input(sphere):
    z = flow.UnitTangent((1.0, 0.0), (2.0, 0.0))
    with pytest.raises(PreconditionError):
        flow.integrate(sphere, z, 1.0)
    with pytest.raises(PreconditionError):
        flow.integrate(sphere, flow.UnitTangent.from_angle(sphere, (1.0, 0.0), 0.0), math.inf)
    with pytest.raises(PreconditionError):
        flow.conjugate_points(sphere, flow.UnitTangent.from_angle(sphere, (1.0, 0.0), 0.0), -1.0)


def test_trajectory_csv(tmp_path, torus):
    tr = flow.integrate(torus, flow.UnitTangent.from_angle(torus, (0.1, 0.2), 0.3), 2.0)
    tr.to_csv(tmp_path / "t.csv", n=10)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,u,v,u̇,v̇,J,J′"
    assert len(lines) == 12
    assert np.allclose(tr(1.0), tr.sample([1.0])[0])


# --- conjugate points and Floquet oracles ---------------------------------------------------

def test_conjugate_points_oracles(sphere, torus, flat):
    z = flow.UnitTangent.from_angle(sphere, (1.3, 0.0), 0.4)
    assert flow.conjugate_points(sphere, z, 7.0) == pytest.approx([math.pi, 2 * math.pi], abs=1e-6)
    # outer equator of the torus: K = 1/3, zeros at k pi sqrt 3
    z = flow.UnitTangent.normalized(torus, (0.0, 0.0), (1.0, 0.0))
    assert flow.conjugate_points(torus, z, 12.0) == pytest.approx([math.pi * math.sqrt(3), 2 * math.pi * math.sqrt(3)],
                                                                  abs=1e-6)
    assert flow.conjugate_points(flat, flow.UnitTangent.from_angle(flat, (0.1, 0.2), 0.4), 50.0) == []


def test_inner_equator_floquet(torus):
    z = flow.UnitTangent.normalized(torus, (0.0, math.pi), (1.0, 0.0))
    rec = flow.make_record(torus, z, 2 * math.pi, "inner")
    s1, s2 = rec.floquet
    assert rec.type is flow.OrbitType.HYPERBOLIC
    assert abs(s1.real / math.exp(2 * math.pi) - 1) < 1e-3
    assert s1.real * s2.real == pytest.approx(1.0, abs=1e-6)
    assert rec.is_waist and not rec.has_conjugate_points
    assert rec.homotopy_tag == (1, 0) and not rec.contractible
    assert flow.floquet(torus, rec)[2] is flow.OrbitType.HYPERBOLIC


def test_outer_equator_rotation(torus):
    z = flow.UnitTangent.normalized(torus, (0.0, 0.0), (1.0, 0.0))
    rec = flow.make_record(torus, z, 6 * math.pi, "outer")
    assert rec.type is flow.OrbitType.ELLIPTIC
    assert flow.rotation_angle(rec) == pytest.approx((2 * math.pi * math.sqrt(3)) % (2 * math.pi), abs=1e-3)
    assert np.linalg.det(rec.monodromy) == pytest.approx(1.0, abs=1e-6)


def test_make_record_not_closed(torus):
    z = flow.UnitTangent.from_angle(torus, (0.0, 0.5), 0.3)
    with pytest.raises(NotClosed):
        flow.make_record(torus, z, 5.0)


def test_polish_closed_recovers_equator(sphere):
    z = flow.UnitTangent.from_angle(sphere, (math.pi / 2 + 1e-3, 0.0), math.pi / 2 + 2e-3)
    z2, L = flow.polish_closed(sphere, z, 6.3)
    assert L == pytest.approx(2 * math.pi, abs=1e-9)
    y = flow.flow_state(sphere, z2.state(), L)
    assert flow.closure_gap(sphere, z2.state(), y) < 1e-10


def test_waist_local_minimality(torus, flat):
    z = flow.UnitTangent.normalized(torus, (0.0, math.pi), (1.0, 0.0))
    rec = flow.make_record(torus, z, 2 * math.pi)
    ok, gain = flow.local_minimality(torus, rec, n_trials=50, seed=1)
    assert ok and gain > 0
    z = flow.UnitTangent.normalized(torus, (0.0, 0.0), (1.0, 0.0))
    outer = flow.make_record(torus, z, 6 * math.pi)
    assert not flow.local_minimality(torus, outer, n_trials=50, seed=1)[0]


# --- invariant manifolds -----------------------------------------------------------------------

def test_manifold_seeds_contract(dumbbell):
    neck = finder.parallel_record(dumbbell, math.pi / 2, "neck")
    lam = math.log(abs(neck.floquet[0].real)) / neck.length
    assert lam == pytest.approx(math.sqrt(3), rel=1e-6)
    seeds = flow.invariant_manifold_seed(dumbbell, neck, +1, stable=True, delta=1e-6, n=8)
    for z in seeds:
        d0 = flow.lift_distance(dumbbell, neck, z.state())
        d1 = flow.lift_distance(dumbbell, neck, flow.flow_state(dumbbell, z.state(), 3.0))
        assert d1 < d0 * math.exp(-lam * 3.0) * 1.1
    # seeds on distinct orbits: their Clairaut constants are all equal to the neck's
    c = [geom.clairaut_constant(dumbbell, z.state()) for z in seeds]
    assert np.allclose(c, c[0], atol=1e-10)


def test_manifold_side(dumbbell):
    neck = finder.parallel_record(dumbbell, math.pi / 2, "neck")
    left = flow.manifold_point(dumbbell, neck, True, +1, 0.0, 1e-4)
    right = flow.manifold_point(dumbbell, neck, True, -1, 0.0, 1e-4)
    nu = geom.left_normal(dumbbell, neck.z0.base, neck.z0.dir)
    assert np.dot(np.subtract(left.base, neck.z0.base), nu) > 0
    assert np.dot(np.subtract(right.base, neck.z0.base), nu) < 0


def test_elliptic_has_no_manifold(dumbbell):
    bulge = finder.parallel_record(dumbbell, math.pi / 4, "bulge")
    with pytest.raises(NotHyperbolic):
        flow.invariant_manifold_seed(dumbbell, bulge, +1, stable=True)


def test_clairaut_orbit_matches_full_flow(dumbbell):
    z = flow.UnitTangent.from_angle(dumbbell, (1.0, 0.2), 0.9)
    ts, ys = flow.clairaut_orbit(dumbbell, z, 8.0, n_out=50)
    full = flow.integrate(dumbbell, z, 8.0, with_jacobi=False)
    ref = full.sample(ts)
    assert np.max(np.abs(ys[:, :2] - ref[:, :2])) < 1e-8


def test_map_threads_order():
    assert flow.map_threads(lambda x: x * x, list(range(20)), threads=4) == [x * x for x in range(20)]
