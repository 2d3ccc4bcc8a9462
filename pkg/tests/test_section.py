import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from birkhoff_lab import finder, flow, geom, section
from birkhoff_lab.errors import NotHyperbolic, PreconditionError


@pytest.fixture(scope="module")
def equator(sphere):
    return finder.parallel_record(sphere, math.pi / 2, "equator")


@pytest.fixture(scope="module")
def flat_annuli(flat):
    a = flow.make_record(flat, flow.UnitTangent.normalized(flat, (0.0, 0.0), (1.0, 0.0)), 1.0, "a")
    b = flow.make_record(flat, flow.UnitTangent.normalized(flat, (0.0, 0.0), (0.0, 1.0)), 1.0, "b")
    return section.system_annuli(flat, [a, b])


@given(st.floats(0.0, 2 * math.pi - 1e-6), st.floats(-1.5, 1.5), st.sampled_from([1, -1]))
def test_annulus_coordinates_roundtrip(s, phi, o):
    m = geom.spheroid(0.9)
    rec = finder.parallel_record(m, math.pi / 2, "eq")
    a = section.BirkhoffAnnulus(m, rec, o)
    z = a.to_tangent(s, phi)
    assert a.contains(z.state())
    s2, phi2 = a.coords(z.state())
    assert s2 == pytest.approx(s, abs=1e-9) or abs(s2 - s) == pytest.approx(a.length, abs=1e-9)
    assert phi2 == pytest.approx(phi, abs=1e-12)


def test_annulus_boundary_is_the_geodesic(sphere, equator):
    a = section.BirkhoffAnnulus(sphere, equator, +1)
    top = a.to_tangent(0.3, math.pi / 2).state()
    y = flow.flow_state(sphere, top, 1.0)
    assert y[0] == pytest.approx(math.pi / 2, abs=1e-12)
    with pytest.raises(PreconditionError):
        section.first_return(sphere, [a], top, 10.0)


def test_sphere_equator_return_time(sphere, equator):
    annuli = section.annuli_pair(sphere, equator)
    a = annuli[0]
    for s, phi in [(0.1, 0.0), (2.0, 0.7), (4.0, -1.2)]:
        r = section.first_return(sphere, annuli, a.to_tangent(s, phi), 10.0, start_annulus=a)
        assert r.status == section.RETURNED
        assert r.tau == pytest.approx(math.pi, abs=1e-10)
        # half a great circle later the orbit crosses the antipode into the opposite annulus,
        # where the left normal and the tangent are both reversed
        assert r.annulus == 1
        assert r.hit[1] == pytest.approx(-phi, abs=1e-9)


def test_verify_birkhoff_flat_torus(flat, flat_annuli, tmp_path):
    rep = section.verify_birkhoff(flat, flat_annuli, 400, math.sqrt(2), seed=3)
    assert rep["is_section_evidence"] and rep["n_returned"] == 400
    assert rep["max_tau"] <= math.sqrt(2)
    assert sum(rep["histogram"]["counts"]) == 400
    section.histogram_csv(rep, tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().startswith("tau_lo,tau_hi,count")


def test_verify_birkhoff_deterministic_across_threads(flat, flat_annuli):
    a = section.verify_birkhoff(flat, flat_annuli, 200, 2.0, seed=9, threads=1)
    b = section.verify_birkhoff(flat, flat_annuli, 200, 2.0, seed=9, threads=3)
    assert a == b


def test_verify_birkhoff_counterexample(flat):
    # a single annulus misses orbits parallel to its base
    a = flow.make_record(flat, flow.UnitTangent.normalized(flat, (0.0, 0.0), (1.0, 0.0)), 1.0, "a")
    annuli = section.annuli_pair(flat, a)
    rep = section.verify_birkhoff(flat, annuli, 300, 3.0, seed=2)
    assert rep["max_tau"] > 3.0 or not rep["is_section_evidence"]


def test_sampler(sphere):
    S = section.sample_unit_tangents(sphere, 4000, seed=5)
    assert np.array_equal(S, section.sample_unit_tangents(sphere, 4000, seed=5))
    speeds = [geom.gram(sphere, y[:2], y[2:4]) for y in S[:100]]
    assert np.allclose(speeds, 1.0)
    # area-weighted: the fraction in the band |u - pi/2| < pi/6 is sin(pi/6) = 1/2
    frac = np.mean(np.abs(S[:, 0] - math.pi / 2) < math.pi / 6)
    assert frac == pytest.approx(0.5, abs=0.03)


def test_return_map_area(sphere, equator, flat, flat_annuli):
    a = section.BirkhoffAnnulus(sphere, equator, 1)
    rep = section.return_map_area_check(sphere, a, grid=(8, 8))
    assert rep["evaluated"] == 64 and rep["max_defect"] < 1e-6
    rep = section.return_map_area_check(flat, flat_annuli[0], grid=(8, 8), targets=flat_annuli)
    assert rep["max_defect"] < 1e-6
    with pytest.raises(PreconditionError):
        section.return_map_area_check(sphere, a, phis=[math.pi / 2 - 1e-6])


def test_dumbbell_witnesses(dumbbell):
    neck = finder.parallel_record(dumbbell, math.pi / 2, "neck")
    bulges = [finder.parallel_record(dumbbell, t, n) for t, n in ((math.pi / 4, "b1"), (3 * math.pi / 4, "b2"))]
    annuli = section.system_annuli(dumbbell, bulges + [neck])
    w = section.stable_witnesses(dumbbell, neck, annuli, n_per_side=3, T_budget=200.0, seed=1)
    assert len(w) == 6
    for x in w:
        assert not x["crossed"]
        assert x["late_distance"] < 1e-3
        assert x["clairaut_residual"] < 1e-4
        assert x["late_monotone"]


def test_homoclinic_detection(dumbbell):
    neck = finder.parallel_record(dumbbell, math.pi / 2, "neck")
    assert section.detect_homoclinic(dumbbell, neck, T_budget=20.0) == []
    bulge = finder.parallel_record(dumbbell, math.pi / 4, "bulge")
    with pytest.raises(NotHyperbolic):
        section.detect_homoclinic(dumbbell, bulge)


@pytest.mark.slow
def test_homoclinic_detection_perturbed():
    m = geom.dumbbell_sphere(0.5, bump=0.05)
    neck = finder.parallel_record(m, math.pi / 2, "neck")
    pts = section.detect_homoclinic(m, neck, T_budget=40.0)
    assert len(pts) > 0
    for p in pts:
        assert p.forward_distance < 1e-3 and p.backward_distance < 1e-3
