import math

import numpy as np
import pytest

from birkhoff_lab import csf, finder, flow, geom
from birkhoff_lab.errors import FlowCollapsed, PreconditionError, WrongGenus


def test_parallel_records(dumbbell):
    neck = finder.parallel_record(dumbbell, math.pi / 2, "neck")
    assert neck.length == pytest.approx(math.pi, abs=1e-9)
    assert neck.type is flow.OrbitType.HYPERBOLIC and neck.is_waist
    bulge = finder.parallel_record(dumbbell, math.pi / 4, "bulge")
    assert bulge.length == pytest.approx(math.sqrt(2) * math.pi, abs=1e-9)
    assert bulge.type is flow.OrbitType.ELLIPTIC and bulge.has_conjugate_points


def test_class_minimizer_torus(torus):
    rec = finder.class_minimizer(torus, (1, 0), name="inner")
    assert rec.length == pytest.approx(2 * math.pi, abs=1e-6)
    assert rec.homotopy_tag in ((1, 0), (-1, 0))
    with pytest.raises(PreconditionError):
        finder.class_minimizer(torus)


def test_class_minimizer_collapse(flat):
    with pytest.raises(FlowCollapsed):
        finder.class_minimizer(flat, curve=csf.circle((0.5, 0.5), 0.1, n=32))


def test_count_intersections(flat):
    a = csf.class_loop(flat, 1, 0, n=32, base=(0.0, 0.3))
    b = csf.class_loop(flat, 0, 1, n=32, base=(0.2, 0.0))
    c = csf.class_loop(flat, 1, 2, n=64, base=(0.05, 0.07))
    assert finder.count_intersections(flat, a, b)[0] == 1
    # |det [[1, 0], [1, 2]]| = 2
    assert finder.count_intersections(flat, a, c)[0] == 2


def test_genus_chain_torus(torus):
    chain = finder.genus_chain(torus)
    assert chain.check_chain() and chain.tag == "Chain2G"
    lengths = sorted(g.length for g in chain.geodesics)
    assert lengths == pytest.approx([2 * math.pi, 2 * math.pi], abs=1e-6)
    system = finder.assemble_complete_system(torus, chain)
    assert len(system.all) == 2 and system.limit_sub == []


def test_genus_chain_needs_torus(sphere):
    with pytest.raises(WrongGenus):
        finder.genus_chain(sphere)


def test_minmax_three_bulge():
    m = geom.three_bulge_sphere(0.5)
    cp = geom.critical_parallels(m)
    necks = [finder.parallel_record(m, t, f"n{i}") for i, t in enumerate(cp) if 0.6 < t < 2.5 and abs(t - math.pi / 2) > 0.1]
    assert all(n.is_waist for n in necks)
    rec = finder.minmax_geodesic(m, necks[0], necks[1])
    assert rec.length == pytest.approx(3 * math.pi, abs=1e-6)
    assert rec.has_conjugate_points
    res = finder.bangert_check(m, rec)
    assert all(ok for _, ok in res.values())
    assert all(L < rec.length for L, _ in res.values())


def test_minmax_needs_parallels(torus):
    z = flow.UnitTangent.normalized(torus, (0.0, math.pi), (1.0, 0.0))
    rec = flow.make_record(torus, z, 2 * math.pi)
    with pytest.raises(WrongGenus):
        finder.minmax_geodesic(torus, rec, rec)


def test_nested_chain_round_sphere(sphere):
    # the northern hemisphere of the round sphere contains no closed geodesic
    cap = csf.RegionSpec(((None, math.pi / 2), (None, None)), "north")
    chain = finder.nested_chain(sphere, cap)
    assert chain.geodesics == [] and chain.check_nested()


@pytest.mark.slow
def test_dumbbell_complete_system(dumbbell):
    chain = finder.separating_chain(dumbbell, math.pi / 4)
    system = finder.assemble_complete_system(dumbbell, chain)
    assert [g.name for g in system.limit_sub] == ["waist1"]
    assert system.limit_sub[0].length == pytest.approx(math.pi, abs=1e-6)
    levels = sorted(g.coordinate_line[1] for g in system.all)
    assert levels == pytest.approx([math.pi / 4, math.pi / 2, 3 * math.pi / 4], abs=1e-6)
