import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from birkhoff_lab import geom
from birkhoff_lab.errors import ConfigError, PointOutsideChart

from conftest import SURFACES

surfaces = st.sampled_from(sorted(SURFACES))
coords = st.floats(-20.0, 20.0, allow_nan=False)


def _interior(m, a, b):
    (lo, hi), _ = m.chart_domain
    if m.is_sphere:
        a = lo + 0.05 + (hi - lo - 0.1) * (a % 1.0)
    return a, b


@given(surfaces, coords, coords)
def test_reduce_point_idempotent(name, a, b):
    m = SURFACES[name]()
    a, b = _interior(m, a, b)
    p = geom.reduce_point(m, (a, b))
    assert geom.reduce_point(m, p) == p
    (l0, h0), (l1, h1) = m.chart_domain
    assert l0 <= p[0] <= h0 and l1 <= p[1] < h1


def test_reduce_point_rejects_polar_cap(sphere):
    with pytest.raises(PointOutsideChart):
        geom.reduce_point(sphere, (0.0, 1.0))


def _christoffel_fd(m, p, h=1e-4):
    def g(q):
        d = geom.metric_arrays(m, np.array(q[0]), np.array(q[1]))
        return np.array([[d["g11"], d["g12"]], [d["g12"], d["g22"]]], float)
    dg = []
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        dg.append((g(p + e) - g(p - e)) / (2 * h))
    ginv = np.linalg.inv(g(p))
    G = np.zeros((2, 2, 2))
    for k in range(2):
        for i in range(2):
            for j in range(2):
                G[k, i, j] = 0.5 * sum(ginv[k, l] * (dg[i][j, l] + dg[j][i, l] - dg[l][i, j]) for l in range(2))
    return G


@given(surfaces, st.floats(0, 1), st.floats(0, 1))
def test_christoffel_matches_finite_differences(name, a, b):
    m = SURFACES[name]()
    (l0, h0), (l1, h1) = m.chart_domain
    p = np.array([l0 + 0.1 + (h0 - l0 - 0.2) * a, l1 + (h1 - l1) * b])
    G = geom.metric_at(m, p).christoffel
    assert np.max(np.abs(G - _christoffel_fd(m, p))) < 1e-6


@pytest.mark.parametrize("name", sorted(SURFACES))
def test_gauss_bonnet(name):
    m = SURFACES[name]()
    assert abs(geom.total_curvature(m) - 2 * math.pi * m.euler_characteristic) < 1e-6


def test_curvature_oracles(sphere, torus, flat):
    assert geom.metric_at(sphere, (1.0, 0.3)).K == pytest.approx(1.0, abs=1e-12)
    # torus of revolution: K = cos v / (r (R + r cos v))
    for v in (0.0, 1.0, math.pi):
        assert geom.metric_at(torus, (0.2, v)).K == pytest.approx(math.cos(v) / (2 + math.cos(v)), abs=1e-12)
    assert geom.metric_at(flat, (0.3, 0.4)).K == 0.0
    assert geom.total_area(sphere) == pytest.approx(4 * math.pi, rel=1e-9)
    assert geom.total_area(torus) == pytest.approx(8 * math.pi ** 2, rel=1e-9)


def test_dumbbell_neck_is_a_hyperbolic_parallel(dumbbell):
    assert geom.profile_radius(dumbbell, math.pi / 2) == pytest.approx(0.5)
    assert geom.metric_at(dumbbell, (math.pi / 2, 0.0)).K == pytest.approx(-3.0, rel=1e-9)
    cp = geom.critical_parallels(dumbbell)
    assert np.allclose(cp, [math.pi / 4, math.pi / 2, 3 * math.pi / 4], atol=1e-8)


def test_from_config():
    m = geom.from_config({"kind": "torus_of_revolution", "R": 3.0, "r": 1.0})
    assert m.params == {"R": 3.0, "r": 1.0}
    with pytest.raises(ConfigError):
        geom.from_config({"kind": "klein_bottle"})
    with pytest.raises(ConfigError):
        geom.from_config({"kind": "spheroid", "radius": 2.0})


def test_invalid_surfaces():
    with pytest.raises(ValueError):
        geom.torus_of_revolution(1.0, 2.0)
    with pytest.raises(ValueError):
        geom.sphere_of_revolution([1.0, 0.0, 2.0], [1.0])
