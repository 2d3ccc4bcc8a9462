import math

import numpy as np
import pytest

from birkhoff_lab import flow, geom, kernels, section

from conftest import SURFACES

needs_c = pytest.mark.skipif("cython" not in kernels.available(), reason="compiled kernels not built")


def test_backend_selection():
    assert kernels.IMPLEMENTATION in ("cython", "python")
    assert kernels.get("python").IMPLEMENTATION == "python"
    assert kernels.get().IMPLEMENTATION == kernels.IMPLEMENTATION


@needs_c
@pytest.mark.parametrize("name", sorted(SURFACES))
def test_metric_parity(name):
    m = SURFACES[name]()
    kind, par = m.kernel_params()
    rng = np.random.default_rng(0)
    (l0, h0), (l1, h1) = m.chart_domain
    for _ in range(10):
        u = l0 + 0.05 + (h0 - l0 - 0.1) * rng.random()
        v = l1 + (h1 - l1) * rng.random()
        a = np.asarray(kernels.get("cython").metric(kind, par, u, v))
        b = np.asarray(kernels.get("python").metric(kind, par, u, v))
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_c
@pytest.mark.parametrize("name", sorted(SURFACES))
def test_integrate_parity(name):
    m = SURFACES[name]()
    for y in section.sample_unit_tangents(m, 3, seed=4):
        a = flow.run_kernel(m, y, 10.0, jzeros=True, impl="cython")
        b = flow.run_kernel(m, y, 10.0, jzeros=True, impl="python")
        assert a[0] == b[0]
        assert np.max(np.abs(a[2] - b[2])) < 1e-9
        assert np.allclose(a[4], b[4], atol=1e-9)


@pytest.mark.parametrize("impl", kernels.available())
def test_great_circle_accuracy(sphere, impl):
    # a great circle returns to its start after 2 pi; Jacobi pair returns to the identity
    z = flow.UnitTangent.from_angle(sphere, (1.2, 0.4), 0.7)
    y = flow.run_kernel(sphere, z.state(), 2 * math.pi, impl=impl)[2]
    assert flow.closure_gap(sphere, z.state(), y) < 1e-9
    assert np.allclose(y[4:], [1, 0, 0, 1], atol=1e-9)


def test_section_event_location(sphere):
    # equator crossing of a great circle from latitude 1.2 heading south-east
    z = flow.UnitTangent.from_angle(sphere, (1.2, 0.0), 0.0)
    rows = np.array([[0, math.pi / 2, 0.0, 1.0]])
    st, t, y, hit = flow.run_kernel(sphere, z.state(), 10.0, sections=rows)[:4]
    assert st == 1 and hit == 0
    assert t == pytest.approx(math.pi / 2 - 1.2, abs=1e-10)
    assert y[0] == pytest.approx(math.pi / 2, abs=1e-12)


def test_pole_transit_meridian(sphere):
    # a meridian crosses both poles and closes after 2 pi
    z = flow.UnitTangent.normalized(sphere, (1.0, 0.3), (1.0, 0.0))
    st, t, y = flow.run_kernel(sphere, z.state(), 2 * math.pi)[:3]
    assert st == 0 and t == pytest.approx(2 * math.pi)
    assert flow.closure_gap(sphere, z.state(), y) < 1e-9
    zeros = flow.run_kernel(sphere, z.state(), 7.0, jzeros=True)[4]
    assert zeros == pytest.approx([math.pi, 2 * math.pi], abs=1e-6)


def test_pole_transit_disabled_raises(sphere):
    from birkhoff_lab.errors import PoleTransit
    z = flow.UnitTangent.normalized(sphere, (1.0, 0.3), (-1.0, 0.0))
    with pytest.raises(PoleTransit):
        flow.run_kernel(sphere, z.state(), 3.0, pole_hop=False)


def test_near_polar_clairaut_conserved():
    m = geom.spheroid(0.9)
    z = flow.UnitTangent.from_angle(m, (1.0, 0.3), math.pi / 2 - 1e-4)
    tr = flow.integrate(m, z, 30.0)
    _, ys = tr.uniform(2000)
    c = [geom.clairaut_constant(m, y) for y in ys]
    assert max(c) - min(c) < 1e-9
    assert tr.energy_drift() < 1e-10
