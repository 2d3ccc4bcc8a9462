import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from birkhoff_lab import csf
from birkhoff_lab.errors import BudgetExhausted, ConvexityViolation, EmbeddednessLost, PreconditionError


def test_circle_length_and_curvature(flat):
    c = csf.circle((0.5, 0.5), 0.1, n=256)
    k, _, L = csf.curvature_profile(flat, c)
    assert L == pytest.approx(2 * math.pi * 0.1, rel=1e-4)
    assert np.allclose(np.abs(k), 10.0, rtol=1e-3)


def test_equator_length_on_torus(torus):
    c = csf.coordinate_loop(torus, 1, math.pi, n=128)
    assert csf.length(torus, c) == pytest.approx(2 * math.pi, rel=1e-6)
    k, _, _ = csf.curvature_profile(torus, c)
    assert np.max(np.abs(k)) < 1e-6


@given(st.floats(0.05, 0.3), st.floats(0.01, 0.09))
def test_embeddedness(r, phase):
    # phase keeps both lobes' crossing strictly between samples (step is 2 pi / 64 ~ 0.098)
    circ = csf.circle((0.5, 0.5), r, n=64)
    assert csf.is_embedded(circ)
    th = np.linspace(0, 2 * math.pi, 64, endpoint=False) + phase
    eight = csf.DiscreteCurve(np.c_[0.5 + r * np.sin(th), 0.5 + r * np.sin(th) * np.cos(th)])
    assert not csf.is_embedded(eight)


def test_flat_circle_extinction(flat):
    r0 = 0.1
    out = csf.evolve(flat, csf.circle((0.5, 0.5), r0, n=64), csf.StepPolicy(n=64))
    assert out.kind == "Collapsed"
    assert abs(out.s / (r0 * r0 / 2) - 1) < 0.05
    assert out.monotone_violations == 0
    assert all(b <= a for a, b in zip(out.lengths, out.lengths[1:]))


def test_torus_loop_converges_to_inner_equator(torus, tmp_path):
    c0 = csf.class_loop(torus, 1, 0, n=64, amplitude=0.3, base=(0.0, 2.6))
    out = csf.evolve(torus, c0, csf.StepPolicy(n=64, eps_target=1e-4))
    assert out.kind == "ConvergedGeodesic"
    k, _, L = csf.curvature_profile(torus, out.curve)
    assert L == pytest.approx(2 * math.pi, abs=1e-3)
    assert np.max(np.abs(k)) < 1e-3
    assert out.monotone_violations == 0
    assert out.record.type.value == "Hyperbolic" and out.record.is_waist
    out.trace_csv(tmp_path / "trace.csv")
    assert (tmp_path / "trace.csv").read_text().splitlines()[0] == "s,L,max|k|,n"


def test_budget_and_region(torus, flat):
    c0 = csf.class_loop(torus, 1, 0, n=32, amplitude=0.3, base=(0.0, 2.6))
    with pytest.raises(BudgetExhausted):
        csf.evolve_or_raise(torus, c0, csf.StepPolicy(n=32, max_steps=3))
    region = csf.RegionSpec(((0.38, 0.62), (0.38, 0.62)), "box")
    with pytest.raises(PreconditionError):
        csf.evolve(flat, csf.circle((0.5, 0.5), 0.2, n=32), csf.StepPolicy(n=32), region=region)
    # a flat-torus sine loop decays inside its strip
    c = csf.class_loop(flat, 1, 0, n=32, amplitude=0.05, base=(0.0, 0.5))
    tight = csf.RegionSpec(((None, None), (0.44, 0.56)), "strip")
    out = csf.evolve(flat, c, csf.StepPolicy(n=32, max_steps=200), region=tight)
    assert out.kind in ("ConvergedGeodesic", "Running")
    # a parallel loop on the torus slides towards the inner equator and leaves its band
    band = csf.RegionSpec(((None, None), (0.8, 1.2)), "band")
    with pytest.raises(ConvexityViolation):
        csf.evolve(torus, csf.coordinate_loop(torus, 1, 1.0, n=32), csf.StepPolicy(n=32), region=band)


def test_rejects_non_embedded(flat):
    th = np.linspace(0, 2 * math.pi, 32, endpoint=False)
    eight = csf.DiscreteCurve(np.c_[0.5 + 0.1 * np.sin(th), 0.5 + 0.1 * np.sin(th) * np.cos(th)])
    with pytest.raises(EmbeddednessLost):
        csf.evolve(flat, eight)


def test_class_loop_needs_torus(sphere):
    with pytest.raises(PreconditionError):
        csf.class_loop(sphere, 1, 0)
