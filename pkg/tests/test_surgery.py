import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from birkhoff_lab import surgery
from birkhoff_lab.errors import InvalidPattern


def expected_census(G):
    """End curves of the chain: connected double cover; middle curves: two degree-1 circles."""
    out = {}
    for c in range(2 * G):
        for s in (1, -1):
            out[(c, s)] = [2] if c in (0, 2 * G - 1) else [1, 1]
    return dict(sorted(out.items()))


@pytest.mark.parametrize("G", range(1, 11))
def test_chain_surgery(G):
    topo = surgery.fried_surgery_topology(surgery.CurveConfiguration.chain(G))
    assert topo.connected and topo.orientable
    assert topo.genus == 1
    assert topo.euler_char == -8 * G + 4
    assert topo.n_boundary == 8 * G - 4
    assert topo.census() == expected_census(G)
    # the boundary double covers every oriented geodesic
    assert sum(d for _, _, d in topo.boundary_components) == 2 * (4 * G)


def test_chain_table_and_csv(tmp_path):
    rows = surgery.chain_table(10)
    assert [r["G"] for r in rows] == list(range(1, 11))
    text = surgery.chain_table_csv(rows, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "G,euler_char,genus,n_boundary"
    assert lines[5] == "5,-36,1,36"
    assert text.splitlines() == lines


def test_single_curve():
    topo = surgery.fried_surgery_topology(surgery.CurveConfiguration.from_matrix([[0]], genus=1))
    assert topo.euler_char == 0
    assert len(topo.components) == 2 and not topo.connected
    assert sorted(d for _, _, d in topo.boundary_components) == [1, 1, 1, 1]


def _random_matrix(draw, n):
    M = np.zeros((n, n), int)
    for i in range(n):
        for j in range(i + 1, n):
            M[i, j] = M[j, i] = draw(st.integers(0, 2))
    for i in range(n):
        if not M[i].any():
            j = (i + 1) % n
            M[i, j] = M[j, i] = 1
    return M


@st.composite
def configurations(draw):
    n = draw(st.integers(2, 5))
    M = _random_matrix(draw, n)
    perm = draw(st.permutations(range(n)))
    return M, list(perm)


@given(configurations())
def test_permutation_invariance(data):
    M, perm = data
    cfg = surgery.CurveConfiguration.from_matrix(M.tolist(), genus=2)
    a = surgery.fried_surgery_topology(cfg)
    b = surgery.fried_surgery_topology(cfg.permuted(perm))
    assert (a.euler_char, a.genus, a.n_boundary, a.connected) == (b.euler_char, b.genus, b.n_boundary, b.connected)
    assert sorted(a.census().values()) == sorted(b.census().values())
    assert a.euler_char == -4 * int(np.triu(M).sum())


def test_general_pattern():
    cfg = surgery.CurveConfiguration.from_matrix([[0, 2, 1], [2, 0, 3], [1, 3, 0]], genus=2)
    assert cfg.pattern_tag == "General"
    topo = surgery.fried_surgery_topology(cfg)
    assert (topo.euler_char, topo.genus, topo.n_boundary, topo.connected) == (-24, 9, 8, True)


def test_chain_autodetected():
    M = surgery.CurveConfiguration.chain(3).matrix
    assert surgery.CurveConfiguration.from_matrix(M.tolist(), genus=3).pattern_tag == "Chain2G"


@pytest.mark.parametrize("bad", [
    [[0, 1], [2, 0]],              # not symmetric
    [[1, 1], [1, 0]],              # self-intersection
    [[0, -1], [-1, 0]],            # negative count
    [[0, 1, 0], [1, 0, 0], [0, 0, 0]],  # isolated curve in a general pattern
])
def test_invalid_patterns(bad):
    with pytest.raises(InvalidPattern):
        surgery.CurveConfiguration.from_matrix(bad, genus=2)


def test_json_roundtrip():
    obj = {"genus": 2, "intersection_matrix": [[0, 1, 0, 0], [1, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0]]}
    cfg = surgery.CurveConfiguration.from_json(obj)
    assert cfg.pattern_tag == "Chain2G"
    d = json.loads(surgery.fried_surgery_topology(cfg).to_json())
    assert d["euler_char"] == -12 and d["n_boundary"] == 12 and d["genus"] == 1
    with pytest.raises(InvalidPattern):
        surgery.CurveConfiguration.from_json({**obj, "colour": "red"})
