"""Acceptance criteria, each at its stated tolerance; every test prints one PASS/FAIL line."""
import json
import math
import time

import numpy as np
import pytest

from birkhoff_lab import cli, csf, finder, flow, geom, section, surgery


@pytest.fixture
def verdict(capsys):
    def say(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number} {title}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        assert ok, detail
    return say


def test_1_fried_surgery_table(verdict):
    t0 = time.perf_counter()
    rows = []
    for G in range(1, 11):
        topo = surgery.fried_surgery_topology(surgery.CurveConfiguration.chain(G))
        census = topo.census()
        ends = {0, 2 * G - 1}
        census_ok = all(census[(c, s)] == ([2] if c in ends else [1, 1]) for c in range(2 * G) for s in (1, -1))
        rows.append(topo.connected and topo.genus == 1 and topo.euler_char == -8 * G + 4
                    and topo.n_boundary == 8 * G - 4 and census_ok)
    dt = time.perf_counter() - t0
    verdict(1, "Fried surgery table G=1..10", all(rows) and dt < 1.0, f"rows ok={sum(rows)}/10 runtime={dt:.3f}s")


def test_2_conjugate_points(verdict):
    sphere, torus, flat = geom.round_sphere(), geom.torus_of_revolution(2.0, 1.0), geom.flat_torus()
    t_s = flow.conjugate_points(sphere, flow.UnitTangent.from_angle(sphere, (1.1, 0.4), 0.8), 4.0)[0]
    t_t = flow.conjugate_points(torus, flow.UnitTangent.normalized(torus, (0.0, 0.0), (1.0, 0.0)), 8.0)[0]
    t_f = flow.conjugate_points(flat, flow.UnitTangent.from_angle(flat, (0.1, 0.2), 0.4), 50.0)
    ok = abs(t_s - math.pi) <= 1e-4 and abs(t_t - math.pi * math.sqrt(3)) <= 1e-3 and t_f == []
    verdict(2, "conjugate points", ok,
            f"sphere={t_s:.10f} torus={t_t:.10f} (pi*sqrt3={math.pi * math.sqrt(3):.10f}) flat={t_f}")


def test_3_floquet(verdict):
    torus = geom.torus_of_revolution(2.0, 1.0)
    inner = flow.make_record(torus, flow.UnitTangent.normalized(torus, (0.0, math.pi), (1.0, 0.0)), 2 * math.pi)
    outer = flow.make_record(torus, flow.UnitTangent.normalized(torus, (0.0, 0.0), (1.0, 0.0)), 6 * math.pi)
    sigma = abs(inner.floquet[0].real)
    rel = abs(sigma / math.exp(2 * math.pi) - 1)
    det = abs(np.linalg.det(inner.monodromy) - 1)
    rot = flow.rotation_angle(outer)
    want = (2 * math.pi * math.sqrt(3)) % (2 * math.pi)
    ok = (inner.type is flow.OrbitType.HYPERBOLIC and rel < 1e-3 and det <= 1e-6
          and outer.type is flow.OrbitType.ELLIPTIC and abs(rot - want) <= 1e-3)
    verdict(3, "Floquet data", ok, f"sigma rel err={rel:.2e} |det-1|={det:.1e} rotation={rot:.6f} want={want:.6f}")


def test_4_csf(verdict):
    t0 = time.perf_counter()
    torus, flat = geom.torus_of_revolution(2.0, 1.0), geom.flat_torus()
    out = csf.evolve(torus, csf.class_loop(torus, 1, 0, n=64, amplitude=0.3, base=(0.0, 2.6)),
                     csf.StepPolicy(n=64, eps_target=1e-4))
    k, _, L = csf.curvature_profile(torus, out.curve)
    kmax = float(np.max(np.abs(k)))
    Ls = out.lengths
    monotone = all(b <= a for a, b in zip(Ls, Ls[1:]))
    r0 = 0.1
    circ = csf.evolve(flat, csf.circle((0.5, 0.5), r0, n=64), csf.StepPolicy(n=64))
    ratio = circ.s / (r0 * r0 / 2)
    dt = time.perf_counter() - t0
    ok = (out.kind == "ConvergedGeodesic" and abs(L - 2 * math.pi) <= 1e-3 and kmax < 1e-3 and monotone
          and circ.kind == "Collapsed" and abs(ratio - 1) <= 0.05 and dt < 60)
    verdict(4, "CSF monotonicity and convergence", ok,
            f"L={L:.8f} kmax={kmax:.1e} monotone={monotone} steps={len(Ls) - 1} extinction ratio={ratio:.4f} "
            f"runtime={dt:.1f}s")


@pytest.mark.slow
def test_5_theorem_b_spheroid(verdict, tmp_path):
    t0 = time.perf_counter()
    codes = [cli.run("theorem_b_spheroid", threads=th, out=str(tmp_path / f"t{th}")) for th in (1, 2)]
    reps = [json.loads((tmp_path / f"t{th}" / "theorem_b_spheroid" / "report.json").read_text()) for th in (1, 2)]
    dt = time.perf_counter() - t0
    res = reps[0]["steps"][1]["result"]
    same = cli.strip_timing(reps[0]) == cli.strip_timing(reps[1])
    ok = (codes == [0, 0] and res["n_samples"] == 10000 and res["n_returned"] == 10000 and res["max_tau"] <= 6.0
          and same and dt < 300)
    verdict(5, "Theorem B desk check (spheroid)", ok,
            f"returned={res['n_returned']}/{res['n_samples']} max_tau={res['max_tau']:.4f} "
            f"identical across threads={same} runtime={dt:.1f}s")


@pytest.mark.slow
def test_6_torus_complete_system(verdict):
    t0 = time.perf_counter()
    m = geom.torus_of_revolution(2.0, 1.0)
    system = finder.assemble_complete_system(m, finder.genus_chain(m))
    rep = section.trapped_sets(m, system, 10000, 200.0, seed=7)
    ver = section.verify_birkhoff(m, section.system_annuli(m, system.all), 10000, 200.0, seed=7)
    dt = time.perf_counter() - t0
    ok = (len(rep.trapped_forward) == 0 and len(rep.trapped_backward) == 0 and ver["is_section_evidence"]
          and math.isfinite(ver["max_tau"]) and dt < 600)
    verdict(6, "complete system on the torus (Theorem A regime)", ok,
            f"trapped fwd/bwd={len(rep.trapped_forward)}/{len(rep.trapped_backward)} "
            f"budget={rep.n_budget_forward}/{rep.n_budget_backward} max_tau={ver['max_tau']:.4f} runtime={dt:.1f}s")


@pytest.mark.slow
def test_7_dumbbell_limit_subcollection(verdict):
    m = geom.dumbbell_sphere(0.5)
    system = finder.assemble_complete_system(m, finder.separating_chain(m, math.pi / 4))
    names = [g.name for g in system.limit_sub]
    neck = system.limit_sub[0]
    radius = geom.rotation_radius(m, neck.z0.base)
    rep = section.trapped_sets(m, system, 2000, 200.0, seed=11)
    wit = rep.witnesses + rep.trapped_forward
    late = max(w["late_distance"] for w in wit)
    # independent oracle: Clairaut constant of each witness along the unreduced flow
    c_err = 0.0
    for w in rep.witnesses:
        tr = flow.integrate(m, flow.UnitTangent(tuple(w["state"][:2]), tuple(w["state"][2:])), 8.0, with_jacobi=False)
        _, ys = tr.uniform(200)
        c_err = max(c_err, max(abs(abs(geom.clairaut_constant(m, y)) - radius) for y in ys))
    ok = (names == ["waist1"] and abs(neck.length - math.pi) < 1e-6 and len(wit) > 0 and late < 1e-3
          and c_err < 1e-4 and not any(w["crossed"] for w in rep.witnesses))
    verdict(7, "dumbbell limit subcollection (Theorem D regime)", ok,
            f"limit_sub={names} witnesses={len(wit)} max late distance={late:.1e} max Clairaut residual={c_err:.1e}")


def test_8_return_map_area(verdict):
    sphere, flat = geom.round_sphere(), geom.flat_torus()
    eq = section.BirkhoffAnnulus(sphere, finder.parallel_record(sphere, math.pi / 2, "eq"))
    a = section.system_annuli(flat, [
        flow.make_record(flat, flow.UnitTangent.normalized(flat, (0.0, 0.0), (1.0, 0.0)), 1.0, "a"),
        flow.make_record(flat, flow.UnitTangent.normalized(flat, (0.0, 0.0), (0.0, 1.0)), 1.0, "b")])
    r1 = section.return_map_area_check(sphere, eq, grid=(32, 32))
    r2 = section.return_map_area_check(flat, a[0], grid=(32, 32), targets=a)
    ok = r1["max_defect"] < 1e-3 and r2["max_defect"] < 1e-3 and r1["evaluated"] == r2["evaluated"] == 1024
    verdict(8, "return-map area invariance", ok,
            f"sphere max defect={r1['max_defect']:.1e} flat max defect={r2['max_defect']:.1e}")


def test_9_property_suites(verdict):
    notes = []
    surfaces = [geom.round_sphere(), geom.spheroid(0.9), geom.dumbbell_sphere(), geom.torus_of_revolution(),
                geom.conformal_torus([(1, 0, 0.05, 0.0), (0, 1, 0.0, 0.03)]), geom.flat_torus()]
    gb = max(abs(geom.total_curvature(m) - 2 * math.pi * m.euler_characteristic) for m in surfaces)
    notes.append(f"gauss-bonnet={gb:.1e}")
    drift = 0.0
    rng = np.random.default_rng(0)
    for m in surfaces[:4]:
        for y in section.sample_unit_tangents(m, 4, seed=int(rng.integers(1 << 30))):
            tr = flow.integrate(m, flow.UnitTangent.from_state(y), 100.0, with_jacobi=False)
            _, ys = tr.uniform(1000)
            c = np.array([geom.clairaut_constant(m, q) for q in ys])
            drift = max(drift, float(np.max(np.abs(c - c[0]))))
    notes.append(f"clairaut drift={drift:.1e}")
    torus, dumbbell = geom.torus_of_revolution(), geom.dumbbell_sphere()
    waists = [flow.make_record(torus, flow.UnitTangent.normalized(torus, (0.0, math.pi), (1.0, 0.0)), 2 * math.pi),
              finder.parallel_record(dumbbell, math.pi / 2)]
    minimal = all(flow.local_minimality(m, w, n_trials=50, seed=5)[0] for m, w in zip((torus, dumbbell), waists))
    notes.append(f"waist minimality={minimal}")
    three = geom.three_bulge_sphere()
    conj = [finder.parallel_record(dumbbell, math.pi / 4), finder.parallel_record(dumbbell, 3 * math.pi / 4),
            finder.parallel_record(three, math.pi / 2)]
    bangert = all(r.has_conjugate_points for r in conj)
    for rec, m in zip(conj, (dumbbell, dumbbell, three)):
        bangert &= all(ok for _, ok in finder.bangert_check(m, rec).values())
    notes.append(f"bangert={bangert}")
    rng = np.random.default_rng(1)
    perm_ok = True
    for _ in range(20):
        n = int(rng.integers(2, 6))
        M = np.triu(rng.integers(0, 3, (n, n)), 1)
        M = M + M.T
        for i in range(n):
            if not M[i].any():
                j = (i + 1) % n
                M[i, j] = M[j, i] = 1
        cfg = surgery.CurveConfiguration.from_matrix(M.tolist(), genus=2)
        a = surgery.fried_surgery_topology(cfg)
        b = surgery.fried_surgery_topology(cfg.permuted(list(rng.permutation(n))))
        perm_ok &= (a.euler_char, a.genus, a.n_boundary, a.connected) == (b.euler_char, b.genus, b.n_boundary,
                                                                          b.connected)
    notes.append(f"surgery permutation invariance={perm_ok}")
    ok = gb < 1e-6 and drift < 1e-8 and minimal and bangert and perm_ok
    verdict(9, "property suites", ok, " ".join(notes))
