"""``birkhoff-lab`` command line: scenario runner, listing and surgery reports.

Scenarios are TOML files (see README for the grammar). A run writes
``<out>/<scenario>/report.json`` plus any CSV/SVG artefacts requested by the
steps. Exit codes: 0 all assertions pass, 1 an assertion failed, 2 bad
configuration, 3 a step failed at runtime.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np
import tomli

from . import __version__, csf, finder, flow, geom, kernels, section, surgery
from .errors import BirkhoffLabError, ConfigError, PreconditionError

ENV_OUT = "BIRKHOFF_LAB_OUT"
DEFAULT_OUT = "birkhoff-lab-out"

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

TOP_KEYS = {"name", "anchor", "description", "seed", "surface", "steps"}
COMMON_STEP_KEYS = {"op", "id", "expect"}
MONTE_CARLO = {"verify_birkhoff", "trapped_sets", "local_minimality"}


class AssertionFailed(Exception):
    pass


class RuntimeFailure(Exception):
    pass


# --- scenario loading ------------------------------------------------------------------------

def _scenario_dir():
    return resources.files("birkhoff_lab") / "scenarios"


def bundled() -> dict:
    out = {}
    for f in _scenario_dir().iterdir():
        if f.name.endswith(".toml"):
            out[f.name[:-5]] = f
    return dict(sorted(out.items()))


def load(name_or_path: str) -> tuple[dict, str]:
    p = Path(name_or_path)
    if p.suffix == ".toml" and p.exists():
        text = p.read_text()
    else:
        table = bundled()
        if name_or_path not in table:
            raise ConfigError(f"unknown scenario {name_or_path!r}; try `birkhoff-lab list`")
        text = table[name_or_path].read_text()
    try:
        cfg = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc
    validate(cfg)
    return cfg, text


def _num(x, what, positive=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{what} must be a number")
    if positive and not x > 0:
        raise ConfigError(f"{what} must be positive")
    return x


def validate(cfg: dict):
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    for k in ("name", "anchor"):
        if not isinstance(cfg.get(k), str) or not cfg[k]:
            raise ConfigError(f"missing {k!r}")
    if "seed" in cfg and (isinstance(cfg["seed"], bool) or not isinstance(cfg["seed"], int)):
        raise ConfigError("seed must be an integer")
    steps = cfg.get("steps")
    if not isinstance(steps, list) or not steps:
        raise ConfigError("a scenario needs at least one [[steps]] entry")
    ids = set()
    for k, st in enumerate(steps):
        op = st.get("op")
        if op not in OPS:
            raise ConfigError(f"step {k}: unknown op {op!r}")
        allowed = COMMON_STEP_KEYS | OPS[op][1]
        bad = set(st) - allowed
        if bad:
            raise ConfigError(f"step {k} ({op}): unknown keys {sorted(bad)}")
        sid = st.get("id", f"{k}_{op}")
        if sid in ids:
            raise ConfigError(f"duplicate step id {sid!r}")
        ids.add(sid)
        if op in MONTE_CARLO and "seed" not in st and "seed" not in cfg:
            raise ConfigError(f"step {k} ({op}) is Monte-Carlo and needs a seed")
        if "seed" in st and (isinstance(st["seed"], bool) or not isinstance(st["seed"], int)):
            raise ConfigError(f"step {k}: seed must be an integer")
        for field, spec in st.get("expect", {}).items():
            if isinstance(spec, dict):
                bad = set(spec) - {"min", "max", "value", "tol", "rel_tol", "equals"}
                if bad:
                    raise ConfigError(f"step {k}: unknown expectation keys {sorted(bad)} for {field!r}")
                for t in ("tol", "rel_tol"):
                    if t in spec:
                        _num(spec[t], f"step {k}: {field}.{t}", positive=True)
                if ("tol" in spec or "rel_tol" in spec) and "value" not in spec:
                    raise ConfigError(f"step {k}: {field} has a tolerance but no value")
        for key in ("T", "T_budget", "ell_bound", "tol", "amplitude", "delta"):
            if key in st:
                _num(st[key], f"step {k}: {key}", positive=True)
    if "surface" in cfg and not isinstance(cfg["surface"], dict):
        raise ConfigError("[surface] must be a table")


# --- expectations ----------------------------------------------------------------------------------

def _lookup(result, path):
    cur = result
    for part in path.split("."):
        if isinstance(cur, dict) and part in cur:
            cur = cur[part]
        elif isinstance(cur, list) and part.isdigit() and int(part) < len(cur):
            cur = cur[int(part)]
        else:
            raise KeyError(path)
    return cur


def check_expectations(result, expect) -> list[dict]:
    rows = []
    for field, spec in expect.items():
        try:
            actual = _lookup(result, field)
        except KeyError:
            rows.append({"field": field, "expect": spec, "actual": None, "passed": False})
            continue
        ok = True
        if not isinstance(spec, dict):
            ok = actual == spec
        else:
            if "equals" in spec:
                ok &= actual == spec["equals"]
            if actual is None:
                ok = False
            else:
                if "min" in spec:
                    ok &= actual >= spec["min"]
                if "max" in spec:
                    ok &= actual <= spec["max"]
                if "value" in spec:
                    if "tol" in spec:
                        ok &= abs(actual - spec["value"]) <= spec["tol"]
                    elif "rel_tol" in spec:
                        ok &= abs(actual - spec["value"]) <= spec["rel_tol"] * abs(spec["value"])
                    else:
                        ok &= actual == spec["value"]
        rows.append({"field": field, "expect": spec, "actual": actual, "passed": bool(ok)})
    return rows


def _clean(x):
    """JSON-ready copy with floats rounded to 12 significant digits."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if not math.isfinite(v):
            return str(v)
        return float(f"{v:.12g}")
    if isinstance(x, complex):
        return [_clean(x.real), _clean(x.imag)]
    return x


# --- pipeline context ----------------------------------------------------------------------------------

class Context:
    def __init__(self, cfg, out_dir: Path, threads: int):
        self.cfg = cfg
        self.out = out_dir
        self.threads = threads
        self.surface = geom.from_config(cfg["surface"]) if "surface" in cfg else None
        self.geodesics: dict[str, flow.ClosedGeodesicRecord] = {}
        self.chain = None
        self.system = None
        self.artifacts: list[str] = []

    def need_surface(self):
        if self.surface is None:
            raise ConfigError("this step needs a [surface] table")
        return self.surface

    def geodesic(self, name):
        if name not in self.geodesics:
            raise ConfigError(f"unknown geodesic {name!r}; define it in an earlier step")
        return self.geodesics[name]

    def seed(self, st):
        return int(st.get("seed", self.cfg.get("seed")))

    def path(self, name):
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts.append(name)
        return self.out / name


def _record_summary(m, rec):
    d = rec.to_dict()
    d.pop("samples", None)
    mult = [complex(x) for x in rec.floquet]
    d["trace"] = float(np.trace(rec.monodromy))
    d["det"] = float(np.linalg.det(rec.monodromy))
    d["sigma_max"] = max(abs(x) for x in mult)
    d["rotation"] = flow.rotation_angle(rec) if rec.type is flow.OrbitType.ELLIPTIC else None
    d["first_conjugate"] = rec.conjugate_times[0] if rec.conjugate_times else None
    return d


def _start_state(m, st):
    if "start" not in st:
        raise ConfigError("missing start = [u, v]")
    p = geom.reduce_point(m, st["start"])
    if "dir" in st:
        return flow.UnitTangent.normalized(m, p, st["dir"])
    return flow.UnitTangent.from_angle(m, p, float(st.get("angle", 0.0)))


# --- operations ------------------------------------------------------------------------------------------

def op_geodesic(ctx, st):
    m = ctx.need_surface()
    kind = st.get("kind", "parallel")
    name = st.get("name") or st.get("id")
    if not name:
        raise ConfigError("geodesic steps need a name")
    if kind == "parallel":
        rec = finder.parallel_record(m, float(st["level"]), name, int(st.get("orientation", 1)))
    elif kind == "closed":
        z = _start_state(m, st)
        z, L = flow.polish_closed(m, z, float(st["length"]))
        rec = flow.make_record(m, z, L, name)
    elif kind == "class":
        rec = finder.class_minimizer(m, tuple(st["homotopy_class"]), name=name)
    elif kind == "minmax":
        rec = finder.minmax_geodesic(m, ctx.geodesic(st["w1"]), ctx.geodesic(st["w2"]),
                                     n_curves=int(st.get("n_curves", 33)), name=name)
    else:
        raise ConfigError(f"unknown geodesic kind {kind!r}")
    ctx.geodesics[name] = rec
    return _record_summary(m, rec)


def op_conjugate_points(ctx, st):
    m = ctx.need_surface()
    z = ctx.geodesic(st["geodesic"]).z0 if "geodesic" in st else _start_state(m, st)
    times = flow.conjugate_points(m, z, float(st["T"]), max_count=int(st.get("max_count", 64)))
    return {"times": times, "count": len(times), "first": times[0] if times else None}


def op_floquet(ctx, st):
    m = ctx.need_surface()
    rec = ctx.geodesic(st["geodesic"])
    return _record_summary(m, rec)


def op_trajectory(ctx, st):
    m = ctx.need_surface()
    z = _start_state(m, st)
    T = float(st["T"])
    tr = flow.integrate(m, z, T)
    n = int(st.get("n", 1000))
    fname = st.get("csv", f"{st.get('id', 'trajectory')}.csv")
    tr.to_csv(ctx.path(fname), n=n)
    res = {"energy_drift": tr.energy_drift(), "csv": fname, "end": tr.end[:4].tolist()}
    if m.is_revolution:
        ts, ys = tr.uniform(n)
        c = np.array([geom.clairaut_constant(m, y) for y in ys])
        res["clairaut_drift"] = float(np.max(np.abs(c - c[0])))
    if st.get("svg"):
        ts, ys = tr.uniform(n)
        svg = f"{st.get('id', 'trajectory')}.svg"
        write_svg(ys[:, :2], ctx.path(svg), m)
        res["svg"] = svg
    return res


def _curve_from(ctx, m, spec, n):
    kind = spec.get("type")
    if kind == "class_loop":
        p, q = spec["homotopy_class"]
        return csf.class_loop(m, int(p), int(q), n=n, amplitude=float(spec.get("amplitude", 0.0)),
                              base=tuple(spec.get("base", (0.0, 0.0))))
    if kind == "circle":
        return csf.circle(tuple(spec["center"]), float(spec["radius"]), n=n)
    if kind == "coordinate_loop":
        return csf.coordinate_loop(m, int(spec["index"]), float(spec["level"]),
                                   amplitude=float(spec.get("amplitude", 0.0)), mode=int(spec.get("mode", 1)), n=n)
    raise ConfigError(f"unknown curve type {kind!r}")


def op_csf(ctx, st):
    m = ctx.need_surface()
    pol = csf.StepPolicy(n=int(st.get("n", 256)), cfl=float(st.get("cfl", 0.4)),
                         eps_target=float(st.get("eps_target", 1e-3)), max_steps=int(st.get("max_steps", 200000)),
                         s_max=float(st.get("s_max", math.inf)))
    c0 = _curve_from(ctx, m, st["curve"], pol.n)
    out = csf.evolve(m, c0, pol, name=st.get("name", ""))
    fname = st.get("csv", f"{st.get('id', 'csf')}_trace.csv")
    out.trace_csv(ctx.path(fname))
    L = np.asarray(out.lengths)
    k, _, Lc = csf.curvature_profile(m, out.curve)
    res = {"kind": out.kind, "s": out.s, "steps": out.steps, "halvings": out.halvings,
           "initial_length": float(L[0]), "final_length": float(Lc), "kmax": float(np.max(np.abs(k))),
           "monotone_violations": out.monotone_violations,
           "monotone_fraction": 1.0 - out.monotone_violations / max(1, len(L) - 1), "csv": fname}
    if "radius" in st["curve"]:
        r0 = float(st["curve"]["radius"])
        res["extinction_ratio"] = out.s / (r0 * r0 / 2)
    if out.record is not None:
        res["record"] = _record_summary(m, out.record)
        if st.get("name"):
            ctx.geodesics[st["name"]] = out.record
    if st.get("svg"):
        svg = f"{st.get('id', 'csf')}.svg"
        write_svg(out.curve.points, ctx.path(svg), m)
        res["svg"] = svg
    return res


def op_genus_chain(ctx, st):
    m = ctx.need_surface()
    ctx.chain = finder.genus_chain(m)
    for g in ctx.chain.geodesics:
        ctx.geodesics[g.name] = g
    return {"chain": ctx.chain.to_dict(), "check_chain": ctx.chain.check_chain()}


def op_separating_chain(ctx, st):
    m = ctx.need_surface()
    ctx.chain = finder.separating_chain(m, float(st["level"]), st.get("name", "gamma1"))
    for g in ctx.chain.geodesics:
        ctx.geodesics[g.name] = g
    return {"chain": ctx.chain.to_dict()}


def op_assemble_system(ctx, st):
    m = ctx.need_surface()
    if ctx.chain is None:
        raise ConfigError("assemble_system needs an earlier chain step")
    ctx.system = finder.assemble_complete_system(m, ctx.chain)
    for g in ctx.system.all:
        ctx.geodesics.setdefault(g.name, g)
    d = ctx.system.to_dict()
    d["limit_sub_names"] = [g.name for g in ctx.system.limit_sub]
    d["n_geodesics"] = len(ctx.system.all)
    return d


def op_system(ctx, st):
    all_ = [ctx.geodesic(n) for n in st["geodesics"]]
    lim = [ctx.geodesic(n) for n in st.get("limit_sub", [])]
    ctx.system = finder.CompleteSystem(all_, lim)
    return {"geodesics": list(st["geodesics"]), "limit_sub_names": list(st.get("limit_sub", []))}


def _annuli(ctx, st):
    m = ctx.need_surface()
    if "geodesics" in st:
        return section.system_annuli(m, [ctx.geodesic(n) for n in st["geodesics"]])
    if ctx.system is None:
        raise ConfigError("no geodesics given and no system assembled")
    return section.system_annuli(m, ctx.system.all)


def op_verify_birkhoff(ctx, st):
    m = ctx.need_surface()
    rep = section.verify_birkhoff(m, _annuli(ctx, st), int(st["n_samples"]), float(st["ell_bound"]),
                                  ctx.seed(st), threads=ctx.threads, T_budget=st.get("T_budget"),
                                  bins=int(st.get("bins", 32)))
    fname = st.get("csv", f"{st.get('id', 'verify_birkhoff')}_histogram.csv")
    section.histogram_csv(rep, ctx.path(fname))
    rep["csv"] = fname
    return rep


def op_trapped_sets(ctx, st):
    m = ctx.need_surface()
    if ctx.system is None:
        raise ConfigError("trapped_sets needs a system step first")
    rep = section.trapped_sets(m, ctx.system, int(st["n_samples"]), float(st["T_budget"]), ctx.seed(st),
                               threads=ctx.threads, witnesses_per_side=int(st.get("witnesses_per_side", 8)))
    d = rep.to_dict()
    w = rep.witnesses
    d["limit_sub_names"] = [g.name for g in ctx.system.limit_sub]
    d["max_witness_late_distance"] = max((x["late_distance"] for x in w), default=None)
    d["max_witness_clairaut_residual"] = max((x["clairaut_residual"] for x in w), default=None)
    d["witnesses_crossed"] = sum(1 for x in w if x["crossed"])
    d["n_anomalies"] = len(rep.anomalies)
    return d


def op_return_map_area(ctx, st):
    m = ctx.need_surface()
    rec = ctx.geodesic(st["geodesic"])
    a = section.BirkhoffAnnulus(m, rec, int(st.get("orientation", 1)))
    targets = None
    if "targets" in st:
        targets = section.system_annuli(m, [ctx.geodesic(n) for n in st["targets"]])
    grid = tuple(st.get("grid", (32, 32)))
    return section.return_map_area_check(m, a, grid=grid, targets=targets,
                                         T_budget=float(st.get("T_budget", 60.0)))


def op_homoclinic(ctx, st):
    m = ctx.need_surface()
    w = ctx.geodesic(st["waist"])
    pts = section.detect_homoclinic(m, w, int(st.get("side_u", 1)), int(st.get("side_s", 1)),
                                    T_budget=float(st.get("T_budget", 40.0)), n_seeds=int(st.get("n_seeds", 64)))
    return {"count": len(pts), "points": [{"state": list(p.base + p.dir), "theta": p.theta,
                                            "forward_distance": p.forward_distance,
                                            "backward_distance": p.backward_distance} for p in pts]}


def op_local_minimality(ctx, st):
    m = ctx.need_surface()
    rec = ctx.geodesic(st["geodesic"])
    ok, worst = flow.local_minimality(m, rec, int(st.get("n_trials", 50)), float(st.get("amplitude", 1e-3)),
                                      ctx.seed(st))
    return {"ok": ok, "worst_gain": worst}


def op_bangert(ctx, st):
    m = ctx.need_surface()
    names = st.get("geodesics") or [n for n, g in ctx.geodesics.items() if g.has_conjugate_points]
    rows = {}
    for n in names:
        r = finder.bangert_check(m, ctx.geodesic(n))
        rows[n] = {side: {"shortest": L, "ok": ok} for side, (L, ok) in r.items()}
    return {"checked": rows, "all_ok": all(v["ok"] for r in rows.values() for v in r.values()),
            "count": len(rows)}


def op_gauss_bonnet(ctx, st):
    m = ctx.need_surface()
    n = int(st.get("n", 256))
    tot = geom.total_curvature(m, n)
    expect = 2 * math.pi * m.euler_characteristic
    return {"total_curvature": tot, "expected": expect, "error": abs(tot - expect), "area": geom.total_area(m, n)}


def op_chain_table(ctx, st):
    rows = surgery.chain_table(int(st["G_max"]))
    fname = st.get("csv", "chain_table.csv")
    surgery.chain_table_csv(rows, ctx.path(fname))
    formula = all(r["euler_char"] == -8 * r["G"] + 4 and r["genus"] == 1 and r["n_boundary"] == 8 * r["G"] - 4
                  and r["connected"] for r in rows)
    return {"rows": rows, "formula_ok": formula, "csv": fname}


def op_surgery(ctx, st):
    try:
        cfg = surgery.CurveConfiguration.from_matrix(st["intersection_matrix"], int(st.get("genus", 0)),
                                                     st.get("pattern_tag"))
    except PreconditionError as exc:
        raise ConfigError(str(exc)) from exc
    topo = surgery.fried_surgery_topology(cfg)
    fname = st.get("json", f"{st.get('id', 'surgery')}_topology.json")
    ctx.path(fname).write_text(topo.to_json() + "\n")
    d = topo.to_dict()
    d["json"] = fname
    return d


def op_clairaut_drift(ctx, st):
    m = ctx.need_surface()
    z = _start_state(m, st)
    tr = flow.integrate(m, z, float(st["T"]), with_jacobi=False)
    ts, ys = tr.uniform(int(st.get("n", 2000)))
    c = np.array([geom.clairaut_constant(m, y) for y in ys])
    return {"drift": float(np.max(np.abs(c - c[0]))), "energy_drift": tr.energy_drift()}


_GEO = {"kind", "name", "level", "orientation", "start", "dir", "angle", "length", "homotopy_class", "w1", "w2",
        "n_curves"}
OPS = {
    "geodesic": (op_geodesic, _GEO),
    "conjugate_points": (op_conjugate_points, {"geodesic", "start", "dir", "angle", "T", "max_count"}),
    "floquet": (op_floquet, {"geodesic"}),
    "trajectory": (op_trajectory, {"start", "dir", "angle", "T", "n", "csv", "svg"}),
    "csf": (op_csf, {"curve", "n", "cfl", "eps_target", "max_steps", "s_max", "csv", "svg", "name"}),
    "genus_chain": (op_genus_chain, set()),
    "separating_chain": (op_separating_chain, {"level", "name"}),
    "assemble_system": (op_assemble_system, set()),
    "system": (op_system, {"geodesics", "limit_sub"}),
    "verify_birkhoff": (op_verify_birkhoff, {"geodesics", "n_samples", "ell_bound", "T_budget", "bins", "seed",
                                             "csv"}),
    "trapped_sets": (op_trapped_sets, {"n_samples", "T_budget", "seed", "witnesses_per_side"}),
    "return_map_area": (op_return_map_area, {"geodesic", "orientation", "targets", "grid", "T_budget"}),
    "homoclinic": (op_homoclinic, {"waist", "side_u", "side_s", "T_budget", "n_seeds"}),
    "local_minimality": (op_local_minimality, {"geodesic", "n_trials", "amplitude", "seed"}),
    "bangert": (op_bangert, {"geodesics"}),
    "gauss_bonnet": (op_gauss_bonnet, {"n"}),
    "chain_table": (op_chain_table, {"G_max", "csv"}),
    "surgery": (op_surgery, {"genus", "intersection_matrix", "pattern_tag", "json"}),
    "clairaut_drift": (op_clairaut_drift, {"start", "dir", "angle", "T", "n"}),
}


# --- SVG helper --------------------------------------------------------------------------------------------

def write_svg(points, path, m=None, size=400):
    """Polyline of chart points, scaled to the chart domain."""
    P = np.asarray(points, float)
    if m is not None:
        (a0, a1), (b0, b1) = m.chart_domain
    else:
        a0, a1, b0, b1 = P[:, 0].min(), P[:, 0].max(), P[:, 1].min(), P[:, 1].max()
    if m is not None and m.periods[0] > 0:
        P = P.copy()
        P[:, 0] = a0 + np.mod(P[:, 0] - a0, a1 - a0)
    if m is not None and m.periods[1] > 0:
        P = P.copy()
        P[:, 1] = b0 + np.mod(P[:, 1] - b0, b1 - b0)
    x = (P[:, 1] - b0) / max(b1 - b0, 1e-300) * size
    y = (P[:, 0] - a0) / max(a1 - a0, 1e-300) * size
    # break the path where it wraps around the chart
    parts, cur = [], [(x[0], y[0])]
    for k in range(1, len(x)):
        if abs(x[k] - x[k - 1]) > size / 2 or abs(y[k] - y[k - 1]) > size / 2:
            parts.append(cur)
            cur = []
        cur.append((x[k], y[k]))
    parts.append(cur)
    d = " ".join("M " + " L ".join(f"{a:.3f} {b:.3f}" for a, b in p) for p in parts if p)
    Path(path).write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}"><path d="{d}" fill="none" stroke="black" stroke-width="1"/></svg>\n')


# --- run ----------------------------------------------------------------------------------------------------

def out_root(arg):
    return Path(arg or os.environ.get(ENV_OUT) or DEFAULT_OUT)


def run(name_or_path: str, threads: int = 1, out: str | None = None, stream=None) -> int:
    stream = stream or sys.stdout
    cfg, text = load(name_or_path)
    out_dir = out_root(out) / cfg["name"]
    ctx = Context(cfg, out_dir, threads)
    t_start = time.perf_counter()
    report = {
        "scenario": cfg["name"],
        "anchor": cfg["anchor"],
        "description": cfg.get("description", ""),
        "version": __version__,
        "kernel": kernels.get().IMPLEMENTATION,
        "seed": cfg.get("seed"),
        "surface": cfg.get("surface"),
        "config_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "steps": [],
    }
    status = EXIT_OK
    for k, st in enumerate(cfg["steps"]):
        op = st["op"]
        sid = st.get("id", f"{k}_{op}")
        entry = {"id": sid, "op": op, "params": {x: y for x, y in st.items() if x not in ("op", "id", "expect")}}
        t0 = time.perf_counter()
        try:
            result = OPS[op][0](ctx, st)
        except ConfigError:
            raise
        except (BirkhoffLabError, ArithmeticError, ValueError, KeyError, AssertionError) as exc:
            entry.update({"error": f"{type(exc).__name__}: {exc}", "passed": False,
                          "timing_s": time.perf_counter() - t0})
            report["steps"].append(entry)
            print(f"[{sid}] {op}: RuntimeFailure {type(exc).__name__}: {exc}", file=stream)
            status = EXIT_RUNTIME
            break
        checks = check_expectations(_clean(result), st.get("expect", {}))
        entry["result"] = result
        entry["assertions"] = checks
        entry["passed"] = all(c["passed"] for c in checks)
        entry["timing_s"] = time.perf_counter() - t0
        report["steps"].append(entry)
        for c in checks:
            print(f"[{sid}] {op}: {c['field']} = {c['actual']!r} expect {c['expect']!r} "
                  f"{'PASS' if c['passed'] else 'FAIL'}", file=stream)
        if not entry["passed"]:
            status = EXIT_ASSERT
    report["passed"] = status == EXIT_OK
    report["status"] = status
    report["artifacts"] = sorted(set(ctx.artifacts))
    report["runtime"] = {"threads": threads, "total_s": time.perf_counter() - t_start}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(_clean(report), indent=2, sort_keys=True) + "\n")
    print(f"{cfg['name']}: {'PASS' if status == 0 else 'FAIL'} -> {out_dir / 'report.json'}", file=stream)
    return status


TIMING_KEYS = ("timing_s", "runtime")


def strip_timing(report: dict) -> dict:
    """Copy of a report without the timing fields (for determinism checks)."""
    r = {k: v for k, v in report.items() if k not in TIMING_KEYS}
    r["steps"] = [{k: v for k, v in s.items() if k not in TIMING_KEYS} for s in report.get("steps", [])]
    return r


def describe(name: str, stream=None):
    stream = stream or sys.stdout
    cfg, _ = load(name)
    print(f"{cfg['name']}\n  anchor: {cfg['anchor']}", file=stream)
    if cfg.get("description"):
        print(f"  {cfg['description']}", file=stream)
    if "surface" in cfg:
        print(f"  surface: {json.dumps(cfg['surface'], sort_keys=True)}", file=stream)
    for k, st in enumerate(cfg["steps"]):
        print(f"  step {st.get('id', k)}: {st['op']}", file=stream)


def list_scenarios(stream=None):
    stream = stream or sys.stdout
    for name, f in bundled().items():
        cfg = tomli.loads(f.read_text())
        print(f"{name:28s} {cfg.get('anchor', '')}", file=stream)


def surgery_cmd(config: str | None, chain_table: int | None, out: str | None, stream=None):
    stream = stream or sys.stdout
    if chain_table is not None:
        rows = surgery.chain_table(chain_table)
        text = surgery.chain_table_csv(rows)
        if out is not None:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "chain_table.csv").write_text(text)
        stream.write(text)
        return EXIT_OK
    if config is None:
        raise ConfigError("surgery needs --config or --chain-table")
    try:
        obj = json.loads(Path(config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {config}: {exc}") from exc
    try:
        cfg = surgery.CurveConfiguration.from_json(obj)
    except PreconditionError as exc:
        raise ConfigError(str(exc)) from exc
    topo = surgery.fried_surgery_topology(cfg)
    text = topo.to_json() + "\n"
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "topology.json").write_text(text)
    stream.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="birkhoff-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("run", help="run a bundled scenario or a TOML file")
    p.add_argument("scenario")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help=f"output root (default ${ENV_OUT} or ./{DEFAULT_OUT})")
    sub.add_parser("list", help="list bundled scenarios")
    p = sub.add_parser("describe", help="show a scenario")
    p.add_argument("name")
    p = sub.add_parser("surgery", help="topology of a Fried surgery configuration")
    p.add_argument("--config", default=None, help="JSON file {genus, intersection_matrix}")
    p.add_argument("--chain-table", type=int, default=None, metavar="G_MAX")
    p.add_argument("--out", default=None)
    args = ap.parse_args(argv)
    try:
        if args.cmd == "run":
            if args.threads < 1:
                raise ConfigError("--threads must be at least 1")
            return run(args.scenario, args.threads, args.out)
        if args.cmd == "list":
            list_scenarios()
            return EXIT_OK
        if args.cmd == "describe":
            describe(args.name)
            return EXIT_OK
        if args.cmd == "surgery":
            return surgery_cmd(args.config, args.chain_table, args.out)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"RuntimeFailure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
