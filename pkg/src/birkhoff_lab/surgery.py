"""Combinatorial Fried surgery on unions of Birkhoff annuli.

Each oriented curve ``sigma * gamma_c`` carries the annulus ``A(sigma gamma_c')``,
drawn as a rectangle ``(s, phi)`` with ``s`` periodic, ``phi = +pi/2`` (top)
on ``sigma gamma_c'`` and ``phi = -pi/2`` (bottom) on ``-sigma gamma_c'``.
Over an intersection point ``x`` of ``gamma_a`` and ``gamma_b`` the four
annuli meet the fibre circle ``S_x M`` in four half-circles; every annulus
is cut along its half-circle (a slit across the rectangle, split in the
middle where the other curve's tangent lift pierces it) and the slit sides
are reglued.

The regluing is the flow-transverse smoothing. Near the fibre the annuli
are products (line in ``T_x M``) x (arc of angles) and the geodesic vector
field at angle ``psi`` is the horizontal lift of ``w(psi)``. In the slice
at ``psi`` two sheets cross as lines; the only resolution that stays
transverse to ``w`` joins the forward half of each sheet (``s`` past the
slit) to the backward half of the other. So along each double arc shared
by annuli ``P`` and ``Q``: ``P.before ~ Q.after`` and ``Q.before ~ P.after``,
with endpoints matched by fibre angle.

The complex is cellular (one polygon per strip between consecutive slits),
all counts are exact integers and vertices are merged with union-find.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidPattern

CHAIN = "Chain2G"
GENERAL = "General"

# fibre angles of the four tangent lifts at an intersection where gamma_b
# crosses gamma_a from right to left; only their cyclic order matters
_ANGLE = {("a", 1): 0, ("b", 1): 1, ("a", -1): 2, ("b", -1): 3}


class _DSU:
    def __init__(self):
        self.parent = {}

    def add(self, x):
        self.parent.setdefault(x, x)

    def find(self, x):
        p = self.parent
        root = x
        while p[root] != root:
            root = p[root]
        while p[x] != root:
            p[x], x = root, p[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # deterministic representative
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra

    def classes(self):
        out = {}
        for x in self.parent:
            out.setdefault(self.find(x), []).append(x)
        return out


@dataclass(frozen=True)
class CurveConfiguration:
    """Oriented simple closed curves with their pairwise transverse intersection counts."""

    n: int
    genus: int
    intersections: tuple
    pattern_tag: str = GENERAL

    def __post_init__(self):
        M = np.asarray(self.intersections)
        if M.shape != (self.n, self.n):
            raise InvalidPattern(f"intersection matrix must be {self.n}x{self.n}, got {M.shape}")
        if self.n < 1:
            raise InvalidPattern("at least one curve is required")
        if not np.issubdtype(M.dtype, np.integer):
            if not np.all(np.equal(np.mod(M, 1), 0)):
                raise InvalidPattern("intersection counts must be integers")
        if np.any(M < 0):
            raise InvalidPattern("intersection counts must be non-negative")
        if np.any(np.diag(M) != 0):
            raise InvalidPattern("curves are simple: the diagonal must vanish")
        if not np.array_equal(M, M.T):
            raise InvalidPattern("intersection matrix must be symmetric")
        if self.pattern_tag == CHAIN:
            if self.genus < 1 or self.n != 2 * self.genus:
                raise InvalidPattern("a chain of genus G has exactly 2G curves")
            if not np.array_equal(M, _chain_matrix(self.n)):
                raise InvalidPattern("a chain has one intersection between consecutive curves only")
        elif self.pattern_tag != GENERAL:
            raise InvalidPattern(f"unknown pattern {self.pattern_tag!r}")
        elif self.n > 1 and np.any(M.sum(axis=1) == 0):
            raise InvalidPattern("every curve must meet another curve")

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.intersections, dtype=np.int64)

    @classmethod
    def chain(cls, G: int) -> "CurveConfiguration":
        if G < 1:
            raise InvalidPattern("genus must be at least 1")
        return cls(2 * G, G, _as_tuple(_chain_matrix(2 * G)), CHAIN)

    @classmethod
    def from_matrix(cls, matrix, genus: int = 0, pattern_tag: str | None = None):
        M = np.asarray(matrix)
        if M.ndim != 2:
            raise InvalidPattern("intersection matrix must be two-dimensional")
        n = M.shape[0]
        if pattern_tag is None:
            pattern_tag = CHAIN if (n % 2 == 0 and genus == n // 2 and M.shape == (n, n)
                                    and np.array_equal(M, _chain_matrix(n))) else GENERAL
        return cls(n, int(genus), _as_tuple(M), pattern_tag)

    @classmethod
    def from_json(cls, obj) -> "CurveConfiguration":
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        unknown = set(obj) - {"genus", "intersection_matrix", "pattern_tag"}
        if unknown:
            raise InvalidPattern(f"unknown keys {sorted(unknown)}")
        if "intersection_matrix" not in obj:
            raise InvalidPattern("missing intersection_matrix")
        return cls.from_matrix(obj["intersection_matrix"], int(obj.get("genus", 0)), obj.get("pattern_tag"))

    def permuted(self, perm) -> "CurveConfiguration":
        """Relabel curve ``perm[i]`` as curve ``i``."""
        perm = list(perm)
        M = self.matrix[np.ix_(perm, perm)]
        return CurveConfiguration(self.n, self.genus, _as_tuple(M), GENERAL)

    def to_dict(self) -> dict:
        return {"genus": self.genus, "intersection_matrix": self.matrix.tolist(),
                "pattern_tag": self.pattern_tag}


def _chain_matrix(n):
    M = np.zeros((n, n), dtype=np.int64)
    for i in range(n - 1):
        M[i, i + 1] = M[i + 1, i] = 1
    return M


def _as_tuple(M):
    return tuple(tuple(int(x) for x in row) for row in np.asarray(M))


@dataclass
class SectionTopology:
    boundary_components: list
    euler_char: int
    genus: int
    connected: bool
    components: list = field(default_factory=list)
    cells: dict = field(default_factory=dict)
    orientable: bool = True

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_components)

    def census(self) -> dict:
        """``{(curve, sign): [degrees]}``."""
        out = {}
        for c, s, d in self.boundary_components:
            out.setdefault((c, s), []).append(d)
        return {k: sorted(v) for k, v in sorted(out.items())}

    def to_dict(self) -> dict:
        return {
            "boundary_components": [{"curve": c, "sign": s, "degree": d} for c, s, d in self.boundary_components],
            "n_boundary": self.n_boundary,
            "euler_char": self.euler_char,
            "genus": self.genus,
            "connected": self.connected,
            "orientable": self.orientable,
            "components": self.components,
            "cells": self.cells,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, **kw)


def _events(cfg):
    """Intersection points, ordered along each curve by (partner, replica)."""
    M = cfg.matrix
    points = []
    for i in range(cfg.n):
        for j in range(i + 1, cfg.n):
            for r in range(int(M[i, j])):
                points.append((i, j, r))
    along = {c: [] for c in range(cfg.n)}
    for pid, (i, j, r) in enumerate(points):
        along[i].append(((j, r), pid))
        along[j].append(((i, r), pid))
    for c in along:
        along[c] = [pid for _, pid in sorted(along[c])]
    return points, along


def fried_surgery_topology(cfg: CurveConfiguration) -> SectionTopology:
    """Topology of the surface obtained from ``Upsilon`` by Fried surgery.

    Every intersection point is a transverse double point of two curves
    where the higher-index curve crosses the lower-index one from right to
    left (reversing an orientation only swaps the two annuli of a curve).
    """
    points, along = _events(cfg)
    annuli = [(c, s) for c in range(cfg.n) for s in (1, -1)]
    # cut order along each annulus and the position of each point on it
    cuts, pos = {}, {}
    for c, s in annuli:
        order = along[c] if s == 1 else along[c][::-1]
        cuts[(c, s)] = order
        for m, pid in enumerate(order):
            pos[(c, s, pid)] = m

    def nstrips(A):
        return max(1, len(cuts[A]))

    V, E = _DSU(), _DSU()
    faces = []
    for A in annuli:
        k = len(cuts[A])
        for m in range(nstrips(A)):
            f = (A, m)
            faces.append(f)
            corners = ["BL", "BR", "TL", "TR"] + (["ML", "MR"] if k else [])
            for cn in corners:
                V.add((f, cn))
            for sl in (["bottom", "top"] + (["R_lo", "R_hi", "L_lo", "L_hi"] if k else ["R", "L"])):
                E.add((f, sl))

    # slot endpoints in counter-clockwise traversal of the strip
    trav = {"bottom": ("BL", "BR"), "R_lo": ("BR", "MR"), "R_hi": ("MR", "TR"), "R": ("BR", "TR"),
            "top": ("TR", "TL"), "L_hi": ("TL", "ML"), "L_lo": ("ML", "BL"), "L": ("TL", "BL")}
    glue = []  # (slotA, slotB, [(vA, vB), ...])

    for A in annuli:
        if not cuts[A]:
            f = (A, 0)
            glue.append(((f, "R"), (f, "L"), [("BR", "BL"), ("TR", "TL")]))

    def label(A, role_sign, angle):
        """Local vertex letter (T/M/B) of a special fibre angle on annulus A."""
        top = _ANGLE[role_sign]
        d = (angle - top) % 4
        return {0: "T", 1: "M", 2: "B"}[d]

    for pid, (i, j, r) in enumerate(points):
        role = {i: "a", j: "b"}
        for u in range(4):
            v = (u + 1) % 4
            # the two annuli covering the arc (u, v): each covers [top, top + 2]
            owners = []
            for c in (i, j):
                for s in (1, -1):
                    top = _ANGLE[(role[c], s)]
                    if (u - top) % 4 in (0, 1):
                        owners.append((c, s))
            P, Q = owners
            halves = {}
            for X in (P, Q):
                top = _ANGLE[(role[X[0]], X[1])]
                half = "hi" if (u - top) % 4 == 0 else "lo"
                m = pos[(X[0], X[1], pid)]
                before = (X, (m - 1) % nstrips(X))
                after = (X, m)
                lu = label(X, (role[X[0]], X[1]), u)
                lv = label(X, (role[X[0]], X[1]), v)
                halves[X] = (half, before, after, lu, lv)
            hp, bp, ap, pu, pv = halves[P]
            hq, bq, aq, qu, qv = halves[Q]
            # P.before ~ Q.after and Q.before ~ P.after
            glue.append(((bp, "R_" + hp), (aq, "L_" + hq), [(pu + "R", qu + "L"), (pv + "R", qv + "L")]))
            glue.append(((bq, "R_" + hq), (ap, "L_" + hp), [(qu + "R", pu + "L"), (qv + "R", pv + "L")]))

    orient_links = []
    for sa, sb, vmap in glue:
        E.union(sa, sb)
        for va, vb in vmap:
            V.union((sa[0], va), (sb[0], vb))
        orient_links.append((sa, sb, vmap))

    # orientation: a glued edge must be traversed in opposite directions
    sign_edges = []
    for sa, sb, vmap in orient_links:
        a0, a1 = trav[sa[1]]
        b0, b1 = trav[sb[1]]
        va0 = V.find((sa[0], a0))
        vb0 = V.find((sb[0], b0))
        vb1 = V.find((sb[0], b1))
        if va0 == vb1:
            sign_edges.append((sa[0], sb[0], 1))
        elif va0 == vb0:
            sign_edges.append((sa[0], sb[0], -1))
        else:
            raise AssertionError("inconsistent edge identification")
    orientable, face_comp = _orient(faces, sign_edges)

    vclasses = V.classes()
    eclasses = E.classes()
    _check_manifold(vclasses, eclasses, trav, V)

    # boundary: unglued top/bottom slots
    bslots = [cls[0] for cls in eclasses.values() if len(cls) == 1]
    for sl in bslots:
        if sl[1] not in ("top", "bottom"):
            raise AssertionError("a slit side was left unglued")
    adj = {}
    for sl in bslots:
        a, b = trav[sl[1]]
        va, vb = V.find((sl[0], a)), V.find((sl[0], b))
        adj.setdefault(va, []).append((sl, vb))
        adj.setdefault(vb, []).append((sl, va))
    if any(len(x) != 2 for x in adj.values()):
        raise AssertionError("boundary is not a disjoint union of circles")
    seen, circles = set(), []
    for sl in bslots:
        if sl in seen:
            continue
        circ, cur_slot = [], sl
        a, b = trav[sl[1]]
        v = V.find((sl[0], b))
        while cur_slot not in seen:
            seen.add(cur_slot)
            circ.append(cur_slot)
            nxt = [x for x in adj[v] if x[0] != cur_slot]
            if not nxt:
                nxt = adj[v]
            cur_slot, v = nxt[0]
        circles.append(circ)

    bcomp = []
    for circ in circles:
        lifts = set()
        for (A, m), side in circ:
            c, s = A
            lifts.add((c, s if side == "top" else -s))
        if len(lifts) != 1:
            raise AssertionError("a boundary circle covers two different orbits")
        c, s = lifts.pop()
        deg, rem = divmod(len(circ), max(1, len(along[c])))
        if rem:
            raise AssertionError("boundary circle is not a covering")
        comp = face_comp[circ[0][0]]
        bcomp.append((c, s, deg, comp))
    bcomp.sort()

    # per component counts
    comps = sorted(set(face_comp.values()))
    rows = []
    total_g = 0
    for k in comps:
        F = sum(1 for f in faces if face_comp[f] == k)
        Ek = sum(1 for cls in eclasses.values() if face_comp[cls[0][0]] == k)
        Vk = sum(1 for cls in vclasses.values() if face_comp[cls[0][0]] == k)
        b = sum(1 for x in bcomp if x[3] == k)
        chi = Vk - Ek + F
        twice = 2 - chi - b
        if twice % 2 or twice < 0:
            raise AssertionError("Euler characteristic is inconsistent with an orientable surface")
        total_g += twice // 2
        rows.append({"V": Vk, "E": Ek, "F": F, "euler_char": chi, "genus": twice // 2, "n_boundary": b})
    nV, nE, nF = len(vclasses), len(eclasses), len(faces)
    return SectionTopology(
        boundary_components=[(c, s, d) for c, s, d, _ in bcomp],
        euler_char=nV - nE + nF,
        genus=total_g,
        connected=len(comps) == 1,
        components=rows,
        cells={"V": nV, "E": nE, "F": nF},
        orientable=orientable,
    )


def _orient(faces, sign_edges):
    nb = {f: [] for f in faces}
    for a, b, sg in sign_edges:
        nb[a].append((b, sg))
        nb[b].append((a, sg))
    col, comp = {}, {}
    ok = True
    for k, f0 in enumerate(sorted(faces)):
        if f0 in col:
            continue
        cid = len(set(comp.values()))
        col[f0], comp[f0] = 1, cid
        stack = [f0]
        while stack:
            f = stack.pop()
            for g, sg in nb[f]:
                want = col[f] * sg
                if g not in col:
                    col[g], comp[g] = want, cid
                    stack.append(g)
                elif col[g] != want:
                    ok = False
    return ok, comp


def _check_manifold(vclasses, eclasses, trav, V):
    """Every edge bounds at most two face sides and every vertex link is one arc or circle."""
    for cls in eclasses.values():
        if len(cls) > 2:
            raise AssertionError("edge shared by more than two faces")
    slot_class = {}
    for rep, cls in eclasses.items():
        for sl in cls:
            slot_class[sl] = rep
    corner_edges = {}
    # the two slots meeting at each corner of a strip
    meet = {"BL": ("L_lo", "L", "bottom"), "BR": ("bottom", "R_lo", "R"), "TR": ("R_hi", "R", "top"),
            "TL": ("top", "L_hi", "L"), "MR": ("R_lo", "R_hi"), "ML": ("L_hi", "L_lo")}
    for rep, verts in vclasses.items():
        links = []
        for f, cn in verts:
            slots = [(f, s) for s in meet[cn] if (f, s) in slot_class]
            links.append(tuple(slot_class[s] for s in slots))
        corner_edges[rep] = links
    for rep, links in corner_edges.items():
        d = _DSU()
        deg = {}
        for e1, e2 in links:
            d.add(e1)
            d.add(e2)
            d.union(e1, e2)
            deg[e1] = deg.get(e1, 0) + 1
            deg[e2] = deg.get(e2, 0) + 1
        if len(d.classes()) != 1 or any(x > 2 for x in deg.values()):
            raise AssertionError(f"vertex {rep} does not have a disk or half-disk link")


def chain_table(G_max: int) -> list[dict]:
    """``fried_surgery_topology`` over the chains of genus ``1..G_max``."""
    if G_max < 1:
        raise InvalidPattern("G_max must be at least 1")
    rows = []
    for G in range(1, G_max + 1):
        t = fried_surgery_topology(CurveConfiguration.chain(G))
        rows.append({"G": G, "euler_char": t.euler_char, "genus": t.genus, "n_boundary": t.n_boundary,
                     "connected": t.connected, "V": t.cells["V"], "E": t.cells["E"], "F": t.cells["F"]})
    return rows


def chain_table_csv(rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["G", "euler_char", "genus", "n_boundary"])
    for r in rows:
        w.writerow([r["G"], r["euler_char"], r["genus"], r["n_boundary"]])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
