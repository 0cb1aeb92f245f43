"""Characteristic polytopes: exact H/V representations, projection and triangulation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from itertools import combinations
from typing import Sequence

from .algebra import (
    Vec,
    add,
    det,
    dot,
    matvec,
    nullspace,
    primitive,
    rank,
    scale,
    solve,
    sub,
    unit,
    vec,
)
from .cone import ConeError, Gamma0, MomentCone, cone_rays, facet_meta, solve_gamma0


class PolytopeError(ValueError):
    def __init__(self, message: str, **data):
        super().__init__(message)
        self.data = data


@dataclass(frozen=True)
class HPolytope:
    """{x : normals[i] . x + offsets[i] >= 0}; ``tags`` label each inequality."""

    normals: tuple
    offsets: tuple
    tags: tuple

    @property
    def dim(self) -> int:
        return len(self.normals[0]) if self.normals else 0

    def value(self, i: int, x: Sequence):
        return dot(self.normals[i], x) + self.offsets[i]

    def contains(self, x: Sequence) -> bool:
        return all(self.value(i, x) >= 0 for i in range(len(self.normals)))

    @classmethod
    def build(cls, rows: Sequence, tags: Sequence | None = None) -> "HPolytope":
        """Deduplicate inequalities equal up to positive scaling (first tag wins)."""
        tags = list(tags) if tags is not None else list(range(len(rows)))
        seen = {}
        normals, offsets, kept = [], [], []
        for (a, b), t in zip(rows, tags):
            a, b = vec(a), Fraction(b)
            if all(x == 0 for x in a):
                if b < 0:
                    raise PolytopeError("infeasible constant inequality")
                continue
            key = primitive(a + (b,)) if b != 0 or True else None
            if key in seen:
                continue
            seen[key] = True
            normals.append(a)
            offsets.append(b)
            kept.append(t)
        return cls(tuple(normals), tuple(offsets), tuple(kept))


def affine_dim(points: Sequence[Vec]) -> int:
    if not points:
        return -1
    p0 = points[0]
    diffs = [sub(p, p0) for p in points[1:]]
    return rank(diffs) if diffs else 0


@dataclass(frozen=True, eq=False)
class VPolytope:
    vertices: tuple
    incidence: tuple
    h: HPolytope

    @cached_property
    def dim(self) -> int:
        return affine_dim(list(self.vertices))

    @property
    def empty(self) -> bool:
        return not self.vertices

    def tight_vertices(self, i: int) -> frozenset:
        return frozenset(k for k, inc in enumerate(self.incidence) if i in inc)

    @cached_property
    def facet_indices(self) -> tuple:
        """Inequalities that define facets (tight set of affine dimension dim-1), deduplicated."""
        out, seen = [], set()
        for i in range(len(self.h.normals)):
            t = self.tight_vertices(i)
            if t in seen or len(t) < self.dim:
                continue
            if affine_dim([self.vertices[k] for k in sorted(t)]) == self.dim - 1:
                seen.add(t)
                out.append(i)
        return tuple(out)

    def h_from_v(self) -> set:
        """Facet inequalities re-derived from the vertices, normalized to primitive form."""
        d = self.h.dim
        out = set()
        for i in self.facet_indices:
            pts = [self.vertices[k] for k in sorted(self.tight_vertices(i))]
            p0 = pts[0]
            rows = [sub(p, p0) for p in pts[1:]]
            ns = nullspace(rows, d) if rows else [unit(d, j) for j in range(d)]
            a = ns[0]
            b = -dot(a, p0)
            inside = next(v for v in self.vertices if dot(a, v) + b != 0)
            if dot(a, inside) + b < 0:
                a, b = scale(-1, a), -b
            out.add(primitive(a + (b,)))
        return out


def vertex_enumeration(h: HPolytope) -> VPolytope:
    """Exact vertices by basis enumeration, deduplicated and sorted."""
    d = h.dim
    m = len(h.normals)
    if d == 0:
        return VPolytope(((),), (frozenset(range(m)),), h)
    if rank(list(h.normals)) < d:
        raise PolytopeError("polytope is unbounded (inequalities do not span)")
    try:
        rec = cone_rays(list(h.normals), d)
    except ConeError as exc:
        raise PolytopeError(f"polytope is unbounded: {exc}") from exc
    pts = {}
    for subset in combinations(range(m), d):
        rows = [h.normals[i] for i in subset]
        if det(rows) == 0:
            continue
        x = solve(rows, [-h.offsets[i] for i in subset])
        if x in pts:
            continue
        if h.contains(x):
            pts[x] = frozenset(i for i in range(m) if h.value(i, x) == 0)
    if pts and rec:
        raise PolytopeError("polytope is unbounded", recession_ray=rec[0])
    verts = tuple(sorted(pts))
    return VPolytope(verts, tuple(pts[v] for v in verts), h)


def simplex_volume(points: Sequence[Vec]) -> Fraction:
    d = len(points) - 1
    p0 = points[0]
    return abs(det([sub(p, p0) for p in points[1:]])) / math.factorial(d)


@dataclass(frozen=True)
class Triangulation:
    simplices: tuple
    volumes: tuple
    dim: int
    degenerate: bool = False

    @property
    def volume(self):
        return sum(self.volumes, Fraction(0))


def _triangulate_face(vp: VPolytope, face: frozenset, fdim: int) -> list[tuple]:
    verts = vp.vertices

    @lru_cache(maxsize=None)
    def rec(face: frozenset, fdim: int) -> tuple:
        ids = sorted(face, key=lambda k: verts[k])
        if fdim == 0:
            return ((ids[0],),)
        if fdim == 1:
            return ((ids[0], ids[-1]),)
        v0 = ids[0]
        subfaces = set()
        for i in range(len(vp.h.normals)):
            t = face & vp.tight_vertices(i)
            if t == face or len(t) < fdim or v0 in t:
                continue
            if affine_dim([verts[k] for k in sorted(t)]) == fdim - 1:
                subfaces.add(t)
        out = []
        for t in sorted(subfaces, key=lambda s: sorted(verts[k] for k in s)):
            for s in rec(t, fdim - 1):
                out.append((v0,) + s)
        return tuple(out)

    return list(rec(face, fdim))


def triangulate(vp: VPolytope) -> Triangulation:
    """Recursive fan triangulation from the lexicographically smallest vertex."""
    if vp.empty:
        raise PolytopeError("cannot triangulate an empty polytope")
    k = vp.dim
    simplices = _triangulate_face(vp, frozenset(range(len(vp.vertices))), k)
    degenerate = k < vp.h.dim
    if degenerate:
        vols = tuple(None for _ in simplices)
    else:
        vols = tuple(simplex_volume([vp.vertices[i] for i in s]) for s in simplices)
    return Triangulation(tuple(simplices), vols, k, degenerate)


def triangulate_facet(vp: VPolytope, i: int) -> tuple:
    """(dim-1)-simplices covering the facet of inequality i."""
    face = vp.tight_vertices(i)
    return tuple(_triangulate_face(vp, face, vp.dim - 1))


def leray_volume(points: Sequence[Vec], normal: Vec) -> Fraction:
    """Measure of a simplex on {normal . x + b = 0} for the form dx = d(l) ^ sigma."""
    d = len(normal)
    nn = dot(normal, normal)
    e = scale(1 / nn, normal)
    p0 = points[0]
    rows = [sub(p, p0) for p in points[1:]] + [e]
    return abs(det(rows)) / math.factorial(d - 1)


# ---------------------------------------------------------------------------
# Affine charts and charted polytopes


@dataclass(frozen=True)
class Chart:
    """Affine parametrization y = origin + basis t of {c . y = c0}, eliminating coordinate k."""

    k: int
    origin: Vec
    basis: tuple  # columns, each an ambient vector
    normal: Vec
    level: Fraction

    @classmethod
    def for_hyperplane(cls, c: Sequence, c0, k: int | None = None) -> "Chart":
        c = vec(c)
        c0 = Fraction(c0)
        n = len(c)
        if k is None:
            k = max(range(n), key=lambda j: (abs(c[j]), -j))
        if c[k] == 0:
            raise PolytopeError(f"chart coordinate {k} is not transverse to the hyperplane")
        origin = scale(c0 / c[k], unit(n, k))
        basis = tuple(
            sub(unit(n, j), scale(c[j] / c[k], unit(n, k))) for j in range(n) if j != k
        )
        return cls(k, origin, basis, c, c0)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def ambient(self, t: Sequence) -> Vec:
        y = list(self.origin)
        for tj, b in zip(t, self.basis):
            if tj:
                for i, x in enumerate(b):
                    y[i] += tj * x
        return tuple(y)

    def coords(self, y: Sequence) -> Vec:
        if dot(self.normal, y) != self.level:
            raise PolytopeError("point is not on the chart hyperplane")
        return tuple(x for j, x in enumerate(y) if j != self.k)

    def pull(self, a: Sequence, b=0) -> tuple[Vec, Fraction]:
        """Chart form of the affine function y -> a . y + b."""
        return tuple(dot(a, col) for col in self.basis), dot(a, self.origin) + Fraction(b)

    @cached_property
    def basis_matrix_float(self):
        import numpy as np

        return np.array([[float(x) for x in col] for col in self.basis]).T

    @cached_property
    def origin_float(self):
        import numpy as np

        return np.array([float(x) for x in self.origin])


@dataclass(frozen=True, eq=False)
class ChartedPolytope:
    """Polytope on an affine chart: ambient inequalities a . y + b >= 0, tagged.

    Tags are ("facet", A) for cone facets and ("wall", i) for Weyl walls of
    simple roots.
    """

    chart: Chart
    ambient_rows: tuple
    tags: tuple

    @cached_property
    def h(self) -> HPolytope:
        return HPolytope.build([self.chart.pull(a, b) for a, b in self.ambient_rows], self.tags)

    @cached_property
    def v(self) -> VPolytope:
        return vertex_enumeration(self.h)

    @cached_property
    def vertices(self) -> tuple:
        """Vertices as ambient points, lexicographically sorted."""
        return tuple(sorted(self.chart.ambient(t) for t in self.v.vertices))

    @cached_property
    def triangulation(self) -> Triangulation:
        return triangulate(self.v)

    @cached_property
    def facets(self) -> tuple:
        """(tag, chart normal, chart offset, simplices as chart points) per facet."""
        out = []
        for i in self.v.facet_indices:
            simp = triangulate_facet(self.v, i)
            pts = tuple(tuple(self.v.vertices[k] for k in s) for s in simp)
            out.append((self.h.tags[i], self.h.normals[i], self.h.offsets[i], pts))
        return tuple(out)

    def cone_facets(self) -> tuple:
        return tuple(f for f in self.facets if f[0][0] == "facet")

    def simplices(self) -> tuple:
        return tuple(tuple(self.v.vertices[k] for k in s) for s in self.triangulation.simplices)

    @property
    def volume(self) -> Fraction:
        return self.triangulation.volume

    def with_rows(self, extra_rows: Sequence, extra_tags: Sequence) -> "ChartedPolytope":
        return ChartedPolytope(self.chart, self.ambient_rows + tuple(extra_rows), self.tags + tuple(extra_tags))


def _wall_rows(datum) -> tuple:
    return tuple((ga, Fraction(0)) for ga in datum.semisimple_basis)


@dataclass(frozen=True, eq=False)
class CharPolytope:
    """The slice {xi . y = 1} of the moment cone and its positive-chamber part."""

    cone: MomentCone
    xi: Vec
    full: ChartedPolytope
    plus: ChartedPolytope

    @property
    def datum(self):
        return self.cone.datum

    @property
    def chart(self) -> Chart:
        return self.full.chart

    @cached_property
    def gamma0(self) -> Gamma0:
        return solve_gamma0(self.cone)


def characteristic_polytope(cone: MomentCone, xi: Sequence, chart: int | None = None) -> CharPolytope:
    d = cone.datum
    xi = vec(xi)
    if len(xi) != d.dim:
        raise PolytopeError(f"Reeb vector has length {len(xi)}, expected {d.dim}")
    if not d.in_center(xi):
        raise PolytopeError("Reeb vector is not in the centre", xi=xi)
    bad = [r for r in cone.rays if dot(r, xi) <= 0]
    if bad:
        raise PolytopeError(
            f"Reeb vector is not in the interior of the dual cone; violated ray {list(map(str, bad[0]))}",
            ray=bad[0],
        )
    ch = Chart.for_hyperplane(xi, 1, chart)
    rows = tuple((u, Fraction(0)) for u in cone.normals)
    tags = tuple(("facet", a) for a in range(len(cone.normals)))
    full = ChartedPolytope(ch, rows, tags)
    walls = _wall_rows(d)
    plus = full.with_rows(walls, tuple(("wall", i) for i in range(len(walls))))
    full.v  # boundedness check
    return CharPolytope(cone, xi, full, plus)


# ---------------------------------------------------------------------------
# Projection along a central functional


@dataclass(frozen=True, eq=False)
class Projection:
    """P = iota*(slice) in the Gram-orthogonal complement of gamma, with its forms l'_A."""

    cp: CharPolytope
    gamma: Vec
    shift: Vec
    forms: tuple  # (n_A, offset) with l'_A(v) = n_A . v + offset
    full: ChartedPolytope
    plus: ChartedPolytope

    @cached_property
    def ggamma(self) -> Vec:
        return matvec(self.cp.datum.gram, self.gamma)

    def iota(self, y: Sequence) -> Vec:
        """y - (<y,gamma>/<gamma,gamma>) gamma, plus the translation of P'."""
        gg = self.ggamma
        c = dot(y, gg) / dot(self.gamma, gg)
        return add(sub(vec(y), scale(c, self.gamma)), self.shift)

    def iota_inverse(self, v: Sequence) -> Vec:
        """v + ((1 - v(xi))/gamma(xi)) gamma on the untranslated P."""
        v = sub(vec(v), self.shift)
        xi = self.cp.xi
        return add(v, scale((1 - dot(v, xi)) / dot(self.gamma, xi), self.gamma))


def _projected(cp: CharPolytope, gamma: Vec, shift: Vec, forms: tuple, chart: int | None) -> Projection:
    d = cp.datum
    gg = matvec(d.gram, gamma)
    ch = Chart.for_hyperplane(gg, dot(gg, shift), chart)
    tags = tuple(("facet", a) for a in range(len(forms)))
    full = ChartedPolytope(ch, forms, tags)
    walls = _wall_rows(d)
    plus = full.with_rows(walls, tuple(("wall", i) for i in range(len(walls))))
    return Projection(cp, gamma, shift, forms, full, plus)


def iota_project(cp: CharPolytope, gamma: Sequence, chart: int | None = None) -> Projection:
    """Project the slice along gamma; forms l'_A(v) = (u_A - lambda_A xi) . v + lambda_A."""
    d = cp.datum
    gamma = vec(gamma)
    gx = dot(gamma, cp.xi)
    if gx == 0:
        raise PolytopeError("gamma(xi) = 0")
    if any(dot(gamma, z) != 0 for z in d.semisimple_basis):
        raise PolytopeError("gamma must vanish on the semisimple part")
    forms = []
    for u in cp.cone.normals:
        lam = dot(gamma, u) / gx
        forms.append((sub(u, scale(lam, cp.xi)), lam))
    proj = _projected(cp, gamma, tuple(Fraction(0) for _ in gamma), tuple(forms), chart)
    mapped = sorted(proj.iota(y) for y in cp.full.vertices)
    if tuple(mapped) != proj.full.vertices:
        raise PolytopeError("projected vertices disagree with the projected H-representation")
    return proj


def translate_fano(proj: Projection, gamma0: Sequence, chart: int | None = None) -> Projection:
    """P' = P + iota*(gamma0)/(n+1); offsets become (1 - 2 sigma_A(u_A))/(n+1)."""
    cp = proj.cp
    d = cp.datum
    n1 = d.n + 1
    g0 = vec(gamma0)
    gg = proj.ggamma
    c = dot(g0, gg) / dot(proj.gamma, gg)
    shift = scale(Fraction(1, n1), sub(g0, scale(c, proj.gamma)))
    forms = []
    for a, (na, off) in enumerate(proj.forms):
        new = off - dot(na, shift)
        expected = (1 - 2 * cp.cone.sigma_a(a)) / n1
        if new != expected:
            raise PolytopeError(
                "translated offset disagrees with (1 - 2 sigma_A(u_A))/(n+1)", facet=a, offset=new
            )
        forms.append((na, new))
    meta = facet_meta(cp.cone, g0, cp.xi, check_fano=False)
    if dot(g0, cp.xi) == -n1 and any(m.Lam != 2 * n1 for m in meta):
        raise PolytopeError("Lambda_A != 2(n+1) on the Fano slice")
    return _projected(cp, proj.gamma, shift, tuple(forms), chart)
