"""Moment cones: good-cone validation, Reeb cone, the Fano functional and facet constants."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Sequence

from .algebra import (
    GroupDatum,
    Vec,
    dot,
    elementary_divisors,
    is_zero,
    lincomb,
    matmul,
    matvec,
    nullspace,
    primitive,
    rank,
    scale,
    solve,
    transpose,
    vec,
)


class ConeError(ValueError):
    """Invalid cone or a failed cone-level solve; ``data`` carries the witness."""

    def __init__(self, message: str, **data):
        super().__init__(message)
        self.data = data


def cone_rays(constraints: Sequence[Vec], dim: int, equalities: Sequence[Vec] = ()) -> list[Vec]:
    """Extreme rays of the pointed cone {a.y >= 0, e.y = 0} as primitive vectors.

    Basis enumeration: every extreme ray is cut out by dim-1 linearly
    independent active constraints within the equality subspace.
    """
    if equalities:
        basis = nullspace(list(equalities), dim)
    else:
        basis = [tuple(Fraction(int(i == j)) for j in range(dim)) for i in range(dim)]
    k = len(basis)
    if k == 0:
        return []
    local = [tuple(dot(a, b) for b in basis) for a in constraints]
    local = [a for a in local if not is_zero(a)]

    def feasible(r):
        return all(dot(a, r) >= 0 for a in local)

    candidates: list[Vec] = []
    if k == 1:
        candidates = [(Fraction(1),), (Fraction(-1),)]
    else:
        if not local or rank(local) < k:
            raise ConeError("cone contains a line")
        seen = set()
        for subset in combinations(range(len(local)), k - 1):
            rows = [local[i] for i in subset]
            ns = nullspace(rows, k)
            if len(ns) != 1:
                continue
            r = primitive(ns[0])
            if r in seen:
                continue
            seen.add(r)
            candidates.append(r)
            candidates.append(scale(-1, r))
    rays = [r for r in candidates if feasible(r)]
    if k == 1 and len(rays) == 2:
        raise ConeError("cone contains a line")
    out = sorted({primitive(lincomb(r, basis, dim)) for r in rays})
    for r in out:
        if scale(-1, r) in out:
            raise ConeError("cone contains a line")
    return out


@dataclass(frozen=True)
class FaceCheck:
    facets: tuple
    divisors: tuple
    ok: bool
    apex: bool


@dataclass(frozen=True)
class ValidationReport:
    c1: bool
    c1_failures: tuple
    c2: bool
    c2_faces: tuple
    apex_checked: bool
    c2_away_from_apex: bool
    w_invariant: bool
    root_integral: bool
    minimal: bool
    notes: tuple = ()

    @property
    def good(self) -> bool:
        return self.c1 and self.c2 and self.w_invariant and self.root_integral and self.minimal

    @property
    def structural(self) -> bool:
        """Conditions needed by the downstream constructions (lattice conditions excluded)."""
        return self.w_invariant and self.minimal

    def as_dict(self) -> dict:
        return {
            "good": self.good,
            "C1": self.c1,
            "C1_failures": [list(map(str, u)) for u in self.c1_failures],
            "C2": self.c2,
            "C2_away_from_apex": self.c2_away_from_apex,
            "C2_apex_checked": self.apex_checked,
            "C2_faces": [
                {"facets": list(f.facets), "divisors": list(f.divisors), "ok": f.ok, "apex": f.apex}
                for f in self.c2_faces
            ],
            "W_invariant": self.w_invariant,
            "root_integral": self.root_integral,
            "minimal": self.minimal,
            "notes": list(self.notes),
        }


@dataclass(frozen=True, eq=False)
class MomentCone:
    """Cone {y : u_A(y) >= 0} in the dual of the torus algebra, normals u_A inward."""

    datum: GroupDatum
    normals: tuple

    @classmethod
    def build(cls, datum: GroupDatum, normals: Sequence) -> "MomentCone":
        us = tuple(vec(u) for u in normals)
        for i, u in enumerate(us):
            if len(u) != datum.dim:
                raise ConeError(f"normals[{i}] has length {len(u)}, expected {datum.dim}")
            if is_zero(u):
                raise ConeError(f"normals[{i}] is zero")
        if rank(us) < datum.dim:
            raise ConeError("cone contains a line (normals do not span)")
        cone = cls(datum, us)
        if rank(cone.rays) < datum.dim:
            raise ConeError("cone has empty interior")
        return cone

    def product(self, other: "MomentCone") -> "MomentCone":
        """Product cone for the product group, in block coordinates."""
        z1, z2 = (Fraction(0),) * self.dim, (Fraction(0),) * other.dim
        normals = [tuple(u) + z2 for u in self.normals] + [z1 + tuple(u) for u in other.normals]
        return MomentCone.build(self.datum.sum_with(other.datum), normals)

    @property
    def dim(self) -> int:
        return self.datum.dim

    @cached_property
    def rays(self) -> tuple:
        return tuple(cone_rays(self.normals, self.dim))

    def tight(self, u: Vec) -> frozenset:
        return frozenset(i for i, r in enumerate(self.rays) if dot(u, r) == 0)

    @cached_property
    def faces(self) -> tuple:
        """Proper faces as (facet index set, ray index set), including the apex."""
        facet_sets = [self.tight(u) for u in self.normals]
        found = {}
        frontier = set(facet_sets)
        while frontier:
            nxt = set()
            for rs in frontier:
                if rs in found:
                    continue
                found[rs] = frozenset(
                    a for a, fs in enumerate(facet_sets) if rs <= fs
                )
                for fs in facet_sets:
                    inter = rs & fs
                    if inter not in found:
                        nxt.add(inter)
            frontier = nxt
        return tuple(sorted(((tuple(sorted(s)), tuple(sorted(r))) for r, s in found.items()),
                            key=lambda fr: (len(fr[1]) == 0, -len(fr[1]), fr)))

    @cached_property
    def outer(self) -> tuple:
        """Facets meeting the open positive chamber."""
        d = self.datum
        walls = list(d.semisimple_basis)
        flags = []
        for a, u in enumerate(self.normals):
            others = [v for b, v in enumerate(self.normals) if b != a]
            rays = cone_rays(others + walls, self.dim, equalities=[u])
            if not rays:
                flags.append(False)
                continue
            centre = lincomb([1] * len(rays), rays, self.dim)
            flags.append(all(dot(w, centre) > 0 for w in walls))
        return tuple(flags)

    @cached_property
    def transport(self) -> tuple:
        """Per facet: (Weyl index, sigma_A(u_A), consistent) with w^-1 mapping the facet to an outer one."""
        d = self.datum
        outer_dirs = {primitive(u) for u, o in zip(self.normals, self.outer) if o}
        out = []
        for u in self.normals:
            cands = []
            for k, w in enumerate(d.weyl):
                pulled = matvec(transpose(w), u)
                if primitive(pulled) in outer_dirs:
                    cands.append((k, dot(matvec(w, d.sigma), u)))
            if not cands:
                raise ConeError(f"facet {u} is not Weyl-equivalent to an outer facet")
            values = {c[1] for c in cands}
            out.append((cands[0][0], cands[0][1], len(values) == 1))
        return tuple(out)

    def sigma_a(self, a: int) -> Fraction:
        return self.transport[a][1]

    def weyl_image(self, w_index: int) -> "MomentCone":
        w = self.datum.weyl_dual[w_index]
        return MomentCone(self.datum, tuple(matvec(w, u) for u in self.normals))

    def with_datum(self, datum: GroupDatum) -> "MomentCone":
        return MomentCone.build(datum, self.normals)


def validate_good_cone(cone: MomentCone) -> ValidationReport:
    """Check primitivity (C1), the face lattice condition (C2), W-invariance,
    root integrality and minimality."""
    d = cone.datum
    notes = []
    lat = [d.lattice_coords(u) for u in cone.normals]
    c1_fail = []
    for u, c in zip(cone.normals, lat):
        if any(x.denominator != 1 for x in c):
            c1_fail.append(u)
            continue
        if primitive(c) != c:
            c1_fail.append(u)

    faces = []
    apex_checked = False
    for facets, rays_in in cone.faces:
        if not facets:
            continue
        is_apex = not rays_in
        if is_apex and len(facets) != d.dim:
            notes.append("apex is not simple; C2 is not applied to it")
            continue
        if is_apex:
            apex_checked = True
        rows = [lat[a] for a in facets]
        if any(x.denominator != 1 for r in rows for x in r):
            faces.append(FaceCheck(facets, (), False, is_apex))
            continue
        divs = tuple(elementary_divisors([[int(x) for x in r] for r in rows]))
        ok = len(divs) == len(facets) and all(x == 1 for x in divs)
        faces.append(FaceCheck(facets, divs, ok, is_apex))
    c2 = all(f.ok for f in faces)
    c2_punctured = all(f.ok for f in faces if not f.apex)

    dirs = {primitive(u) for u in cone.normals}
    w_inv = all({primitive(matvec(w, u)) for u in cone.normals} == dirs for w in d.weyl_dual)
    allroots = list(d.positive_roots)
    root_int = all(dot(a, u).denominator == 1 for a in allroots for u in cone.normals)

    minimal = len(dirs) == len(cone.normals)
    for u in cone.normals:
        tight_rays = [cone.rays[i] for i in cone.tight(u)]
        if (rank(tight_rays) if tight_rays else 0) != d.dim - 1:
            minimal = False
    return ValidationReport(
        c1=not c1_fail,
        c1_failures=tuple(c1_fail),
        c2=c2,
        c2_faces=tuple(faces),
        apex_checked=apex_checked,
        c2_away_from_apex=c2_punctured,
        w_invariant=w_inv,
        root_integral=root_int,
        minimal=minimal,
        notes=tuple(dict.fromkeys(notes)),
    )


@dataclass(frozen=True)
class Gamma0:
    gamma0: Vec
    residuals: tuple
    outer_residuals: tuple

    def value(self, x: Sequence) -> Fraction:
        return dot(self.gamma0, x)


def solve_gamma0(cone: MomentCone) -> Gamma0:
    """Solve gamma0(u_A) = -1 + 2 sigma_A(u_A) for gamma0 vanishing on the semisimple part.

    The outer facets determine gamma0 by exact least squares; every facet's
    equation is then checked as an exact residual.
    """
    d = cone.datum
    zeta = d.center_dual_basis
    m = len(zeta)
    outer_idx = [a for a, o in enumerate(cone.outer) if o]
    rows = [tuple(dot(z, cone.normals[a]) for z in zeta) for a in outer_idx]
    rhs = [-1 + 2 * cone.sigma_a(a) for a in outer_idx]
    if m == 0 or rank(rows) < m:
        kernel = nullspace(rows, m) if rows else [tuple(Fraction(int(i == j)) for j in range(m)) for i in range(m)]
        raise ConeError(
            "Fano functional is not unique: rank-deficient system",
            kernel=[lincomb(k, zeta, d.dim) for k in kernel],
        )
    mtm = matmul(transpose(rows), rows)
    mtb = matvec(transpose(rows), rhs)
    coeffs = solve(mtm, mtb)
    g0 = lincomb(coeffs, zeta, d.dim)
    residuals = tuple(dot(g0, u) - (-1 + 2 * cone.sigma_a(a)) for a, u in enumerate(cone.normals))
    outer_res = tuple(residuals[a] for a in outer_idx)
    if any(r != 0 for r in residuals):
        raise ConeError(
            "transverse class not proportional to the basic first Chern class",
            residuals=residuals,
            gamma0=g0,
        )
    return Gamma0(g0, residuals, outer_res)


@dataclass(frozen=True)
class ReebCone:
    """Interior of the dual cone intersected with the centre, plus its Fano slice."""

    rays: tuple
    dual_rays: tuple
    center_basis: tuple
    center_constraints: tuple
    gamma0: Vec | None
    slice_value: int
    notes: tuple = ()

    def violated(self, xi: Sequence) -> list:
        return [r for r in self.rays if dot(r, xi) <= 0]

    def in_sigma(self, xi: Sequence, datum: GroupDatum) -> bool:
        return datum.in_center(xi) and not self.violated(xi)

    def in_sigma_o(self, xi: Sequence, datum: GroupDatum) -> bool:
        if self.gamma0 is None:
            raise ConeError("Fano functional unavailable; the Fano slice is undefined")
        return self.in_sigma(xi, datum) and dot(self.gamma0, xi) == self.slice_value

    def rescale_to_slice(self, xi: Sequence) -> Vec:
        """Positive multiple of xi on the Fano slice."""
        if self.gamma0 is None:
            raise ConeError("Fano functional unavailable")
        g = dot(self.gamma0, xi)
        if g >= 0:
            raise ConeError("gamma0(xi) must be negative to rescale onto the slice")
        return scale(Fraction(self.slice_value) / g, xi)


def reeb_cone(cone: MomentCone, gamma0: Gamma0 | None = None) -> ReebCone:
    d = cone.datum
    notes = []
    if gamma0 is None:
        try:
            gamma0 = solve_gamma0(cone)
        except ConeError as exc:
            notes.append(f"Fano slice omitted: {exc}")
            gamma0 = None
    zb = d.center_basis
    constraints = tuple(tuple(dot(r, z) for z in zb) for r in cone.rays)
    return ReebCone(
        rays=cone.rays,
        dual_rays=cone.normals,
        center_basis=zb,
        center_constraints=constraints,
        gamma0=None if gamma0 is None else gamma0.gamma0,
        slice_value=-(d.n + 1),
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class FacetMeta:
    index: int
    normal: Vec
    outer: bool
    weyl_index: int
    sigma_a: Fraction
    lam: Fraction
    Lam: Fraction | None


def facet_meta(cone: MomentCone, gamma: Sequence, xi: Sequence, check_fano: bool = True) -> tuple:
    """lambda_A = gamma(u_A)/gamma(xi) and Lambda_A = (2/lambda_A)(1 - 2 sigma_A(u_A))."""
    d = cone.datum
    gamma = vec(gamma)
    gx = dot(gamma, xi)
    if gx == 0:
        raise ConeError("gamma(xi) = 0")
    out = []
    for a, u in enumerate(cone.normals):
        w, s, _ = cone.transport[a]
        lam = dot(gamma, u) / gx
        Lam = None if lam == 0 else 2 / lam * (1 - 2 * s)
        out.append(FacetMeta(a, u, cone.outer[a], w, s, lam, Lam))
    if check_fano and dot(gamma, xi) == -(d.n + 1):
        try:
            g0 = solve_gamma0(cone).gamma0
        except ConeError:
            g0 = None
        if g0 is not None and tuple(gamma) == tuple(g0):
            bad = [m for m in out if m.Lam != 2 * (d.n + 1)]
            if bad:
                raise ConeError("Fano normalization violated: Lambda_A != 2(n+1)", facets=bad)
    return tuple(out)
