"""Exact rational linear algebra, root systems and Weyl groups.

Vectors are tuples of :class:`fractions.Fraction`, matrices are tuples of
row tuples. Everything in this module is exact; floats are only accepted
by :func:`weight_pi` and :func:`xi_membership`, which are also used on
quadrature output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

Vec = tuple
Mat = tuple

WEYL_SIZE_CAP = math.factorial(10)


class AlgebraError(ValueError):
    """Invalid algebraic input (roots, Gram matrix, lattice)."""


def to_q(x) -> Fraction:
    """Parse an int, Fraction, decimal string or ``"p/q"`` string exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise AlgebraError(f"not a number: {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise AlgebraError(f"not a rational: {x!r}") from exc
    raise AlgebraError(f"not a rational: {x!r}")


def vec(xs: Iterable) -> Vec:
    return tuple(to_q(x) for x in xs)


def mat(rows: Iterable[Iterable]) -> Mat:
    return tuple(vec(r) for r in rows)


def zeros(n: int) -> Vec:
    return (Fraction(0),) * n


def unit(n: int, i: int) -> Vec:
    return tuple(Fraction(int(j == i)) for j in range(n))


def identity(n: int) -> Mat:
    return tuple(unit(n, i) for i in range(n))


def dot(a: Sequence, b: Sequence):
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


def add(a: Sequence, b: Sequence) -> Vec:
    return tuple(x + y for x, y in zip(a, b))


def sub(a: Sequence, b: Sequence) -> Vec:
    return tuple(x - y for x, y in zip(a, b))


def scale(c, a: Sequence) -> Vec:
    return tuple(c * x for x in a)


def lincomb(coeffs: Sequence, vectors: Sequence[Sequence], n: int) -> Vec:
    out = [Fraction(0)] * n
    for c, v in zip(coeffs, vectors):
        if c:
            for i, x in enumerate(v):
                out[i] += c * x
    return tuple(out)


def transpose(m: Sequence[Sequence]) -> Mat:
    return tuple(zip(*m)) if m else ()


def matvec(m: Sequence[Sequence], v: Sequence) -> Vec:
    return tuple(dot(row, v) for row in m)


def matmul(a: Sequence[Sequence], b: Sequence[Sequence]) -> Mat:
    bt = transpose(b)
    return tuple(tuple(dot(row, col) for col in bt) for row in a)


def is_zero(v: Sequence) -> bool:
    return all(x == 0 for x in v)


def rref(m: Sequence[Sequence]) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form and the pivot columns."""
    rows = [list(map(Fraction, r)) for r in m]
    if not rows:
        return rows, []
    ncols = len(rows[0])
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        p = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return rows, pivots


def rank(m: Sequence[Sequence]) -> int:
    return len(rref(m)[1]) if m else 0


def nullspace(m: Sequence[Sequence], ncols: int | None = None) -> list[Vec]:
    """Basis of {x : m x = 0}, one vector per free column."""
    if not m:
        n = ncols or 0
        return [unit(n, i) for i in range(n)]
    n = len(m[0])
    red, pivots = rref(m)
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for f in free:
        x = [Fraction(0)] * n
        x[f] = Fraction(1)
        for row, pc in zip(red, pivots):
            x[pc] = -row[f]
        basis.append(tuple(x))
    return basis


def solve(m: Sequence[Sequence], b: Sequence) -> Vec:
    """Unique solution of the square system m x = b."""
    n = len(m)
    aug = [list(r) + [bi] for r, bi in zip(m, b)]
    red, pivots = rref(aug)
    if pivots != list(range(n)):
        raise AlgebraError("singular linear system")
    return tuple(red[i][n] for i in range(n))


def inverse(m: Sequence[Sequence]) -> Mat:
    n = len(m)
    aug = [list(r) + list(unit(n, i)) for i, r in enumerate(m)]
    red, pivots = rref(aug)
    if pivots[:n] != list(range(n)):
        raise AlgebraError("singular matrix")
    return tuple(tuple(red[i][n:]) for i in range(n))


def det(m: Sequence[Sequence]) -> Fraction:
    rows = [list(map(Fraction, r)) for r in m]
    n = len(rows)
    d = Fraction(1)
    for c in range(n):
        p = next((i for i in range(c, n) if rows[i][c] != 0), None)
        if p is None:
            return Fraction(0)
        if p != c:
            rows[c], rows[p] = rows[p], rows[c]
            d = -d
        d *= rows[c][c]
        for i in range(c + 1, n):
            if rows[i][c] != 0:
                f = rows[i][c] / rows[c][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[c])]
    return d


def primitive(v: Sequence) -> Vec:
    """Positive rescaling of a nonzero rational vector to a primitive integer one."""
    den = math.lcm(*(Fraction(x).denominator for x in v))
    ints = [int(x * den) for x in v]
    g = math.gcd(*ints)
    if g == 0:
        raise AlgebraError("zero vector has no primitive form")
    return tuple(Fraction(x // g) for x in ints)


# ---------------------------------------------------------------------------
# Smith normal form


def smith_normal_form(m: Sequence[Sequence[int]]):
    """Return ``(U, D, V)`` with ``U @ M @ V == D`` and U, V unimodular.

    The diagonal of D holds the elementary divisors d1 | d2 | ... (all
    nonnegative). Matrices are lists of lists of Python ints.
    """
    a = [[int(x) for x in row] for row in m]
    for row, orig in zip(a, m):
        if any(x != y for x, y in zip(row, orig)):
            raise AlgebraError("Smith normal form needs an integer matrix")
    nr = len(a)
    nc = len(a[0]) if nr else 0
    u = [[int(i == j) for j in range(nr)] for i in range(nr)]
    v = [[int(i == j) for j in range(nc)] for i in range(nc)]

    def swap_rows(i, j):
        a[i], a[j] = a[j], a[i]
        u[i], u[j] = u[j], u[i]

    def swap_cols(i, j):
        for row in a:
            row[i], row[j] = row[j], row[i]
        for row in v:
            row[i], row[j] = row[j], row[i]

    def add_row(dst, src, f):
        a[dst] = [x + f * y for x, y in zip(a[dst], a[src])]
        u[dst] = [x + f * y for x, y in zip(u[dst], u[src])]

    def add_col(dst, src, f):
        for row in a:
            row[dst] += f * row[src]
        for row in v:
            row[dst] += f * row[src]

    t = 0
    while t < min(nr, nc):
        nonzero = [(abs(a[i][j]), i, j) for i in range(t, nr) for j in range(t, nc) if a[i][j]]
        if not nonzero:
            break
        _, i, j = min(nonzero)
        swap_rows(t, i)
        swap_cols(t, j)
        while True:
            changed = False
            for i in range(t + 1, nr):
                if a[i][t]:
                    add_row(i, t, -(a[i][t] // a[t][t]))
                    if a[i][t]:
                        swap_rows(t, i)
                        changed = True
            for j in range(t + 1, nc):
                if a[t][j]:
                    add_col(j, t, -(a[t][j] // a[t][t]))
                    if a[t][j]:
                        swap_cols(t, j)
                        changed = True
            if changed:
                continue
            bad = next(
                ((i, j) for i in range(t + 1, nr) for j in range(t + 1, nc) if a[i][j] % a[t][t]),
                None,
            )
            if bad is None:
                break
            add_row(t, bad[0], 1)
        if a[t][t] < 0:
            a[t] = [-x for x in a[t]]
            u[t] = [-x for x in u[t]]
        t += 1
    return u, a, v


def elementary_divisors(m: Sequence[Sequence[int]]) -> list[int]:
    if not m:
        return []
    _, d, _ = smith_normal_form(m)
    return [d[i][i] for i in range(min(len(d), len(d[0]))) if d[i][i] != 0]


# ---------------------------------------------------------------------------
# Root data


def check_gram(g: Mat) -> None:
    n = len(g)
    if any(len(r) != n for r in g):
        raise AlgebraError("Gram matrix must be square")
    if any(g[i][j] != g[j][i] for i in range(n) for j in range(n)):
        raise AlgebraError("Gram matrix must be symmetric")
    for k in range(1, n + 1):
        if det([r[:k] for r in g[:k]]) <= 0:
            raise AlgebraError("Gram matrix must be positive definite")


def reflection(alpha: Vec, gram: Mat) -> Mat:
    """Matrix of s_alpha(y) = y - 2<y,alpha>/<alpha,alpha> alpha on column vectors."""
    ga = matvec(gram, alpha)
    aa = dot(alpha, ga)
    n = len(alpha)
    return tuple(
        tuple(Fraction(int(i == j)) - 2 * alpha[i] * ga[j] / aa for j in range(n))
        for i in range(n)
    )


def generate_weyl(simple_roots: Sequence[Vec], gram: Mat) -> list[Mat]:
    """Closure of the simple reflections under composition, sorted."""
    n = len(gram)
    if simple_roots and rank(simple_roots) < len(simple_roots):
        raise AlgebraError("simple roots must be linearly independent")
    if any(is_zero(a) for a in simple_roots):
        raise AlgebraError("simple roots must be nonzero")
    gens = [reflection(a, gram) for a in simple_roots]
    start = identity(n)
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for w in frontier:
            for s in gens:
                ws = matmul(s, w)
                if ws not in seen:
                    seen.add(ws)
                    nxt.append(ws)
                    if len(seen) > WEYL_SIZE_CAP:
                        raise AlgebraError("reflection group exceeds 10! elements; not a root system")
        frontier = nxt
    return sorted(seen)


def pairing(a: Sequence, b: Sequence, gram: Sequence[Sequence]):
    return dot(a, matvec(gram, b))


def weight_pi(v: Sequence, datum: "GroupDatum"):
    """prod over positive roots of <alpha, v>^2 (Gram pairing)."""
    out = 1
    for ga in datum.gram_roots:
        s = sum(x * y for x, y in zip(ga, v))
        out = out * s * s
    return out


@dataclass(frozen=True)
class XiMembership:
    in_relative_interior: bool
    coeffs: tuple
    off_span_residual: tuple
    margin: object

    @property
    def in_closure(self) -> bool:
        return self.residual_zero and all(c >= 0 for c in self.coeffs)

    residual_zero: bool = True


def xi_membership(v: Sequence, datum: "GroupDatum", tol: float | None = None) -> XiMembership:
    """Decompose v over the simple roots plus a Gram-orthogonal residual.

    Exact when v is rational and ``tol`` is None. ``margin`` is the
    smallest coefficient (None in the toric case).
    """
    exact = tol is None and all(isinstance(x, (int, Fraction)) for x in v)
    simple = datum.simple_roots
    if exact:
        v = tuple(Fraction(x) for x in v)
        if simple:
            rhs = [pairing(a, v, datum.gram) for a in simple]
            coeffs = solve(datum.simple_gram, rhs)
        else:
            coeffs = ()
        residual = sub(v, lincomb(coeffs, simple, datum.dim))
        zero = is_zero(residual)
    else:
        import numpy as np

        tol = 1e-12 if tol is None else tol
        vf = np.array([float(x) for x in v])
        g = datum.gram_float
        if simple:
            s = np.array([[float(x) for x in a] for a in simple])
            coeffs = tuple(float(c) for c in np.linalg.solve(s @ g @ s.T, s @ g @ vf))
            residual = tuple(float(x) for x in vf - np.array(coeffs) @ s)
        else:
            coeffs = ()
            residual = tuple(float(x) for x in vf)
        zero = max((abs(x) for x in residual), default=0.0) <= tol
    margin = min(coeffs) if coeffs else None
    inside = zero and all(c > 0 for c in coeffs)
    return XiMembership(inside, tuple(coeffs), tuple(residual), margin, zero)


@dataclass(frozen=True, eq=False)
class GroupDatum:
    """Root system, Weyl group and centre/semisimple split of the torus."""

    dim: int
    positive_roots: tuple
    simple_roots: tuple
    center_basis: tuple
    lattice_basis: tuple
    gram: Mat
    weyl: tuple = field(repr=False)

    @classmethod
    def build(
        cls,
        rank: int,
        positive_roots: Sequence,
        center_basis: Sequence | None = None,
        simple_roots: Sequence | None = None,
        lattice_basis: Sequence | None = None,
        gram: Sequence | None = None,
    ) -> "GroupDatum":
        n = int(rank)
        if n < 1:
            raise AlgebraError("rank must be positive")
        roots = tuple(vec(a) for a in positive_roots)
        for i, a in enumerate(roots):
            if len(a) != n:
                raise AlgebraError(f"positive_roots[{i}] has length {len(a)}, expected {n}")
            if is_zero(a):
                raise AlgebraError(f"positive_roots[{i}] is zero")
        if len(set(roots) | {scale(-1, a) for a in roots}) != 2 * len(roots):
            raise AlgebraError("positive roots must be distinct and contain no pair alpha, -alpha")
        g = identity(n) if gram is None else mat(gram)
        check_gram(g)

        if simple_roots is None:
            rset = set(roots)
            simple = tuple(
                a for a in roots
                if not any(sub(a, b) in rset for b in roots if b != a)
            )
        else:
            simple = tuple(vec(a) for a in simple_roots)
            if not set(simple) <= set(roots):
                raise AlgebraError("simple roots must be positive roots")

        for a in roots:
            for b in roots:
                c = 2 * pairing(a, b, g) / pairing(b, b, g)
                if c.denominator != 1:
                    raise AlgebraError(f"Cartan pairing of {a} and {b} is not an integer: {c}")

        weyl = tuple(generate_weyl(simple, g))
        allroots = set(roots) | {scale(-1, a) for a in roots}
        for w in weyl:
            if any(matvec(w, a) not in allroots for a in simple):
                raise AlgebraError("Weyl group does not permute the roots")
        orbit = {matvec(w, a) for w in weyl for a in simple}
        if orbit != allroots:
            raise AlgebraError("positive roots are not the Weyl orbit of the simple roots")
        if simple:
            inv = inverse(transpose(simple)) if len(simple) == n else None
            for a in roots:
                c = _coords_in(simple, a, n) if inv is None else matvec(inv, a)
                if not (all(x >= 0 for x in c) and all(x.denominator == 1 for x in c)):
                    raise AlgebraError(f"root {a} is not a nonnegative integer combination of simple roots")

        ss_rank = rank_of(roots)
        if center_basis is None:
            zb = tuple(primitive(z) for z in nullspace(roots, n)) if roots else tuple(unit(n, i) for i in range(n))
        else:
            zb = tuple(vec(z) for z in center_basis)
            for i, z in enumerate(zb):
                if len(z) != n:
                    raise AlgebraError(f"center_basis[{i}] has length {len(z)}, expected {n}")
                if any(dot(a, z) != 0 for a in roots):
                    raise AlgebraError(f"center_basis[{i}] is not annihilated by the roots")
            if len(zb) != n - ss_rank or (zb and rank_of(zb) != len(zb)):
                raise AlgebraError(f"center_basis must be a basis of the {n - ss_rank}-dimensional centre")

        if lattice_basis is None:
            lat = identity(n)
        else:
            lat = mat(lattice_basis)
            if len(lat) != n or any(len(r) != n for r in lat) or det(lat) == 0:
                raise AlgebraError("lattice_basis must be n linearly independent vectors")
        return cls(n, roots, simple, zb, lat, g, weyl)

    # -- derived data -----------------------------------------------------

    @cached_property
    def gram_roots(self) -> tuple:
        """G alpha for each positive root, so that <alpha, v> = (G alpha) . v."""
        return tuple(matvec(self.gram, a) for a in self.positive_roots)

    @cached_property
    def gram_float(self):
        import numpy as np

        return np.array([[float(x) for x in r] for r in self.gram])

    @cached_property
    def simple_gram(self) -> Mat:
        return tuple(tuple(pairing(a, b, self.gram) for b in self.simple_roots) for a in self.simple_roots)

    @cached_property
    def sigma(self) -> Vec:
        return scale(Fraction(1, 2), lincomb([1] * len(self.positive_roots), self.positive_roots, self.dim))

    @cached_property
    def cartan_matrix(self) -> Mat:
        g = self.gram
        return tuple(
            tuple(2 * pairing(a, b, g) / pairing(b, b, g) for b in self.simple_roots)
            for a in self.simple_roots
        )

    @cached_property
    def fundamental_weights(self) -> tuple:
        """varpi_i in the span of the simple roots with 2<varpi_i, alpha_j>/|alpha_j|^2 = delta_ij."""
        if not self.simple_roots:
            return ()
        coeffs = inverse(self.cartan_matrix)
        return tuple(lincomb(row, self.simple_roots, self.dim) for row in coeffs)

    @cached_property
    def semisimple_basis(self) -> tuple:
        """Coroot directions G alpha_i spanning the semisimple part of the torus algebra."""
        return tuple(matvec(self.gram, a) for a in self.simple_roots)

    @cached_property
    def center_dual_basis(self) -> tuple:
        """Basis of the functionals vanishing on the semisimple part."""
        if not self.simple_roots:
            return tuple(unit(self.dim, i) for i in range(self.dim))
        return tuple(primitive(z) for z in nullspace(self.semisimple_basis, self.dim))

    @cached_property
    def weyl_dual(self) -> tuple:
        """Action of each Weyl element on the torus algebra (inverse transpose)."""
        return tuple(transpose(inverse(w)) for w in self.weyl)

    @property
    def n(self) -> int:
        """Complex dimension minus one: n + 1 = rank + number of roots."""
        return self.dim + 2 * len(self.positive_roots) - 1

    def in_center(self, x: Sequence) -> bool:
        return all(dot(a, x) == 0 for a in self.positive_roots)

    def lattice_coords(self, x: Sequence) -> Vec:
        return solve(transpose(self.lattice_basis), x)

    def sum_with(self, other: "GroupDatum") -> "GroupDatum":
        """Direct product of two data in block coordinates."""
        n1, n2 = self.dim, other.dim
        pad1 = lambda v: tuple(v) + zeros(n2)
        pad2 = lambda v: zeros(n1) + tuple(v)
        gram = tuple(pad1(r) for r in self.gram) + tuple(pad2(r) for r in other.gram)
        lat = tuple(pad1(r) for r in self.lattice_basis) + tuple(pad2(r) for r in other.lattice_basis)
        return GroupDatum.build(
            n1 + n2,
            [pad1(a) for a in self.positive_roots] + [pad2(a) for a in other.positive_roots],
            center_basis=[pad1(z) for z in self.center_basis] + [pad2(z) for z in other.center_basis],
            simple_roots=[pad1(a) for a in self.simple_roots] + [pad2(a) for a in other.simple_roots],
            lattice_basis=lat,
            gram=gram,
        )

    def with_gram(self, gram: Sequence) -> "GroupDatum":
        return GroupDatum.build(
            self.dim, self.positive_roots, self.center_basis, self.simple_roots, self.lattice_basis, gram
        )


def rank_of(vectors: Sequence[Sequence]) -> int:
    return rank(vectors) if vectors else 0


def _coords_in(basis: Sequence[Vec], v: Vec, n: int) -> Vec:
    """Coordinates of v in a (possibly non-square) independent basis."""
    m = [list(col) + [vi] for col, vi in zip(zip(*basis), v)]
    red, pivots = rref(m)
    k = len(basis)
    if k in pivots:
        raise AlgebraError(f"{v} is not in the span")
    out = [Fraction(0)] * k
    for row, pc in zip(red, pivots):
        out[pc] = row[k]
    return tuple(out)
