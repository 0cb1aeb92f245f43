"""Reduced K-energy on the translated projected polytope: linear part, nonlinear part, test functions."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .algebra import Vec, dot, matvec, pairing, scale, sub, vec, xi_membership
from .cone import facet_meta
from .measure import (
    Polynomial,
    QuadratureError,
    adaptive_integrate,
    adaptive_integrate_batched,
    float_view,
    integrate_poly_simplex,
    pi_polynomial,
    polytope_moments,
)
from .polytope import ChartedPolytope, PolytopeError, Projection, leray_volume


class KEnergyError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Fano-normalized data


@dataclass(frozen=True, eq=False)
class FanoData:
    """Translated projected polytope with its facet constants and exact moments."""

    proj: Projection
    Lam: dict

    @property
    def datum(self):
        return self.proj.cp.datum

    @property
    def poly(self) -> ChartedPolytope:
        return self.proj.plus

    @property
    def n(self) -> int:
        return self.datum.n

    @cached_property
    def moments(self):
        return polytope_moments(self.poly, self.datum, self.Lam)

    @property
    def V(self) -> Fraction:
        return self.moments.V

    @cached_property
    def forms(self) -> tuple:
        """All facet forms (n_A, c_A) of the full polytope."""
        return self.proj.forms

    def tangent(self, w: Sequence) -> Vec:
        """Chart components of an ambient vector tangent to the polytope's hyperplane."""
        ch = self.poly.chart
        w = vec(w)
        if dot(ch.normal, w) != 0:
            raise KEnergyError("vector is not tangent to the polytope hyperplane")
        return tuple(x for j, x in enumerate(w) if j != ch.k)

    @cached_property
    def sigma_t(self) -> Vec:
        return self.tangent(self.datum.sigma)

    @cached_property
    def roots_t(self) -> tuple:
        return tuple(self.tangent(a) for a in self.datum.positive_roots)

    @cached_property
    def metric_logdet(self) -> float:
        """log det(B^T G B): converts chart Hessian determinants to a chart-free quantity."""
        B = self.poly.chart.basis_matrix_float
        return float(np.linalg.slogdet(B.T @ self.datum.gram_float @ B)[1])

    def center_directions(self) -> tuple:
        """Ambient a in the centre whose restriction to the hyperplane is nonzero (a basis mod normal)."""
        ch = self.poly.chart
        out = []
        for z in self.datum.center_basis:
            pulled, _ = ch.pull(z)
            if any(pulled):
                out.append(z)
        return tuple(out)


def fano_data(cp, gamma0=None) -> FanoData:
    from .polytope import iota_project, translate_fano

    g0 = cp.gamma0.gamma0 if gamma0 is None else vec(gamma0)
    proj = translate_fano(iota_project(cp, g0), g0)
    meta = facet_meta(cp.cone, g0, cp.xi)
    return FanoData(proj, {m.index: m.Lam for m in meta})


# ---------------------------------------------------------------------------
# Piecewise linear W-invariant functions


@dataclass(frozen=True)
class PLFunctionW:
    """f = max_N max_w (a_N . (w v)) + c_N; on the positive chamber f = max_N a_N . v + c_N.

    Gradients a_N are elements of the torus Lie algebra, paired with points
    by the plain dot product, and must be dominant.
    """

    pieces: tuple
    datum: object = field(compare=False, repr=False, default=None)

    @classmethod
    def build(cls, pieces: Sequence, datum) -> "PLFunctionW":
        out = []
        for a, c in pieces:
            a = vec(a)
            if any(dot(a, r) < 0 for r in datum.positive_roots):
                raise KEnergyError(f"piece gradient {a} is not in the closed positive chamber")
            out.append((a, Fraction(c)))
        return cls(tuple(out), datum)

    def __call__(self, v: Sequence):
        best = None
        for w in self.datum.weyl:
            wv = matvec(w, v)
            for a, c in self.pieces:
                val = dot(a, wv) + c
                if best is None or val > best:
                    best = val
        return best

    def chamber_value(self, v: Sequence):
        return max(dot(a, v) + c for a, c in self.pieces)

    def combine(self, other: "PLFunctionW", s=1, t=1) -> "PLFunctionW":
        """Pieces of s f + t g (valid for s, t >= 0) on the positive chamber."""
        s, t = Fraction(s), Fraction(t)
        pieces = []
        for a, c in self.pieces:
            for b, e in other.pieces:
                pieces.append((tuple(s * x + t * y for x, y in zip(a, b)), s * c + t * e))
        return PLFunctionW.build(pieces, self.datum)


@dataclass(frozen=True)
class Region:
    piece: int
    poly: ChartedPolytope
    moments: object


def linearity_regions(f: PLFunctionW, fd: FanoData) -> tuple:
    """Exact decomposition of P'+ into the regions where one piece attains the max."""
    base = fd.poly
    out = []
    for i, (a, c) in enumerate(f.pieces):
        rows, tags = [], []
        for j, (b, e) in enumerate(f.pieces):
            if j == i:
                continue
            diff = sub(a, b)
            off = c - e
            # a difference normal to the hyperplane is constant on the polytope
            slope, level = base.chart.pull(diff, off)
            if all(x == 0 for x in slope):
                if level < 0 or (level == 0 and j < i):
                    rows = None
                    break
                continue
            rows.append((diff, off))
            tags.append(("piece", j))
        if rows is None:
            continue
        poly = base.with_rows(rows, tags)
        try:
            v = poly.v
        except PolytopeError:
            continue
        if v.empty or v.dim < base.chart.dim:
            continue
        out.append(Region(i, poly, polytope_moments(poly, fd.datum, fd.Lam)))
    vol = sum((r.poly.volume for r in out), Fraction(0))
    if vol != base.volume:
        raise KEnergyError(f"linearity regions do not cover the polytope ({vol} vs {base.volume})")
    return tuple(out)


def _facet_rows(fd: FanoData) -> dict:
    return dict(zip(fd.poly.tags, fd.poly.ambient_rows))


def L_fano(f: PLFunctionW, fd: FanoData, regions=None) -> Fraction:
    """(2(n+1)/V) int <v - 2 sigma/(n+1), grad f> pi dv, exactly."""
    regions = regions if regions is not None else linearity_regions(f, fd)
    n1 = fd.n + 1
    total = Fraction(0)
    for r in regions:
        a, _ = f.pieces[r.piece]
        m = r.moments
        total += sum(ai * (fi - 2 * si * m.V / n1) for ai, fi, si in zip(a, m.first, fd.datum.sigma))
    return 2 * n1 * total / fd.V


def L_boundary(f: PLFunctionW, fd: FanoData, regions=None) -> Fraction:
    """V^{-1}[sum_A Lambda_A int_F f <v,nu> pi - S int f pi - 4 int sigma(grad f) pi], exactly."""
    regions = regions if regions is not None else linearity_regions(f, fd)
    S = fd.moments.barS
    total = Fraction(0)
    for r in regions:
        a, c = f.pieces[r.piece]
        m = r.moments
        for fi in m.facets:
            total += fi.Lam * fi.offset * (dot(a, fi.first) + c * fi.mass)
        total -= S * (dot(a, m.first) + c * m.V)
        total -= 4 * dot(fd.datum.sigma, a) * m.V
    return total / fd.V


def directional_derivative(p: Polynomial, w: Sequence) -> Polynomial:
    """Derivative of a chart polynomial along the chart vector w."""
    out = Polynomial.const(0, p.nvars)
    for j, wj in enumerate(w):
        if not wj:
            continue
        terms = {}
        for e, cf in p.terms.items():
            if e[j]:
                ne = list(e)
                ne[j] -= 1
                terms[tuple(ne)] = terms.get(tuple(ne), 0) + cf * e[j]
        out = out + Polynomial(p.nvars, terms) * wj
    return out


def _unit(j: int, d: int) -> tuple:
    return tuple(Fraction(int(i == j)) for i in range(d))


def L_polynomial(u: Polynomial, fd: FanoData) -> Fraction:
    """Exact Fano-form linear part of a polynomial u given in chart coordinates."""
    d = fd.poly.chart.dim
    n1 = fd.n + 1
    pi = pi_polynomial(fd.poly, fd.datum)
    integrand = Polynomial.const(0, d)
    for j in range(d):
        shift = Polynomial.variable(j, d) + Polynomial.const(-2 * fd.sigma_t[j] / n1, d)
        integrand = integrand + shift * directional_derivative(u, _unit(j, d))
    integrand = integrand * pi
    total = sum(
        (integrate_poly_simplex(integrand, S, vol) for S, vol in zip(fd.poly.simplices(), fd.poly.triangulation.volumes)),
        Fraction(0),
    )
    return 2 * n1 * total / fd.V


def L_values_only(f: PLFunctionW, fd: FanoData, regions=None) -> Fraction:
    """Gradient-free form: the sigma term is integrated by parts onto values of f.

    V^{-1}[sum_A int_F f pi (Lambda_A b_A + 4 n_A.sigma) dsigma_L - S int f pi
    + 4 int f D_sigma pi].
    """
    regions = regions if regions is not None else linearity_regions(f, fd)
    S = fd.moments.barS
    sigma = fd.datum.sigma
    pi = pi_polynomial(fd.poly, fd.datum)
    dpi = directional_derivative(pi, fd.sigma_t)
    rows = _facet_rows(fd)
    total = Fraction(0)
    for r in regions:
        a, c = f.pieces[r.piece]
        ch = r.poly.chart
        fa, fb = ch.pull(a, c)
        fpoly = Polynomial.affine(fa, fb)
        for tag, normal, _, simplices in r.poly.cone_facets():
            n_amb, b = rows[tag]
            w = fd.Lam[tag[1]] * b + 4 * dot(n_amb, sigma)
            for simp in simplices:
                total += w * integrate_poly_simplex(fpoly * pi, simp, leray_volume(simp, normal))
        m = r.moments
        total -= S * (dot(a, m.first) + c * m.V)
        integrand = fpoly * dpi
        for simp, vol in zip(r.poly.simplices(), r.poly.triangulation.volumes):
            total += 4 * integrate_poly_simplex(integrand, simp, vol)
    return total / fd.V


def L_weighted(f: PLFunctionW, fd: FanoData, weight: "WeightFn", Lambda_L=None, tol=1e-10) -> float:
    """int <v - (4/Lambda_L) sigma, grad f> f_a(v) pi dv over P'+ (no 1/V factor)."""
    Lambda_L = 2 * (fd.n + 1) if Lambda_L is None else Lambda_L
    regions = linearity_regions(f, fd)
    sig = np.array([float(x) for x in fd.datum.sigma])
    aw = np.array([float(x) for x in weight.direction])
    total = 0.0
    for r in regions:
        a = np.array([float(x) for x in f.pieces[r.piece][0]])
        fp = float_view(r.poly, fd.datum)

        def fn(t, a=a, fp=fp):
            y = fp.ambient(t)
            return ((y - (4.0 / float(Lambda_L)) * sig) @ a) * weight.profile(y @ aw) * fp.pi(y)

        total += float(adaptive_integrate(fp.simplices, fn, len(fd.datum.positive_roots) + 4, tol).value[0])
    return total


# ---------------------------------------------------------------------------
# Weights


@dataclass(frozen=True)
class WeightFn:
    """f_a(v) = f(a . v) with the bounds (m_f, M_f, C_f) measured on the polytope closure."""

    direction: Vec
    profile: Callable
    interval: tuple
    m_f: float
    M_f: float
    C_f: float

    @classmethod
    def build(cls, direction, profile, d1, d2, fd: FanoData, samples: int = 2001) -> "WeightFn":
        a = vec(direction)
        vals = [float(dot(a, v)) for v in fd.poly.vertices]
        lo, hi = min(vals), max(vals)
        t = np.linspace(lo, hi, samples)
        f0, f1, f2 = profile(t), d1(t), d2(t)
        m_f, M_f = float(np.min(f0)), float(np.max(f0))
        if m_f <= 0:
            raise KEnergyError("weight profile must be positive on the polytope")
        C_f = float(max(np.max(np.abs(f0)), np.max(np.abs(f1)), np.max(np.abs(f2))))
        return cls(a, profile, (lo, hi), m_f, M_f, C_f)

    @classmethod
    def exponential(cls, direction, fd: FanoData) -> "WeightFn":
        return cls.build(direction, np.exp, np.exp, np.exp, fd)

    @classmethod
    def constant(cls, fd: FanoData) -> "WeightFn":
        one = lambda t: np.ones_like(np.asarray(t, dtype=float))  # noqa: E731
        zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))  # noqa: E731
        return cls.build(tuple(0 for _ in fd.datum.sigma), one, zero, zero, fd)


# ---------------------------------------------------------------------------
# Smooth convex functions


def _vectorize(p: Polynomial) -> Callable:
    exps = np.array(list(p.terms.keys()), dtype=int).reshape(len(p.terms), p.nvars)
    coeffs = np.array([float(c) for c in p.terms.values()])

    def f(t):
        t = np.asarray(t, dtype=float)
        if not len(coeffs):
            return np.zeros(len(t))
        return np.prod(t[:, None, :] ** exps[None], axis=2) @ coeffs

    return f


@dataclass(frozen=True)
class SampledConvexFn:
    """u on chart coordinates through vectorized value/gradient/Hessian callables.

    ``kind`` is "guillemin" when u - u_G extends smoothly to the closure;
    ``closure_value`` evaluates u on the closed polytope (defaults to ``value``).
    """

    value: Callable
    grad: Callable
    hess: Callable
    kind: str = "smooth"
    closure_value: Callable | None = None

    def boundary_value(self, t):
        return (self.closure_value or self.value)(t)

    def plus_linear(self, a_t: Sequence, c=0.0) -> "SampledConvexFn":
        a = np.asarray([float(x) for x in a_t])
        return SampledConvexFn(
            lambda t: self.value(t) + t @ a + float(c),
            lambda t: self.grad(t) + a,
            self.hess,
            self.kind,
            lambda t: self.boundary_value(t) + t @ a + float(c),
        )

    def plus(self, other: "SampledConvexFn", s: float = 1.0) -> "SampledConvexFn":
        return SampledConvexFn(
            lambda x: self.value(x) + s * other.value(x),
            lambda x: self.grad(x) + s * other.grad(x),
            lambda x: self.hess(x) + s * other.hess(x),
            self.kind,
            lambda x: self.boundary_value(x) + s * other.boundary_value(x),
        )

    def check_convex(self, t: np.ndarray) -> None:
        eig = np.linalg.eigvalsh(self.hess(t))
        if np.any(eig <= 0):
            raise KEnergyError("Hessian not positive definite at a sample point")

    @classmethod
    def from_polynomial(cls, p: Polynomial) -> "SampledConvexFn":
        d = p.nvars
        grads = [_vectorize(directional_derivative(p, _unit(j, d))) for j in range(d)]
        hess = [
            [_vectorize(directional_derivative(directional_derivative(p, _unit(i, d)), _unit(j, d))) for j in range(d)]
            for i in range(d)
        ]
        return cls(
            _vectorize(p),
            lambda t: np.stack([g(t) for g in grads], axis=1),
            lambda t: np.stack([np.stack([h(t) for h in row], axis=1) for row in hess], axis=1),
        )


def _xlogx(l: np.ndarray) -> np.ndarray:
    return np.where(l > 0, l * np.log(np.where(l > 0, l, 1.0)), 0.0)


@dataclass(frozen=True)
class GuilleminData:
    """Guillemin potential u_G = 1/2 sum l'_A log l'_A and the corrected u_0 on P'."""

    fd: FanoData
    A: np.ndarray  # facet normals in chart coordinates (m x d)
    b: np.ndarray  # chart offsets

    def forms(self, t: np.ndarray, closed: bool = False) -> np.ndarray:
        l = np.asarray(t, dtype=float) @ self.A.T + self.b
        if closed:
            if np.any(l < -1e-9):
                raise KEnergyError("evaluation outside the polytope")
            return np.maximum(l, 0.0)
        if np.any(l <= 0):
            raise KEnergyError("evaluation on or outside the polytope boundary")
        return l

    def u_G(self, t, closed: bool = False):
        return 0.5 * np.sum(_xlogx(self.forms(t, closed)), axis=1)

    def grad_G(self, t):
        l = self.forms(t)
        return 0.5 * (np.log(l) + 1) @ self.A

    def hess_G(self, t):
        l = self.forms(t)
        return 0.5 * np.einsum("na,ai,aj->nij", 1 / l, self.A, self.A)

    @property
    def A_inf(self) -> np.ndarray:
        return self.A.sum(axis=0)

    def l_inf(self, t):
        return np.asarray(t, dtype=float) @ self.A_inf + self.b.sum()

    def correction(self, t):
        """u_0 - u_G = -1/2 l'_inf log l'_inf + log 2 + 1/2, smooth on the closure."""
        L = self.l_inf(t)
        return -0.5 * L * np.log(L) + math.log(2) + 0.5

    def u_0(self, t, closed: bool = False):
        return self.u_G(t, closed) + self.correction(t)

    def grad_0(self, t):
        L = self.l_inf(t)
        return self.grad_G(t) - 0.5 * (np.log(L) + 1)[:, None] * self.A_inf

    def hess_0(self, t):
        L = self.l_inf(t)
        return self.hess_G(t) - 0.5 * (1 / L)[:, None, None] * np.outer(self.A_inf, self.A_inf)

    def l_inf_lower_bound(self) -> float:
        ch = self.fd.poly.chart
        full = [np.array([float(x) for x in ch.coords(v)]) for v in self.fd.proj.full.vertices]
        return float(min(self.l_inf(np.array([p]))[0] for p in full))

    def guillemin_fn(self) -> SampledConvexFn:
        return SampledConvexFn(self.u_G, self.grad_G, self.hess_G, "guillemin", lambda t: self.u_G(t, True))

    def u0_fn(self) -> SampledConvexFn:
        return SampledConvexFn(self.u_0, self.grad_0, self.hess_0, "guillemin", lambda t: self.u_0(t, True))


def build_guillemin(fd: FanoData) -> GuilleminData:
    ch = fd.poly.chart
    A, b = [], []
    for n_a, c in fd.forms:
        a, off = ch.pull(n_a, c)
        A.append([float(x) for x in a])
        b.append(float(off))
    g = GuilleminData(fd, np.array(A), np.array(b))
    if g.l_inf_lower_bound() <= 0:
        raise KEnergyError("sum of facet forms is not positive on the closed polytope")
    return g


# ---------------------------------------------------------------------------
# Nonlinear part


@dataclass(frozen=True)
class NResult:
    value: float
    error: float
    ladder: tuple  # (eps, integral / V) pairs
    extrapolants: tuple


def _nonlinear_density(u: SampledConvexFn, fd: FanoData, weight: WeightFn | None):
    fp = float_view(fd.poly, fd.datum)
    roots_t = np.array([[float(x) for x in r] for r in fd.roots_t]) if fd.roots_t else np.zeros((0, fd.poly.chart.dim))
    sig = np.array([float(x) for x in fd.sigma_t])
    mld = fd.metric_logdet
    aw = None if weight is None else np.array([float(x) for x in weight.direction])

    def density(t):
        y = fp.ambient(t)
        pi = fp.pi(y)
        g = u.grad(t)
        H = u.hess(t)
        sign, logdet = np.linalg.slogdet(H)
        if np.any(sign <= 0):
            raise KEnergyError("Hessian not positive definite at a quadrature node")
        ax = g @ roots_t.T if roots_t.size else np.zeros((len(t), 0))
        chi = -np.sum(np.log(np.sinh(ax) ** 2), axis=1) if ax.size else np.zeros(len(t))
        val = (-(logdet - mld) + chi + 4 * (g @ sig)) * pi
        if aw is not None:
            val = val * weight.profile(y @ aw)
        return val

    return fp, density


def nonlinear_part_N(
    u: SampledConvexFn,
    fd: FanoData,
    weight: WeightFn | None = None,
    tol: float = 1e-9,
    levels: Sequence[int] = tuple(range(4, 12)),
    max_depth: int = 30,
) -> NResult:
    """V^{-1}[-int log det(u_ij) pi + int (chi(grad u) + 4 sigma(grad u)) pi] on P'+.

    The integral is taken over homothetic shrinkings P_eps = c + (1 - eps)(P'+ - c)
    about the vertex centroid c for eps = 2^-k, k in ``levels``, and each
    consecutive triple is extrapolated to eps = 0 with the model
    I0 + a eps log eps + b eps. The extrapolants converge geometrically; the
    error bound is the geometric tail of their last differences plus the
    quadrature error propagated through the extrapolation weights. The Hessian determinant is taken relative
    to the Gram metric of the chart.

    Raises
    ------
    KEnergyError
        If a Hessian is not positive definite or the extrapolants are not Cauchy.
    """
    fp, density = _nonlinear_density(u, fd, weight)
    ch = fd.poly.chart
    c = np.mean([[float(x) for x in ch.coords(v)] for v in fd.poly.vertices], axis=0)
    V = float(fd.V)
    q = len(fd.datum.positive_roots) + 6
    ladder, qerrs = [], []
    for k in levels:
        eps = 2.0**-k
        simp = [c + (1 - eps) * (S - c) for S in fp.simplices]
        try:
            r = adaptive_integrate_batched(simp, density, q, tol, max_depth=max_depth)
        except QuadratureError as exc:
            raise KEnergyError(f"nonlinear part quadrature failed at eps = 2^-{k}") from exc
        ladder.append((eps, float(r.value[0]) / V))
        qerrs.append(max(r.error, tol * abs(float(r.value[0]))) / V)
    ext, noise = [], []
    for i in range(len(ladder) - 2):
        pts = ladder[i : i + 3]
        M = np.array([[1.0, e * math.log(e), e] for e, _ in pts])
        row = np.linalg.inv(M)[0]
        ext.append(float(row @ np.array([v for _, v in pts])))
        # quadrature error propagated through the extrapolation weights
        noise.append(float(np.abs(row) @ np.array(qerrs[i : i + 3])))
    if len(ext) < 4:
        raise KEnergyError("epsilon ladder too short")
    diffs = [abs(a - b) for a, b in zip(ext, ext[1:])]
    floors = [2 * (a + b) + 1e-13 * max(1.0, abs(ext[-1])) for a, b in zip(noise, noise[1:])]
    eff = [max(dd, fl) for dd, fl in zip(diffs, floors)]
    # two-step contraction rate; the extrapolants may overshoot once
    rho = math.sqrt(eff[-1] / eff[-3])
    if rho >= 0.9 and diffs[-1] > floors[-1]:
        raise KEnergyError(f"epsilon extrapolation is not Cauchy: {diffs}")
    err = max(eff[-1], eff[-2]) / (1 - min(rho, 0.9)) + noise[-1]
    return NResult(ext[-1], err, tuple(ladder), tuple(ext))


def _facet_integral(fn: Callable, simplex: Sequence, normal: Vec, tol: float) -> tuple:
    """Leray-measure integral of ``fn`` over a chart facet simplex, by parametrization."""
    S = np.array([[float(x) for x in p] for p in simplex])
    k = len(S) - 1
    factor = float(leray_volume(simplex, normal)) * math.factorial(k)
    if k == 0:
        return factor * float(fn(S)[0]), 0.0
    E = S[1:] - S[0]
    unit = np.vstack([np.zeros(k), np.eye(k)])
    r = adaptive_integrate_batched([unit], lambda x: fn(S[0] + x @ E), len(S) + 6, tol, max_depth=30)
    return factor * float(r.value[0]), factor * r.error


def L_smooth(u: SampledConvexFn, fd: FanoData, tol: float = 1e-10) -> tuple:
    """Linear part of a smooth or Guillemin-class u from its values on the closure.

    Uses the gradient-free form (see :func:`L_values_only`), so the
    logarithmic gradient singularity of Guillemin potentials never enters.
    Returns (value, error bound).
    """
    sigma = fd.datum.sigma
    pi = pi_polynomial(fd.poly, fd.datum)
    pi_f = _vectorize(pi)
    bulk = _vectorize(pi * Polynomial.const(-fd.moments.barS, pi.nvars) + directional_derivative(pi, fd.sigma_t) * 4)
    rows = _facet_rows(fd)
    total, err = 0.0, 0.0
    for tag, normal, _, simplices in fd.poly.cone_facets():
        n_amb, b = rows[tag]
        w = float(fd.Lam[tag[1]] * b + 4 * dot(n_amb, sigma))
        if w == 0:
            continue
        for simp in simplices:
            val, e = _facet_integral(lambda t: u.boundary_value(t) * pi_f(t), simp, normal, tol)
            total += w * val
            err += abs(w) * e
    fp = float_view(fd.poly, fd.datum)
    r = adaptive_integrate_batched(fp.simplices, lambda t: u.boundary_value(t) * bulk(t), len(fd.datum.positive_roots) + 6, tol, max_depth=30)
    total += float(r.value[0])
    err += r.error
    V = float(fd.V)
    return total / V, err / V


@dataclass(frozen=True)
class MuResult:
    mu: float
    L: float
    N: float
    error: float


def mu(u: SampledConvexFn, fd: FanoData) -> MuResult:
    """mu = L + N in the Fano normalization."""
    L, eL = L_smooth(u, fd)
    N = nonlinear_part_N(u, fd)
    return MuResult(L + N.value, L, N.value, eL + N.error)


def quadratic_polynomial(fd: FanoData, center: Sequence | None = None) -> Polynomial:
    """q(v) = <v - c, v - c> in the Gram metric, in chart coordinates (W-invariant for c = 0)."""
    ch = fd.poly.chart
    d = ch.dim
    c = vec(center) if center is not None else tuple(Fraction(0) for _ in ch.origin)
    coords = []
    for i in range(len(ch.origin)):
        row = tuple(ch.basis[j][i] for j in range(d))
        coords.append(Polynomial.affine(row, ch.origin[i] - c[i]))
    G = fd.datum.gram
    out = Polynomial.const(0, d)
    for i, pi_ in enumerate(coords):
        for j, pj in enumerate(coords):
            if G[i][j]:
                out = out + pi_ * pj * G[i][j]
    return out


# ---------------------------------------------------------------------------
# Necessary condition test functions


@dataclass(frozen=True)
class NecessaryTest:
    f: PLFunctionW
    root_index: int
    coefficient: Fraction
    predicted_sign: int
    L_identity: Fraction  # n(n+1)|alpha|^2 lambda
    note: str = ""


def bar_decomposition(fd: FanoData):
    """Simple-root coefficients of bar(P'+) - 2 sigma/(n+1)."""
    n1 = fd.n + 1
    b = tuple(x - 2 * s / n1 for x, s in zip(fd.moments.bar, fd.datum.sigma))
    return xi_membership(b, fd.datum)


def weight_function_gradient(datum, i: int) -> Vec:
    """The fundamental weight as a functional v -> <varpi_i, v> = v . (G varpi_i)."""
    return matvec(datum.gram, datum.fundamental_weights[i])


def necessary_test_function(datum, decomposition) -> NecessaryTest:
    """f(v) = max_w <w varpi_i, v> for the simple root with the smallest coefficient."""
    if not datum.simple_roots:
        raise KEnergyError("no roots: the test function needs a nontrivial semisimple part")
    coeffs = decomposition.coeffs
    i = min(range(len(coeffs)), key=lambda j: (coeffs[j], j))
    lam = coeffs[i]
    alpha = datum.simple_roots[i]
    norm2 = pairing(alpha, alpha, datum.gram)
    f = PLFunctionW.build([(weight_function_gradient(datum, i), 0)], datum)
    n = datum.n
    sign = (lam > 0) - (lam < 0)
    note = "criterion holds; no violating test function" if all(c > 0 for c in coeffs) else ""
    return NecessaryTest(f, i, lam, sign, n * (n + 1) * norm2 * lam, note)


def identity_constant(fd: FanoData) -> Fraction:
    """Ratio of the stated identity n(n+1)|alpha|^2 lambda to the directly integrated L(f)."""
    tf = necessary_test_function(fd.datum, bar_decomposition(fd))
    direct = L_fano(tf.f, fd)
    if direct == 0:
        raise KEnergyError("L(f) vanishes; the constant is undetermined")
    return tf.L_identity / direct


# ---------------------------------------------------------------------------
# Positivity scan


@dataclass(frozen=True)
class ScanReport:
    samples: int
    minimum: Fraction
    values: tuple
    witness: PLFunctionW | None
    ok: bool


def _dominant(a: Sequence, datum) -> Vec:
    for w in datum.weyl_dual:
        b = matvec(w, a)
        if all(dot(b, r) >= 0 for r in datum.positive_roots):
            return b
    raise KEnergyError("no dominant Weyl image found")


def random_pl_function(fd: FanoData, rng: random.Random, max_pieces: int = 4, denom: int = 8) -> PLFunctionW:
    datum = fd.datum
    k = rng.randint(1, max_pieces)
    pieces = []
    for _ in range(k):
        a = tuple(Fraction(rng.randint(-denom, denom), denom) for _ in range(datum.dim))
        c = Fraction(rng.randint(-denom, denom), denom * 4)
        pieces.append((_dominant(a, datum), c))
    return PLFunctionW.build(pieces, datum)


def positivity_scan(fd: FanoData, samples: int = 100, seed: int = 0, tol: float = 0.0) -> ScanReport:
    """L(f) >= -tol for random W-invariant convex PL functions, with exact arithmetic."""
    rng = random.Random(seed)
    values = []
    witness = None
    for _ in range(samples):
        f = random_pl_function(fd, rng)
        regions = linearity_regions(f, fd)
        L = L_fano(f, fd, regions)
        L2 = L_boundary(f, fd, regions)
        if L != L2:
            raise KEnergyError(f"linear part routes disagree: {L} vs {L2}")
        values.append(L)
        if L < -tol and witness is None:
            witness = f
    return ScanReport(samples, min(values), tuple(values), witness, witness is None)
