"""Exact and quadrature integration of root-weighted densities over charted polytopes."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import roots_jacobi
from scipy.stats import qmc

from .algebra import Vec, dot, vec
from .polytope import ChartedPolytope, PolytopeError, leray_volume, simplex_volume


class QuadratureError(RuntimeError):
    def __init__(self, message: str, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


# ---------------------------------------------------------------------------
# Sparse exact polynomials


@dataclass(frozen=True)
class Polynomial:
    """Sparse polynomial with Fraction coefficients; keys are exponent tuples."""

    nvars: int
    terms: Mapping

    @classmethod
    def const(cls, c, nvars: int) -> "Polynomial":
        c = Fraction(c)
        return cls(nvars, {(0,) * nvars: c} if c else {})

    @classmethod
    def variable(cls, i: int, nvars: int) -> "Polynomial":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): Fraction(1)})

    @classmethod
    def affine(cls, a: Sequence, b=0) -> "Polynomial":
        n = len(a)
        terms = {}
        for i, ai in enumerate(a):
            if ai:
                e = [0] * n
                e[i] = 1
                terms[tuple(e)] = Fraction(ai)
        if b:
            terms[(0,) * n] = Fraction(b)
        return cls(n, terms)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        out = dict(self.terms)
        for e, c in other.terms.items():
            s = out.get(e, 0) + c
            if s:
                out[e] = s
            else:
                out.pop(e, None)
        return Polynomial(self.nvars, out)

    def __mul__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            c = Fraction(other)
            return Polynomial(self.nvars, {e: c * v for e, v in self.terms.items()} if c else {})
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return Polynomial(self.nvars, {e: c for e, c in out.items() if c})

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Polynomial":
        out = Polynomial.const(1, self.nvars)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def __call__(self, x: Sequence):
        total = 0
        for e, c in self.terms.items():
            t = c
            for xi, k in zip(x, e):
                if k:
                    t = t * xi**k
            total += t
        return total

    def substitute(self, images: Sequence["Polynomial"]) -> "Polynomial":
        """Replace variable i by images[i] (all in a common ring)."""
        m = images[0].nvars
        powers: dict = {}

        def pw(i, k):
            key = (i, k)
            if key not in powers:
                powers[key] = images[i] ** k
            return powers[key]

        out = Polynomial.const(0, m)
        for e, c in sorted(self.terms.items()):
            t = Polynomial.const(c, m)
            for i, k in enumerate(e):
                if k:
                    t = t * pw(i, k)
            out = out + t
        return out


def dirichlet_integral(p: Polynomial, volume: Fraction) -> Fraction:
    """Integral of a polynomial in barycentric coordinates over a k-simplex of given volume.

    Uses the closed form k! vol prod(a_j!) / (|a| + k)!.
    """
    k = p.nvars - 1
    total = Fraction(0)
    for e, c in p.terms.items():
        num = math.prod(math.factorial(a) for a in e)
        total += c * Fraction(num * math.factorial(k), math.factorial(sum(e) + k))
    return total * volume


def barycentric_images(vertices: Sequence[Vec]) -> list[Polynomial]:
    """Chart coordinate x_i as a linear form sum_j V_j[i] lambda_j."""
    m = len(vertices)
    d = len(vertices[0])
    return [Polynomial(m, {tuple(1 if j == jj else 0 for jj in range(m)): Fraction(v[i]) for j, v in enumerate(vertices) if v[i]}) for i in range(d)]


def integrate_poly_simplex(p: Polynomial, vertices: Sequence[Sequence], volume=None) -> Fraction:
    """Exact integral of p over conv(vertices).

    ``volume`` is required when the simplex is lower-dimensional (for instance a
    facet simplex with Leray measure); otherwise Lebesgue volume is used.
    """
    verts = [vec(v) for v in vertices]
    if volume is None:
        if len(verts) != len(verts[0]) + 1:
            raise ValueError("volume must be supplied for a lower-dimensional simplex")
        volume = simplex_volume(verts)
    if not p.terms:
        return Fraction(0)
    return dirichlet_integral(p.substitute(barycentric_images(verts)), Fraction(volume))


def pi_polynomial(poly: ChartedPolytope, datum) -> Polynomial:
    """pi(y) = prod <alpha, y>^2 pulled back to chart coordinates."""
    ch = poly.chart
    out = Polynomial.const(1, ch.dim)
    for ga in datum.gram_roots:
        a, b = ch.pull(ga)
        out = out * Polynomial.affine(a, b) ** 2
    return out


def _lambda_moments(pi: Polynomial, verts: Sequence[Vec], volume: Fraction, second: bool = False):
    """(int pi, [int pi lambda_j], [[int pi lambda_j lambda_l]]) on one simplex."""
    pl = pi.substitute(barycentric_images(verts))
    m = pl.nvars
    m0 = dirichlet_integral(pl, volume)
    lam = [Polynomial.variable(j, m) for j in range(m)]
    m1 = [dirichlet_integral(pl * lam[j], volume) for j in range(m)]
    m2 = None
    if second:
        m2 = [[dirichlet_integral(pl * lam[j] * lam[l], volume) for l in range(m)] for j in range(m)]
    return m0, m1, m2


# ---------------------------------------------------------------------------
# Exact moments


@dataclass(frozen=True)
class FacetIntegral:
    tag: tuple
    offset: Fraction  # ambient offset b of the facet form a . v + b
    Lam: Fraction | None
    mass: Fraction  # int pi dsigma_L
    first: Vec  # int v pi dsigma_L (ambient)


@dataclass(frozen=True)
class MomentReport:
    """Exact moment data of a charted positive-chamber polytope.

    ``V`` and the boundary integrals use chart Lebesgue measure and the Leray
    measure of each facet form; only ratios are chart independent.
    """

    V: Fraction
    first: Vec
    bar: Vec
    chart: int
    facets: tuple = ()
    barS: Fraction | None = None
    tilde_bar: Vec | None = None
    weight: str = "none"

    def as_dict(self) -> dict:
        out = {
            "V_P": str(self.V),
            "bar": [str(x) for x in self.bar],
            "chart": self.chart,
            "weight": self.weight,
        }
        if self.barS is not None:
            out["barS"] = str(self.barS)
        if self.tilde_bar is not None:
            out["tilde_bar"] = [str(x) for x in self.tilde_bar]
        return out


def polytope_moments(poly: ChartedPolytope, datum, Lam: Mapping | None = None) -> MomentReport:
    """Exact V, bar and, given per-facet Lambda_A, barS and tilde-bar.

    ``Lam`` maps cone-facet indices A to Lambda_A. Boundary terms use
    <v, nu_A> dsigma_0 = b_A dsigma_L on {a_A . v + b_A = 0}; this requires a
    chart through the origin, which holds for projected polytopes.
    """
    ch = poly.chart
    pi = pi_polynomial(poly, datum)
    D = len(ch.origin)
    V = Fraction(0)
    first = [Fraction(0)] * D
    for simp, vol in zip(poly.simplices(), poly.triangulation.volumes):
        m0, m1, _ = _lambda_moments(pi, simp, vol)
        V += m0
        amb = [ch.ambient(p) for p in simp]
        for i in range(D):
            first[i] += sum(m1[j] * amb[j][i] for j in range(len(simp)))
    if V == 0:
        raise PolytopeError("pi-weighted volume vanishes")
    bar = tuple(x / V for x in first)
    if Lam is None:
        return MomentReport(V, tuple(first), bar, ch.k)
    if ch.level != 0:
        raise PolytopeError("boundary terms need a chart through the origin")
    rows = dict(zip(poly.tags, poly.ambient_rows))
    facets = []
    for tag, a, _b, simplices in poly.cone_facets():
        A = tag[1]
        if A not in Lam:
            raise PolytopeError(f"missing Lambda for facet {A}")
        off = rows[tag][1]
        mass = Fraction(0)
        f1 = [Fraction(0)] * D
        for simp in simplices:
            vol = leray_volume(simp, a)
            m0, m1, _ = _lambda_moments(pi, simp, vol)
            mass += m0
            amb = [ch.ambient(p) for p in simp]
            for i in range(D):
                f1[i] += sum(m1[j] * amb[j][i] for j in range(len(simp)))
        facets.append(FacetIntegral(tag, off, Fraction(Lam[A]), mass, tuple(f1)))
    B0 = sum((f.Lam * f.offset * f.mass for f in facets), Fraction(0))
    B1 = [sum((f.Lam * f.offset * f.first[i] for f in facets), Fraction(0)) for i in range(D)]
    tilde = tuple(x / B0 for x in B1) if B0 else None
    return MomentReport(V, tuple(first), bar, ch.k, tuple(facets), B0 / V, tilde)


def divergence_check(poly: ChartedPolytope, datum, report: MomentReport) -> Fraction:
    """Returns sum_A b_A int pi dsigma_L - (dim + deg pi) V, zero by the divergence theorem."""
    deg = 2 * len(datum.positive_roots)
    s = sum((f.offset * f.mass for f in report.facets), Fraction(0))
    return s - (poly.chart.dim + deg) * report.V


# ---------------------------------------------------------------------------
# Floating-point quadrature for exponential weights


@lru_cache(maxsize=64)
def _conical_rule(d: int, q: int):
    """Stroud conical product rule on the unit d-simplex: (barycentric nodes, weights).

    Exact for polynomials of degree 2q - 1; weights sum to 1/d!.
    """
    grids = []
    for k in range(d):
        a = d - k - 1
        x, w = roots_jacobi(q, a, 0)
        grids.append(((x + 1) / 2, w / 2 ** (a + 1)))
    mesh = np.meshgrid(*[g[0] for g in grids], indexing="ij")
    wmesh = np.meshgrid(*[g[1] for g in grids], indexing="ij")
    xs = [m.ravel() for m in mesh]
    w = np.prod([m.ravel() for m in wmesh], axis=0)
    npts = w.size
    lam = np.zeros((npts, d + 1))
    rem = np.ones(npts)
    for k in range(d):
        lam[:, k] = rem * xs[k]
        rem = rem * (1 - xs[k])
    lam[:, d] = rem
    return lam, w


@dataclass(frozen=True)
class QuadResult:
    """Integrals scaled by e^{-log_scale}; ratios are unaffected."""

    Z: float
    first: np.ndarray
    second: np.ndarray | None
    error: float
    evaluations: int
    log_scale: float = 0.0

    @property
    def log_Z(self) -> float:
        return math.log(self.Z) + self.log_scale

    @property
    def bar(self) -> np.ndarray:
        return self.first / self.Z


@dataclass
class _FloatPoly:
    """Float view of a charted polytope for vectorized integrand evaluation."""

    basis: np.ndarray  # D x d
    origin: np.ndarray
    roots: np.ndarray  # |R+| x D, Gram-applied
    simplices: list = field(default_factory=list)

    def ambient(self, t: np.ndarray) -> np.ndarray:
        return t @ self.basis.T + self.origin

    def pi(self, y: np.ndarray) -> np.ndarray:
        if self.roots.size == 0:
            return np.ones(y.shape[0])
        return np.prod((y @ self.roots.T) ** 2, axis=1)


def float_view(poly: ChartedPolytope, datum) -> _FloatPoly:
    ch = poly.chart
    roots = np.array([[float(x) for x in r] for r in datum.gram_roots]) if datum.positive_roots else np.zeros((0, len(ch.origin)))
    simp = [np.array([[float(x) for x in p] for p in s]) for s in poly.simplices()]
    return _FloatPoly(ch.basis_matrix_float, ch.origin_float, roots, simp)


def _bisect(S: np.ndarray):
    d = S.shape[0]
    best, bi, bj = -1.0, 0, 1
    for i in range(d):
        for j in range(i + 1, d):
            L = np.sum((S[i] - S[j]) ** 2)
            if L > best + 1e-15:
                best, bi, bj = L, i, j
    mid = (S[bi] + S[bj]) / 2
    A = S.copy()
    B = S.copy()
    A[bj] = mid
    B[bi] = mid
    return A, B


@dataclass(frozen=True)
class AdaptiveResult:
    value: np.ndarray
    error: float
    evaluations: int
    cells: int


def adaptive_integrate(
    simplices: Sequence[np.ndarray],
    fn: Callable[[np.ndarray], np.ndarray],
    q: int,
    tol: float = 1e-10,
    max_depth: int = 12,
    weights: np.ndarray | None = None,
    reference: int = 0,
) -> AdaptiveResult:
    """Adaptive integral of a vector-valued ``fn`` over chart simplices.

    ``fn`` maps (N x d) chart points to (N x m) values. Two conical rules
    (q and q+3 points per direction) give a local error estimate, scaled
    componentwise by ``weights``; the worst simplex is bisected along its
    longest edge until the summed estimate is below ``tol`` times
    |value[reference]|. ``max_depth`` counts dyadic levels; one level is
    ``dim`` bisections.
    """
    if not simplices:
        raise PolytopeError("no simplices")
    d = simplices[0].shape[1]
    rules = (_conical_rule(d, q), _conical_rule(d, q + 3))
    cells: list = []
    heap: list = []
    nevals = 0
    run = {"total": 0.0, "err": 0.0}

    def quad(S, rule):
        lam, w = rule
        jac = abs(np.linalg.det(S[1:] - S[0])) if d else 1.0
        vals = np.asarray(fn(lam @ S), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return (w * jac) @ vals

    def push(S, depth):
        nonlocal nevals
        lo = quad(S, rules[0])
        hi = quad(S, rules[1])
        nevals += 2
        diff = np.abs(hi - lo)
        e = float(np.max(diff / weights)) if weights is not None else float(np.max(diff))
        cells.append([hi, e, depth, S])
        run["total"] = run["total"] + hi
        run["err"] += e
        heapq.heappush(heap, (-e, len(cells) - 1))

    for S in simplices:
        push(np.asarray(S, dtype=float), 0)
    limit = max_depth * max(d, 1)
    while True:
        total, err = run["total"], run["err"]
        if err <= tol * abs(total[reference]):
            break
        while heap and cells[heap[0][1]][2] >= limit:
            heapq.heappop(heap)
        if not heap:
            raise QuadratureError(
                "quadrature tolerance not reached at maximum depth",
                estimate=total,
                error=err,
            )
        _, idx = heapq.heappop(heap)
        hi, e, depth, S = cells[idx]
        run["total"] = run["total"] - hi
        run["err"] -= e
        cells[idx] = None
        A, B = _bisect(S)
        push(A, depth + 1)
        push(B, depth + 1)
    live = [c for c in cells if c is not None]
    total = np.sum([c[0] for c in live], axis=0)
    err = sum(c[1] for c in live)
    return AdaptiveResult(total, err, nevals, len(live))


def _bisect_batch(S: np.ndarray):
    """Longest-edge bisection of a stack of simplices (N x (d+1) x d)."""
    n, m, _ = S.shape
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    lengths = np.stack([np.sum((S[:, i] - S[:, j]) ** 2, axis=1) for i, j in pairs], axis=1)
    best = np.argmax(lengths - 1e-15 * np.arange(len(pairs)), axis=1)
    I = np.array([pairs[b][0] for b in best])
    J = np.array([pairs[b][1] for b in best])
    rows = np.arange(n)
    mid = (S[rows, I] + S[rows, J]) / 2
    A = S.copy()
    B = S.copy()
    A[rows, J] = mid
    B[rows, I] = mid
    return np.concatenate([A, B])


def adaptive_integrate_batched(
    simplices: Sequence[np.ndarray],
    fn: Callable[[np.ndarray], np.ndarray],
    q: int,
    tol: float = 1e-10,
    max_depth: int = 12,
) -> AdaptiveResult:
    """Scalar adaptive integral refined level-synchronously in vectorized batches.

    Same rule pair and error estimate as :func:`adaptive_integrate`; each
    round bisects the largest-error cells that together carry half of the
    current error estimate, so integrands with boundary singularities are
    processed with few Python-level calls.
    """
    d = simplices[0].shape[1]
    rules = (_conical_rule(d, q), _conical_rule(d, q + 3))
    limit = max_depth * max(d, 1)

    def evaluate(S):
        jac = np.abs(np.linalg.det(S[:, 1:] - S[:, :1]))
        out = []
        for lam, w in rules:
            pts = np.einsum("pk,nkd->npd", lam, S).reshape(-1, d)
            vals = np.asarray(fn(pts), dtype=float).reshape(len(S), len(w))
            out.append(jac * (vals @ w))
        return out[1], np.abs(out[1] - out[0])

    live = np.asarray(simplices, dtype=float)
    val, err = evaluate(live)
    depth = np.zeros(len(live), dtype=int)
    done_val, done_err = 0.0, 0.0
    nevals = 2 * len(live)
    while True:
        total = done_val + val.sum()
        etot = done_err + err.sum()
        if etot <= tol * abs(total):
            break
        capped = depth >= limit
        if capped.any():
            done_val += val[capped].sum()
            done_err += err[capped].sum()
            live, val, err, depth = live[~capped], val[~capped], err[~capped], depth[~capped]
        if not len(live) or done_err > tol * abs(total):
            raise QuadratureError(
                "quadrature tolerance not reached at maximum depth", estimate=total, error=etot
            )
        order = np.argsort(-err, kind="stable")
        csum = np.cumsum(err[order])
        k = int(np.searchsorted(csum, 0.5 * csum[-1])) + 1
        pick = np.zeros(len(live), dtype=bool)
        pick[order[:k]] = True
        children = _bisect_batch(live[pick])
        cval, cerr = evaluate(children)
        nevals += 2 * len(children)
        cdepth = np.concatenate([depth[pick], depth[pick]]) + 1
        live = np.concatenate([live[~pick], children])
        val = np.concatenate([val[~pick], cval])
        err = np.concatenate([err[~pick], cerr])
        depth = np.concatenate([depth[~pick], cdepth])
    return AdaptiveResult(
        np.array([done_val + val.sum()]), float(done_err + err.sum()), nevals, len(live)
    )


def integrate_exp_weighted(
    poly: ChartedPolytope,
    datum,
    X: Sequence[float],
    moment_degree: int = 1,
    tol: float = 1e-10,
    max_depth: int = 12,
    _fp: _FloatPoly | None = None,
) -> QuadResult:
    """Integrals of e^{X.v} pi, v e^{X.v} pi and (optionally) v v^T e^{X.v} pi.

    Values are scaled by e^{-max X.v} over the vertices to avoid overflow;
    the factor is kept in ``log_scale``.
    """
    fp = _fp or float_view(poly, datum)
    X = np.asarray(X, dtype=float)
    D = len(poly.chart.origin)
    order2 = moment_degree >= 2
    verts = np.vstack([fp.ambient(S) for S in fp.simplices])
    shift = float(np.max(verts @ X))
    span = float(np.max(np.abs(verts))) or 1.0

    def fn(t):
        y = fp.ambient(t)
        e = np.exp(y @ X - shift) * fp.pi(y)
        parts = [e[:, None], y * e[:, None]]
        if order2:
            parts.append((y[:, :, None] * y[:, None, :]).reshape(len(e), D * D) * e[:, None])
        return np.hstack(parts)

    weights = [np.ones(1), np.full(D, span)]
    if order2:
        weights.append(np.full(D * D, span * span))
    q = len(datum.positive_roots) + moment_degree + 3
    r = adaptive_integrate(fp.simplices, fn, q, tol, max_depth, np.concatenate(weights))
    total = r.value
    f2 = total[1 + D :].reshape(D, D) if order2 else None
    return QuadResult(total[0], total[1 : 1 + D], f2, r.error, r.evaluations, shift)


def log_partition(poly, datum, X, tol=1e-10, max_depth=12, _fp=None):
    """(log Z, bar_X, covariance, relative error) for the weight e^{X.v} pi."""
    r = integrate_exp_weighted(poly, datum, X, 2, tol, max_depth, _fp)
    bar = r.first / r.Z
    cov = r.second / r.Z - np.outer(bar, bar)
    return r.log_Z, bar, cov, r.error / r.Z


# ---------------------------------------------------------------------------
# Randomized quasi-Monte Carlo oracle


@dataclass(frozen=True)
class MCEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    samples: int


def _sorted_simplex_map(u: np.ndarray) -> np.ndarray:
    """Measure-preserving map from the unit cube to barycentric coordinates."""
    s = np.sort(u, axis=1)
    z = np.hstack([np.zeros((u.shape[0], 1)), s, np.ones((u.shape[0], 1))])
    return np.diff(z, axis=1)


def mc_oracle(
    poly: ChartedPolytope,
    datum,
    integrand: Callable[[np.ndarray], np.ndarray],
    samples: int = 10**6,
    replicates: int = 16,
    seed: int = 0,
) -> MCEstimate:
    """Scrambled-Sobol estimate of the chart integral of ``integrand(y)``.

    ``integrand`` receives ambient points (N x D) and returns (N,) or (N x m);
    the estimate is always a length-m array (m = 1 for scalar integrands).
    Samples are split across simplices in proportion to volume, rounded to
    powers of two; the standard error comes from independent scramblings.
    """
    fp = float_view(poly, datum)
    d = poly.chart.dim
    vols = np.array([abs(np.linalg.det(S[1:] - S[0])) / math.factorial(d) for S in fp.simplices])
    per_rep = max(samples // replicates, len(vols))
    target = np.maximum(1.0, per_rep * vols / vols.sum())
    counts = (2 ** np.round(np.log2(target))).astype(int)
    rng = np.random.default_rng(seed)
    reps = []
    for _ in range(replicates):
        total = None
        for S, vol, m in zip(fp.simplices, vols, counts):
            if d == 0:
                pts = np.repeat(S, m, axis=0)
            else:
                # 64-bit points: the default 30 bits leave a discretization bias near 1e-9
                eng = qmc.Sobol(d, scramble=True, bits=64, seed=rng)
                u = eng.random(int(m))
                pts = _sorted_simplex_map(u) @ S
            y = fp.ambient(pts)
            vals = np.asarray(integrand(y), dtype=float)
            if vals.ndim == 1:
                vals = vals[:, None]
            est = vol * vals.mean(axis=0)
            total = est if total is None else total + est
        reps.append(total)
    reps = np.array(reps)
    mean = reps.mean(axis=0)
    se = reps.std(axis=0, ddof=1) / math.sqrt(replicates)
    return MCEstimate(mean, se, int(counts.sum()) * replicates)


def pi_integrand(datum) -> Callable[[np.ndarray], np.ndarray]:
    roots = np.array([[float(x) for x in r] for r in datum.gram_roots])

    def f(y):
        if roots.size == 0:
            return np.ones(y.shape[0])
        return np.prod((y @ roots.T) ** 2, axis=1)

    return f
