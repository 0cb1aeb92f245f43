"""Existence criteria: Einstein barycenter test, Futaki residuals, properness conditions, solitons."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .algebra import Vec, add, dot, lincomb, nullspace, scale, sub, vec, xi_membership
from .cone import MomentCone, facet_meta, reeb_cone, solve_gamma0
from .measure import QuadratureError, float_view, log_partition, polytope_moments
from .polytope import CharPolytope, characteristic_polytope, iota_project, translate_fano


class CriterionError(RuntimeError):
    """Internal inconsistency between two independent routes."""


class NotOnFanoSlice(ValueError):
    """gamma0(xi) != -(n+1); carries the rescaled Reeb vector."""

    def __init__(self, message: str, value, factor, suggested):
        super().__init__(message)
        self.value = value
        self.factor = factor
        self.suggested = suggested


class SolitonError(RuntimeError):
    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass
class Verdict:
    """Outcome of a barycenter membership test.

    ``holds`` is True/False, or None when a floating margin lies inside its
    quadrature error bound.
    """

    kind: str
    criterion_vector: tuple
    simple_root_coeffs: tuple
    off_span_residual: tuple
    holds: bool | None
    margin: object
    futaki_residuals: tuple = ()
    soliton_X: tuple | None = None
    newton_residual: float | None = None
    error_bound: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        def conv(x):
            if isinstance(x, Fraction):
                return str(x)
            if isinstance(x, (float, np.floating)):
                return float(x)
            if isinstance(x, (list, tuple)):
                return [conv(y) for y in x]
            if isinstance(x, dict):
                return {k: conv(v) for k, v in x.items()}
            return x

        return {
            "kind": self.kind,
            "holds": "indeterminate" if self.holds is None else self.holds,
            "criterion_vector": conv(self.criterion_vector),
            "simple_root_coeffs": conv(self.simple_root_coeffs),
            "off_span_residual": conv(self.off_span_residual),
            "margin": conv(self.margin),
            "futaki_residuals": conv(self.futaki_residuals),
            "soliton_X": conv(self.soliton_X),
            "newton_residual": self.newton_residual,
            "error_bound": self.error_bound,
            "diagnostics": conv(self.diagnostics),
        }


def _gamma0_vec(cp: CharPolytope, gamma0) -> Vec:
    if gamma0 is None:
        return cp.gamma0.gamma0
    return vec(getattr(gamma0, "gamma0", gamma0))


def require_fano_slice(cp: CharPolytope, g0: Vec) -> None:
    n1 = cp.datum.n + 1
    val = dot(g0, cp.xi)
    if val != -n1:
        if val >= 0:
            raise NotOnFanoSlice(f"gamma0(xi) = {val} is not negative", val, None, None)
        factor = Fraction(-n1) / val
        raise NotOnFanoSlice(
            f"gamma0(xi) = {val} != -(n+1) = {-n1}; rescale xi by {factor}",
            val,
            factor,
            scale(factor, cp.xi),
        )


def criterion_vector(bar: Sequence, datum, g0: Sequence) -> tuple:
    """bar - 2 sigma/(n+1) + gamma0/(n+1)."""
    n1 = datum.n + 1
    return tuple(b - 2 * s / n1 + g / n1 for b, s, g in zip(bar, datum.sigma, g0))


@dataclass(frozen=True)
class FutakiResult:
    basis: tuple
    residuals: tuple
    xi_residual: object

    @property
    def vanishes(self) -> bool:
        return all(r == 0 for r in self.residuals) and self.xi_residual == 0


def soliton_directions(datum, g0: Sequence) -> tuple:
    """Basis of the centre intersected with ker(gamma0), as vectors of a."""
    cb = datum.center_basis
    if not cb:
        return ()
    coeffs = nullspace([[dot(g0, z) for z in cb]], len(cb))
    return tuple(lincomb(c, cb, datum.dim) for c in coeffs)


def futaki_check(bar: Sequence, datum, g0: Sequence, xi: Sequence) -> FutakiResult:
    """Residuals (bar + gamma0/(n+1))(Y) on centre directions killed by gamma0 and on xi."""
    n1 = datum.n + 1
    shifted = tuple(b + g / n1 for b, g in zip(bar, g0))
    basis = soliton_directions(datum, g0)
    return FutakiResult(basis, tuple(dot(shifted, y) for y in basis), dot(shifted, xi))


def se_criterion(cp: CharPolytope, gamma0=None, dual_check: bool = True) -> Verdict:
    """Barycenter test on the positive part of the characteristic polytope.

    Also evaluates the translated projected polytope and requires identical
    simple-root coefficients from both routes.
    """
    d = cp.datum
    g0 = _gamma0_vec(cp, gamma0)
    require_fano_slice(cp, g0)
    mom = polytope_moments(cp.plus, d)
    b = criterion_vector(mom.bar, d, g0)
    mem = xi_membership(b, d)
    fut = futaki_check(mom.bar, d, g0, cp.xi)
    diag = {"chart": cp.chart.k, "bar": mom.bar, "V": mom.V}
    if not d.positive_roots:
        diag["note"] = "no roots: the test reduces to the Futaki residuals"
    if dual_check:
        proj = translate_fano(iota_project(cp, g0), g0)
        mom2 = polytope_moments(proj.plus, d)
        n1 = d.n + 1
        b2 = tuple(x - 2 * s / n1 for x, s in zip(mom2.bar, d.sigma))
        mem2 = xi_membership(b2, d)
        if mem2.coeffs != mem.coeffs or mem2.in_relative_interior != mem.in_relative_interior:
            raise CriterionError(
                f"criterion routes disagree: {mem.coeffs} vs {mem2.coeffs}"
            )
        diag["translated_bar"] = mom2.bar
    return Verdict(
        kind="SE",
        criterion_vector=b,
        simple_root_coeffs=mem.coeffs,
        off_span_residual=mem.off_span_residual,
        holds=mem.in_relative_interior,
        margin=mem.margin,
        futaki_residuals=fut.residuals,
        diagnostics=diag,
    )


# ---------------------------------------------------------------------------
# Properness conditions for a general central functional


def semisimple_projection(v: Sequence, datum) -> tuple:
    """Gram-orthogonal projection of v onto the span of the roots."""
    mem = xi_membership(v, datum)
    return tuple(lincomb(mem.coeffs, datum.simple_roots, datum.dim)) if mem.coeffs else tuple(
        Fraction(0) for _ in v
    )


@dataclass(frozen=True)
class Properness:
    tildebar1: bool
    tildebar2: bool
    barS: bool
    margins: dict
    automatic: dict
    lam: tuple
    Lam: tuple
    S_bar: Fraction
    bar: tuple
    tilde_bar: tuple

    @property
    def holds(self) -> bool:
        return self.tildebar1 and self.tildebar2 and self.barS


def csc_properness(cp: CharPolytope, gamma: Sequence) -> Properness:
    d = cp.datum
    gamma = vec(gamma)
    meta = facet_meta(cp.cone, gamma, cp.xi, check_fano=False)
    proj = iota_project(cp, gamma)
    outer = [m for m in meta if m.outer]
    mom = polytope_moments(proj.plus, d, {m.index: m.Lam for m in meta})
    n1 = d.n + 1
    minLam = min(m.Lam for m in outer)
    tb_ss = semisimple_projection(mom.tilde_bar, d)
    b_ss = semisimple_projection(mom.bar, d)
    v1 = tuple(minLam * t - 4 * s for t, s in zip(tb_ss, d.sigma))
    m1 = xi_membership(v1, d)
    m2 = xi_membership(sub(tb_ss, b_ss), d)
    c2 = m2.residual_zero and all(c >= 0 for c in m2.coeffs)
    s_margin = n1 * minLam - mom.barS
    fano = all(m.Lam == 2 * n1 for m in outer)
    return Properness(
        tildebar1=m1.in_relative_interior,
        tildebar2=c2,
        barS=s_margin > 0,
        margins={"tildebar1": m1.margin, "tildebar2": m2.margin, "barS": s_margin},
        automatic={"tildebar2": fano, "barS": fano},
        lam=tuple(m.lam for m in meta),
        Lam=tuple(m.Lam for m in meta),
        S_bar=mom.barS,
        bar=mom.bar,
        tilde_bar=mom.tilde_bar,
    )


# ---------------------------------------------------------------------------
# Soliton vector field


@dataclass(frozen=True)
class SolitonResult:
    X: tuple
    bar_X: tuple  # on the projected polytope
    bar_X_char: tuple  # mapped back to the characteristic polytope
    verdict: Verdict
    trace: tuple
    iterations: int


def solve_soliton(
    cp: CharPolytope,
    gamma0=None,
    tol: float = 1e-10,
    max_depth: int = 12,
    newton_tol: float = 1e-12,
    max_iter: int = 100,
) -> SolitonResult:
    """Damped Newton for the soliton field on the centre directions killed by gamma0.

    Minimizes log int e^{X.v} pi over the projected positive polytope; the
    gradient is the weighted barycenter paired with the directions, the
    Hessian its covariance, which must be positive definite at every step.
    """
    d = cp.datum
    g0 = _gamma0_vec(cp, gamma0)
    require_fano_slice(cp, g0)
    dirs = soliton_directions(d, g0)
    if not dirs:
        v = se_criterion(cp, g0)
        v.kind = "soliton"
        v.soliton_X = tuple(0.0 for _ in range(d.dim))
        v.newton_residual = 0.0
        bar = v.diagnostics["bar"]
        return SolitonResult(v.soliton_X, tuple(bar), tuple(bar), v, (), 0)
    proj = iota_project(cp, g0)
    poly = proj.plus
    fp = float_view(poly, d)
    Y = np.array([[float(x) for x in y] for y in dirs])  # m x D
    verts = np.array([[float(x) for x in v] for v in poly.vertices])
    span = float(np.max(np.abs(verts))) or 1.0

    def evaluate(c):
        X = c @ Y
        logz, bar, cov, rel = log_partition(poly, d, X, tol, max_depth, fp)
        return X, bar, Y @ bar, Y @ cov @ Y.T, rel

    c = np.zeros(len(dirs))
    X, bar, psi, J, rel = evaluate(c)
    trace = [float(np.linalg.norm(psi))]
    it = 0
    while trace[-1] >= newton_tol * span:
        if it >= max_iter:
            raise SolitonError("Newton did not converge", trace)
        try:
            np.linalg.cholesky(J)
        except np.linalg.LinAlgError as exc:
            raise SolitonError("Jacobian not positive definite", trace) from exc
        step = -np.linalg.solve(J, psi)
        t = 1.0
        while True:
            if t < 2**-30:
                raise SolitonError("line search failed", trace)
            try:
                cand = evaluate(c + t * step)
            except QuadratureError:
                t /= 2
                continue
            if np.linalg.norm(cand[2]) < trace[-1]:
                break
            t /= 2
        c = c + t * step
        X, bar, psi, J, rel = cand
        trace.append(float(np.linalg.norm(psi)))
        it += 1
    # map back to the characteristic polytope
    gamma = np.array([float(x) for x in g0])
    gg = d.gram_float @ gamma
    xi = np.array([float(x) for x in cp.xi])
    bar_char = bar + ((1 - bar @ xi) / (gamma @ xi)) * gamma
    n1 = d.n + 1
    b = bar_char - 2 * np.array([float(s) for s in d.sigma]) / n1 + gamma / n1
    err = max(rel * span, 10 * trace[-1])
    mem = xi_membership(tuple(b), d, tol=max(10 * err, 1e-12))
    full = tuple(float((bar_char + gamma / n1) @ np.array([float(x) for x in z])) for z in d.center_basis)
    if not mem.residual_zero:
        holds = False
    elif mem.margin is None:
        holds = True
    elif abs(mem.margin) <= err:
        holds = None
    else:
        holds = mem.margin > 0
    v = Verdict(
        kind="soliton",
        criterion_vector=tuple(float(x) for x in b),
        simple_root_coeffs=mem.coeffs,
        off_span_residual=mem.off_span_residual,
        holds=holds,
        margin=mem.margin,
        futaki_residuals=full,
        soliton_X=tuple(float(x) for x in X),
        newton_residual=trace[-1],
        error_bound=err,
        diagnostics={"chart": poly.chart.k, "iterations": it, "gram_gamma": tuple(float(x) for x in gg)},
    )
    return SolitonResult(
        tuple(float(x) for x in X), tuple(float(x) for x in bar), tuple(float(x) for x in bar_char), v, tuple(trace), it
    )


# ---------------------------------------------------------------------------
# Reeb vector sweeps


@dataclass(frozen=True)
class SweepRecord:
    t: Fraction
    xi: Vec
    in_sigma_o: bool
    verdict: Verdict | None
    bar_X: tuple | None
    X: tuple | None
    seconds: float

    @property
    def holds(self):
        return None if self.verdict is None else self.verdict.holds


@dataclass(frozen=True)
class Sweep:
    records: tuple
    transitions: tuple  # (t_lo, t_hi, holds_lo, holds_hi) after bisection


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("SASAKI_CONE_THREADS", "1")))
    except ValueError:
        return 1


def _solve_at(cone: MomentCone, gamma0, rc, xi: Vec, t, tol, max_depth) -> SweepRecord:
    start = time.perf_counter()
    if not rc.in_sigma_o(xi, cone.datum):
        return SweepRecord(t, xi, False, None, None, None, time.perf_counter() - start)
    cp = characteristic_polytope(cone, xi)
    res = solve_soliton(cp, gamma0, tol=tol, max_depth=max_depth)
    return SweepRecord(t, xi, True, res.verdict, res.bar_X, res.X, time.perf_counter() - start)


def reeb_sweep(
    cone: MomentCone,
    xi0: Sequence,
    direction: Sequence,
    ts: Sequence,
    resolution=Fraction(1, 1000),
    tol: float = 1e-10,
    max_depth: int = 12,
) -> Sweep:
    """Soliton verdicts along xi(t) = xi0 + t * direction, sorted by t.

    Steps outside the Fano slice are recorded and skipped. Each change of
    verdict between neighbouring steps is bisected down to ``resolution``.
    """
    g = solve_gamma0(cone)
    rc = reeb_cone(cone, g)
    xi0, direction = vec(xi0), vec(direction)
    ts = sorted(Fraction(t) for t in ts)
    pt = lambda t: add(xi0, scale(t, direction))  # noqa: E731
    with ThreadPoolExecutor(max_workers=thread_count()) as ex:
        records = list(ex.map(lambda t: _solve_at(cone, g, rc, pt(t), t, tol, max_depth), ts))
    valid = [r for r in records if r.in_sigma_o and r.holds is not None]
    transitions = []
    for a, b in zip(valid, valid[1:]):
        if a.holds == b.holds:
            continue
        lo, hi, hlo, hhi = a.t, b.t, a.holds, b.holds
        while hi - lo > Fraction(resolution):
            mid = (lo + hi) / 2
            rec = _solve_at(cone, g, rc, pt(mid), mid, tol, max_depth)
            if rec.holds is None:
                break
            if rec.holds == hlo:
                lo = mid
            else:
                hi = mid
        transitions.append((lo, hi, hlo, hhi))
    return Sweep(tuple(records), tuple(transitions))


def linspace_exact(a, b, steps: int) -> list:
    a, b = Fraction(a), Fraction(b)
    if steps == 1:
        return [a]
    return [a + (b - a) * k / (steps - 1) for k in range(steps)]
