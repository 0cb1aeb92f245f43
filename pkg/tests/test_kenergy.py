import math
import random
from fractions import Fraction as F

from hypothesis import given, settings
from hypothesis import strategies as st
import numpy as np
import pytest

from sasaki_cone.algebra import dot
from sasaki_cone.kenergy import (
    KEnergyError,
    L_boundary,
    L_fano,
    L_polynomial,
    L_smooth,
    L_values_only,
    L_weighted,
    PLFunctionW,
    SampledConvexFn,
    WeightFn,
    bar_decomposition,
    build_guillemin,
    fano_data,
    identity_constant,
    linearity_regions,
    mu,
    necessary_test_function,
    nonlinear_part_N,
    positivity_scan,
    quadratic_polynomial,
    random_pl_function,
)
from sasaki_cone.measure import Polynomial
from sasaki_cone.polytope import characteristic_polytope

from conftest import psl2_xi

# converged value of N(u0) on the GL2 example from a ladder down to eps = 2^-20
N_U0_GL2 = 0.49221641669


@pytest.fixture(scope="module")
def fd_gl2(gl2_cp):
    return fano_data(gl2_cp)


@pytest.fixture(scope="module")
def fd_sl2(sl2xc_cp):
    return fano_data(sl2xc_cp)


@pytest.fixture(scope="module")
def fd_psl2(psl2):
    return fano_data(characteristic_polytope(psl2, psl2_xi(0)))


@pytest.fixture(scope="module")
def fd_steep(steep):
    return fano_data(characteristic_polytope(steep, (F(4, 5), 0)))


@pytest.mark.parametrize("name", ["fd_gl2", "fd_sl2", "fd_psl2"])
@pytest.mark.parametrize("seed", range(6))
def test_three_linear_routes_agree(request, name, seed):
    fd = request.getfixturevalue(name)
    f = random_pl_function(fd, random.Random(seed))
    regions = linearity_regions(f, fd)
    a = L_fano(f, fd, regions)
    assert a == L_boundary(f, fd, regions)
    assert a == L_values_only(f, fd, regions)


def test_regions_cover_polytope(fd_psl2):
    f = PLFunctionW.build([((1, 0, 0), 0), ((0, 1, 0), 0), ((0, -1, 0), F(1, 10))], fd_psl2.datum)
    regions = linearity_regions(f, fd_psl2)
    assert sum(r.poly.volume for r in regions) == fd_psl2.poly.volume
    assert len(regions) >= 2


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6), st.fractions(0, 3, max_denominator=5), st.fractions(0, 3, max_denominator=5))
def test_linear_part_is_linear(fd_sl2, s1, s2, s, t):
    fd = fd_sl2
    f = random_pl_function(fd, random.Random(s1), max_pieces=2)
    g = random_pl_function(fd, random.Random(s2), max_pieces=2)
    assert L_fano(f.combine(g, s, t), fd) == s * L_fano(f, fd) + t * L_fano(g, fd)


def test_non_dominant_piece_rejected(gl2):
    with pytest.raises(KEnergyError, match="positive chamber"):
        PLFunctionW.build([((0, 1), 0)], gl2.datum)


def test_weyl_invariant_evaluation(gl2):
    f = PLFunctionW.build([((2, -1), 0)], gl2.datum)
    assert f((1, 3)) == f((3, 1)) == 5


def test_constants_have_zero_linear_part(fd_gl2, fd_psl2):
    for fd in (fd_gl2, fd_psl2):
        f = PLFunctionW.build([(tuple(0 for _ in fd.datum.sigma), F(7, 3))], fd.datum)
        assert L_fano(f, fd) == 0 == L_boundary(f, fd)


def test_linear_part_of_central_functions_is_futaki(fd_psl2):
    ch = fd_psl2.poly.chart
    n1 = fd_psl2.n + 1
    bar = fd_psl2.moments.bar
    for z in fd_psl2.center_directions():
        a, b = ch.pull(z, 0)
        got = L_polynomial(Polynomial.affine(a, b), fd_psl2)
        want = 2 * n1 * dot(tuple(x - 2 * s / n1 for x, s in zip(bar, fd_psl2.datum.sigma)), z)
        assert got == want == F(-21, 25)


def test_central_function_pl_and_polynomial_agree(fd_psl2):
    z = fd_psl2.center_directions()[0]
    f = PLFunctionW.build([(z, 0)], fd_psl2.datum)
    a, b = fd_psl2.poly.chart.pull(z, 0)
    assert L_fano(f, fd_psl2) == L_polynomial(Polynomial.affine(a, b), fd_psl2)


def test_weighted_linear_part_with_constant_weight(fd_sl2):
    f = random_pl_function(fd_sl2, random.Random(3))
    w = WeightFn.constant(fd_sl2)
    got = L_weighted(f, fd_sl2, w)
    want = float(L_fano(f, fd_sl2) * fd_sl2.V / (2 * (fd_sl2.n + 1)))
    assert abs(got - want) < 1e-9
    assert w.m_f == w.M_f == w.C_f == 1.0


def test_weight_bounds(fd_psl2):
    w = WeightFn.exponential((0, 1, 0), fd_psl2)
    lo, hi = w.interval
    assert w.m_f == pytest.approx(math.exp(lo)) and w.M_f == pytest.approx(math.exp(hi))


def test_identity_constant_calibrated_then_exact(fd_gl2, fd_sl2):
    c = identity_constant(fd_gl2)
    assert c == 3
    tf = necessary_test_function(fd_sl2.datum, bar_decomposition(fd_sl2))
    assert c * L_fano(tf.f, fd_sl2) == tf.L_identity


def test_necessary_function_sign_on_failing_cone(fd_steep):
    tf = necessary_test_function(fd_steep.datum, bar_decomposition(fd_steep))
    assert tf.coefficient == F(-1, 64) and tf.predicted_sign == -1
    L = L_fano(tf.f, fd_steep)
    assert L == F(-1, 4)
    assert 3 * L == tf.L_identity


def test_necessary_function_needs_roots(orthant):
    fd = fano_data(characteristic_polytope(orthant, (1, 1, 1)))
    with pytest.raises(KEnergyError, match="no roots"):
        necessary_test_function(fd.datum, bar_decomposition(fd))


def test_positivity_scan_gl2(fd_gl2):
    rep = positivity_scan(fd_gl2, samples=100, seed=0)
    assert rep.ok and rep.samples == 100
    assert rep.minimum >= 0


def test_positivity_scan_finds_violation_on_steep_cone(fd_steep):
    rep = positivity_scan(fd_steep, samples=200, seed=1)
    assert not rep.ok
    assert rep.minimum < 0 and L_fano(rep.witness, fd_steep) < 0


def test_guillemin_one_dimensional_formula(fd_gl2):
    g = build_guillemin(fd_gl2)
    t = np.array([[-0.3], [0.0], [0.2]])
    x = t[:, 0]
    want = 0.5 * ((0.5 - x) * np.log(0.5 - x) + (0.5 + x) * np.log(0.5 + x))
    assert np.allclose(g.u_G(t), want, atol=1e-15)
    assert np.allclose(g.correction(t), math.log(2) + 0.5)


def test_u0_minus_uG_is_the_smooth_correction(fd_psl2):
    g = build_guillemin(fd_psl2)
    rng = np.random.default_rng(0)
    verts = np.array([[float(x) for x in fd_psl2.poly.chart.coords(v)] for v in fd_psl2.poly.vertices])
    w = rng.dirichlet(np.ones(len(verts)), size=20)
    t = w @ verts
    assert np.allclose(g.u_0(t) - g.u_G(t), g.correction(t), atol=1e-14)
    assert g.l_inf_lower_bound() == pytest.approx(0.8)


def test_boundary_evaluation(fd_gl2):
    g = build_guillemin(fd_gl2)
    edge = np.array([[0.5]])
    with pytest.raises(KEnergyError, match="boundary"):
        g.u_G(edge)
    assert g.u_G(edge, closed=True)[0] == 0.0
    with pytest.raises(KEnergyError, match="outside"):
        g.u_G(np.array([[0.6]]), closed=True)


@pytest.mark.parametrize("which", ["G", "0"])
def test_guillemin_derivatives_second_order(fd_psl2, which):
    g = build_guillemin(fd_psl2)
    val, grad, hess = {"G": (g.u_G, g.grad_G, g.hess_G), "0": (g.u_0, g.grad_0, g.hess_0)}[which]
    t0 = np.array([0.1, 0.02])
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        fd_grad = np.array([(val(np.array([t0 + h * e])) - val(np.array([t0 - h * e])))[0] / (2 * h) for e in np.eye(2)])
        fd_hess = np.array([(grad(np.array([t0 + h * e])) - grad(np.array([t0 - h * e])))[0] / (2 * h) for e in np.eye(2)])
        errs.append(
            max(np.max(np.abs(fd_grad - grad(np.array([t0]))[0])), np.max(np.abs(fd_hess - hess(np.array([t0]))[0])))
        )
    slopes = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(abs(s - 2) < 0.2 for s in slopes)


def test_u0_is_convex(fd_psl2):
    g = build_guillemin(fd_psl2)
    g.u0_fn().check_convex(np.array([[0.1, 0.0], [0.01, 0.15], [0.3, -0.05]]))


def test_nonlinear_part_gl2(fd_gl2):
    r = nonlinear_part_N(build_guillemin(fd_gl2).u0_fn(), fd_gl2)
    assert math.isfinite(r.value)
    assert abs(r.value - N_U0_GL2) <= r.error
    assert r.error < 1e-4


def test_nonlinear_part_ignores_added_constants(fd_gl2):
    u = build_guillemin(fd_gl2).u0_fn()
    a = nonlinear_part_N(u, fd_gl2)
    b = nonlinear_part_N(u.plus_linear((0,), 5.0), fd_gl2)
    assert a.value == b.value


def test_nonlinear_part_central_invariance(fd_psl2):
    u = build_guillemin(fd_psl2).u0_fn()
    base = nonlinear_part_N(u, fd_psl2)
    a_t, _ = fd_psl2.poly.chart.pull((0, F(1, 3), 0), 0)
    moved = nonlinear_part_N(u.plus_linear(a_t), fd_psl2)
    assert abs(moved.value - base.value) <= base.error + moved.error
    assert base.value == pytest.approx(-2.6954, abs=1e-3)


def test_nonconvex_input_rejected(fd_gl2):
    q = quadratic_polynomial(fd_gl2)
    u = SampledConvexFn.from_polynomial(q * F(-1))
    with pytest.raises(KEnergyError, match="positive definite"):
        nonlinear_part_N(u, fd_gl2, levels=range(4, 9))


def test_smooth_linear_part_matches_polynomial(fd_gl2, fd_psl2):
    for fd in (fd_gl2, fd_psl2):
        q = quadratic_polynomial(fd)
        for p in (q, q * q):
            val, err = L_smooth(SampledConvexFn.from_polynomial(p), fd)
            assert abs(val - float(L_polynomial(p, fd))) <= max(err, 1e-12)
    assert L_polynomial(quadratic_polynomial(fd_psl2), fd_psl2) == F(1327, 750)


def test_mu_grows_along_quadratic(fd_gl2):
    u0 = build_guillemin(fd_gl2).u0_fn()
    q = SampledConvexFn.from_polynomial(quadratic_polynomial(fd_gl2))
    vals = [mu(u0.plus(q, s), fd_gl2) for s in (0.0, 1.0, 4.0)]
    assert vals[0].L == pytest.approx(1.6137056, abs=1e-6)
    assert vals[0].mu < vals[1].mu < vals[2].mu
