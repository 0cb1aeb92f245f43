import itertools
from fractions import Fraction as F
from math import gcd

from hypothesis import given, settings
from hypothesis import strategies as st
import pytest

from sasaki_cone.algebra import (
    AlgebraError,
    GroupDatum,
    det,
    elementary_divisors,
    generate_weyl,
    identity,
    inverse,
    matmul,
    matvec,
    nullspace,
    pairing,
    primitive,
    rank,
    smith_normal_form,
    solve,
    weight_pi,
    xi_membership,
)

small = st.integers(min_value=-6, max_value=6)


def _minors_gcd(m, k):
    """gcd of all k x k minors (determinantal divisor oracle)."""
    g = 0
    rows, cols = len(m), len(m[0])
    for r in itertools.combinations(range(rows), k):
        for c in itertools.combinations(range(cols), k):
            g = gcd(g, int(det([[m[i][j] for j in c] for i in r])))
    return g


def test_solve_and_inverse_exact():
    m = [[2, 1], [1, 3]]
    x = solve(m, [1, 2])
    assert x == (F(1, 5), F(3, 5))
    assert matmul(m, inverse(m)) == identity(2)
    assert det(m) == 5


def test_nullspace_and_rank():
    ns = nullspace([[1, -1, 0]], 3)
    assert len(ns) == 2
    assert all(v[0] == v[1] for v in ns)
    assert rank([[1, 2], [2, 4]]) == 1


def test_primitive_clears_denominators():
    assert primitive([F(2, 3), F(4, 3)]) == (1, 2)
    assert primitive([0, -6, 9]) == (0, -2, 3)


def test_snf_index_two_sublattice():
    # Normals of the PSL2 x C*^2 cone: every normal has even coordinate sum.
    m = [[0, -1, 1], [0, 1, 1], [-1, -1, 2], [1, -1, 2]]
    assert elementary_divisors(m) == [1, 1, 2]


def test_snf_planar_apex():
    assert elementary_divisors([[1, 0], [1, 2]]) == [1, 2]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(small, min_size=3, max_size=3), min_size=2, max_size=4))
def test_snf_matches_determinantal_divisors(m):
    u, d, v = smith_normal_form(m)
    assert [[int(x) for x in r] for r in matmul(matmul(u, m), v)] == d
    assert abs(det(u)) == 1 and abs(det(v)) == 1
    divs = elementary_divisors(m)
    prod = 1
    for k, dk in enumerate(divs, start=1):
        prod *= dk
        assert prod == _minors_gcd(m, k)
    for a, b in zip(divs, divs[1:]):
        assert b % a == 0


def test_weyl_group_orders():
    a1 = GroupDatum.build(2, [[1, -1]])
    assert len(a1.weyl) == 2
    a2 = GroupDatum.build(3, [[1, -1, 0], [0, 1, -1], [1, 0, -1]])
    assert len(a2.weyl) == 6
    b2 = GroupDatum.build(2, [[1, 0], [0, 1], [1, 1], [1, -1]])
    assert len(b2.weyl) == 8


def test_weyl_elements_preserve_gram():
    d = GroupDatum.build(3, [[1, -1, 0], [0, 1, -1], [1, 0, -1]])
    for w in d.weyl:
        for a in d.positive_roots:
            for b in d.positive_roots:
                assert pairing(matvec(w, a), matvec(w, b), d.gram) == pairing(a, b, d.gram)


def test_rejects_non_root_system():
    with pytest.raises(AlgebraError):
        GroupDatum.build(2, [[1, 0], [1, 1]])


def test_dimension_counts_roots_twice():
    assert GroupDatum.build(2, [[1, -1]]).n == 3
    assert GroupDatum.build(3, [[1, 0, 0]]).n == 4
    assert GroupDatum.build(3, []).n == 2


def test_sigma_and_fundamental_weight_a1():
    d = GroupDatum.build(2, [[1, -1]])
    assert d.sigma == (F(1, 2), F(-1, 2))
    (w,) = d.fundamental_weights
    (a,) = d.simple_roots
    assert 2 * pairing(w, a, d.gram) / pairing(a, a, d.gram) == 1
    assert d.center_basis == ((1, 1),)


@settings(max_examples=50, deadline=None)
@given(st.lists(small, min_size=3, max_size=3))
def test_pi_weyl_invariant(v):
    d = GroupDatum.build(3, [[1, -1, 0], [0, 1, -1], [1, 0, -1]])
    base = weight_pi(v, d)
    for w in d.weyl:
        assert weight_pi(matvec(w, v), d) == base


def test_xi_membership_exact_and_float():
    d = GroupDatum.build(2, [[1, -1]])
    m = xi_membership((F(1, 8), F(-1, 8)), d)
    assert m.coeffs == (F(1, 8),) and m.in_relative_interior and m.margin == F(1, 8)
    off = xi_membership((F(1, 8), F(1, 8)), d)
    assert not off.residual_zero and not off.in_relative_interior
    fl = xi_membership((0.125, -0.125), d, tol=1e-12)
    assert fl.in_relative_interior and abs(fl.coeffs[0] - 0.125) < 1e-15


def test_generate_weyl_requires_independent_roots():
    with pytest.raises(AlgebraError):
        generate_weyl([(1, 0), (2, 0)], identity(2))
