from fractions import Fraction as F

from hypothesis import given, settings
from hypothesis import strategies as st
import pytest

from sasaki_cone.algebra import GroupDatum
from sasaki_cone.cone import (
    ConeError,
    MomentCone,
    facet_meta,
    reeb_cone,
    solve_gamma0,
    validate_good_cone,
)

from conftest import planar_index2_cone, psl2_xi


def test_gl2_is_good(gl2):
    rep = validate_good_cone(gl2)
    assert rep.good and rep.apex_checked
    assert gl2.rays == ((0, 1), (1, 0))


def test_psl2_cone_passes_with_non_simple_apex(psl2):
    rep = validate_good_cone(psl2)
    assert rep.good
    assert not rep.apex_checked
    assert any("apex is not simple" in n for n in rep.notes)


def test_planar_index_two_cone_rejected():
    rep = validate_good_cone(planar_index2_cone())
    assert rep.c1 and not rep.c2 and not rep.good
    apex = [f for f in rep.c2_faces if f.apex]
    assert apex and apex[0].divisors == (1, 2)


def test_sl2xc_c2_is_diagnostic_only(sl2xc):
    rep = validate_good_cone(sl2xc)
    assert not rep.c2 and rep.structural and rep.c2_away_from_apex


def test_gamma0_values(gl2, sl2xc, psl2, orthant):
    assert solve_gamma0(gl2).gamma0 == (-2, -2)
    assert solve_gamma0(sl2xc).gamma0 == (-3, 0)
    assert solve_gamma0(psl2).gamma0 == (0, 0, -1)
    assert solve_gamma0(orthant).gamma0 == (-1, -1, -1)
    for c in (gl2, sl2xc, psl2, orthant):
        assert all(r == 0 for r in solve_gamma0(c).residuals)


def test_outer_facets(gl2, psl2):
    # only {y2 = 0} meets the open chamber {y1 > y2}
    assert gl2.outer == (False, True)
    assert psl2.outer == (True, True, True, False)


def test_reeb_cone_membership(gl2, sl2xc):
    rc = reeb_cone(gl2)
    assert rc.in_sigma((1, 1), gl2.datum)
    assert rc.in_sigma_o((1, 1), gl2.datum)
    assert not rc.in_sigma((1, 2), gl2.datum)  # not central
    assert not rc.in_sigma((-1, -1), gl2.datum)
    rc2 = reeb_cone(sl2xc)
    assert rc2.in_sigma((1, 0), sl2xc.datum) and not rc2.in_sigma_o((1, 0), sl2xc.datum)
    assert rc2.rescale_to_slice((1, 0)) == (F(4, 3), 0)


def test_facet_constants_fano(gl2, psl2):
    meta = facet_meta(gl2, (-2, -2), (1, 1))
    assert [m.Lam for m in meta] == [8, 8]
    meta4 = facet_meta(psl2, (0, 0, -1), psl2_xi(0))
    assert [m.lam for m in meta4] == [F(1, 5), F(1, 5), F(2, 5), F(2, 5)]
    assert all(m.Lam == 10 for m in meta4)


def test_cone_errors():
    d = GroupDatum.build(2, [])
    with pytest.raises(ConeError, match="normals\\[1\\] has length"):
        MomentCone.build(d, [[1, 0], [1, 0, 0]])
    with pytest.raises(ConeError, match="line"):
        MomentCone.build(d, [[1, 0], [-1, 0]])


@settings(max_examples=12, deadline=None)
@given(st.permutations(range(4)))
def test_gamma0_facet_order_invariant(perm):
    normals = [[0, -1, 1], [0, 1, 1], [-1, -1, 2], [1, -1, 2]]
    d = GroupDatum.build(3, [[1, 0, 0]])
    c = MomentCone.build(d, [normals[i] for i in perm])
    assert solve_gamma0(c).gamma0 == (0, 0, -1)
    assert validate_good_cone(c).good


@pytest.mark.parametrize("s", [F(1, 2), 2, 5])
def test_gamma0_gram_scaling_invariant(s):
    d = GroupDatum.build(3, [[1, 0, 0]])
    gram = [[s * int(i == j) for j in range(3)] for i in range(3)]
    c = MomentCone.build(d.with_gram(gram), [[0, -1, 1], [0, 1, 1], [-1, -1, 2], [1, -1, 2]])
    assert solve_gamma0(c).gamma0 == (0, 0, -1)


def test_product_cone_gamma0(gl2):
    pc = gl2.product(gl2)
    assert pc.datum.n == 7
    assert solve_gamma0(pc).gamma0 == (-2, -2, -2, -2)
