from fractions import Fraction as F

from hypothesis import given, settings
from hypothesis import strategies as st
import pytest

from sasaki_cone.algebra import GroupDatum, matvec, primitive
from sasaki_cone.cone import MomentCone
from sasaki_cone.polytope import (
    Chart,
    HPolytope,
    PolytopeError,
    characteristic_polytope,
    iota_project,
    simplex_volume,
    translate_fano,
    triangulate,
    vertex_enumeration,
)

from conftest import psl2_xi


def q_points(x):
    """Closed-form vertices of the projected positive polytope of the PSL2 x C*^2 family."""
    return {
        (F(0), 1 / (x + 5)),
        (F(0), -1 / (5 - x)),
        (1 / (x + 5), 1 / (x + 5)),
        (3 / (5 - x), -1 / (5 - x)),
    }


@pytest.mark.parametrize("x", [F(0), F(-5, 2), F(3)])
def test_projected_vertices_closed_form(psl2, x):
    cp = characteristic_polytope(psl2, psl2_xi(x))
    proj = iota_project(cp, (0, 0, -1))
    got = {(v[0], v[1]) for v in proj.plus.vertices}
    assert all(v[2] == 0 for v in proj.plus.vertices)
    assert got == q_points(x)


def test_gl2_slice(gl2_cp):
    assert gl2_cp.plus.vertices == ((F(1, 2), F(1, 2)), (F(1), F(0)))
    assert gl2_cp.plus.volume == F(1, 2)


def test_translated_polytope_equals_projection_for_gamma0(gl2_cp):
    proj = iota_project(gl2_cp, (-2, -2))
    fano = translate_fano(proj, (-2, -2))
    assert fano.plus.vertices == proj.plus.vertices == ((0, 0), (F(1, 2), F(-1, 2)))
    assert all(off == F(1, 2) for _, off in fano.forms)


def test_iota_round_trip(psl2):
    cp = characteristic_polytope(psl2, psl2_xi(F(-5, 2)))
    proj = iota_project(cp, (0, 0, -1))
    for y in cp.full.vertices:
        assert proj.iota_inverse(proj.iota(y)) == y


def test_iota_round_trip_other_gamma(gl2_cp):
    proj = iota_project(gl2_cp, (-1, -1))
    for y in gl2_cp.full.vertices:
        assert proj.iota_inverse(proj.iota(y)) == y


def test_unit_cube_h_v_round_trip():
    rows = []
    for i in range(3):
        e = [0, 0, 0]
        e[i] = 1
        rows.append((tuple(e), 0))
        rows.append((tuple(-x for x in e), 1))
    h = HPolytope.build(rows)
    vp = vertex_enumeration(h)
    assert len(vp.vertices) == 8
    assert vp.h_from_v() == {primitive(tuple(a) + (b,)) for a, b in rows}
    tri = triangulate(vp)
    assert tri.volume == 1 and len(tri.simplices) == 6


def test_unbounded_rejected():
    h = HPolytope.build([((1, 0), 0), ((0, 1), 0)])
    with pytest.raises(PolytopeError, match="unbounded"):
        vertex_enumeration(h)


def test_reeb_outside_dual_cone_names_ray(gl2):
    with pytest.raises(PolytopeError, match="violated ray"):
        characteristic_polytope(gl2, (-1, -1))


def test_reeb_not_central(gl2):
    with pytest.raises(PolytopeError, match="centre"):
        characteristic_polytope(gl2, (1, 2))


def test_projection_rejects_gamma_on_semisimple(gl2_cp):
    with pytest.raises(PolytopeError):
        iota_project(gl2_cp, (1, -1))


@settings(max_examples=25, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(-4, 4), st.integers(-4, 4), st.integers(1, 4)),
        min_size=3,
        max_size=7,
    )
)
def test_triangulation_volume_conservation(rows):
    # random polytope inside the box [-1, 1]^2
    box = [((1, 0), 1), ((-1, 0), 1), ((0, 1), 1), ((0, -1), 1)]
    h = HPolytope.build(box + [((a, b), F(c, 2)) for a, b, c in rows if (a, b) != (0, 0)])
    vp = vertex_enumeration(h)
    if vp.empty or vp.dim < 2:
        return
    tri = triangulate(vp)
    # oracle: shoelace formula on the sorted boundary
    import math

    pts = list(vp.vertices)
    cx = sum(p[0] for p in pts) / len(pts)
    cy = sum(p[1] for p in pts) / len(pts)
    pts.sort(key=lambda p: math.atan2(float(p[1] - cy), float(p[0] - cx)))
    area = abs(sum(p[0] * q[1] - q[0] * p[1] for p, q in zip(pts, pts[1:] + pts[:1]))) / 2
    assert tri.volume == area
    assert sum(simplex_volume([vp.vertices[i] for i in s]) for s in tri.simplices) == area


def test_h_v_round_trip_random():
    h = HPolytope.build([((1, 0), 0), ((0, 1), 0), ((-1, -1), 1), ((1, -3), 2)])
    vp = vertex_enumeration(h)
    rows = vp.h_from_v()
    assert rows == {primitive(r) for r in [(1, 0, 0), (0, 1, 0), (-1, -1, 1), (1, -3, 2)]}
    h2 = HPolytope.build([(r[:-1], r[-1]) for r in rows])
    assert vertex_enumeration(h2).vertices == vp.vertices


def test_chart_invariance_of_vertices(psl2):
    xi = psl2_xi(F(-5, 2))
    base = characteristic_polytope(psl2, xi)
    for k in (1, 2):
        other = characteristic_polytope(psl2, xi, chart=k)
        assert other.plus.vertices == base.plus.vertices
        assert other.plus.chart.k == k


def test_weyl_image_of_slice(gl2_cp):
    d = gl2_cp.datum
    verts = set(gl2_cp.full.vertices)
    for w in d.weyl:
        assert {matvec(w, v) for v in verts} == verts


def test_chart_coordinates_round_trip():
    ch = Chart.for_hyperplane((0, 0, 5), 1)
    assert ch.k == 2
    t = (F(1, 3), F(-2, 7))
    assert ch.coords(ch.ambient(t)) == t


def test_toric_simplex():
    d = GroupDatum.build(2, [])
    c = MomentCone.build(d, [[1, 0], [0, 1]])
    cp = characteristic_polytope(c, (1, 1))
    assert cp.plus.volume == 1 and set(cp.plus.vertices) == {(0, 1), (1, 0)}
