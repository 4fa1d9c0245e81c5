import numpy as np
import pytest

from slidemesh.cut import (CircleParameterization, InterfaceSide, LineParameterization,
                           build_interface_quadrature, build_uncovered_quadrature,
                           detect_candidate_pairs, intersect_intervals, pack_uncovered,
                           uncovered_intervals)
from slidemesh.errors import GeometryError
from slidemesh.mesh import build_annulus_mesh, build_structured_quad_mesh, rigid_rotate_subdomain

X_AXIS = LineParameterization((0.0, 0.0), (1.0, 0.0))


def line_sides(na, nb, b_rect=(0, 0, 1, 1)):
    a = build_structured_quad_mesh((0, -1, 1, 0), na, 2, 0, {"top": "if"})
    b = build_structured_quad_mesh(b_rect, nb, 2, 1, {"bottom": "if"})
    return (InterfaceSide(a, a.facets_with_tag("if"), "if"),
            InterfaceSide(b, b.facets_with_tag("if"), "if"))


def ring_sides(n_in=12, n_out=16, angle=0.0):
    inner = build_annulus_mesh(0.5, 0.75, n_in, 2, 0, tag_rules={"outer": "if"})
    inner = rigid_rotate_subdomain(inner, (0, 0), 1.0, angle)
    outer = build_annulus_mesh(0.75, 1.0, n_out, 2, 1, tag_rules={"inner": "if"})
    return (InterfaceSide(inner, inner.facets_with_tag("if"), "if"),
            InterfaceSide(outer, outer.facets_with_tag("if"), "if"))


def test_intersect_intervals():
    assert intersect_intervals((0, 1), (0.5, 1.5)) == (0.5, 1)
    assert intersect_intervals((0, 1), (2, 3)) is None
    assert intersect_intervals((0, 1), (1, 2)) is None
    assert intersect_intervals((0, 1), (1 - 1e-12, 2)) is None


def test_candidate_pairs():
    a, b = line_sides(3, 4)
    ea = a.mesh.facet_endpoints(a.facets)
    eb = b.mesh.facet_endpoints(b.facets)
    assert detect_candidate_pairs(ea, ea + 10.0) == []
    assert {(i, i) for i in range(3)} <= set(detect_candidate_pairs(ea, ea))
    pairs = detect_candidate_pairs(ea, eb)
    assert len(pairs) == 6
    for i, j in pairs:
        ia = sorted(ea[i, :, 0])
        ib = sorted(eb[j, :, 0])
        assert intersect_intervals(ia, ib) is not None


def test_matching_facets_one_cut_each():
    a, b = line_sides(4, 4)
    itf = build_interface_quadrature(a, b, X_AXIS)
    assert len(itf.cuts) == 4
    for c in itf.cuts:
        assert c.measure == pytest.approx(0.25, rel=1e-12)
    assert sum(c.measure for c in itf.cuts) == pytest.approx(1.0, abs=1e-12)


def test_non_matching_line_integrals():
    a, b = line_sides(3, 4)
    itf = build_interface_quadrature(a, b, X_AXIS)
    pk = itf.packed()
    assert len(itf.cuts) == 6
    assert pk["weights"].sum() == pytest.approx(1.0, abs=1e-12)
    assert np.sum(pk["weights"] * pk["x"][:, 0]) == pytest.approx(0.5, abs=1e-12)
    # polynomial of degree 5 is exact for the 3-point rule
    assert np.sum(pk["weights"] * pk["x"][:, 0] ** 5) == pytest.approx(1 / 6, abs=1e-12)
    for c in itf.cuts:
        assert np.all(c.weights > 0)
        assert np.abs(c.x - c.x_b).max() < 1e-9
        xa, _, _, _, _ = a.mesh.geometry(np.full(len(c.t_a), c.element_a), c.xi_a)
        xb, _, _, _, _ = b.mesh.geometry(np.full(len(c.t_b), c.element_b), c.xi_b)
        assert np.abs(xa - xb).max() < 1e-12
        assert np.allclose(c.normal, [0, 1])


def test_swap_symmetry():
    a, b = line_sides(3, 5)
    itf = build_interface_quadrature(a, b, X_AXIS)
    sw = build_interface_quadrature(b, a, X_AXIS)
    ma = sorted(round(c.measure, 14) for c in itf.cuts)
    mb = sorted(round(c.measure, 14) for c in sw.cuts)
    assert ma == mb
    assert np.allclose(sw.cuts[0].normal, -itf.cuts[0].normal)
    assert np.allclose(itf.swapped().covered_measure("a"), itf.covered_measure("b"))


def test_uncovered_quadrature():
    # side b spans x in [0.5, 1.5]: side a facets left of 0.5 are uncovered
    a, b = line_sides(4, 4, b_rect=(0.5, 0, 1.5, 1))
    itf = build_interface_quadrature(a, b, X_AXIS)
    quads = build_uncovered_quadrature(itf, "a")
    net = [q.weights.sum() for q in quads]
    assert net == pytest.approx([0.25, 0.25, 0.0, 0.0], abs=1e-12)
    # x^2 over the uncovered part [0, 0.5]
    tot = sum(np.sum(q.weights * q.x[:, 0] ** 2) for q in quads)
    assert tot == pytest.approx(0.5 ** 3 / 3, abs=1e-12)
    packed = pack_uncovered(quads, itf.facet_measure("a"))
    assert set(packed.facet.tolist()) == set(a.facets[:2].tolist())
    assert uncovered_intervals(itf, "a")[int(a.facets[0])] == [(0.0, 1.0)]
    # half covered facet
    a, b = line_sides(2, 4, b_rect=(0.25, 0, 1.25, 1))
    itf = build_interface_quadrature(a, b, X_AXIS)
    net = [q.weights.sum() for q in build_uncovered_quadrature(itf, "a")]
    assert net == pytest.approx([0.25, 0.0], abs=1e-12)
    gaps = uncovered_intervals(itf, "a")[int(a.facets[0])]
    # top edges run right to left, so x in [0, 0.25] is t in [0.5, 1]
    assert gaps == [pytest.approx((0.5, 1.0))]


def test_measure_conservation_line():
    rng = np.random.default_rng(5)
    for _ in range(20):
        s = rng.uniform(-0.7, 0.7)
        a, b = line_sides(rng.integers(2, 7), rng.integers(2, 7), b_rect=(s, 0, s + 1, 1))
        itf = build_interface_quadrature(a, b, X_AXIS)
        for side in "ab":
            quads = build_uncovered_quadrature(itf, side)
            cov = itf.covered_measure(side)
            L = itf.facet_measure(side)
            assert np.all(cov <= L + 1e-10)
            unc = np.array([q.weights.sum() for q in quads])
            assert np.abs(cov + unc - L).max() < 1e-10


def test_circle_cuts_conserve_measure_under_rotation():
    rng = np.random.default_rng(6)
    param = CircleParameterization((0.0, 0.0), 0.75)
    for angle in rng.uniform(0, 2 * np.pi, 100):
        a, b = ring_sides(angle=angle)
        itf = build_interface_quadrature(a, b, param)
        for side in "ab":
            cov = itf.covered_measure(side)
            assert np.abs(cov - itf.facet_measure(side)).max() < 1e-10


def test_circle_cut_pitch_periodicity():
    param = CircleParameterization((0.0, 0.0), 0.75)
    a, b = ring_sides(12, 16, angle=0.1)
    base = build_interface_quadrature(a, b, param)
    a2, b2 = ring_sides(12, 16, angle=0.1 + 2 * np.pi / 12)
    shifted = build_interface_quadrature(a2, b2, param)
    m0 = sorted(round(c.measure, 12) for c in base.cuts)
    m1 = sorted(round(c.measure, 12) for c in shifted.cuts)
    assert m0 == m1


def test_off_interface_facets_raise():
    a, b = line_sides(3, 4)
    wrong = LineParameterization((0.0, 0.3), (1.0, 0.0))
    with pytest.raises(GeometryError, match="facets"):
        build_interface_quadrature(a, b, wrong)


def test_rebuild_is_deterministic():
    a, b = ring_sides(angle=0.37)
    param = CircleParameterization((0.0, 0.0), 0.75)
    p1 = build_interface_quadrature(a, b, param).packed()
    p2 = build_interface_quadrature(a, b, param).packed()
    for k in p1:
        assert np.array_equal(p1[k], p2[k])
