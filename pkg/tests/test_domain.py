import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypscherk.domain import (INCONCLUSIVE, MAX_VERTICES, SATISFIED, VIOLATED, Edge, EdgeKind,
                              ScherkDomain, canonical_polygon_key, check_domain, check_theorem1,
                              check_theorem3, compute_truncated_lengths,
                              enumerate_inscribed_polygons, validate_domain)
from hypscherk.errors import CombinatorialLimitError, DomainError, MisconfigurationError
from hypscherk.fixtures import (compact_polygon, ideal_polygon, ideal_square, octagon_annulus,
                                parallelogram_ab, pentagon_with_bad_subpolygon,
                                satisfying_triangle, violating_quadrilateral)
from hypscherk.geometry import HPoint, Mobius

from oracles import (brute_force_polygons, distance_closed_form, halfplane_from_klein,
                     ideal_square_lengths)


def codes(diags):
    return [d.code for d in diags]


# -- structure ------------------------------------------------------------


def test_edge_rejects_bad_data():
    with pytest.raises(DomainError):
        Edge(EdgeKind.C, 0, 1, data=[(0.5, 1.0), (0.2, 0.0)])
    with pytest.raises(DomainError):
        Edge(EdgeKind.A, 0, 1, arc=np.array([1j]))
    with pytest.raises(DomainError):
        ScherkDomain([HPoint(0, 1), HPoint(1, 1)], [[Edge("A", 0, 5)]])


def test_alternating_quadrilateral_has_no_connectivity_issue():
    assert validate_domain(parallelogram_ab()) == []


def test_two_a_edges_at_convex_corner_reported():
    d = compact_polygon([(0, 1), (1, 1.5), (-0.2, 2)], "AAB")
    found = codes(validate_domain(d))
    assert "corner" in found


def test_all_c_boundary_needs_nothing():
    d = compact_polygon([(0, 1), (1, 1.5), (-0.2, 2)], "CCC")
    assert validate_domain(d) == []


def test_connected_a_union_without_c_reported():
    d = compact_polygon([(0, 1), (1, 1), (1, 2), (0, 2)], "AABB")
    found = codes(validate_domain(d))
    assert "C1" in found


def test_broken_cycle_reported():
    verts = [HPoint(0, 1), HPoint(1, 1), HPoint(0, 2)]
    d = ScherkDomain(verts, [[Edge("A", 0, 1), Edge("C", 0, 2), Edge("C", 2, 0)]])
    assert codes(validate_domain(d)) == ["cycle"]


def test_overlapping_horocycles_reported():
    d = ideal_polygon([0, 20, 180], "ACC", diameter=0.6)
    assert "horocycle" in codes(validate_domain(d))


def test_non_convex_c_arc_reported():
    verts = [HPoint(-1, 1), HPoint(1, 1), HPoint(0, 3)]
    bulge_in = np.array([complex(0, 1.6)])  # pulls the bottom edge towards the interior
    d = ScherkDomain(verts, [[Edge("C", 0, 1, arc=bulge_in), Edge("A", 1, 2), Edge("C", 2, 0)]])
    assert "convexity" in codes(validate_domain(d))


# -- inscribed polygons ----------------------------------------------------


def test_triangle_has_single_inscribed_polygon():
    polys = enumerate_inscribed_polygons(satisfying_triangle())
    assert len(polys) == 1 and polys[0].is_domain


def test_ideal_square_polygons_match_brute_force():
    d = ideal_square()
    polys = enumerate_inscribed_polygons(d)
    klein = [(math.cos(t), math.sin(t)) for t in (0, math.pi / 2, math.pi, 1.5 * math.pi)]
    expected = brute_force_polygons(klein)
    got = {frozenset(frozenset((a, b)) for a, b, _ in p.side_pairs()) for p in polys}
    assert got == expected
    assert len(polys) == 5  # the square and the four triangles cut by its two diagonals


def _arrow_hexagon():
    klein = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (0.0, 0.05), (-0.5, 0.5), (-0.6, 0.0)]
    pts = [halfplane_from_klein(u, v) for u, v in klein]
    return klein, compact_polygon(pts, "CCCCCC")


def test_non_convex_hexagon_matches_brute_force():
    klein, d = _arrow_hexagon()
    polys = enumerate_inscribed_polygons(d)
    got = {frozenset(frozenset((a, b)) for a, b, _ in p.side_pairs()) for p in polys}
    expected = brute_force_polygons(klein)
    assert got == expected
    # the chord between the two tips passes outside the notch
    assert all(frozenset((2, 4)) not in sides for sides in got)
    assert sum(p.is_domain for p in polys) == 1


def test_enumeration_independent_of_vertex_order():
    _, d = _arrow_hexagon()
    base = sorted(canonical_polygon_key(d, p) for p in enumerate_inscribed_polygons(d))
    perm = [3, 5, 0, 1, 4, 2]
    d2 = d.reindexed(perm)
    other = sorted(canonical_polygon_key(d2, p) for p in enumerate_inscribed_polygons(d2))
    assert base == other


def test_vertex_cap():
    pts = [(math.cos(t), 2 + math.sin(t)) for t in np.linspace(0, 2 * math.pi, MAX_VERTICES + 2)[:-1]]
    d = compact_polygon(pts, "C" * (MAX_VERTICES + 1))
    with pytest.raises(CombinatorialLimitError):
        enumerate_inscribed_polygons(d)


def test_candidate_cap():
    with pytest.raises(CombinatorialLimitError):
        enumerate_inscribed_polygons(ideal_square(), max_candidates=3)


# -- truncated lengths -----------------------------------------------------


def test_compact_lengths_ignore_generation():
    d = violating_quadrilateral()
    p = enumerate_inscribed_polygons(d)[-1]
    assert p.is_domain
    rows = [compute_truncated_lengths(d, p, n) for n in (1, 2, 5)]
    a = distance_closed_form((0.5, 1.0), (0.5, 4.0)) + distance_closed_form((-0.5, 4.0), (-0.5, 1.0))
    c = distance_closed_form((0.5, 4.0), (-0.5, 4.0)) + distance_closed_form((-0.5, 1.0), (0.5, 1.0))
    for r in rows:
        assert r.alpha == pytest.approx(a, abs=1e-12)
        assert r.beta == 0.0
        assert r.gamma == pytest.approx(a + c, abs=1e-12)
        assert r.epsilon == 0.0


def test_symmetric_ideal_square_lengths():
    d = ideal_square(0.2)
    dom = [p for p in enumerate_inscribed_polygons(d) if p.is_domain][0]
    side = ideal_square_lengths(0.2)
    for n in (1, 2, 3):
        r = compute_truncated_lengths(d, dom, n)
        assert r.alpha == pytest.approx(r.beta, abs=1e-12)
        assert r.alpha == pytest.approx(2 * side + 4 * (n - 1) * math.log(2), abs=1e-9)


def test_halving_one_horocycle_moves_alpha_and_beta_together():
    # each ideal vertex of the square joins an A side to a B side, so halving
    # one horodisk adds ln 2 to both sums and leaves their difference alone
    base = ideal_square(0.2)
    dom = [p for p in enumerate_inscribed_polygons(base) if p.is_domain][0]
    r0 = compute_truncated_lengths(base, dom, 1)
    hors = dict(base.horocycles)
    hors[0] = hors[0].shrunk(0.5)
    moved = ScherkDomain(base.vertices, base.components, hors)
    r1 = compute_truncated_lengths(moved, dom, 1)
    assert r1.alpha - r0.alpha == pytest.approx(math.log(2), abs=1e-12)
    assert r1.beta - r0.beta == pytest.approx(math.log(2), abs=1e-12)
    assert (r1.alpha - r1.beta) - (r0.alpha - r0.beta) == pytest.approx(0.0, abs=1e-12)


def test_overlapping_horodisks_flag_the_row():
    d = ideal_polygon([0, 30, 180], "ABC", diameter=0.9)
    p = enumerate_inscribed_polygons(d)[0]
    row = compute_truncated_lengths(d, p, 1)
    assert row.flagged and math.isnan(row.alpha)


@st.composite
def ideal_ab_polygons(draw):
    n = draw(st.sampled_from([4, 6]))
    gaps = draw(st.lists(st.floats(0.6, 2.0), min_size=n, max_size=n))
    total = sum(gaps)
    angles, t = [], draw(st.floats(0, 90))
    for g in gaps:
        angles.append(t)
        t += 360.0 * g / total
    diam = draw(st.lists(st.floats(0.02, 0.12), min_size=n, max_size=n))
    return ideal_polygon(angles, "AB" * (n // 2), diameters=diam)


@settings(max_examples=25, deadline=None)
@given(ideal_ab_polygons())
def test_truncation_monotone_and_difference_constant(d):
    for p in enumerate_inscribed_polygons(d):
        rows = [compute_truncated_lengths(d, p, n) for n in (1, 2, 3, 4)]
        if any(r.flagged for r in rows):
            continue
        for r, s in zip(rows, rows[1:]):
            assert 2 * s.alpha - s.gamma <= 2 * r.alpha - r.gamma + 1e-9
            assert 2 * s.beta - s.gamma <= 2 * r.beta - r.gamma + 1e-9
        if set(p.sides) <= {"A", "B"}:
            diffs = [r.alpha - r.beta for r in rows]
            assert max(diffs) - min(diffs) < 1e-9


# -- verdicts --------------------------------------------------------------


def test_triangle_satisfied():
    v = check_domain(satisfying_triangle())
    assert v.theorem == 1 and v.status == SATISFIED and v.margin > 1e-7


def test_quadrilateral_violated_with_domain_witness():
    d = violating_quadrilateral()
    v = check_domain(d)
    assert v.status == VIOLATED
    assert v.witness.is_domain and list(v.witness.vertices) == [0, 1, 2, 3]
    a = 2 * distance_closed_form((0.5, 1.0), (0.5, 4.0))
    c = distance_closed_form((0.5, 4.0), (-0.5, 4.0)) + distance_closed_form((-0.5, 1.0), (0.5, 1.0))
    assert v.margin == pytest.approx(c - a, abs=1e-9)
    assert v.margin < -1e-7


def test_pentagon_witness_is_inscribed_quadrilateral():
    d = pentagon_with_bad_subpolygon()
    v = check_domain(d)
    assert v.status == VIOLATED and not v.witness.is_domain
    dom = [c for c in v.checks if c.polygon.is_domain][0]
    assert dom.status == SATISFIED


def test_witness_reevaluates_as_violated():
    for d in (violating_quadrilateral(), pentagon_with_bad_subpolygon()):
        v = check_domain(d)
        alone = check_theorem1(d, polygons=[v.witness])
        assert alone.status == VIOLATED


def test_ideal_square_third_check():
    v = check_domain(ideal_square())
    assert v.theorem == 3 and v.status == SATISFIED
    dom = [c for c in v.checks if c.polygon.is_domain][0]
    assert abs(dom.equality_gap) < 1e-12
    assert all(c.status == SATISFIED for c in v.checks)


def test_unequal_ideal_square_violates_equality():
    d = ideal_polygon([0, 100, 180, 280], "ABAB", diameter=0.1)
    v = check_domain(d)
    assert v.status == VIOLATED and v.witness.is_domain


def test_dispatcher_mismatch_raises():
    with pytest.raises(MisconfigurationError):
        check_theorem3(satisfying_triangle())
    with pytest.raises(MisconfigurationError):
        check_theorem1(ideal_square())


def test_near_equality_is_inconclusive():
    # a sub-tolerance violation cannot be told apart from equality
    d = violating_quadrilateral()
    v = check_domain(d, tol=10.0)
    assert v.status == INCONCLUSIVE


isometries = st.builds(lambda s, t: Mobius(s, t, 0.0, 1.0), st.floats(0.3, 3), st.floats(-2, 2)) | \
    st.builds(lambda t: Mobius(math.cos(t), math.sin(t), -math.sin(t), math.cos(t)),
              st.floats(0.05, 1.5))


@settings(max_examples=20, deadline=None)
@given(isometries)
def test_verdicts_invariant_under_isometries(m):
    for make in (satisfying_triangle, violating_quadrilateral, ideal_square):
        d = make()
        v0, v1 = check_domain(d), check_domain(d.transformed(m))
        assert v0.status == v1.status
        if v0.margin is not None:
            assert v1.margin == pytest.approx(v0.margin, abs=1e-7)


def test_verdicts_invariant_under_ab_swap():
    for d in (satisfying_triangle(), violating_quadrilateral(), ideal_square(),
              pentagon_with_bad_subpolygon()):
        v0, v1 = check_domain(d), check_domain(d.swapped_ab())
        assert v0.status == v1.status
        for c0, c1 in zip(v0.checks, v1.checks):
            assert c0.margin_alpha == pytest.approx(c1.margin_beta, nan_ok=True)


@pytest.mark.slow
def test_octagon_annulus_checks():
    sym = check_domain(octagon_annulus(45.0))
    assert sym.status == SATISFIED and sym.theorem == 2
    deformed = octagon_annulus(50.0)
    v = check_domain(deformed)
    assert v.status == SATISFIED
    assert len(v.checks) == 1837
