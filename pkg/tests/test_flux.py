import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypscherk.errors import DomainError
from hypscherk.fixtures import satisfying_triangle
from hypscherk.flux import (Arc, ExactGraph, FluxSample, HalfPiGraph, ProfileGraph,
                            arc_hyperbolic_length, experiment_nonuniqueness, flux_exact,
                            strip_beta, strip_data, strip_geometry, verify_flux_lemmas,
                            w_lambda_surrogate)
from hypscherk.geometry import geodesic_between
from hypscherk.profiles import make_profile
from hypscherk.solver import (HalfPlaneChart, build_grid, discrete_flux, domain_region,
                              run_truncation_sequence, solve_dirichlet)

from oracles import flux_quad, half_pi_grad


def ray_arc(theta, phi0=0.0, phi1=1.0):
    """{theta = const, phi in [phi0, phi1]} of the polar chart at 0, drawn in the half-plane."""
    c, s = math.cos(theta), math.sin(theta)
    return Arc(lambda t: (np.exp(phi0 + (phi1 - phi0) * t) * c,
                          np.exp(phi0 + (phi1 - phi0) * t) * s),
               lambda t: ((phi1 - phi0) * np.exp(phi0 + (phi1 - phi0) * t) * c,
                          (phi1 - phi0) * np.exp(phi0 + (phi1 - phi0) * t) * s), "ray")


class Constant(ExactGraph):
    chart = HalfPlaneChart()

    def grad(self, x, y):
        return 0 * np.asarray(x, dtype=float), 0 * np.asarray(y, dtype=float)

    def value(self, x, y):
        return 0 * np.asarray(x, dtype=float) + 4.0


U = HalfPiGraph()


# -- exact flux ------------------------------------------------------------


def test_constant_carries_no_flux():
    r = flux_exact(Constant(), Arc.segment((0.3, 1.0), (2.0, 0.5)))
    assert r.value == 0.0 and r.error_estimate < 1e-10


def test_equidistant_ray_strictly_below_length():
    r = flux_exact(U, ray_arc(math.pi / 4))
    assert r.arc_length == pytest.approx(math.sqrt(2), abs=1e-10)
    assert abs(r.value) < r.arc_length
    assert abs(r.value) < 0.9 * r.arc_length


def test_probe_near_infinite_edge_saturates():
    delta = 1e-4
    r = flux_exact(U, ray_arc(math.pi / 2 - delta))
    assert r.arc_length == pytest.approx(1 / math.sin(math.pi / 2 - delta), abs=1e-10)
    assert abs(r.value) >= 0.999 * r.arc_length
    assert abs(r.value) == pytest.approx(r.arc_length, abs=1e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 3), st.floats(0.2, 3), st.floats(0.2, 3), st.floats(0.2, 3))
def test_segment_flux_matches_oracle(x0, y0, x1, y1):
    p, q = (x0, y0), (x1, y1)
    r = flux_exact(U, Arc.segment(p, q))
    ref = flux_quad(half_pi_grad, lambda x, y: 1.0 / y, p, q)
    assert r.value == pytest.approx(ref, abs=1e-9)
    assert abs(r.value) <= r.arc_length + r.error_estimate


def test_reversal_negates_exactly():
    arc = Arc.segment((0.5, 0.7), (1.9, 2.2))
    a = flux_exact(U, arc)
    b = flux_exact(U, arc, reverse=True)
    assert b.value == -a.value
    assert b.arc_length == a.arc_length
    back = Arc.segment((1.9, 2.2), (0.5, 0.7))
    assert flux_exact(U, back).value == pytest.approx(-a.value, abs=1e-9)


def test_additivity():
    p, m, q = (0.4, 0.6), (1.1, 1.9), (2.5, 0.9)
    whole = flux_exact(U, Arc.polyline([p, m, q]))
    parts = flux_exact(U, Arc.segment(p, m)), flux_exact(U, Arc.segment(m, q))
    tol = whole.error_estimate + sum(r.error_estimate for r in parts) + 1e-12
    assert whole.value == pytest.approx(sum(r.value for r in parts), abs=tol)


def test_profile_flux_is_the_first_integral():
    # for H = 0 the flux density per unit phi across theta = const equals A
    for A in (0.3, 0.9):
        g = ProfileGraph(make_profile(0.0, A, table_points=3))
        for theta in (0.6, 1.5, 2.4):
            r = flux_exact(g, Arc.segment((0.0, theta), (1.0, theta)))
            assert abs(r.value) == pytest.approx(A, abs=1e-10)
            assert r.arc_length == pytest.approx(1 / math.sin(theta), abs=1e-10)


def test_singular_endpoint_is_flagged():
    r = flux_exact(U, Arc.segment((0.0, 1.0), (1.0, 1.0)))
    assert r.flagged


def test_hyperbolic_length_of_segment():
    assert arc_hyperbolic_length(HalfPlaneChart(), Arc.segment((0, 1), (0, math.e))) == \
        pytest.approx(1.0, abs=1e-10)


def test_lemma_suite_on_exact_graph():
    delta = 1e-4
    sample = FluxSample((0.3, 2.5, 0.3, 2.5),
                        edges=[("x=0", lambda d: ray_arc(math.pi / 2 - d))], deltas=(delta,))
    rep = verify_flux_lemmas(U, sample, seed=0)
    assert rep.passed
    kinds = [r[0] for r in rep.rows]
    assert kinds.count("loop") == 10 and kinds.count("arc") == 10
    for kind, _, val, ln, err, _ in rep.rows:
        if kind == "loop":
            assert abs(val) < 1e-9
        elif kind == "arc":
            assert abs(val) < ln
        else:
            assert err < 1e-3
    again = verify_flux_lemmas(U, sample, seed=0)
    assert again.rows == rep.rows


# -- discrete flux ---------------------------------------------------------


def test_discrete_loop_flux_decays():
    d = satisfying_triangle()
    c = np.mean([v.z for v in d.vertices])
    t = np.linspace(0, 2 * np.pi, 2049)
    loop = np.column_stack([c.real + 0.12 * np.cos(t), c.imag + 0.12 * np.sin(t)])
    hs = (1 / 16, 1 / 32, 1 / 64, 1 / 128)
    vals = []
    for h in hs:
        sol = solve_dirichlet(build_grid(domain_region(d, h=h), h, level=8.0))
        vals.append(abs(discrete_flux(sol, loop).value))
    for h, v in zip(hs, vals):
        assert v < 3 * h * h
    assert math.log2(vals[0] / vals[-1]) / 3 > 1.7


def test_discrete_edge_probe_saturates():
    d = satisfying_triangle()
    h = 1 / 64
    sol = run_truncation_sequence(d, levels=[2, 4, 8, 16], h=h).levels[-1].solution
    g = geodesic_between(d.vertices[0], d.vertices[1])
    s = np.linspace(g.coord(d.vertices[0]), g.coord(d.vertices[1]), 801)[250:-250]
    pts = g.points_at(s)
    tang = np.gradient(pts)
    nrm = 1j * tang / np.abs(tang)
    mid = len(pts) // 2
    nrm *= np.sign(np.real(np.conj(nrm[mid]) * (np.mean([v.z for v in d.vertices]) - pts[mid])))

    def probe(delta):
        P = pts + delta * nrm
        return Arc.polyline(np.column_stack([P.real, P.imag]), "A0")
    sample = FluxSample((0, 0, 0, 0), edges=[("A0", probe)], deltas=(4 * h, 8 * h, 16 * h),
                        n_loops=0, n_arcs=0)
    [row] = verify_flux_lemmas(sol, sample).rows
    assert row[0] == "edge" and row[4] < 5 * h


# -- the non-uniqueness strip ----------------------------------------------


def test_strip_geometry():
    a = 3 * math.pi / 8
    phi0, ell = strip_geometry(a)
    assert phi0 == pytest.approx(math.log(math.tan(a / 2)), abs=1e-15)
    assert ell == pytest.approx(2 * math.log(1 / math.tan(a / 2)), abs=1e-15)
    for bad in (math.pi / 4, math.pi / 2, 0.1):
        with pytest.raises(DomainError):
            strip_geometry(bad)


@given(st.floats(0.80, 1.55), st.integers(0, 8))
def test_strip_beta_inside_range(alpha, k):
    b = strip_beta(alpha, k)
    assert alpha < b < math.pi / 2
    assert strip_beta(alpha, k + 1) < b


def test_strip_data_values():
    a = 3 * math.pi / 8
    data = strip_data(a, 3)
    assert data[0, 1] == 0.0
    assert list(data[1:, 1]) == [2, 2, -4, -4, 7, 7]
    assert np.all(np.diff(data[:, 0]) > 0)


def test_rectangle_surrogate_is_symmetric():
    sol = w_lambda_surrogate(3 * math.pi / 8, 0.0, 1 / 16)
    assert sol.converged
    u = sol.u
    ok = np.isfinite(u)
    assert np.array_equal(ok, ok[:, ::-1]) and np.array_equal(ok, ok[::-1, :])
    assert np.max(np.abs(u - u[:, ::-1])[ok]) < 1e-6
    assert np.max(np.abs(u - u[::-1, :])[ok]) < 1e-6


def test_shallow_strip_ordered_by_comparison():
    rep = experiment_nonuniqueness(depths=(1,), h=1 / 16)
    [row] = rep.rows
    depth, plus, minus, gap, min_diff, converged = row
    assert converged and depth == 1
    assert min_diff >= -1e-12
    assert gap >= 0
    assert "evidence at finite depth only" in rep.notes
    with pytest.raises(DomainError):
        experiment_nonuniqueness(depths=(9,), h=1 / 16)
