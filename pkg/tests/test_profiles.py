import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from hypscherk.errors import DomainError
from hypscherk.geometry import HPoint, IdealPoint, PolarChart
from hypscherk.profiles import (FINITE, INF_NORMAL, MINUS_INF, PLUS_INF, BarrierParams,
                                barrier_value, cmc_classify, cmc_derivative, cmc_value,
                                critical_k, curvature_residual, h_half_pi, first_integral_residual,
                                make_profile, profile_as_graph, table_thetas)

from oracles import flux_quad, fprime_by_root, half_pi, half_pi_grad


# -- classification --------------------------------------------------------


def test_minimal_family_cases():
    tag, [b] = cmc_classify(0.0, 2.0)
    assert tag == "H0-A>1"
    assert b.theta_hi == pytest.approx(math.pi / 6, abs=1e-15)
    assert (b.tag_lo, b.tag_hi) == (FINITE, INF_NORMAL)
    tag, [b] = cmc_classify(0.0, 1.0)
    assert tag == "H0-A=1" and b.theta_hi == math.pi / 2 and b.tag_hi == PLUS_INF
    tag, [b] = cmc_classify(0.0, 0.5)
    assert tag == "H0-A<1" and (b.theta_lo, b.theta_hi) == (0.0, math.pi)


def test_half_curvature_cases():
    tag, [b] = cmc_classify(0.5, 0.0)
    assert tag == "B1" and (b.theta_lo, b.theta_hi) == (0.0, math.pi)
    tag, [b] = cmc_classify(0.5, 1.0)
    assert tag == "B2" and b.tag_hi == INF_NORMAL and 0 < b.theta_hi < math.pi


def test_small_curvature_threshold():
    assert critical_k(0.4) == pytest.approx(0.75, abs=1e-15)
    assert cmc_classify(0.4, 0.5)[0] == "A1-entire"
    assert cmc_classify(0.4, 0.75)[0] == "A2-wall"
    tag, branches = cmc_classify(0.4, 1.0)
    assert tag == "A3-edge" and len(branches) == 2
    t1, t2 = branches[0].theta_hi, branches[1].theta_lo
    theta0 = math.pi + math.atan(-1.0)
    assert t1 < theta0 < t2
    for t in (t1, t2):
        g = math.cos(t) - math.sin(t)
        assert abs(g) == pytest.approx(1 / 0.8, abs=1e-11)


def test_large_curvature_case():
    tag, [b] = cmc_classify(1.0, 0.3)
    assert tag == "C"
    assert b.tag_lo == b.tag_hi == INF_NORMAL
    theta0 = math.pi + math.atan(-0.3)
    assert 0 < b.theta_lo < b.theta_hi < theta0
    for t in (b.theta_lo, b.theta_hi):
        assert abs(math.cos(t) - 0.3 * math.sin(t)) == pytest.approx(0.5, abs=1e-11)


def test_negative_inputs_rejected():
    with pytest.raises(DomainError):
        cmc_classify(-0.1, 1.0)
    with pytest.raises(DomainError):
        cmc_classify(0.2, -1.0)


# -- derivative and value --------------------------------------------------


def test_derivative_examples():
    p = make_profile(0.0, 1.0)
    assert cmc_derivative(p, math.pi / 4) == pytest.approx(math.sqrt(2), abs=1e-14)
    b1 = make_profile(0.5, 0.0, anchors=[(math.pi / 2, 1.0)])
    assert cmc_derivative(b1, math.pi / 2) == pytest.approx(0.0, abs=1e-15)
    for t in (0.3, 1.0, 2.5):
        assert cmc_derivative(b1, t) == pytest.approx(-math.cos(t) / math.sin(t) ** 2, rel=1e-13)
    with pytest.raises(DomainError):
        cmc_derivative(p, math.pi / 2)


def test_value_examples():
    b1 = make_profile(0.5, 0.0, anchors=[(math.pi / 2, 1.0)])
    assert cmc_value(b1, math.pi / 2) == pytest.approx(1.0, abs=1e-12)
    assert cmc_value(b1, math.pi / 6) == pytest.approx(2.0, abs=1e-9)
    for t in (0.2, 0.9, 2.0, 3.0):
        assert cmc_value(b1, t) == pytest.approx(1 / math.sin(t), abs=1e-9)
    p = make_profile(0.0, 1.0, anchors=[(math.pi / 4, 0.7)])
    assert cmc_value(p, math.pi / 3) - cmc_value(p, math.pi / 4) == pytest.approx(0.435584, abs=1e-6)
    closed = math.log(1 / math.cos(math.pi / 3) + math.tan(math.pi / 3)) - \
        math.log(1 / math.cos(math.pi / 4) + math.tan(math.pi / 4))
    assert cmc_value(p, math.pi / 3) - cmc_value(p, math.pi / 4) == pytest.approx(closed, abs=1e-9)
    flat = make_profile(0.0, 0.0, anchors=[(1.0, 3.0)])
    for t in (0.1, 1.5, 3.0):
        assert cmc_value(flat, t) == pytest.approx(3.0, abs=1e-15)


def test_values_match_oracle_quadrature():
    from scipy.integrate import quad
    cases = [(0.0, 2.0), (0.3, 0.2), (0.5, 1.0), (1.0, 0.3), (0.4, 1.0)]
    for H, k in cases:
        prof = make_profile(H, k)
        A = k if H == 0 else 2 * H * k
        for b, (ta, va) in zip(prof.branches, prof.anchors):
            for s in (0.25, 0.5, 0.75):
                t = b.theta_lo + s * b.width
                ref = va + quad(lambda x: fprime_by_root(H, A, x), ta, t, epsabs=1e-12,
                                epsrel=1e-12, limit=200)[0]
                assert cmc_value(prof, t) == pytest.approx(ref, abs=1e-8), (H, k, t)


params = st.one_of(
    st.tuples(st.just(0.0), st.floats(0.0, 3.0)),
    st.tuples(st.floats(0.01, 0.49), st.floats(0.0, 4.0)),
    st.tuples(st.just(0.5), st.floats(0.0, 4.0)),
    st.tuples(st.floats(0.51, 3.0), st.floats(0.0, 4.0)),
)


@settings(max_examples=60, deadline=None)
@given(params, st.floats(0.02, 0.98))
def test_first_integral_identity(hk, s):
    H, k = hk
    prof = make_profile(H, k, table_points=3)
    A = k if H == 0 else 2 * H * k
    for b in prof.branches:
        t = b.theta_lo + s * b.width
        assume(b.contains(t))
        assert abs(float(first_integral_residual(prof, t))) < 1e-12
        fp = cmc_derivative(prof, t)
        if abs(fp) < 1e6:
            assert fp == pytest.approx(fprime_by_root(H, A, t), rel=1e-9, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(params)
def test_curvature_equation(hk):
    H, k = hk
    prof = make_profile(H, k, table_points=3)
    for b in prof.branches:
        t = b.theta_lo + b.width * np.linspace(0.01, 0.99, 1000)
        res = curvature_residual(prof, t)
        scale = np.maximum(1.0, 2 * H / np.sin(t) ** 2)
        assert np.all(np.abs(res) <= 1e-6 * scale)


def test_table_matches_derivative():
    prof = make_profile(0.3, 0.2, table_points=2001)
    thetas, vals = prof.table[0]
    inner = slice(100, -100)
    fd = np.gradient(vals, thetas)[inner]
    exact = np.array([cmc_derivative(prof, t) for t in thetas[inner]])
    assert np.max(np.abs(fd - exact) / np.maximum(1, np.abs(exact))) < 1e-4
    assert prof.table_error < 1e-9


def test_minimal_family_mirror_symmetry():
    prof = make_profile(0.0, 0.6)
    mid = cmc_value(prof, math.pi / 2)
    for t in (0.2, 0.7, 1.3):
        assert cmc_value(prof, t) + cmc_value(prof, math.pi - t) == pytest.approx(2 * mid, abs=1e-9)


def test_wall_case_is_limit_of_entire_case():
    kstar = critical_k(0.4)
    theta0 = math.pi + math.atan(-kstar)
    vals = []
    for eps in (1e-2, 1e-4, 1e-6):
        prof = make_profile(0.4, kstar * (1 - eps), table_points=3)
        vals.append(cmc_value(prof, theta0))
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] - vals[0] > 3.0


def test_infinite_ends_reported():
    prof = make_profile(0.5, 0.0, table_points=3)
    assert prof.branches[0].tag_lo == PLUS_INF
    prof = make_profile(0.4, 0.75, table_points=3)
    assert prof.branches[1].tag_lo == MINUS_INF
    b = prof.branches[0]
    th = table_thetas(b, 5)
    assert th[0] > b.theta_lo and th[-1] < b.theta_hi


# -- barriers --------------------------------------------------------------


def test_half_pi_barrier_examples():
    b = BarrierParams()
    assert barrier_value(b, HPoint(3, 4)) == pytest.approx(math.log(3), abs=1e-15)
    assert barrier_value(b, HPoint(1, 1e-12)) == pytest.approx(0.0, abs=1e-11)
    with pytest.raises(DomainError):
        barrier_value(b, HPoint(-1, 1))
    for phi in (-2.0, 0.0, 1.5):
        for t in (0.2, 0.8, 1.4):
            p = HPoint(math.exp(phi) * math.cos(t), math.exp(phi) * math.sin(t))
            assert barrier_value(b, p) == pytest.approx(math.log((1 + math.sin(t)) / math.cos(t)),
                                                        abs=1e-12)


@settings(max_examples=100)
@given(st.floats(0.05, 5), st.floats(0.01, 5))
def test_half_pi_barrier_matches_profile(x, y):
    u = profile_as_graph(make_profile(0.0, 1.0, table_points=3), PolarChart(IdealPoint(0.0)))
    assert u(HPoint(x, y)) == pytest.approx(half_pi(x, y), abs=1e-9)
    assert float(h_half_pi(x, y)) == pytest.approx(half_pi(x, y), abs=1e-13)


def test_barrier_below_half_pi_uses_edge_profile():
    b = BarrierParams(theta0=math.pi / 3)
    prof = b.profile
    assert prof.branches[0].theta_hi == pytest.approx(math.pi / 3, abs=1e-14)
    assert prof.branches[0].tag_hi == INF_NORMAL
    p = HPoint(math.cos(0.5), math.sin(0.5))
    assert barrier_value(b, p) == pytest.approx(cmc_value(prof, 0.5), abs=1e-12)
    with pytest.raises(DomainError):
        barrier_value(b, HPoint(0.1, 1.0))
    with pytest.raises(DomainError):
        BarrierParams(theta0=2.0)


def test_barrier_offset_and_chart():
    chart = PolarChart(IdealPoint(2.0))
    b = BarrierParams(chart=chart, offset=1.5)
    assert barrier_value(b, HPoint(5, 4)) == pytest.approx(1.5 + math.log(3), abs=1e-14)


def test_half_pi_flux_saturates():
    # flux of grad u / W across {theta = pi/2 - delta, phi in [0, 1]} against its length
    for delta, bound in ((1e-2, 1e-4), (1e-4, 1e-8)):
        t = math.pi / 2 - delta
        p = (math.cos(t), math.sin(t))
        q = (math.e * math.cos(t), math.e * math.sin(t))
        flux = flux_quad(half_pi_grad, lambda x, y: 1.0 / y, q, p)
        length = 1.0 / math.sin(t)
        assert abs(flux / length - 1.0) < bound
