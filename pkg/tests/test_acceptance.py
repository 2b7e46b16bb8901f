"""Acceptance criteria 1-10, each at its stated tolerance and time budget.

Every criterion prints one line ``criterion N: PASS|FAIL (...)`` whether or
not output capture is on, then asserts.  Run this file alone with
``pytest tests/test_acceptance.py -v``.
"""

import math
import time

import numpy as np
import pytest

from hypscherk.domain import (SATISFIED, VIOLATED, EdgeKind, check_domain,
                              compute_truncated_lengths, enumerate_inscribed_polygons)
from hypscherk.fixtures import (ideal_square, pentagon_with_bad_subpolygon, satisfying_triangle,
                                violating_quadrilateral)
from hypscherk.flux import (FluxSample, HalfPiGraph, NonzeroFluxConfig, experiment_nonuniqueness,
                            experiment_nonzero_flux, verify_flux_lemmas)
from hypscherk.geometry import geodesic_between
from hypscherk.profiles import (cmc_classify, critical_k, curvature_residual, h_half_pi,
                                first_integral_residual, make_profile)
from hypscherk.solver import (INTERIOR, build_grid, detect_divergence_lines, rectangle_region,
                              run_truncation_sequence, solve_dirichlet)

from test_flux import ray_arc


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print("\ncriterion %d: %s (%s)" % (n, "PASS" if ok else "FAIL", detail))
        assert ok, "criterion %d failed: %s" % (n, detail)
    return emit


def test_criterion_01_oracle_order(verdict):
    t0 = time.perf_counter()
    errs = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        g = build_grid(rectangle_region(1, 2, 1, 2, h_half_pi), h, origin=(1.0, 1.0))
        sol = solve_dirichlet(g)
        X, Y = g.node_xy()
        m = g.mask == INTERIOR
        errs.append(float(np.max(np.abs(sol.u[m] - h_half_pi(X[m], Y[m])))))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    dt = time.perf_counter() - t0
    ok = all(1.7 <= p <= 2.3 for p in orders) and dt < 60
    verdict(1, ok, "errors %s, orders %s, %.1f s" % (
        ", ".join("%.3e" % e for e in errs), ", ".join("%.3f" % p for p in orders), dt))


def _profile_samples(n, rng):
    """(H, k) pairs cycling through every case tag."""
    makers = [
        lambda: (0.0, rng.uniform(1.05, 4.0)),        # H0-A>1
        lambda: (0.0, 1.0),                           # H0-A=1
        lambda: (0.0, rng.uniform(0.0, 0.95)),        # H0-A<1
        lambda: (0.5, 0.0),                           # B1
        lambda: (0.5, rng.uniform(0.05, 4.0)),        # B2
    ]

    def small(kind):
        H = rng.uniform(0.05, 0.45)
        ks = critical_k(H)
        return {"A1": (H, rng.uniform(0.0, 0.95) * ks), "A2": (H, ks),
                "A3": (H, ks * rng.uniform(1.05, 3.0))}[kind]
    makers += [lambda: small("A1"), lambda: small("A2"), lambda: small("A3"),
               lambda: (rng.uniform(0.55, 3.0), rng.uniform(0.0, 4.0))]   # C
    return [makers[i % len(makers)]() for i in range(n)]


def test_criterion_02_ode_identity(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    tags = set()
    worst_int, worst_curv = 0.0, 0.0
    for H, k in _profile_samples(200, rng):
        prof = make_profile(H, k, table_points=3)
        tags.add(prof.case_tag)
        for b in prof.branches:
            t = b.theta_lo + b.width * np.linspace(0.01, 0.99, 50)
            worst_int = max(worst_int, float(np.max(np.abs(first_integral_residual(prof, t)))))
            scale = np.maximum(1.0, 2 * H / np.sin(t) ** 2)
            worst_curv = max(worst_curv, float(np.max(np.abs(curvature_residual(prof, t)) / scale)))
    dt = time.perf_counter() - t0
    ok = len(tags) == 9 and worst_int < 1e-12 and worst_curv < 1e-6 and dt < 5
    verdict(2, ok, "%d tags, identity %.2e, curvature %.2e, %.2f s"
            % (len(tags), worst_int, worst_curv, dt))


def test_criterion_03_case_endpoints(verdict):
    t0 = time.perf_counter()
    worst_end = 0.0
    for A in (1.5, 2.0, 4.0):
        _, [b] = cmc_classify(0.0, A)
        worst_end = max(worst_end, abs(b.theta_hi - math.asin(1 / A)))
    worst_b1 = 0.0
    for K in (-1.0, 0.0, 2.5):
        prof = make_profile(0.5, 0.0, anchors=[(math.pi / 2, 1.0 + K)], table_points=3)
        for t in np.linspace(0.05, math.pi - 0.05, 40):
            worst_b1 = max(worst_b1, abs(prof.value(float(t)) - (1 / math.sin(t) + K)))
    dt = time.perf_counter() - t0
    ok = worst_end < 1e-12 and worst_b1 < 1e-9 and dt < 1
    verdict(3, ok, "endpoint error %.2e, B1 error %.2e, %.2f s" % (worst_end, worst_b1, dt))


def test_criterion_04_flux_lemmas(verdict):
    t0 = time.perf_counter()
    sample = FluxSample((0.3, 2.5, 0.3, 2.5),
                        edges=[("x=0", lambda d: ray_arc(math.pi / 2 - d))], deltas=(1e-4,))
    rep = verify_flux_lemmas(HalfPiGraph(), sample, seed=0)
    loops = max(abs(r[2]) for r in rep.rows if r[0] == "loop")
    arcs = max(abs(r[2]) / r[3] for r in rep.rows if r[0] == "arc")
    [edge] = [r for r in rep.rows if r[0] == "edge"]
    ratio = abs(edge[2]) / edge[3]
    dt = time.perf_counter() - t0
    ok = loops < 1e-9 and arcs < 1 and ratio >= 0.999 and dt < 10
    verdict(4, ok, "loop %.2e, arc/length %.4f, probe ratio %.8f, %.1f s"
            % (loops, arcs, ratio, dt))


def test_criterion_05_triangle_dichotomy(verdict):
    t0 = time.perf_counter()
    good = check_domain(satisfying_triangle())
    quad = violating_quadrilateral()
    bad = check_domain(quad)
    witness_is_domain = bad.witness is not None and bad.witness.is_domain
    s1 = run_truncation_sequence(satisfying_triangle(), levels=(2, 4, 8, 16, 32), h=1 / 32)
    s2 = run_truncation_sequence(quad, levels=(2, 4, 8, 16, 32), h=1 / 32)
    inc1, inc2 = s1.increments(), s2.increments()
    steps = np.diff([lv.level for lv in s2.levels])
    drifting = bool(np.all(np.diff(inc2) > 0) and np.all(inc2 / steps > 0.3))
    dt = time.perf_counter() - t0
    ok = (good.status == SATISFIED and bad.status == VIOLATED and witness_is_domain
          and s1.is_cauchy(1e-3) and drifting and dt < 120)
    verdict(5, ok, "%s / %s (margin %.3f), increments %.1e vs %s, %.1f s"
            % (good.status, bad.status, bad.margin, float(np.max(inc1)),
               ", ".join("%.2f" % v for v in inc2), dt))


def test_criterion_06_ideal_square(verdict):
    t0 = time.perf_counter()
    d = ideal_square()
    v = check_domain(d)
    [whole] = [p for p in enumerate_inscribed_polygons(d) if p.is_domain]
    rows = [compute_truncated_lengths(d, whole, n) for n in range(1, 6)]
    gap1 = abs(rows[0].alpha - rows[0].beta)
    drift = max(abs((r.alpha - r.beta) - (rows[0].alpha - rows[0].beta)) for r in rows)
    dt = time.perf_counter() - t0
    ok = v.status == SATISFIED and v.theorem == 3 and gap1 < 1e-9 and drift < 1e-9 and dt < 5
    verdict(6, ok, "verdict %s (theorem %d), |alpha_1 - beta_1| %.1e, drift %.1e, %.2f s"
            % (v.status, v.theorem, gap1, drift, dt))


def test_criterion_07_comparison(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = -math.inf
    for _ in range(20):
        c = rng.normal(0, 2, 4)
        gap = rng.uniform(0, 1, 3)

        def f(x, y, c=c):
            return c[0] + c[1] * np.sin(3 * x + c[2]) + c[3] * y * y

        def g(x, y, c=c, gap=gap):
            return f(x, y) + gap[0] + gap[1] * np.cos(5 * x) ** 2 + gap[2] * (y - 1)
        uf = solve_dirichlet(build_grid(rectangle_region(1, 2, 1, 2, f), 1 / 32, origin=(1, 1)))
        ug = solve_dirichlet(build_grid(rectangle_region(1, 2, 1, 2, g), 1 / 32, origin=(1, 1)))
        m = uf.grid.mask != 0
        worst = max(worst, float(np.max(uf.u[m] - ug.u[m])))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 60
    verdict(7, ok, "max(u_f - u_g) = %.2e over 20 pairs, %.1f s" % (worst, dt))


def _chord_deviation(cand, a, b):
    """Max chart distance from the candidate's fitted geodesic to the chord (a, b)."""
    g = geodesic_between(a, b)
    kind, c, r = cand.geodesic
    (x0, y0), (x1, y1) = cand.endpoints
    if kind == "circle":
        t0, t1 = math.atan2(y0, x0 - c), math.atan2(y1, x1 - c)
        t = np.linspace(t0, t1, 200)
        z = c + r * np.exp(1j * t)
    else:
        z = c + 1j * np.linspace(y0, y1, 200)
    if g.kind == "circle":
        return float(np.max(np.abs(np.abs(z - g.c) - g.r)))
    return float(np.max(np.abs(z.real - g.c)))


def test_criterion_08_divergence_lines(verdict):
    t0 = time.perf_counter()
    h = 1 / 32
    quiet = detect_divergence_lines(run_truncation_sequence(satisfying_triangle(),
                                                            levels=(2, 4, 8, 16, 32), h=h))
    d = pentagon_with_bad_subpolygon()
    wit = check_domain(d).witness
    cands = detect_divergence_lines(run_truncation_sequence(d, levels=(2, 4, 8, 16, 32), h=h))
    boundary = {frozenset((e.i, e.j)) for e in d.edges}
    chords = [(a, b) for a, b, _ in wit.side_pairs() if frozenset((a, b)) not in boundary]
    ok_count = len(quiet) == 0 and len(cands) == 1 and len(chords) == 1
    dev = math.inf
    ends_ok = False
    if ok_count:
        a, b = chords[0]
        dev = _chord_deviation(cands[0], d.vertices[a], d.vertices[b])
        c_vertices = {e.i for e in d.edges if e.kind == EdgeKind.C} | \
            {e.j for e in d.edges if e.kind == EdgeKind.C}
        # an endpoint that is not snapped to a vertex would sit in the interior of an edge
        ends_ok = all(s is not None and s in c_vertices | {a, b} for s in cands[0].snapped)
    dt = time.perf_counter() - t0
    ok = ok_count and dev < 3 * h and ends_ok and dt < 120
    verdict(8, ok, "%d candidates on the satisfying domain, %d on the pentagon, "
            "chord deviation %.4f (3h = %.4f), %.1f s" % (len(quiet), len(cands), dev, 3 * h, dt))


def test_criterion_09_nonzero_flux(verdict):
    t0 = time.perf_counter()
    cfg = NonzeroFluxConfig()
    rep = experiment_nonzero_flux(cfg)
    ctrl = experiment_nonzero_flux(NonzeroFluxConfig(a_arc_deg=45.0))
    target = rep.extra["target"]
    ctrl_flux = max(abs(r[3]) for r in ctrl.rows[-1:])
    dt = time.perf_counter() - t0
    ok = (rep.extra["monotone_last3"] and rep.extra["relative_gap"] < 0.05
          and ctrl_flux < 10 * cfg.h and dt < 600)
    verdict(9, ok, "target %.4f, gaps %s, relative %.2e, control %.1e, %.0f s"
            % (target, ", ".join("%.4f" % abs(r[6]) for r in rep.rows),
               rep.extra["relative_gap"], ctrl_flux, dt))


def test_criterion_10_nonuniqueness(verdict):
    t0 = time.perf_counter()
    rep = experiment_nonuniqueness(3 * math.pi / 8, (1, 2, 4), h=1 / 32)
    gaps = [r[3] for r in rep.rows]
    positive = all(g > 0 for g in gaps)
    nondecreasing = all(b >= a for a, b in zip(gaps, gaps[1:]))
    dt = time.perf_counter() - t0
    ok = (not rep.extra["partial"]) and positive and nondecreasing and dt < 900
    verdict(10, ok, "gaps %s, positive %s, non-decreasing %s, %.0f s"
            % (", ".join("%.3f" % g for g in gaps), positive, nondecreasing, dt))
