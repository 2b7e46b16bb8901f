"""Independent reference computations used by the tests.

Nothing here imports the package's numerical code: lengths and fluxes are
recomputed with scipy's QUADPACK wrappers or closed forms, so a shared bug
cannot make a test agree with itself.
"""

import math

import numpy as np
from scipy import integrate


def quad_length(curve, dcurve, a, b):
    """Hyperbolic length of a half-plane curve t -> (x, y) by scipy.quad."""
    def f(t):
        x, y = curve(t)
        dx, dy = dcurve(t)
        return math.hypot(dx, dy) / y
    return integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-13, limit=200)[0]


def distance_closed_form(p, q):
    """arccosh form of the half-plane distance."""
    (x1, y1), (x2, y2) = p, q
    return math.acosh(1.0 + ((x1 - x2) ** 2 + (y1 - y2) ** 2) / (2.0 * y1 * y2))


def geodesic_circle(p, q):
    """Centre and radius of the semicircle through two points with x1 != x2."""
    (x1, y1), (x2, y2) = p, q
    c = (x2 ** 2 + y2 ** 2 - x1 ** 2 - y1 ** 2) / (2.0 * (x2 - x1))
    return c, math.hypot(x1 - c, y1)


def half_pi(x, y):
    return math.log((math.hypot(x, y) + y) / x)


def half_pi_grad(x, y):
    r = math.hypot(x, y)
    # d/dx ln(r + y) - d/dx ln x, d/dy ln(r + y)
    return (x / (r * (r + y)) - 1.0 / x, (y / r + 1.0) / (r + y))


def flux_quad(grad, lam, p, q):
    """Flux of grad u / W across the segment p -> q (right-hand normal), scipy.quad."""
    (x0, y0), (x1, y1) = p, q
    dx, dy = x1 - x0, y1 - y0

    def f(t):
        x, y = x0 + t * dx, y0 + t * dy
        gx, gy = grad(x, y)
        L = lam(x, y)
        return (gx * dy - gy * dx) / math.sqrt(1.0 + (gx * gx + gy * gy) / (L * L))
    return integrate.quad(f, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=200)[0]


def fprime_by_root(H, A, theta):
    """f'(theta) solving f' / sqrt(1 + sin^2 f'^2) = A - 2H cot(theta) by bracketing.

    The left side is increasing in f' with range (-1/sin, 1/sin), so the
    root is bracketed once the target lies inside that range.
    """
    from scipy.optimize import brentq
    s = math.sin(theta)
    rhs = A - 2.0 * H / math.tan(theta)
    if abs(rhs * s) >= 1.0:
        raise ValueError("theta outside the profile domain")
    g = lambda p: p / math.sqrt(1.0 + (s * p) ** 2) - rhs
    hi = 1.0
    while g(hi) < 0:
        hi *= 2.0
    lo = -1.0
    while g(lo) > 0:
        lo *= 2.0
    return brentq(g, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=500)


def ideal_square_lengths(diameter):
    """alpha_1 and beta_1 of the symmetric ideal square by symmetry: all four sides equal.

    Side from exp(i0) to exp(i pi/2): computed in the disk as twice the distance
    from the geodesic's midpoint to the horocycle crossing, via the
    half-plane distance formula after the Cayley map.
    """
    def to_h(z):
        return 1j * (1 + z) / (1 - z)
    # horocycle of disk diameter d at exp(it): the crossing with the side is
    # found by bisection on the geodesic's disk arc
    c = complex(1.0, 1.0)  # circle orthogonal to the unit circle through 1 and i
    r = 1.0

    def point(s):  # s in (0, pi/2): angle on that circle from the inner side
        return c + r * complex(math.cos(math.pi + s), math.sin(math.pi + s))

    def inside(z, t):
        cen = (1 - diameter / 2) * complex(math.cos(t), math.sin(t))
        return abs(z - cen) < diameter / 2
    lo, hi = 0.0, math.pi / 4
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if inside(point(mid), math.pi / 2):
            lo = mid
        else:
            hi = mid
    w1 = to_h(point(hi))
    w0 = to_h(point(math.pi / 4))
    return 2.0 * distance_closed_form((w0.real, w0.imag), (w1.real, w1.imag))


def klein_from_halfplane(x, y):
    """Klein coordinates of a half-plane point (Cayley map, then radial rescale)."""
    w = complex(x, y)
    z = (w - 1j) / (w + 1j)
    k = 2 * z / (1 + abs(z) ** 2)
    return k.real, k.imag


def halfplane_from_klein(u, v):
    k = complex(u, v)
    z = k / (1 + math.sqrt(1 - abs(k) ** 2))
    w = 1j * (1 + z) / (1 - z)
    return w.real, w.imag


def _point_in_ring(pt, ring):
    """Ray casting point-in-polygon."""
    x, y = pt
    inside = False
    n = len(ring)
    for k in range(n):
        (x1, y1), (x2, y2) = ring[k], ring[(k + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc > x:
                inside = not inside
    return inside


def _proper_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def brute_force_polygons(klein_vertices, n_samples=64):
    """Inscribed polygons of a simply connected geodesic polygon, by brute force.

    Every cyclic vertex sequence is tried; a sequence counts when it is simple
    and every side is a boundary side or a chord whose samples lie inside.
    Returns a set of frozensets of sides (each side a frozenset of two indices).
    """
    from itertools import combinations, permutations
    ring = [tuple(p) for p in klein_vertices]
    n = len(ring)
    boundary = {frozenset((k, (k + 1) % n)) for k in range(n)}

    def chord_ok(a, b):
        if frozenset((a, b)) in boundary:
            return True
        pa, pb = ring[a], ring[b]
        for j in range(n_samples):
            s = (j + 0.5) / n_samples
            pt = (pa[0] * (1 - s) + pb[0] * s, pa[1] * (1 - s) + pb[1] * s)
            if not _point_in_ring(pt, ring):
                return False
        return True

    out = set()
    for size in range(3, n + 1):
        for subset in combinations(range(n), size):
            first = subset[0]
            for rest in permutations(subset[1:]):
                cyc = (first,) + rest
                if rest[0] > rest[-1]:
                    continue
                sides = [(cyc[k], cyc[(k + 1) % size]) for k in range(size)]
                if not all(chord_ok(a, b) for a, b in sides):
                    continue
                simple = True
                for i in range(size):
                    for j in range(i + 1, size):
                        if len({*sides[i], *sides[j]}) < 4:
                            continue
                        if _proper_cross(ring[sides[i][0]], ring[sides[i][1]],
                                         ring[sides[j][0]], ring[sides[j][1]]):
                            simple = False
                if simple:
                    out.add(frozenset(frozenset(s) for s in sides))
    return out
