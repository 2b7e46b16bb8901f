"""Geometry of the hyperbolic plane in the upper half-plane model.

Points of the open half-plane are ``HPoint``; points of the ideal boundary
are ``IdealPoint``, which has an explicit variant for the point at infinity.
The Poincare disk is reachable through the fixed Cayley map

    w = i (1 + z) / (1 - z),

which sends the disk point z = 1 to infinity and the boundary point
exp(i t) to the abscissa -cot(t / 2).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError, EmptySegmentError, UnboundedLengthError
from .quadrature import QuadResult, adaptive_simpson

GEOM_TOL = 1e-12


@dataclass(frozen=True)
class HPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DomainError("HPoint coordinates must be finite")
        if not self.y > 0.0:
            raise DomainError("HPoint needs y > 0, got %r" % (self.y,))

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    @classmethod
    def from_complex(cls, z: complex) -> "HPoint":
        return cls(float(z.real), float(z.imag))


@dataclass(frozen=True)
class IdealPoint:
    """A point of the ideal boundary: a real abscissa, or infinity when x is None."""

    x: Optional[float] = None

    def __post_init__(self):
        if self.x is not None and not math.isfinite(self.x):
            raise DomainError("finite ideal points need a finite abscissa; use IdealPoint.infinity()")

    @classmethod
    def infinity(cls) -> "IdealPoint":
        return cls(None)

    @property
    def is_infinite(self) -> bool:
        return self.x is None


Point = Union[HPoint, IdealPoint]


def is_ideal(p: Point) -> bool:
    return isinstance(p, IdealPoint)


def same_point(p: Point, q: Point, tol: float = GEOM_TOL) -> bool:
    if is_ideal(p) != is_ideal(q):
        return False
    if is_ideal(p):
        if p.is_infinite or q.is_infinite:
            return p.is_infinite and q.is_infinite
        return abs(p.x - q.x) <= tol * max(1.0, abs(p.x))
    return abs(p.z - q.z) <= tol * max(1.0, abs(p.z))


# ---------------------------------------------------------------------------
# Moebius maps with real coefficients


@dataclass(frozen=True)
class Mobius:
    """The orientation preserving isometry z -> (a z + b) / (c z + d), ad - bc > 0."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not self.det > 0:
            raise DomainError("Mobius map needs ad - bc > 0")

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def inverse(self) -> "Mobius":
        return Mobius(self.d, -self.b, -self.c, self.a)

    def compose(self, other: "Mobius") -> "Mobius":
        """Return self after other."""
        return Mobius(self.a * other.a + self.b * other.c,
                      self.a * other.b + self.b * other.d,
                      self.c * other.a + self.d * other.c,
                      self.c * other.b + self.d * other.d)

    def apply_complex(self, z):
        return (self.a * z + self.b) / (self.c * z + self.d)

    def apply(self, p: Point) -> Point:
        if isinstance(p, HPoint):
            return HPoint.from_complex(self.apply_complex(p.z))
        if p.is_infinite:
            if self.c == 0.0:
                return IdealPoint.infinity()
            return IdealPoint(self.a / self.c)
        den = self.c * p.x + self.d
        if den == 0.0:
            return IdealPoint.infinity()
        return IdealPoint((self.a * p.x + self.b) / den)


# ---------------------------------------------------------------------------
# Disk and Klein models (conversion layer only)


def disk_to_halfplane(z):
    """Cayley map from the unit disk to the upper half-plane (arrays allowed)."""
    return 1j * (1 + z) / (1 - z)


def halfplane_to_disk(w):
    return (w - 1j) / (w + 1j)


def ideal_from_angle(t: float) -> IdealPoint:
    """Ideal point whose disk image is exp(i t)."""
    t = math.remainder(t, 2 * math.pi)
    if abs(t) < 1e-15:
        return IdealPoint.infinity()
    return IdealPoint(-1.0 / math.tan(0.5 * t))


def angle_of_ideal(p: IdealPoint) -> float:
    """Disk angle in (-pi, pi] of an ideal point."""
    if p.is_infinite:
        return 0.0
    return 2.0 * math.atan(-1.0 / p.x) if p.x != 0 else math.pi


def to_disk(p: Point) -> complex:
    if isinstance(p, HPoint):
        return complex(halfplane_to_disk(p.z))
    return cmath.exp(1j * angle_of_ideal(p))


def from_disk(z: complex, ideal_tol: float = 1e-13) -> Point:
    if abs(z) >= 1.0 - ideal_tol:
        return ideal_from_angle(cmath.phase(z))
    return HPoint.from_complex(complex(disk_to_halfplane(z)))


def to_klein(p: Point) -> Tuple[float, float]:
    z = to_disk(p)
    if is_ideal(p):
        return (z.real, z.imag)
    k = 2 * z / (1 + abs(z) ** 2)
    return (k.real, k.imag)


# ---------------------------------------------------------------------------
# Distances


def hyperbolic_distance(p: HPoint, q: HPoint) -> float:
    """Distance in the half-plane metric (dx^2 + dy^2) / y^2."""
    dx = p.x - q.x
    dy = p.y - q.y
    # 2 asinh(|p - q| / (2 sqrt(y1 y2))) avoids cancellation for close points
    return 2.0 * math.asinh(0.5 * math.hypot(dx, dy) / math.sqrt(p.y * q.y))


def equidistant_distance(theta0: float, check_quadrature: bool = False) -> float:
    """Distance between the geodesic {theta = pi/2} and the curve {theta = theta0}.

    In polar coordinates the metric is (dphi^2 + dtheta^2) / sin^2(theta), so
    the distance is |integral_{theta0}^{pi/2} dtheta / sin(theta)|.
    """
    if not 0.0 < theta0 < math.pi:
        if theta0 <= 0.0 or theta0 >= math.pi:
            raise OverflowError("equidistant at theta0=%r lies at infinite distance" % theta0)
        raise DomainError("theta0 must lie in (0, pi)")
    value = abs(math.log(math.tan(0.5 * theta0)))
    if check_quadrature:
        res = adaptive_simpson(lambda t: 1.0 / math.sin(t), min(theta0, math.pi / 2),
                               max(theta0, math.pi / 2), 1e-12)
        if abs(res.value - value) > 1e-10:
            raise ArithmeticError("closed form and quadrature disagree: %r vs %r"
                                  % (value, res.value))
    return value


def _as_xy(v):
    if isinstance(v, complex):
        return v.real, v.imag
    return float(v[0]), float(v[1])


def arc_length(curve: Callable[[float], object], a: float, b: float,
               tol: float = 1e-10, derivative: Optional[Callable[[float], object]] = None,
               truncate_below: Optional[float] = None, n_check: int = 257) -> QuadResult:
    """Hyperbolic length of a parametrised curve in the half-plane.

    Args:
        curve: t -> (x, y) or complex x + iy.
        a, b: parameter interval.
        tol: absolute quadrature tolerance.
        derivative: optional exact derivative; a fourth order central
            difference is used otherwise.
        truncate_below: if given, parts of the curve with y below this level
            are skipped instead of raising, and the result is flagged.

    Returns:
        QuadResult(length, error estimate, capped flag).
    """
    ts = np.linspace(a, b, n_check)
    ys = np.array([_as_xy(curve(t))[1] for t in ts])
    flagged = False
    if np.any(ys <= 0.0):
        if truncate_below is None:
            raise UnboundedLengthError("curve touches the ideal boundary; length is infinite")
        flagged = True
    step = 1e-4 * max(abs(b - a), 1e-300)

    def speed(t):
        if derivative is not None:
            dx, dy = _as_xy(derivative(t))
        else:
            p = [_as_xy(curve(t + k * step)) for k in (-2, -1, 1, 2)]
            dx = (p[0][0] - 8 * p[1][0] + 8 * p[2][0] - p[3][0]) / (12 * step)
            dy = (p[0][1] - 8 * p[1][1] + 8 * p[2][1] - p[3][1]) / (12 * step)
        return math.hypot(dx, dy)

    def integrand(t):
        y = _as_xy(curve(t))[1]
        if truncate_below is not None and y < truncate_below:
            return 0.0
        return speed(t) / y

    res = adaptive_simpson(integrand, a, b, tol)
    return QuadResult(abs(res.value), res.error, res.capped or flagged)


# ---------------------------------------------------------------------------
# Geodesics


class Geodesic:
    """A geodesic through two distinct points of the closed half-plane.

    The Euclidean carrier is either the vertical line x = c (``kind ==
    "line"``) or the semicircle of center c on the real axis and radius r
    (``kind == "circle"``).  Positions along the geodesic use the coordinate
    ``s`` which is hyperbolic arc length up to an additive constant:
    ln y on lines and ln tan(psi/2) on circles, psi being the polar angle
    seen from the center.
    """

    def __init__(self, p: Point, q: Point):
        if same_point(p, q):
            raise DomainError("geodesic endpoints coincide")
        self.p = p
        self.q = q
        self.kind, self.c, self.r = _carrier(p, q)
        sp, sq = self.coord(p), self.coord(q)
        self.direction = 1.0 if sq > sp else -1.0

    def __repr__(self):
        if self.kind == "line":
            return "Geodesic(line x=%.6g)" % self.c
        return "Geodesic(circle c=%.6g r=%.6g)" % (self.c, self.r)

    @property
    def is_compact(self) -> bool:
        return not (is_ideal(self.p) or is_ideal(self.q))

    def coord(self, pt: Point) -> float:
        if isinstance(pt, IdealPoint):
            if pt.is_infinite:
                return math.inf
            if self.kind == "line":
                return -math.inf
            return -math.inf if pt.x > self.c else math.inf
        if self.kind == "line":
            return math.log(pt.y)
        psi = math.atan2(pt.y, pt.x - self.c)
        return math.log(math.tan(0.5 * psi))

    def point_at(self, s: float) -> HPoint:
        if self.kind == "line":
            return HPoint(self.c, math.exp(s))
        psi = 2.0 * math.atan(math.exp(s))
        return HPoint(self.c + self.r * math.cos(psi), self.r * math.sin(psi))

    def points_at(self, s: np.ndarray) -> np.ndarray:
        """Vectorised ``point_at``; returns complex numbers."""
        s = np.asarray(s, dtype=float)
        if self.kind == "line":
            return self.c + 1j * np.exp(s)
        psi = 2.0 * np.arctan(np.exp(s))
        return self.c + self.r * np.exp(1j * psi)

    def contains(self, pt: Point, tol: float = GEOM_TOL) -> bool:
        if isinstance(pt, IdealPoint):
            if pt.is_infinite:
                return self.kind == "line"
            if self.kind == "line":
                return abs(pt.x - self.c) <= tol * max(1.0, abs(self.c))
            return abs(abs(pt.x - self.c) - self.r) <= tol * max(1.0, self.r)
        if self.kind == "line":
            return abs(pt.x - self.c) <= tol * max(1.0, abs(self.c))
        return abs(abs(pt.z - self.c) - self.r) <= tol * max(1.0, self.r)

    def unit_tangent(self, pt: HPoint) -> complex:
        """Euclidean unit tangent at pt, oriented from p towards q."""
        if self.kind == "line":
            t = 1j
        else:
            # d/dpsi (c + r e^{i psi}) = i r e^{i psi}
            t = 1j * (pt.z - self.c) / self.r
        return t * self.direction

    def sample(self, s0: float, s1: float, n: int) -> np.ndarray:
        return self.points_at(np.linspace(s0, s1, n))


def _carrier(p: Point, q: Point):
    xp = None if (is_ideal(p) and p.is_infinite) else p.x
    xq = None if (is_ideal(q) and q.is_infinite) else q.x
    if xp is None and xq is None:
        raise DomainError("geodesic endpoints coincide")
    if xp is None:
        return "line", float(xq), 0.0
    if xq is None:
        return "line", float(xp), 0.0
    if abs(xp - xq) <= GEOM_TOL * max(1.0, abs(xp), abs(xq)):
        if is_ideal(p) and is_ideal(q):
            raise DomainError("geodesic endpoints coincide")
        return "line", 0.5 * (xp + xq), 0.0
    yp = 0.0 if is_ideal(p) else p.y
    yq = 0.0 if is_ideal(q) else q.y
    c = (xq * xq + yq * yq - xp * xp - yp * yp) / (2.0 * (xq - xp))
    r = math.hypot(xp - c, yp)
    return "circle", c, r


def geodesic_between(p: Point, q: Point) -> Geodesic:
    """The geodesic through p and q (full ideal geodesic for two ideal points)."""
    return Geodesic(p, q)


# ---------------------------------------------------------------------------
# Polar coordinates centred at an ideal point


class PolarChart:
    """Polar coordinates (phi, theta) centred at an ideal point.

    A real Moebius map T with T(base) = 0 normalises the picture; then for a
    point q with w = T(q), phi = ln|w| and theta = arg w.  The metric becomes
    (dphi^2 + dtheta^2) / sin^2(theta).
    """

    def __init__(self, base: IdealPoint, normalization: Optional[Mobius] = None,
                 scale: float = 1.0):
        if normalization is None:
            if base.is_infinite:
                normalization = Mobius(0.0, -1.0, 1.0, 0.0)
            else:
                normalization = Mobius(1.0, -base.x, 0.0, 1.0)
        if scale != 1.0:
            normalization = Mobius(scale, 0.0, 0.0, 1.0).compose(normalization)
        image = normalization.apply(base)
        if image.is_infinite or abs(image.x) > 1e-12:
            raise DomainError("normalization must send the chart base to 0")
        self.base = base
        self.T = normalization
        self.Tinv = normalization.inverse()

    def to_polar(self, p: HPoint) -> Tuple[float, float]:
        w = self.T.apply_complex(p.z)
        if w == 0:
            raise DomainError("point coincides with the chart base")
        return math.log(abs(w)), cmath.phase(w)

    def to_halfplane(self, phi: float, theta: float) -> HPoint:
        if not 0.0 < theta < math.pi:
            raise DomainError("theta must lie in (0, pi)")
        w = cmath.exp(phi + 1j * theta)
        return HPoint.from_complex(self.Tinv.apply_complex(w))

    def to_halfplane_array(self, phi, theta):
        w = np.exp(np.asarray(phi) + 1j * np.asarray(theta))
        return self.Tinv.apply_complex(w)

    def to_polar_array(self, z):
        w = self.T.apply_complex(np.asarray(z))
        return np.log(np.abs(w)), np.angle(w)


def polar_from_halfplane(chart: PolarChart, p: HPoint) -> Tuple[float, float]:
    return chart.to_polar(p)


def polar_to_halfplane(chart: PolarChart, phi: float, theta: float) -> HPoint:
    return chart.to_halfplane(phi, theta)


# ---------------------------------------------------------------------------
# Horocycles


@dataclass(frozen=True)
class Horocycle:
    """Horocycle at ``center``.

    ``size`` is the Euclidean diameter of the tangent circle, or the height
    of the horizontal line when the center is infinity.
    """

    center: IdealPoint
    size: float

    def __post_init__(self):
        if not (self.size > 0 and math.isfinite(self.size)):
            raise DomainError("horocycle size must be positive and finite")

    def shrunk(self, factor: float) -> "Horocycle":
        """Horocycle whose horodisk is scaled by ``factor`` in (0, 1]."""
        if not 0 < factor <= 1:
            raise DomainError("shrink factor must lie in (0, 1]")
        if self.center.is_infinite:
            return Horocycle(self.center, self.size / factor)
        return Horocycle(self.center, self.size * factor)

    def generation(self, n: int) -> "Horocycle":
        """The n-th member of the nested family, n = 1 being this horocycle."""
        if n < 1:
            raise DomainError("generations start at 1")
        return self.shrunk(2.0 ** (1 - n))

    def contains(self, p: HPoint, strict: bool = True) -> bool:
        """Whether p lies in the open (or closed) horodisk."""
        if self.center.is_infinite:
            return p.y > self.size if strict else p.y >= self.size
        rad = 0.5 * self.size
        d = abs(p.z - complex(self.center.x, rad))
        return d < rad if strict else d <= rad

    def contains_array(self, z) -> np.ndarray:
        z = np.asarray(z)
        if self.center.is_infinite:
            return z.imag > self.size
        rad = 0.5 * self.size
        return np.abs(z - complex(self.center.x, rad)) < rad

    def euclidean_circle(self) -> Tuple[complex, float]:
        if self.center.is_infinite:
            raise DomainError("the horocycle at infinity is a line")
        return complex(self.center.x, 0.5 * self.size), 0.5 * self.size


def horocycle_geodesic_intersection(h: Horocycle, g: Geodesic) -> HPoint:
    """The point where g meets h.

    When g ends at the horocycle's center there is exactly one such point.
    Otherwise only a tangency is accepted; a transversal or empty
    intersection is a domain error.
    """
    ends_here = any(is_ideal(e) and same_point(e, h.center) for e in (g.p, g.q))
    if ends_here:
        if h.center.is_infinite:
            return HPoint(g.c, h.size)
        a = h.center.x
        s = h.size
        if g.kind == "line":
            return HPoint(a, s)
        d = g.c - a
        den = s * s + 4 * d * d
        return HPoint(a + 2 * d * s * s / den, 4 * d * d * s / den)
    # tangency only
    if h.center.is_infinite:
        if g.kind == "circle" and abs(g.r - h.size) <= 1e-12 * max(1.0, g.r):
            return HPoint(g.c, h.size)
        raise DomainError("geodesic does not end at the horocycle center")
    cen, rad = h.euclidean_circle()
    if g.kind == "line":
        if abs(abs(g.c - cen.real) - rad) <= 1e-12 * max(1.0, rad):
            return HPoint(g.c, cen.imag)
        raise DomainError("geodesic does not end at the horocycle center")
    dist = abs(cen - g.c)
    scale = max(1.0, g.r, rad)
    if dist > 0:
        u = (cen - g.c) / dist
        if abs(dist - (g.r + rad)) <= 1e-12 * scale:
            return HPoint.from_complex(g.c + g.r * u)
        if abs(dist - abs(g.r - rad)) <= 1e-12 * scale:
            z = g.c + g.r * u if g.r >= rad else g.c - g.r * u
            if z.imag > 0:
                return HPoint.from_complex(z)
    raise DomainError("geodesic does not end at the horocycle center")


def truncated_side_length(g: Geodesic, h_start: Optional[Horocycle] = None,
                          h_end: Optional[Horocycle] = None) -> float:
    """Length of the part of g lying outside the horodisks at its ideal ends.

    ``h_start`` belongs to ``g.p`` and ``h_end`` to ``g.q``.  A horocycle is
    required at each ideal end and forbidden at finite ends.  Exactly
    tangent horocycles give 0; overlapping horodisks covering the side raise
    ``EmptySegmentError``.
    """
    ends = []
    for end, hor in ((g.p, h_start), (g.q, h_end)):
        if is_ideal(end):
            if hor is None:
                raise DomainError("an ideal end needs a horocycle")
            if not same_point(hor.center, end):
                raise DomainError("horocycle is not centred at the geodesic end")
            ends.append(g.coord(horocycle_geodesic_intersection(hor, g)))
        else:
            if hor is not None:
                raise DomainError("finite ends take no horocycle")
            ends.append(g.coord(end))
    length = g.direction * (ends[1] - ends[0])
    if length < -1e-12:
        raise EmptySegmentError("horodisks cover the whole side (overlap %.3g)" % (-length))
    return max(length, 0.0)


def truncation_points(g: Geodesic, h_start: Optional[Horocycle],
                      h_end: Optional[Horocycle]) -> Tuple[HPoint, HPoint]:
    """End points of the truncated side (the horocycle crossings at ideal ends)."""
    out = []
    for end, hor in ((g.p, h_start), (g.q, h_end)):
        if is_ideal(end):
            out.append(horocycle_geodesic_intersection(hor, g))
        else:
            out.append(end)
    return out[0], out[1]
