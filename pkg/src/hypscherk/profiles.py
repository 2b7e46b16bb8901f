"""Translation invariant reference graphs in polar coordinates.

A graph u(phi, theta) = f(theta) over the half-plane, in polar coordinates
centred at an ideal point, has constant mean curvature H exactly when

    f' / sqrt(1 + sin^2(theta) f'^2) = -2 H cot(theta) + A

for a constant A.  For H > 0 we write A = 2 H k and g(theta) = cos(theta) -
k sin(theta).  This module classifies the solutions, evaluates f' in closed
form and f by quadrature, and provides the minimal barrier
h(x, y) = ln((sqrt(x^2 + y^2) + y) / x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import DomainError
from .geometry import HPoint, IdealPoint, PolarChart
from .quadrature import adaptive_simpson

FINITE = "finite-value"
PLUS_INF = "+inf"
MINUS_INF = "-inf"
INF_NORMAL = "infinite-normal-derivative"

CASE_TAGS = ("A1-entire", "A2-wall", "A3-edge", "H0-A<1", "H0-A=1", "H0-A>1", "B1", "B2", "C")

CASE_TOL = 1e-12
ROOT_TOL = 1e-12


@dataclass(frozen=True)
class ProfileEndpoints:
    theta_lo: float
    theta_hi: float
    tag_lo: str
    tag_hi: str

    def __post_init__(self):
        if not self.theta_lo < self.theta_hi:
            raise DomainError("profile interval must satisfy theta_lo < theta_hi")

    @property
    def width(self):
        return self.theta_hi - self.theta_lo

    def contains(self, theta: float) -> bool:
        return self.theta_lo < theta < self.theta_hi


# ---------------------------------------------------------------------------
# classification


def _g(theta, k):
    return np.cos(theta) - k * np.sin(theta)


def _bisect(fun, lo, hi, tol=ROOT_TOL):
    flo = fun(lo)
    fhi = fun(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise DomainError("root is not bracketed")
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = fun(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def critical_k(H: float) -> float:
    """The value of k at which the profile first develops a vertical wall."""
    if not 0 < H < 0.5:
        raise DomainError("critical k exists only for 0 < H < 1/2")
    return math.sqrt((1.0 / (2.0 * H)) ** 2 - 1.0)


def g_roots(H: float, k: float) -> Tuple[float, float, float]:
    """theta0 (the minimum of g) and the roots theta1 < theta0, theta2 of |g| = 1/(2H).

    theta1 is the root of g = 1/(2H) when H > 1/2 and of g = -1/(2H)
    otherwise; theta2 is the root of g = -1/(2H) beyond theta0 when H < 1/2
    and before theta0 when H > 1/2.  Missing roots are returned as nan.
    """
    theta0 = math.pi + math.atan(-k)
    level = 1.0 / (2.0 * H)
    t1 = t2 = math.nan
    if H > 0.5:
        # g decreases from 1 to -sqrt(1+k^2) on (0, theta0)
        t1 = _bisect(lambda t: _g(t, k) - level, 0.0, theta0)
        t2 = _bisect(lambda t: _g(t, k) + level, 0.0, theta0)
    elif math.sqrt(1.0 + k * k) > level:
        # g + level changes sign once on each side of theta0
        t1 = _bisect(lambda t: _g(t, k) + level, 0.0, theta0)
        if level > 1.0:
            t2 = _bisect(lambda t: _g(t, k) + level, theta0, math.pi)
    return theta0, t1, t2


def cmc_classify(H: float, param: float) -> Tuple[str, List[ProfileEndpoints]]:
    """Case tag and the maximal intervals on which the profile is defined.

    ``param`` is A when H = 0 and k when H > 0.  Cases with two branches
    (the wall and edge cases below H = 1/2) return two intervals.
    """
    if not (H >= 0 and param >= 0) or not (math.isfinite(H) and math.isfinite(param)):
        raise DomainError("H and the parameter must be finite and non-negative")
    pi = math.pi
    if H == 0:
        A = param
        if abs(A - 1.0) <= CASE_TOL:
            return "H0-A=1", [ProfileEndpoints(0.0, pi / 2, FINITE, PLUS_INF)]
        if A < 1.0:
            return "H0-A<1", [ProfileEndpoints(0.0, pi, FINITE, FINITE)]
        return "H0-A>1", [ProfileEndpoints(0.0, math.asin(1.0 / A), FINITE, INF_NORMAL)]
    k = param
    if abs(H - 0.5) <= CASE_TOL:
        if k == 0:
            return "B1", [ProfileEndpoints(0.0, pi, PLUS_INF, PLUS_INF)]
        # cos t - k sin t = -1 has the closed-form root t = 2 arctan(1/k)
        theta1 = 2.0 * math.atan(1.0 / k)
        if not theta1 < pi:
            # k below the resolution of pi: indistinguishable from k = 0
            return "B1", [ProfileEndpoints(0.0, pi, PLUS_INF, PLUS_INF)]
        return "B2", [ProfileEndpoints(0.0, theta1, PLUS_INF, INF_NORMAL)]
    if H > 0.5:
        theta0, t1, t2 = g_roots(H, k)
        return "C", [ProfileEndpoints(t1, t2, INF_NORMAL, INF_NORMAL)]
    kstar = critical_k(H)
    theta0 = pi + math.atan(-k)
    if abs(k - kstar) <= CASE_TOL * max(1.0, kstar):
        return "A2-wall", [ProfileEndpoints(0.0, theta0, PLUS_INF, PLUS_INF),
                           ProfileEndpoints(theta0, pi, MINUS_INF, PLUS_INF)]
    if k < kstar:
        return "A1-entire", [ProfileEndpoints(0.0, pi, PLUS_INF, PLUS_INF)]
    _, t1, t2 = g_roots(H, k)
    return "A3-edge", [ProfileEndpoints(0.0, t1, PLUS_INF, INF_NORMAL),
                       ProfileEndpoints(t2, pi, INF_NORMAL, PLUS_INF)]


# ---------------------------------------------------------------------------
# profiles


def _derivative_formula(H, A, k, theta):
    s = np.sin(theta)
    if H == 0:
        return A / np.sqrt(1.0 - (A * s) ** 2)
    g = _g(theta, k)
    return -2.0 * H * g / (s * np.sqrt(1.0 - (2.0 * H * g) ** 2))


def flux_quantity(fprime, theta):
    """f' / sqrt(1 + sin^2(theta) f'^2), written to stay accurate for huge f'."""
    fprime = np.asarray(fprime, dtype=float)
    s = np.sin(theta)
    with np.errstate(divide="ignore"):
        return np.where(np.abs(fprime) > 1e8,
                        np.sign(fprime) / np.sqrt(1.0 / fprime ** 2 + s * s),
                        fprime / np.sqrt(1.0 + (s * fprime) ** 2))


@dataclass
class CmcProfile:
    """A translation invariant CMC profile f(theta).

    Attributes:
        H: mean curvature (>= 0).
        param: A when H = 0, k when H > 0.
        case_tag: one of CASE_TAGS.
        branches: intervals of definition with endpoint tags.
        anchors: one (theta, value) pair per branch fixing the additive constant.
        table: per branch, arrays (theta, f) on a dense grid, plus the largest
            quadrature error estimate met while filling it.
    """

    H: float
    param: float
    case_tag: str
    branches: List[ProfileEndpoints]
    anchors: List[Tuple[float, float]]
    table: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    table_error: float = 0.0
    tol: float = 1e-11

    @property
    def A(self) -> float:
        return self.param if self.H == 0 else 2.0 * self.H * self.param

    @property
    def k(self) -> Optional[float]:
        return None if self.H == 0 else self.param

    @property
    def domain(self) -> ProfileEndpoints:
        return self.branches[0]

    def branch_of(self, theta: float) -> int:
        for i, b in enumerate(self.branches):
            if b.contains(theta):
                return i
        raise DomainError("theta=%r lies outside the profile domain" % (theta,))

    def derivative(self, theta: float) -> float:
        self.branch_of(theta)
        return float(_derivative_formula(self.H, self.A, self.param, theta))

    def derivative_array(self, theta) -> np.ndarray:
        return _derivative_formula(self.H, self.A, self.param, np.asarray(theta, dtype=float))

    # -- quadrature -------------------------------------------------------

    def _fprime(self, t):
        return float(_derivative_formula(self.H, self.A, self.param, t))

    def _root_sign(self, e: float) -> int:
        """+1 or -1 if 2H g(e) = +-1 (or A sin(e) = 1 when H = 0), else 0."""
        if self.H == 0:
            return 1 if self.A > 1 and abs(e - math.asin(1.0 / self.A)) < 1e-9 else 0
        if abs(2.0 * self.H * float(_g(e, self.param)) - 1.0) < 1e-9:
            return 1
        if abs(2.0 * self.H * float(_g(e, self.param)) + 1.0) < 1e-9:
            return -1
        return 0

    def _fprime_offset(self, e: float, delta: float, root: int) -> float:
        """f'(e + delta), with the vanishing factor under the root evaluated
        from delta directly so that no cancellation occurs near the end e."""
        if root == 0:
            return self._fprime(e + delta)
        theta = e + delta
        if self.H == 0:
            A = self.A
            d = A * A * math.sin(-delta) * math.sin(2.0 * e + delta)
            return A / math.sqrt(d)
        H, k = self.H, self.param
        R = math.hypot(1.0, k)
        phi = math.atan(k)
        g = math.cos(theta) - k * math.sin(theta)
        small = 2.0 * H * root * R * 2.0 * math.sin(e + phi + 0.5 * delta) * math.sin(0.5 * delta)
        d = small * (1.0 + 2.0 * H * root * g)
        return -2.0 * H * g / (math.sin(theta) * math.sqrt(d))

    def _piece(self, b: ProfileEndpoints, lo: float, hi: float, side: str):
        """Integral of f' over [lo, hi], all points in the half of b next to ``side``."""
        if lo == hi:
            return 0.0, 0.0
        tag = b.tag_lo if side == "lo" else b.tag_hi
        e = b.theta_lo if side == "lo" else b.theta_hi
        sgn = 1.0 if side == "lo" else -1.0  # theta = e + sgn * (distance)
        root = self._root_sign(e)

        def F(dist):
            return self._fprime_offset(e, sgn * dist, root)

        if tag == INF_NORMAL:
            # theta = e + sgn s^2 removes the inverse square root
            a_, b_ = math.sqrt(abs(lo - e)), math.sqrt(abs(hi - e))
            eps = 1e-8 * max(a_, b_)

            def gfun(s):
                if s == 0.0:
                    return 2.0 * gfun(eps) - gfun(2.0 * eps)
                return 2.0 * s * F(s * s)
            scale = sgn
        elif tag in (PLUS_INF, MINUS_INF):
            # theta = e + sgn exp(t) turns growth at the end into a smooth tail
            def gfun(t):
                return F(math.exp(t)) * math.exp(t)
            a_, b_ = math.log(abs(lo - e)), math.log(abs(hi - e))
            scale = sgn
        else:
            gfun = self._fprime
            a_, b_ = lo, hi
            scale = 1.0
        coarse = adaptive_simpson(gfun, a_, b_, 1e-6)
        res = adaptive_simpson(gfun, a_, b_, self.tol * max(1.0, abs(coarse.value)))
        return scale * res.value, res.error

    def _integral(self, b: ProfileEndpoints, a: float, t: float):
        """Integral of f' from a to t inside branch b (either order)."""
        if a == t:
            return 0.0, 0.0
        sign = 1.0
        if t < a:
            a, t = t, a
            sign = -1.0
        mid = 0.5 * (b.theta_lo + b.theta_hi)
        total = 0.0
        err = 0.0
        if a < mid:
            v, e = self._piece(b, a, min(t, mid), "lo")
            total += v
            err += e
        if t > mid:
            v, e = self._piece(b, max(a, mid), t, "hi")
            total += v
            err += e
        return sign * total, err

    def value(self, theta: float) -> float:
        return self.value_with_error(theta)[0]

    def value_with_error(self, theta: float) -> Tuple[float, float]:
        i = self.branch_of(theta) if not self._at_finite_end(theta) else self._end_branch(theta)
        b = self.branches[i]
        ta, va = self.anchors[i]
        v, e = self._integral(b, ta, theta)
        return va + v, e

    def _at_finite_end(self, theta):
        for b in self.branches:
            if theta == b.theta_lo and b.tag_lo in (FINITE, INF_NORMAL):
                return True
            if theta == b.theta_hi and b.tag_hi in (FINITE, INF_NORMAL):
                return True
        return False

    def _end_branch(self, theta):
        for i, b in enumerate(self.branches):
            if theta in (b.theta_lo, b.theta_hi):
                return i
        raise DomainError("not an endpoint")

    def endpoint_limit(self, branch: int, side: str) -> float:
        """Limit of f at a branch end: finite value, or +/- inf per the case table."""
        b = self.branches[branch]
        tag = b.tag_lo if side == "lo" else b.tag_hi
        if tag == PLUS_INF:
            return math.inf
        if tag == MINUS_INF:
            return -math.inf
        theta = b.theta_lo if side == "lo" else b.theta_hi
        ta, va = self.anchors[branch]
        return va + self._integral(b, ta, theta)[0]


def default_anchor(b: ProfileEndpoints) -> Tuple[float, float]:
    if b.tag_lo in (FINITE, INF_NORMAL):
        return (b.theta_lo, 0.0)
    if b.tag_hi in (FINITE, INF_NORMAL):
        return (b.theta_hi, 0.0)
    return (0.5 * (b.theta_lo + b.theta_hi), 0.0)


def make_profile(H: float, param: float, anchors: Optional[List[Tuple[float, float]]] = None,
                 table_points: int = 129, tol: float = 1e-11) -> CmcProfile:
    """Build a profile, anchor it and precompute its value table.

    By default each branch is anchored with value 0 at a finite endpoint
    when one exists, otherwise at the branch midpoint.
    """
    tag, branches = cmc_classify(H, param)
    if anchors is None:
        anchors = [default_anchor(b) for b in branches]
    if len(anchors) != len(branches):
        raise DomainError("need one anchor per branch")
    prof = CmcProfile(H, param, tag, branches, list(anchors), tol=tol)
    for b, (ta, _) in zip(branches, anchors):
        if not (b.theta_lo <= ta <= b.theta_hi):
            raise DomainError("anchor outside its branch")
        if (ta == b.theta_lo and b.tag_lo in (PLUS_INF, MINUS_INF)) or \
           (ta == b.theta_hi and b.tag_hi in (PLUS_INF, MINUS_INF)):
            raise DomainError("cannot anchor at an infinite end")
    worst = 0.0
    for i, b in enumerate(branches):
        thetas = table_thetas(b, table_points)
        vals = np.empty_like(thetas)
        for j, t in enumerate(thetas):
            v, e = prof.value_with_error(float(t)) if b.contains(t) or prof._at_finite_end(t) \
                else (math.nan, 0.0)
            vals[j] = v
            worst = max(worst, e)
        prof.table.append((thetas, vals))
    prof.table_error = worst
    return prof


def table_thetas(b: ProfileEndpoints, n: int) -> np.ndarray:
    """Sample points of a branch; infinite ends are kept at a small standoff."""
    lo, hi = b.theta_lo, b.theta_hi
    off = 1e-3 * (hi - lo)
    a = lo + off if b.tag_lo in (PLUS_INF, MINUS_INF) else lo
    z = hi - off if b.tag_hi in (PLUS_INF, MINUS_INF) else hi
    return np.linspace(a, z, n)


def cmc_derivative(prof: CmcProfile, theta: float) -> float:
    return prof.derivative(theta)


def cmc_value(prof: CmcProfile, theta: float) -> float:
    return prof.value(theta)


def first_integral_residual(prof: CmcProfile, theta) -> np.ndarray:
    """Residual of the first integral: f'/sqrt(1+sin^2 f'^2) - (-2H cot + A)."""
    theta = np.asarray(theta, dtype=float)
    fp = prof.derivative_array(theta)
    rhs = -2.0 * prof.H / np.tan(theta) + prof.A
    return flux_quantity(fp, theta) - rhs


def curvature_residual(prof: CmcProfile, theta, rel_step: float = 1e-5) -> np.ndarray:
    """Centred difference of the flux quantity minus 2H / sin^2(theta).

    The step is ``rel_step`` times the distance to the nearest of 0 and pi,
    which keeps the truncation error relative to 2H / sin^2(theta).
    """
    theta = np.asarray(theta, dtype=float)
    step = rel_step * np.minimum(theta, np.pi - theta)
    qp = flux_quantity(prof.derivative_array(theta + step), theta + step)
    qm = flux_quantity(prof.derivative_array(theta - step), theta - step)
    return (qp - qm) / (2 * step) - 2.0 * prof.H / np.sin(theta) ** 2


def profile_as_graph(prof: CmcProfile, chart: PolarChart) -> Callable[[HPoint], float]:
    """The function p -> f(theta(p)), theta taken in the given polar chart."""
    def u(p: HPoint) -> float:
        _, theta = chart.to_polar(p)
        return prof.value(theta)
    return u


# ---------------------------------------------------------------------------
# barriers


@dataclass
class BarrierParams:
    theta0: float = math.pi / 2
    chart: PolarChart = None
    offset: float = 0.0

    def __post_init__(self):
        if not 0 < self.theta0 <= math.pi / 2:
            raise DomainError("theta0 must lie in (0, pi/2]")
        if self.chart is None:
            self.chart = PolarChart(IdealPoint(0.0))
        self._profile = None

    @property
    def profile(self) -> CmcProfile:
        if self._profile is None:
            if self.theta0 == math.pi / 2:
                self._profile = make_profile(0.0, 1.0, table_points=3)
            else:
                self._profile = make_profile(0.0, 1.0 / math.sin(self.theta0), table_points=3)
        return self._profile


def h_half_pi(x, y):
    """ln((sqrt(x^2+y^2) + y) / x), vectorised; the barrier for theta0 = pi/2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.log((np.hypot(x, y) + y) / x)


def h_half_pi_gradient(x, y):
    """Euclidean gradient of h_half_pi."""
    r = np.hypot(x, y)
    return x / (r * (r + y)) - 1.0 / x, 1.0 / r


def barrier_value(b: BarrierParams, p: HPoint) -> float:
    """Value of the barrier at p, in the coordinates normalised by b.chart."""
    phi, theta = b.chart.to_polar(p)
    if b.theta0 == math.pi / 2:
        if not 0 < theta < math.pi / 2:
            raise DomainError("point outside the barrier domain 0 < theta < pi/2")
        w = b.chart.T.apply_complex(p.z)
        return b.offset + float(h_half_pi(w.real, w.imag))
    if not 0 < theta <= b.theta0:
        raise DomainError("point outside the barrier domain 0 < theta <= theta0")
    return b.offset + b.profile.value(theta)
