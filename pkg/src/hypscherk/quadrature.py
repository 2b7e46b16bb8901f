"""Adaptive Simpson quadrature with a hard depth cap."""

import math
from typing import Callable, NamedTuple


class QuadResult(NamedTuple):
    value: float
    error: float
    capped: bool


def _simpson(fa, fm, fb, a, b):
    return (b - a) * (fa + 4.0 * fm + fb) / 6.0


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 40,
                     max_intervals: int = 200000) -> QuadResult:
    """Integrate f over [a, b] with adaptive Simpson and Richardson correction.

    The interval is split until the local error estimate falls below the
    share of ``tol`` assigned to it.  Subintervals that reach ``max_depth``
    are accepted as they are and the returned result is flagged as capped;
    the error field then carries the summed local estimates.  The same
    happens to every pending subinterval once ``max_intervals`` have been
    processed, and to subintervals whose estimate is not finite.
    """
    if a == b:
        return QuadResult(0.0, 0.0, False)
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = _simpson(fa, fm, fb, a, b)
    total = 0.0
    err_total = 0.0
    capped = False
    # explicit stack keeps deep refinements away from the recursion limit
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    processed = 0
    while stack:
        processed += 1
        a0, b0, fa0, fm0, fb0, s0, tol0, depth = stack.pop()
        m0 = 0.5 * (a0 + b0)
        lm = 0.5 * (a0 + m0)
        rm = 0.5 * (m0 + b0)
        flm, frm = f(lm), f(rm)
        left = _simpson(fa0, flm, fm0, a0, m0)
        right = _simpson(fm0, frm, fb0, m0, b0)
        delta = left + right - s0
        done = abs(delta) <= 15.0 * tol0
        if (done or depth >= max_depth or processed >= max_intervals
                or not math.isfinite(delta) or m0 <= a0 or b0 <= m0):
            if not done:
                capped = True
            total += left + right + delta / 15.0
            err_total += abs(delta) / 15.0 if math.isfinite(delta) else math.inf
            continue
        stack.append((m0, b0, fm0, frm, fb0, right, 0.5 * tol0, depth + 1))
        stack.append((a0, m0, fa0, flm, fm0, left, 0.5 * tol0, depth + 1))
    if not math.isfinite(total):
        capped = True
    return QuadResult(sign * total, err_total, capped)


def integrate_sqrt_endpoint(f: Callable[[float], float], a: float, b: float,
                            singular_at: str, tol: float = 1e-10,
                            max_depth: int = 40) -> QuadResult:
    """Integrate f over [a, b] when f behaves like c/sqrt(distance) at one end.

    The substitution t = end -/+ s**2 turns the inverse square-root
    singularity into a smooth integrand in s before Simpson is applied.
    ``singular_at`` is ``"a"``, ``"b"`` or ``"both"``.
    """
    if singular_at == "both":
        mid = 0.5 * (a + b)
        r1 = integrate_sqrt_endpoint(f, a, mid, "a", 0.5 * tol, max_depth)
        r2 = integrate_sqrt_endpoint(f, mid, b, "b", 0.5 * tol, max_depth)
        return QuadResult(r1.value + r2.value, r1.error + r2.error,
                          r1.capped or r2.capped)
    length = b - a
    smax = math.sqrt(abs(length))
    direction = math.copysign(1.0, length)
    if singular_at == "a":
        def point(s):
            return a + direction * s * s
    elif singular_at == "b":
        def point(s):
            return b - direction * s * s
    else:
        raise ValueError("singular_at must be 'a', 'b' or 'both'")
    eps = 1e-6 * smax

    def g(s):
        if s == 0.0:
            # the transformed integrand is smooth; extrapolate to s = 0
            return 2.0 * g(eps) - g(2.0 * eps)
        return 2.0 * s * f(point(s))

    res = adaptive_simpson(g, 0.0, smax, tol, max_depth)
    return QuadResult(direction * res.value, res.error, res.capped)
