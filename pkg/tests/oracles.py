"""Independent oracles used across the test suite.

Everything here is deliberately coded from scratch (plain ascending series
plus bisection) so it shares no code path with the package's Bessel
evaluation or root finding.
"""

from __future__ import annotations

import math

import numpy as np


def series_jn(n: int, x: float) -> float:
    """Ascending power series for J_n(x); adequate for x up to ~25."""
    half = 0.5 * x
    term = half**n / math.factorial(n)
    total = term
    for m in range(1, 200):
        term *= -(half * half) / (m * (m + n))
        total += term
        if abs(term) < 1e-19 * (1.0 + abs(total)):
            break
    return total


def bisect(fn, a: float, b: float, tol: float = 1e-14) -> float:
    fa = fn(a)
    assert fa * fn(b) < 0.0, "oracle bisection needs a sign change"
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = fn(m)
        if fm == 0.0:
            return m
        if fa * fm < 0.0:
            b = m
        else:
            a, fa = m, fm
    return 0.5 * (a + b)


def jn_zeros_oracle(n: int, count: int) -> np.ndarray:
    """First ``count`` positive zeros of J_n via series + scan + bisection."""
    zeros = []
    step = 0.01
    x = step
    prev = series_jn(n, x)
    while len(zeros) < count:
        x2 = x + step
        cur = series_jn(n, x2)
        if prev * cur < 0.0:
            zeros.append(bisect(lambda t: series_jn(n, t), x, x2))
        x, prev = x2, cur
        assert x < 60.0, "oracle scan ran away"
    return np.array(zeros)


def secular_oracle(n: int, alpha: float):
    """Secular function evaluated with scipy (independent Bessel route)."""
    from scipy.special import jv, jvp

    def g(s: float) -> float:
        return s * s * jv(n, s) + (2.0 - alpha) * (s * jvp(n, s) - n * jv(n, s))

    return g


def secular_roots_oracle(n: int, s_max: float, alpha: float) -> np.ndarray:
    """Roots of the secular function via an independent scan + bisection."""
    g = secular_oracle(n, alpha)
    roots = []
    xs = np.arange(0.02, s_max, 0.02)
    vals = np.array([g(x) for x in xs])
    for i in range(len(xs) - 1):
        if vals[i] * vals[i + 1] < 0.0:
            roots.append(bisect(g, xs[i], xs[i + 1]))
    return np.array(roots)
