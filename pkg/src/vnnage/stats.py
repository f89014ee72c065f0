"""Two-group ANOVA, F-distribution tail probabilities, and small metrics.

The F-test p-values go through a self-contained regularized incomplete
beta function (modified Lentz continued fraction) so that group
comparisons do not depend on an external stats stack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import ConvergenceError

_BETACF_MAX_ITER = 200
_BETACF_EPS = 1e-14
_FPMIN = 1e-300


@dataclass(frozen=True)
class FTestResult:
    f_value: float
    df_between: int
    df_within: int
    p_raw: float


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ConvergenceError(
        f"incomplete beta continued fraction stalled (a={a}, b={b}, x={x})"
    )


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) with the symmetry switch at x = (a+1)/(a+b+2)."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("a and b must be positive")
    if x < 0.0 or x > 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, df1: int, df2: int) -> float:
    """Upper-tail probability P(F >= f) for the F(df1, df2) distribution."""
    if df1 < 1 or df2 < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if math.isnan(f) or f < 0.0:
        raise ValueError("f must be non-negative")
    if math.isinf(f):
        return 0.0
    x = df2 / (df2 + df1 * f)
    return regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, x)


def anova_f_two_group(a, b) -> FTestResult:
    """One-way ANOVA F-test between two groups.

    F = MS_between / MS_within with df (1, n1+n2-2).  When the pooled
    within-group variance is zero the statistic degenerates: equal means
    give F = 0 (p = 1), unequal means give F = +inf (p = 0).
    """
    xs = np.asarray(a, dtype=float)
    ys = np.asarray(b, dtype=float)
    if xs.ndim != 1 or ys.ndim != 1:
        raise ValueError("groups must be 1-d arrays")
    n1, n2 = xs.size, ys.size
    if n1 < 2 or n2 < 2:
        raise ValueError("each group needs at least two observations")
    mean_a = xs.mean()
    mean_b = ys.mean()
    grand = (xs.sum() + ys.sum()) / (n1 + n2)
    ss_between = n1 * (mean_a - grand) ** 2 + n2 * (mean_b - grand) ** 2
    ss_within = float(np.sum((xs - mean_a) ** 2) + np.sum((ys - mean_b) ** 2))
    df_between = 1
    df_within = n1 + n2 - 2
    if ss_within == 0.0:
        if mean_a == mean_b:
            return FTestResult(0.0, df_between, df_within, 1.0)
        return FTestResult(math.inf, df_between, df_within, 0.0)
    f_value = float((ss_between / df_between) / (ss_within / df_within))
    return FTestResult(f_value, df_between, df_within, f_sf(f_value, df_between, df_within))


def bonferroni(p: float, n_tests: int) -> float:
    """Family-wise adjusted p-value: min(1, n_tests * p)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if n_tests < 1:
        raise ValueError("n_tests must be >= 1")
    return min(1.0, n_tests * p)


def pearson(x, y) -> float:
    """Sample Pearson correlation; raises on constant input."""
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.ndim != 1 or ys.ndim != 1 or xs.shape != ys.shape:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if xs.size < 2:
        raise ValueError("need at least two points")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sxx = float(np.sum(dx * dx))
    syy = float(np.sum(dy * dy))
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("correlation undefined for constant input")
    r = float(np.sum(dx * dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def mae(x, y) -> float:
    """Mean absolute difference between two equal-length sequences."""
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if xs.size == 0:
        raise ValueError("inputs must be non-empty")
    return float(np.mean(np.abs(xs - ys)))
