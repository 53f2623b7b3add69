"""Training diagnostics and one-sided t-tests.

The Student t CDF is evaluated through the regularized incomplete beta
function with a modified-Lentz continued fraction, so p-values need nothing
beyond the standard library.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

_CF_MAX_ITER = 20000
_CF_EPS = 1e-16
_CF_TINY = 1e-300


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    variance: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.variance < 0:
            raise ValueError("variance must be >= 0")

    @classmethod
    def of(cls, samples: Sequence[float]) -> "SampleSummary":
        x = np.asarray(samples, dtype=np.float64)
        if x.size == 0:
            raise ValueError("empty sample")
        var = float(np.var(x, ddof=1)) if x.size > 1 else 0.0
        return cls(int(x.size), float(np.mean(x)), var)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    alternative: str = "greater"

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return asdict(self)

    def rejects(self, alpha: float) -> bool:
        return self.p_value < alpha


def explained_variance(returns, values):
    """``1 - Var(returns - values) / Var(returns)``; ``None`` when the returns
    have zero variance."""
    returns = np.asarray(returns, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if returns.shape != values.shape or returns.size < 2:
        raise ValueError("need two equal-length arrays of at least 2 elements")
    total = np.var(returns, ddof=1)
    if total == 0:
        return None
    return float(1.0 - np.var(returns - values, ddof=1) / total)


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _stirling_tail(z: float) -> float:
    """``lgamma(z) - ((z - 0.5) log z - z + 0.5 log 2pi)`` for z >= 10."""
    iz2 = 1.0 / (z * z)
    return (1.0 / 12 - iz2 * (1.0 / 360 - iz2 * (1.0 / 1260 - iz2 * (1.0 / 1680 - iz2 / 1188)))) / z


def _log_gamma_ratio(a: float, b: float) -> float:
    """``lgamma(a + b) - lgamma(a)`` without cancellation when ``a`` is large."""
    if a < 10.0:
        return math.lgamma(a + b) - math.lgamma(a)
    return (b * math.log(a) + (a + b - 0.5) * math.log1p(b / a) - b
            + _stirling_tail(a + b) - _stirling_tail(a))


def _log_beta_front(a: float, b: float, x: float, y: float) -> float:
    """``log(x^a y^b / B(a, b))`` with ``y = 1 - x`` supplied exactly."""
    big, small = (a, b) if a >= b else (b, a)
    log_x = math.log(x) if x < 0.5 else math.log1p(-y)
    log_y = math.log(y) if y < 0.5 else math.log1p(-x)
    return _log_gamma_ratio(big, small) - math.lgamma(small) + a * log_x + b * log_y


def regularized_incomplete_beta(a: float, b: float, x: float, y: float | None = None) -> float:
    """``I_x(a, b)``. Pass ``y = 1 - x`` when it is known more precisely than x."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if y is None:
        y = 1.0 - x
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or y == 0.0:
        return 0.0 if x == 0.0 else 1.0
    front = math.exp(_log_beta_front(a, b, x, y))
    # continued fraction converges fastest on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def student_t_cdf(x: float, dof: float) -> float:
    if not dof > 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isnan(x):
        return math.nan
    if math.isinf(x):
        return 1.0 if x > 0 else 0.0
    if x == 0:
        return 0.5
    x2 = x * x
    tail = 0.5 * regularized_incomplete_beta(0.5 * dof, 0.5, dof / (dof + x2), x2 / (dof + x2))
    return 1.0 - tail if x > 0 else tail


def student_t_sf(x: float, dof: float) -> float:
    """Upper tail ``P(T > x)`` computed without cancellation."""
    return student_t_cdf(-x, dof)


def _t_result(diff: float, se: float, dof: float) -> TestResult:
    if se == 0:
        t = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    else:
        t = diff / se
    return TestResult(t, dof, min(1.0, max(0.0, student_t_sf(t, dof))))


def welch_t_test(a: SampleSummary, b: SampleSummary) -> TestResult:
    """One-sided Welch test of ``mean(a) > mean(b)``."""
    if a.n < 2 or b.n < 2:
        raise ValueError("Welch test needs at least 2 observations per group")
    va, vb = a.variance / a.n, b.variance / b.n
    se = math.sqrt(va + vb)
    denom = va * va / (a.n - 1) + vb * vb / (b.n - 1)
    dof = (va + vb) ** 2 / denom if denom > 0 else float(a.n + b.n - 2)
    return _t_result(a.mean - b.mean, se, dof)


def one_sample_t_test(a: SampleSummary, mu0: float = 0.0) -> TestResult:
    """One-sided test of ``mean(a) > mu0``."""
    if a.n < 2:
        raise ValueError("one-sample test needs at least 2 observations")
    return _t_result(a.mean - mu0, math.sqrt(a.variance / a.n), float(a.n - 1))


def quartiles(samples) -> dict:
    x = np.asarray(samples, dtype=np.float64)
    q = np.percentile(x, [0, 25, 50, 75, 100])
    return dict(zip(("min", "q1", "median", "q3", "max"), (float(v) for v in q)))
