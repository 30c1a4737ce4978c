"""Special functions behind the ANOVA and Wald p-values."""
from __future__ import annotations

import math

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite input {v!r}")


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b) (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _front(a: float, b: float, x: float, y: float) -> float:
    # x^a y^b / (a B(a, b)), in logs
    lbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    return math.exp(a * math.log(x) + b * math.log(y) - lbeta) / a


def betainc_pair(a: float, b: float, x: float, y: float | None = None) -> tuple[float, float]:
    """Return (I_x(a, b), 1 - I_x(a, b)), each computed without cancellation.

    ``y`` is 1 - x; pass it when it is known more precisely than ``1 - x``.
    """
    _check_finite(a, b, x)
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if y is None:
        y = 1.0 - x
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0, 1.0
    if y == 0.0:
        return 1.0, 0.0
    if x < (a + 1.0) / (a + b + 2.0):
        lower = _front(a, b, x, y) * _beta_cf(a, b, x)
        return lower, 1.0 - lower
    upper = _front(b, a, y, x) * _beta_cf(b, a, y)
    return 1.0 - upper, upper


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    return betainc_pair(a, b, x)[0]


def _f_args(F: float, d1: float, d2: float) -> tuple[float, float]:
    _check_finite(F, d1, d2)
    if F < 0:
        raise ValueError("F must be >= 0")
    if d1 < 1 or d2 < 1:
        raise ValueError("degrees of freedom must be >= 1")
    denom = d1 * F + d2
    return d1 * F / denom, d2 / denom


def f_cdf(F: float, d1: float, d2: float) -> float:
    """P(X <= F) for X ~ F(d1, d2)."""
    x, y = _f_args(F, d1, d2)
    return betainc_pair(d1 / 2.0, d2 / 2.0, x, y)[0]


def f_sf(F: float, d1: float, d2: float) -> float:
    """P(X > F); stays accurate where 1 - f_cdf would round to zero."""
    x, y = _f_args(F, d1, d2)
    return betainc_pair(d1 / 2.0, d2 / 2.0, x, y)[1]


def normal_cdf(z: float) -> float:
    _check_finite(z)
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_sf(z: float) -> float:
    _check_finite(z)
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def two_sided_normal_p(z: float) -> float:
    """2 (1 - Phi(|z|)) evaluated as erfc(|z| / sqrt 2)."""
    _check_finite(z)
    return math.erfc(abs(z) / math.sqrt(2.0))
