import math

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from corebench.stats.special import betainc, f_cdf, f_sf, normal_cdf, normal_sf, two_sided_normal_p

mpmath.mp.dps = 40


def test_f_cdf_examples():
    assert f_cdf(0, 3, 7) == 0.0
    assert abs(f_cdf(1, 1, 1) - 0.5) < 1e-10
    assert abs(f_cdf(3, 2, 6) - 0.875) < 1e-12


@pytest.mark.parametrize("d2", [1, 2, 3, 6, 10, 37, 370, 5000])
@pytest.mark.parametrize("F", [0.0, 0.01, 0.5, 1.0, 3.0, 18.6, 250.0])
def test_f_cdf_d1_2_closed_form(F, d2):
    closed = 1 - (1 + 2 * F / d2) ** (-d2 / 2)
    assert abs(f_cdf(F, 2, d2) - closed) < 1e-10


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0.5, 200), b=st.floats(0.5, 400), x=st.floats(0, 1))
def test_betainc_against_mpmath(a, b, x):
    ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
    assert abs(betainc(a, b, x) - ref) < 1e-10


@settings(max_examples=100, deadline=None)
@given(F=st.floats(0, 1e3), d1=st.integers(1, 40), d2=st.integers(1, 500))
def test_f_sf_complements_cdf(F, d1, d2):
    assert abs(f_cdf(F, d1, d2) + f_sf(F, d1, d2) - 1) < 1e-12


def test_f_cdf_monotone():
    vals = [f_cdf(x / 10, 9, 370) for x in range(0, 200)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_f_sf_tail_matches_mpmath():
    # Paper-scale statistic: far tail where 1 - cdf would cancel.
    d1, d2, F = 9, 370, 18.611059
    x = d2 / (d2 + d1 * F)
    ref = float(mpmath.betainc(d2 / 2, d1 / 2, 0, x, regularized=True))
    assert abs(f_sf(F, d1, d2) - ref) <= 1e-12 * ref


def test_normal_cdf():
    assert normal_cdf(0.0) == 0.5
    assert abs(normal_cdf(1.959964) - 0.975) < 1e-6
    for z in (-8, -3.3, -1, -0.2, 0.7, 2.5, 6):
        assert abs(normal_cdf(z) - float(mpmath.ncdf(z))) < 1e-12
        assert abs(normal_cdf(-z) - (1 - normal_cdf(z))) < 1e-12
    assert abs(normal_sf(5) - float(mpmath.ncdf(-5))) < 1e-20
    assert abs(two_sided_normal_p(1.959964) - 0.05) < 1e-6


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_rejected(bad):
    with pytest.raises(ValueError):
        f_cdf(bad, 2, 3)
    with pytest.raises(ValueError):
        normal_cdf(bad)


def test_domain_errors():
    with pytest.raises(ValueError):
        f_cdf(-1, 2, 3)
    with pytest.raises(ValueError):
        f_cdf(1, 0, 3)
