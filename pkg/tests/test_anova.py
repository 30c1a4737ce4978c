import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corebench.stats import anova_oneway
from corebench.stats.anova import group_rows


def brute_force(groups):
    allv = [v for g in groups for v in g]
    grand = sum(allv) / len(allv)
    ssb = sum(len(g) * (sum(g) / len(g) - grand) ** 2 for g in groups)
    ssw = sum((v - sum(g) / len(g)) ** 2 for g in groups for v in g)
    k, n = len(groups), len(allv)
    return ssb, ssw, (ssb / (k - 1)) / (ssw / (n - k))


def test_worked_example():
    r = anova_oneway([[1, 2, 3], [2, 3, 4], [3, 4, 5]])
    assert (r.ss_between, r.df_between, r.ss_within, r.df_within) == (6, 2, 6, 6)
    assert r.f_stat == pytest.approx(3.0, rel=1e-12)
    assert r.p_value == pytest.approx(0.125, abs=1e-12)


def test_identical_groups():
    r = anova_oneway([[1, 2, 3], [1, 2, 3]])
    assert r.f_stat == 0 and r.p_value == 1


def test_paper_degrees_of_freedom():
    rng = random.Random(0)
    groups = {f"nf{j}": [rng.gauss(0, 1) for _ in range(38)] for j in range(10)}
    r = anova_oneway(groups)
    assert (r.df_between, r.df_within) == (9, 370)


def test_exact_fit_flag():
    r = anova_oneway([[1, 1], [2, 2]])
    assert r.exact_fit and r.p_value == 0 and math.isinf(r.f_stat)


def test_empty_groups_dropped_and_errors():
    r = anova_oneway({"a": [1, 2], "b": [], "c": [4, 6]})
    assert r.df_between == 1
    with pytest.raises(ValueError):
        anova_oneway([[1, 2, 3]])
    with pytest.raises(ValueError):
        anova_oneway([[1], [2]])


group_lists = st.lists(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=8),
                       min_size=2, max_size=5).filter(lambda gs: sum(map(len, gs)) > len(gs))


@settings(max_examples=300, deadline=None)
@given(group_lists)
def test_ss_additivity(groups):
    r = anova_oneway(groups)
    allv = np.array([v for g in groups for v in g])
    total = float(((allv - allv.mean()) ** 2).sum())
    assert r.ss_between >= 0 and r.ss_within >= 0
    assert math.isclose(r.ss_between + r.ss_within, total, rel_tol=1e-9, abs_tol=1e-9)
    assert 0 <= r.p_value <= 1 and r.f_stat >= 0


def test_brute_force_oracle_1000():
    rng = random.Random(12345)
    for _ in range(1000):
        k = rng.randint(2, 5)
        groups = [[rng.gauss(rng.uniform(-3, 3), rng.uniform(0.1, 3)) for _ in range(rng.randint(2, 8))]
                  for _ in range(k)]
        r = anova_oneway(groups)
        _, _, f = brute_force(groups)
        assert math.isclose(r.f_stat, f, rel_tol=1e-9)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(0.01, 100).flatmap(lambda x: st.sampled_from([x, -x])), b=st.floats(-1e3, 1e3),
       seed=st.integers(0, 10_000))
def test_affine_invariance(a, b, seed):
    rng = random.Random(seed)
    groups = [[rng.gauss(j, 1) for _ in range(rng.randint(2, 8))] for j in range(rng.randint(2, 5))]
    r1 = anova_oneway(groups)
    r2 = anova_oneway([[a * v + b for v in g] for g in groups])
    assert math.isclose(r1.f_stat, r2.f_stat, rel_tol=1e-9)
    assert math.isclose(r1.p_value, r2.p_value, rel_tol=1e-9, abs_tol=1e-15)


def test_group_rows_and_table():
    rows = [{"nf": "AMF", "total_ms": "1"}, {"nf": "UDM", "total_ms": "3"}, {"nf": "AMF", "total_ms": "2"}]
    assert group_rows(rows, "nf") == {"AMF": [1.0, 2.0], "UDM": [3.0]}
    r = anova_oneway([[1, 2, 3], [2, 3, 4], [3, 4, 5]])
    assert "Residual" in r.table()
    assert r.to_dict()["f_stat"] == pytest.approx(3.0)
