"""One-way analysis of variance."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

from .special import f_sf


@dataclass(frozen=True)
class AnovaResult:
    ss_between: float
    ss_within: float
    df_between: int
    df_within: int
    f_stat: float
    p_value: float
    exact_fit: bool = False
    groups: tuple[str, ...] = ()

    @property
    def ss_total(self) -> float:
        return self.ss_between + self.ss_within

    @property
    def ms_between(self) -> float:
        return self.ss_between / self.df_between

    @property
    def ms_within(self) -> float:
        return self.ss_within / self.df_within

    def to_dict(self) -> dict:
        d = asdict(self)
        d["groups"] = list(self.groups)
        d["f_stat"] = _json_float(self.f_stat)
        return d

    def table(self, factor: str = "NF") -> str:
        """Two-row table: factor and residual lines, then the total."""
        p = "<0.001" if self.p_value < 0.001 else f"{self.p_value:.3f}"
        f = "inf" if math.isinf(self.f_stat) else f"{self.f_stat:.6f}"
        rows = [
            f"{'Source':<10} {'Sum of Squares':>16} {'df':>6} {'F':>12} {'p':>10}",
            f"{factor:<10} {self.ss_between:>16.6g} {self.df_between:>6d} {f:>12} {p:>10}",
            f"{'Residual':<10} {self.ss_within:>16.6g} {self.df_within:>6d}",
            f"{'Total':<10} {self.ss_total:>16.6g} {self.df_between + self.df_within:>6d}",
        ]
        if self.exact_fit:
            rows.append("note: zero within-group variance (exact fit)")
        return "\n".join(rows)


def _json_float(x: float):
    return "inf" if math.isinf(x) else x


def _mean(xs: Sequence[float]) -> float:
    # fsum keeps the group means exact enough for the 1e-9 additivity checks
    return math.fsum(xs) / len(xs)


def anova_oneway(groups: Mapping[str, Iterable[float]] | Sequence[Iterable[float]]) -> AnovaResult:
    """F test for equality of group means.

    ``groups`` is either a mapping label -> values or a plain sequence of value
    lists. Empty groups are dropped before counting k.
    """
    if isinstance(groups, Mapping):
        items = [(str(k), [float(v) for v in vs]) for k, vs in groups.items()]
    else:
        items = [(str(i), [float(v) for v in vs]) for i, vs in enumerate(groups)]
    items = [(k, vs) for k, vs in items if vs]
    for _, vs in items:
        for v in vs:
            if not math.isfinite(v):
                raise ValueError(f"non-finite observation {v!r}")
    k = len(items)
    if k < 2:
        raise ValueError(f"need at least 2 non-empty groups, got {k}")
    n = sum(len(vs) for _, vs in items)
    if n <= k:
        raise ValueError(f"need more observations ({n}) than groups ({k})")

    grand = _mean([v for _, vs in items for v in vs])
    means = [_mean(vs) for _, vs in items]
    ss_b = math.fsum(len(vs) * (m - grand) ** 2 for (_, vs), m in zip(items, means))
    ss_w = math.fsum((v - m) ** 2 for (_, vs), m in zip(items, means) for v in vs)
    df_b, df_w = k - 1, n - k

    # Exact degenerate cases decided on the data, not on rounded sums.
    if all(m == means[0] for m in means):
        ss_b = 0.0
    if all(v == vs[0] for _, vs in items for v in vs):
        ss_w = 0.0

    exact = False
    if ss_w == 0.0:
        if ss_b == 0.0:
            f_stat, p = 0.0, 1.0
        else:
            f_stat, p, exact = math.inf, 0.0, True
    else:
        f_stat = (ss_b / df_b) / (ss_w / df_w)
        p = f_sf(f_stat, df_b, df_w)
    return AnovaResult(ss_b, ss_w, df_b, df_w, f_stat, min(1.0, max(0.0, p)), exact,
                       tuple(k for k, _ in items))


def group_rows(rows: Iterable[Mapping], by: str, value: str = "total_ms") -> dict[str, list[float]]:
    """Bucket dict rows into ``{row[by]: [row[value], ...]}`` preserving first-seen order."""
    out: dict[str, list[float]] = {}
    for r in rows:
        out.setdefault(str(r[by]), []).append(float(r[value]))
    return out
