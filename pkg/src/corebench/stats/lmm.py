"""Random-intercept linear mixed model fitted by REML.

Model: y = X b + Z u + e with one random intercept per group,
u ~ N(0, s2u I), e ~ N(0, s2e I). The restricted likelihood is profiled over
lam = s2u / s2e, so the optimisation is one-dimensional. With V = I + lam Z Z'
block diagonal, every quantity below reduces to per-group sums:

    V^-1 = I - sum_g c_g 1_g 1_g',   c_g = lam / (1 + n_g lam)
    log|V| = sum_g log(1 + n_g lam)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .special import two_sided_normal_p

Z95 = 1.959964
LOG10_LAMBDA_BOUNDS = (-8.0, 8.0)
GRID_POINTS = 65
REFERENCE_LEVEL = "None"
STRESS_LEVELS = ("CPU", "Memory", "CpuMemory")


class LmmError(ValueError):
    pass


@dataclass
class LabeledDataset:
    y: np.ndarray
    group: list[str]
    treatment: list[str]

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float)
        self.group = [str(g) for g in self.group]
        self.treatment = [REFERENCE_LEVEL if t in (None, "", "none", "None") else str(t)
                          for t in self.treatment]
        if not (len(self.y) == len(self.group) == len(self.treatment)):
            raise LmmError("y, group and treatment must have equal length")
        if not np.all(np.isfinite(self.y)):
            raise LmmError("latencies must be finite")

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def from_rows(cls, rows: Iterable[Mapping], y: str = "total_ms", group: str = "nf",
                  treatment: str = "kind") -> "LabeledDataset":
        ys, gs, ts = [], [], []
        for r in rows:
            ys.append(float(r[y]))
            gs.append(r[group])
            ts.append(r.get(treatment))
        return cls(np.array(ys), gs, ts)

    def groups(self) -> list[str]:
        return sorted(set(self.group))

    def levels(self) -> list[str]:
        present = set(self.treatment)
        known = [lv for lv in (REFERENCE_LEVEL,) + STRESS_LEVELS if lv in present]
        return known + sorted(present - set(known))

    def design(self) -> tuple[np.ndarray, list[str]]:
        """Intercept plus one treatment dummy per non-reference level."""
        levels = self.levels()
        if len(levels) < 2:
            raise LmmError(f"single treatment level ({levels[0] if levels else 'none'}); "
                           "nothing to contrast against")
        names = ["Intercept"] + [lv for lv in levels if lv != REFERENCE_LEVEL]
        X = np.zeros((len(self), len(names)))
        X[:, 0] = 1.0
        col = {name: j for j, name in enumerate(names)}
        for i, t in enumerate(self.treatment):
            if t != REFERENCE_LEVEL:
                X[i, col[t]] = 1.0
        return X, names


@dataclass
class LmmFit:
    terms: list[str]
    beta: np.ndarray
    se: np.ndarray
    z: np.ndarray
    p: np.ndarray
    ci95: np.ndarray
    sigma2_u: float
    sigma2_e: float
    lam: float
    reml_loglik: float
    sigma2_u_se: float | None = None
    boundary: bool = False
    n_obs: int = 0
    n_groups: int = 0
    group_sizes: dict = field(default_factory=dict)

    def coef(self, term: str) -> float:
        return float(self.beta[self.terms.index(term)])

    def to_dict(self) -> dict:
        rows = []
        for j, name in enumerate(self.terms):
            rows.append({"term": name, "beta": float(self.beta[j]), "se": float(self.se[j]),
                         "z": float(self.z[j]), "p": float(self.p[j]),
                         "ci95": [float(self.ci95[j, 0]), float(self.ci95[j, 1])]})
        return {
            "fixed": rows,
            "group_var": {"estimate": self.sigma2_u, "se": self.sigma2_u_se},
            "sigma2_u": self.sigma2_u,
            "sigma2_e": self.sigma2_e,
            "lambda": self.lam,
            "reml_loglik": self.reml_loglik,
            "boundary": self.boundary,
            "n_obs": self.n_obs,
            "n_groups": self.n_groups,
        }


class _GroupSums:
    """Per-group sufficient statistics for O(N) evaluation at any lambda."""

    def __init__(self, y: np.ndarray, X: np.ndarray, group: Sequence[str]):
        labels = sorted(set(group))
        index = {g: i for i, g in enumerate(labels)}
        gi = np.array([index[g] for g in group])
        self.y, self.X, self.gi = y, X, gi
        self.labels = labels
        self.n = np.bincount(gi, minlength=len(labels)).astype(float)
        self.S = np.zeros((len(labels), X.shape[1]))
        np.add.at(self.S, gi, X)
        self.sy = np.bincount(gi, weights=y, minlength=len(labels))
        self.XtX = X.T @ X
        self.Xty = X.T @ y

    def solve(self, lam: float):
        """GLS pieces at ``lam``: beta, rV^-1r, log|V|, XtV^-1X and its Cholesky factor."""
        c = lam / (1.0 + self.n * lam)
        A = self.XtX - (self.S * c[:, None]).T @ self.S
        b = self.Xty - self.S.T @ (c * self.sy)
        L = np.linalg.cholesky(A)
        beta = np.linalg.solve(L.T, np.linalg.solve(L, b))
        r = self.y - self.X @ beta
        rg = np.bincount(self.gi, weights=r, minlength=len(self.labels))
        q = float(r @ r - np.sum(c * rg * rg))
        logdet_v = float(np.sum(np.log1p(self.n * lam)))
        return beta, q, logdet_v, A, L


def _profile_loglik(gs: _GroupSums, lam: float, dof: int) -> float:
    _, q, logdet_v, _, L = gs.solve(lam)
    if q <= 0:
        return math.inf
    logdet_a = 2.0 * float(np.sum(np.log(np.diag(L))))
    s2e = q / dof
    return -0.5 * (logdet_v + logdet_a + dof * (1.0 + math.log(s2e)))


def _score(gs: _GroupSums, lam: float, dof: int) -> float:
    """d l_R / d lambda, from group sums: with V_g^-1 1 = 1 / (1 + n_g lambda),
    tr(V^-1 ZZ') = sum n_g w_g, X'V^-1 Z = S_g w_g and r'V^-1 Z = r_g w_g."""
    beta, q, _, _, L = gs.solve(lam)
    w = 1.0 / (1.0 + gs.n * lam)
    r = gs.y - gs.X @ beta
    rg = np.bincount(gs.gi, weights=r, minlength=len(gs.labels))
    M = np.linalg.solve(L, (gs.S * w[:, None]).T)
    return -0.5 * (float(np.sum(gs.n * w)) - float(np.sum(M * M)) - dof * float(np.sum((rg * w) ** 2)) / q)


def _polish(gs: _GroupSums, t: float, dof: int, step: float = 0.05, iters: int = 80) -> float:
    """Bisect the score around log10-lambda ``t``; returns ``t`` unchanged if no sign change brackets it."""
    def sc(u: float) -> float:
        return _score(gs, 10.0 ** u, dof)

    a, b = t - step, t + step
    fa, fb = sc(a), sc(b)
    if not (fa > 0 > fb):
        return t
    for _ in range(iters):
        m = 0.5 * (a + b)
        if m in (a, b):
            break
        fm = sc(m)
        if fm > 0:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def _full_loglik(gs: _GroupSums, s2e: float, s2u: float, dof: int) -> float:
    """Restricted log-likelihood in (s2e, s2u), used only for the curvature at the optimum."""
    if s2e <= 0 or s2u < 0:
        return -math.inf
    lam = s2u / s2e
    _, q, logdet_v, _, L = gs.solve(lam)
    p = gs.X.shape[1]
    logdet_a = 2.0 * float(np.sum(np.log(np.diag(L))))
    n = dof + p
    # log|s2e V| = n log s2e + log|V|;  log|X'(s2e V)^-1 X| = log|A| - p log s2e
    return -0.5 * (n * math.log(s2e) + logdet_v + logdet_a - p * math.log(s2e) + q / s2e)


def _golden_max(f, a: float, b: float, tol: float = 1e-10, max_iter: int = 200) -> tuple[float, float]:
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _collinear_terms(X: np.ndarray, names: Sequence[str]) -> list[str]:
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    tol = s.max() * max(X.shape) * np.finfo(float).eps
    null = vt[s <= tol]
    if not len(null):
        return []
    weight = np.abs(null).max(axis=0)
    return [n for n, w in zip(names, weight) if w > 1e-8]


def _group_var_se(gs: _GroupSums, s2e: float, s2u: float, dof: int) -> float | None:
    if s2u <= 0:
        return None
    h = np.array([s2e, s2u]) * 1e-4
    x0 = np.array([s2e, s2u])

    def f(x):
        return _full_loglik(gs, x[0], x[1], dof)

    H = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            ei = np.eye(2)[i] * h[i]
            ej = np.eye(2)[j] * h[j]
            H[i, j] = (f(x0 + ei + ej) - f(x0 + ei - ej) - f(x0 - ei + ej) + f(x0 - ei - ej)) / (4 * h[i] * h[j])
    try:
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        return None
    v = cov[1, 1]
    return float(math.sqrt(v)) if v > 0 and math.isfinite(v) else None


def lmm_fit_arrays(y, X, group: Sequence[str], names: Sequence[str] | None = None) -> LmmFit:
    """REML fit for an explicit design matrix."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(y) or len(group) != len(y):
        raise LmmError("y, X and group disagree in length")
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    n, p = X.shape
    labels = sorted(set(str(g) for g in group))
    if len(labels) < 2:
        raise LmmError("single group: the random intercept is not identifiable")
    if np.linalg.matrix_rank(X) < p:
        raise LmmError("rank-deficient design; collinear terms: " + ", ".join(_collinear_terms(X, names)))
    dof = n - p
    if dof <= 0:
        raise LmmError(f"need more observations ({n}) than fixed effects ({p})")

    gs = _GroupSums(y, X, [str(g) for g in group])

    def ll_t(t: float) -> float:
        return _profile_loglik(gs, 10.0 ** t, dof)

    lo, hi = LOG10_LAMBDA_BOUNDS
    grid = np.linspace(lo, hi, GRID_POINTS)
    vals = [ll_t(t) for t in grid]
    k = int(np.argmax(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    t_best, ll_best = _golden_max(ll_t, a, b)
    if vals[k] > ll_best:
        t_best, ll_best = grid[k], vals[k]
    # The likelihood is flat at its top, so golden section pins lambda only to
    # about sqrt(eps); the score's sign change pins it to rounding level.
    t_pol = _polish(gs, t_best, dof)
    ll_pol = ll_t(t_pol)
    if ll_pol >= ll_best - 1e-9 * abs(ll_best):
        t_best, ll_best = t_pol, ll_pol
    lam = 10.0 ** t_best

    ll_zero = _profile_loglik(gs, 0.0, dof)
    boundary = False
    if ll_zero >= ll_best:
        lam, ll_best, boundary = 0.0, ll_zero, True

    beta, q, _, A, _ = gs.solve(lam)
    s2e = q / dof
    cov = np.linalg.inv(A) * s2e
    se = np.sqrt(np.diag(cov))
    z = beta / se
    pv = np.array([two_sided_normal_p(float(v)) for v in z])
    ci = np.column_stack([beta - Z95 * se, beta + Z95 * se])
    s2u = lam * s2e
    return LmmFit(
        terms=names, beta=beta, se=se, z=z, p=pv, ci95=ci,
        sigma2_u=float(s2u), sigma2_e=float(s2e), lam=float(lam), reml_loglik=float(ll_best),
        sigma2_u_se=_group_var_se(gs, s2e, s2u, dof), boundary=boundary,
        n_obs=n, n_groups=len(labels),
        group_sizes={g: int(c) for g, c in zip(gs.labels, gs.n)},
    )


def lmm_fit(data: LabeledDataset) -> LmmFit:
    """Fixed effect: stress kind (baseline as reference). Random intercept: NF."""
    X, names = data.design()
    return lmm_fit_arrays(data.y, X, data.group, names)


def reml_loglik(y, X, group: Sequence[str], lam: float) -> float:
    """Profiled restricted log-likelihood at a given variance ratio."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    gs = _GroupSums(y, X, [str(g) for g in group])
    return _profile_loglik(gs, float(lam), len(y) - X.shape[1])
