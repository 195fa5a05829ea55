"""Nonparametric comparison of grouped accuracies.

Kruskal-Wallis omnibus (tie-corrected, chi-square approximation) and Dunn's
pairwise z tests with Holm-Sidak step-down adjustment. Ranks use average
ranks for ties throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import gammaincc, ndtr
from scipy.stats import rankdata

from .errors import ValidationError

SIGNIFICANCE_LEVELS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))


def significance_stars(p: float) -> str:
    for level, stars in SIGNIFICANCE_LEVELS:
        if p < level:
            return stars
    return ""


@dataclass
class PairResult:
    group_a: str
    group_b: str
    z: float
    p_raw: float
    p_adjusted: float
    significant: bool


@dataclass
class TestReport:
    h: float
    p_omnibus: float
    group_names: list[str]
    group_sizes: list[int]
    pairwise: list[PairResult] = field(default_factory=list)
    chi2_ok: bool = True  # total N >= 5, else the approximation is dubious


def _validate_groups(groups):
    groups = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(groups) < 2:
        raise ValidationError("need at least two groups")
    if any(g.size == 0 for g in groups):
        raise ValidationError("every group must be nonempty")
    return groups


def _joint_ranks(groups):
    """Average ranks over the pooled sample, plus tie sizes."""
    pooled = np.concatenate(groups)
    ranks = rankdata(pooled, method="average")
    _, counts = np.unique(pooled, return_counts=True)
    ties = counts[counts > 1]
    split = np.cumsum([g.size for g in groups])[:-1]
    return np.split(ranks, split), ties, pooled.size


def kruskal_wallis(groups) -> tuple[float, float]:
    """Tie-corrected H and its chi-square p-value (k-1 degrees of freedom)."""
    groups = _validate_groups(groups)
    group_ranks, ties, n = _joint_ranks(groups)
    mean_rank = (n + 1) / 2.0
    h = 12.0 / (n * (n + 1)) * sum(
        r.size * (r.mean() - mean_rank) ** 2 for r in group_ranks
    )
    correction = 1.0 - (ties**3 - ties).sum() / (n**3 - n)
    if correction <= 0.0:
        # every observation identical: no evidence of any difference
        return 0.0, 1.0
    h /= correction
    df = len(groups) - 1
    # chi-square survival function is the regularized incomplete gamma
    p = float(gammaincc(df / 2.0, h / 2.0))
    return float(h), p


def dunn_holm_sidak(groups, names=None, alpha: float = 0.05) -> list[PairResult]:
    """All pairwise Dunn z tests with Holm-Sidak adjusted two-sided p-values."""
    groups = _validate_groups(groups)
    if names is None:
        names = [f"group{i}" for i in range(len(groups))]
    if len(names) != len(groups):
        raise ValidationError("names must match the number of groups")
    group_ranks, ties, n = _joint_ranks(groups)
    sigma2 = n * (n + 1) / 12.0 - (ties**3 - ties).sum() / (12.0 * (n - 1))

    pairs = []
    for i, j in combinations(range(len(groups)), 2):
        diff = group_ranks[i].mean() - group_ranks[j].mean()
        scale = sigma2 * (1.0 / group_ranks[i].size + 1.0 / group_ranks[j].size)
        if diff == 0.0 or scale <= 0.0:
            z = 0.0
        else:
            z = diff / np.sqrt(scale)
        p_raw = float(2.0 * (1.0 - ndtr(abs(z))))
        pairs.append([names[i], names[j], float(z), min(p_raw, 1.0)])

    order = np.argsort([p[3] for p in pairs], kind="stable")
    m = len(pairs)
    adjusted = np.empty(m)
    running = 0.0
    for rank, idx in enumerate(order):
        adj = 1.0 - (1.0 - pairs[idx][3]) ** (m - rank)
        running = max(running, min(adj, 1.0))
        adjusted[idx] = running

    return [
        PairResult(a, b, z, p_raw, float(adj), bool(adj < alpha))
        for (a, b, z, p_raw), adj in zip(pairs, adjusted)
    ]


def analyze(groups, names=None, alpha: float = 0.05) -> TestReport:
    """Omnibus plus post-hoc in one report."""
    groups = _validate_groups(groups)
    if names is None:
        names = [f"group{i}" for i in range(len(groups))]
    h, p = kruskal_wallis(groups)
    report = TestReport(
        h=h,
        p_omnibus=p,
        group_names=list(names),
        group_sizes=[g.size for g in groups],
        chi2_ok=sum(g.size for g in groups) >= 5,
    )
    report.pairwise = dunn_holm_sidak(groups, names, alpha)
    return report


def format_report(report: TestReport, title: str = "Kruskal-Wallis comparison") -> str:
    lines = [
        title,
        "=" * len(title),
        f"groups: {', '.join(f'{n} (n={s})' for n, s in zip(report.group_names, report.group_sizes))}",
        f"omnibus H = {report.h:.4f}, p = {report.p_omnibus:.4g}"
        + ("" if report.chi2_ok else "  [N < 5: chi-square approximation unreliable]"),
        "",
        "pairwise (Dunn, Holm-Sidak adjusted):",
    ]
    for pair in report.pairwise:
        stars = significance_stars(pair.p_adjusted)
        lines.append(
            f"  {pair.group_a} vs {pair.group_b}: z = {pair.z:+.4f}, "
            f"raw p = {pair.p_raw:.4g}, adj p = {pair.p_adjusted:.4g} {stars}".rstrip()
        )
    lines.append("")
    lines.append("stars: * p<0.05, ** p<0.01, *** p<0.001 (adjusted)")
    return "\n".join(lines)
