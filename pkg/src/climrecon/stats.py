"""Rank-based comparison of per-sample metric distributions.

Omnibus Kruskal-Wallis (tie-corrected, chi-square p), Dunn's pairwise z
tests with Holm-Bonferroni adjustment, and two effect sizes: rank eta
squared for the omnibus test,

    eta2 = (H - k + 1) / (k * n - k)        (equal group sizes n),

and the rank-biserial correlation for pairs,

    r = 2 * (R1_mean - R2_mean) / (n1 + n2)

with the two groups ranked jointly. Special functions come from
scipy.special (regularized upper incomplete gamma for the chi-square tail,
complementary error function for the normal tail), which are accurate far
below the 1e-10 target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import erfc, gammaincc


class UnequalGroupsError(ValueError):
    """Rank eta squared assumes equal group sizes; refuse to guess otherwise."""


@dataclass(frozen=True)
class MetricSamples:
    """Per-method vectors of one metric across the evaluation samples."""

    labels: tuple[str, ...]
    groups: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.groups):
            raise ValueError("labels and groups must align")
        if len(self.groups) < 2:
            raise ValueError("need at least two groups")
        groups = tuple(np.asarray(g, dtype=np.float64) for g in self.groups)
        for g in groups:
            if g.ndim != 1 or g.size < 1:
                raise ValueError("each group must be a non-empty 1-D vector")
            if not np.all(np.isfinite(g)):
                raise ValueError("group values must be finite")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "labels", tuple(self.labels))


@dataclass(frozen=True)
class OmnibusResult:
    h: float
    p_value: float
    eta_squared: float | None  # None when group sizes differ


@dataclass(frozen=True)
class PairResult:
    label_a: str
    label_b: str
    z: float
    p_raw: float
    p_adjusted: float
    rank_biserial: float


def _joint_ranks(groups: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Average ranks (1-based, midranks for ties) of each group within the
    pooled sample."""
    pooled = np.concatenate(groups)
    order = np.argsort(pooled, kind="mergesort")
    ranks = np.empty(pooled.size, dtype=np.float64)
    sorted_vals = pooled[order]
    i = 0
    while i < pooled.size:
        j = i
        while j + 1 < pooled.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    out = []
    start = 0
    for g in groups:
        out.append(ranks[start:start + g.size])
        start += g.size
    return out


def _tie_counts(groups: Sequence[np.ndarray]) -> np.ndarray:
    pooled = np.sort(np.concatenate(groups))
    _, counts = np.unique(pooled, return_counts=True)
    return counts


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution via the regularized upper
    incomplete gamma function."""
    if x <= 0.0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def normal_sf_two_sided(z: float) -> float:
    return float(erfc(abs(z) / np.sqrt(2.0)))


def eta_squared_from_h(h: float, k: int, n_per_group: int) -> float:
    """Rank eta squared from the omnibus statistic, k groups of equal size."""
    return (h - k + 1.0) / (k * n_per_group - k)


def kruskal_wallis(ms: MetricSamples) -> OmnibusResult:
    """Tie-corrected Kruskal-Wallis H with chi-square p (k - 1 dof).

    eta_squared is filled only for equal group sizes; call
    ``eta_squared_from_h`` directly otherwise (it raises nothing, but the
    equal-size assumption is on the caller).
    """
    groups = ms.groups
    k = len(groups)
    n_total = sum(g.size for g in groups)
    if n_total < 3:
        raise ValueError("need at least three pooled observations")
    rank_groups = _joint_ranks(groups)
    h = 0.0
    for rg in rank_groups:
        h += rg.size * (rg.mean()) ** 2
    h = 12.0 / (n_total * (n_total + 1.0)) * h - 3.0 * (n_total + 1.0)
    ties = _tie_counts(groups)
    correction = 1.0 - float(np.sum(ties**3 - ties)) / (n_total**3 - n_total)
    if correction > 0.0:
        h /= correction
    p = chi2_sf(h, k - 1)
    sizes = {g.size for g in groups}
    eta2 = eta_squared_from_h(h, k, groups[0].size) if len(sizes) == 1 else None
    return OmnibusResult(h=float(h), p_value=p, eta_squared=eta2)


def eta_squared(ms: MetricSamples) -> float:
    """Strict variant: raises UnequalGroupsError when group sizes differ."""
    sizes = {g.size for g in ms.groups}
    if len(sizes) != 1:
        raise UnequalGroupsError(f"group sizes differ: {[g.size for g in ms.groups]}")
    return eta_squared_from_h(kruskal_wallis(ms).h, len(ms.groups), ms.groups[0].size)


def holm_bonferroni(p_raw: Sequence[float]) -> np.ndarray:
    """Step-down Holm adjustment: monotone, never below raw, capped at 1."""
    p = np.asarray(p_raw, dtype=np.float64)
    m = p.size
    order = np.argsort(p, kind="mergesort")
    adjusted = np.empty(m, dtype=np.float64)
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, (m - rank) * p[idx])
        adjusted[idx] = min(1.0, running)
    return adjusted


def rank_biserial(group1: np.ndarray, group2: np.ndarray) -> float:
    """Effect size from the mean joint ranks of exactly two groups."""
    g1 = np.asarray(group1, dtype=np.float64)
    g2 = np.asarray(group2, dtype=np.float64)
    r1, r2 = _joint_ranks([g1, g2])
    return 2.0 * (r1.mean() - r2.mean()) / (g1.size + g2.size)


def dunn_posthoc(ms: MetricSamples) -> list[PairResult]:
    """All pairwise Dunn z tests on joint ranks with tie correction and
    Holm-adjusted two-sided normal p-values."""
    groups = ms.groups
    labels = ms.labels
    n_total = sum(g.size for g in groups)
    rank_groups = _joint_ranks(groups)
    means = [rg.mean() for rg in rank_groups]
    ties = _tie_counts(groups)
    tie_term = float(np.sum(ties**3 - ties)) / (12.0 * (n_total - 1.0))
    base_var = n_total * (n_total + 1.0) / 12.0 - tie_term

    pairs: list[tuple[int, int]] = [
        (i, j) for i in range(len(groups)) for j in range(i + 1, len(groups))
    ]
    zs = []
    for i, j in pairs:
        se = np.sqrt(base_var * (1.0 / groups[i].size + 1.0 / groups[j].size))
        zs.append((means[i] - means[j]) / se if se > 0 else 0.0)
    p_raw = [normal_sf_two_sided(z) for z in zs]
    p_adj = holm_bonferroni(p_raw)
    out = []
    for (i, j), z, pr, pa in zip(pairs, zs, p_raw, p_adj):
        out.append(
            PairResult(
                label_a=labels[i],
                label_b=labels[j],
                z=float(z),
                p_raw=float(pr),
                p_adjusted=float(pa),
                rank_biserial=rank_biserial(groups[i], groups[j]),
            )
        )
    return out


@dataclass(frozen=True)
class MetricComparison:
    metric: str
    medians: dict[str, float]
    iqrs: dict[str, float]
    omnibus: OmnibusResult
    posthoc: list[PairResult] = field(default_factory=list)  # empty unless omnibus significant


@dataclass(frozen=True)
class ComparisonReport:
    alpha: float
    metrics: list[MetricComparison]

    def to_rows(self) -> list[dict]:
        """Flat rows (one per metric x pair) for CSV output."""
        rows = []
        for mc in self.metrics:
            if not mc.posthoc:
                rows.append(
                    {
                        "metric": mc.metric,
                        "pair": "",
                        "h": mc.omnibus.h,
                        "p_omnibus": mc.omnibus.p_value,
                        "eta_squared": _fmt_opt(mc.omnibus.eta_squared),
                        "z": "",
                        "p_raw": "",
                        "p_adjusted": "",
                        "rank_biserial": "",
                    }
                )
            for pr in mc.posthoc:
                rows.append(
                    {
                        "metric": mc.metric,
                        "pair": f"{pr.label_a} vs {pr.label_b}",
                        "h": mc.omnibus.h,
                        "p_omnibus": mc.omnibus.p_value,
                        "eta_squared": _fmt_opt(mc.omnibus.eta_squared),
                        "z": pr.z,
                        "p_raw": pr.p_raw,
                        "p_adjusted": pr.p_adjusted,
                        "rank_biserial": pr.rank_biserial,
                    }
                )
        return rows

    def to_text(self) -> str:
        lines = [f"Method comparison (alpha = {self.alpha})", ""]
        for mc in self.metrics:
            med = ", ".join(
                f"{label}: {mc.medians[label]:.4g} +- {mc.iqrs[label]:.4g}" for label in mc.medians
            )
            lines.append(f"[{mc.metric}] median +- IQR:  {med}")
            e2 = "n/a" if mc.omnibus.eta_squared is None else f"{mc.omnibus.eta_squared:.4g}"
            lines.append(
                f"  omnibus H = {mc.omnibus.h:.6g}, p = {mc.omnibus.p_value:.6g}, eta2 = {e2}"
            )
            if mc.posthoc:
                for pr in mc.posthoc:
                    lines.append(
                        f"  {pr.label_a} vs {pr.label_b}: z = {pr.z:.4g}, "
                        f"p = {pr.p_raw:.4g}, p_holm = {pr.p_adjusted:.4g}, r = {pr.rank_biserial:.4g}"
                    )
            else:
                lines.append("  no significant differences; post hoc skipped")
            lines.append("")
        return "\n".join(lines)


def _fmt_opt(v: float | None):
    return "" if v is None else v


def _median_iqr(x: np.ndarray) -> tuple[float, float]:
    # linear-interpolation quantile convention
    q25, q50, q75 = np.percentile(x, [25.0, 50.0, 75.0])
    return float(q50), float(q75 - q25)


def compare_methods(
    samples_by_metric: dict[str, MetricSamples],
    alpha: float = 0.05,
) -> ComparisonReport:
    """Omnibus test per metric; post-hoc pairs only where the omnibus p is
    below alpha."""
    comparisons = []
    for metric, ms in samples_by_metric.items():
        if any(g.size < 3 for g in ms.groups):
            raise ValueError(f"{metric}: need at least three samples per method")
        medians = {}
        iqrs = {}
        for label, g in zip(ms.labels, ms.groups):
            medians[label], iqrs[label] = _median_iqr(g)
        omnibus = kruskal_wallis(ms)
        posthoc = dunn_posthoc(ms) if omnibus.p_value < alpha else []
        comparisons.append(
            MetricComparison(metric=metric, medians=medians, iqrs=iqrs, omnibus=omnibus, posthoc=posthoc)
        )
    return ComparisonReport(alpha=alpha, metrics=comparisons)
