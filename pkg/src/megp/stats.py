"""Nonparametric comparison of model families across repeated runs.

Implements the Friedman rank test with tie correction, Conover's post-hoc
pairwise test, Bonferroni and Benjamini-Hochberg corrections, Cliff's delta
dominance effect size with percentile bootstrap confidence intervals, and
the win/tie/loss verdict rule combining them. Only the chi-square and
Student-t tail probabilities come from scipy; every statistic is computed
here.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2, rankdata, t as t_dist

from .errors import ContractError
from .rng import GpRng

ALPHA = 0.05
DELTA_SMALL = 0.147
DELTA_MEDIUM = 0.33
DELTA_LARGE = 0.474


@dataclass
class ScoreTable:
    """R runs (rows) by M models (columns) of one metric's scores."""

    values: np.ndarray
    models: tuple
    higher_is_better: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] < 2 or self.values.shape[1] < 2:
            raise ContractError("score table needs >= 2 runs and >= 2 models")
        if not np.isfinite(self.values).all():
            raise ContractError("score table entries must be finite")
        if len(self.models) != self.values.shape[1]:
            raise ContractError("one model name per column required")


def _row_ranks(values: np.ndarray) -> np.ndarray:
    return np.vstack([rankdata(row, method="average") for row in values])


EXACT_PERMUTATION_CAP = 400_000  # covers every R, M <= 4 table


def _friedman_statistic(ranks: np.ndarray, correction: float) -> float:
    r, m = ranks.shape
    mean_ranks = ranks.mean(axis=0)
    stat = 12.0 * r / (m * (m + 1)) * ((mean_ranks - (m + 1) / 2.0) ** 2).sum()
    return float(stat / correction)


def _exact_friedman_p(ranks: np.ndarray, correction: float,
                      observed: float) -> float:
    # tail of the within-row permutation distribution; permuting a row's
    # values permutes its rank vector, and the tie correction is invariant
    r, m = ranks.shape
    perms = list(itertools.permutations(range(m)))
    sums = np.array([ranks[0][list(p)] for p in perms])
    for i in range(1, r):
        row = np.array([ranks[i][list(p)] for p in perms])
        sums = (sums[:, None, :] + row[None, :, :]).reshape(-1, m)
    mean_ranks = sums / r
    stats = (12.0 * r / (m * (m + 1))
             * ((mean_ranks - (m + 1) / 2.0) ** 2).sum(axis=1)) / correction
    return float((stats >= observed - 1e-12).mean())


def friedman_test(table: ScoreTable) -> tuple[float, float]:
    """Friedman rank statistic (tie-corrected) and its p-value.

    Within-row average ranks feed chi2_F = 12R/(M(M+1)) * sum_j
    (rbar_j - (M+1)/2)^2, divided by the standard tie correction
    1 - sum(t^3 - t) / (R M (M^2 - 1)). Fully tied tables yield (0, 1).
    Small tables (every within-row permutation enumerable) use the exact
    permutation tail of the statistic; larger ones use the chi-square
    approximation with M - 1 degrees of freedom.
    """
    values = table.values
    r, m = values.shape
    ranks = _row_ranks(values)
    tie_sum = 0.0
    for row in values:
        _, counts = np.unique(row, return_counts=True)
        tie_sum += (counts.astype(float) ** 3 - counts).sum()
    correction = 1.0 - tie_sum / (r * m * (m * m - 1))
    if correction <= 0.0:
        return 0.0, 1.0
    stat = _friedman_statistic(ranks, correction)
    if math.factorial(m) ** r <= EXACT_PERMUTATION_CAP:
        return stat, _exact_friedman_p(ranks, correction, stat)
    return stat, float(chi2.sf(stat, m - 1))


def conover_posthoc(table: ScoreTable) -> np.ndarray:
    """Symmetric matrix of Conover pairwise p-values after a Friedman test.

    Uses rank-sum differences on the Student-t distribution with
    (R-1)(M-1) degrees of freedom; rank-degenerate tables give p = 1.
    """
    values = table.values
    r, m = values.shape
    ranks = _row_ranks(values)
    rank_sums = ranks.sum(axis=0)
    a1 = float((ranks ** 2).sum())
    c1 = r * m * (m + 1) ** 2 / 4.0
    p = np.ones((m, m))
    if a1 - c1 <= 0.0:
        return p
    t2 = (m - 1) * ((rank_sums - r * (m + 1) / 2.0) ** 2).sum() / (a1 - c1)
    df = (r - 1) * (m - 1)
    spread = 1.0 - t2 / (r * (m - 1))
    denom_sq = 2.0 * r * (a1 - c1) * spread / df
    for i in range(m):
        for j in range(i + 1, m):
            diff = abs(rank_sums[i] - rank_sums[j])
            if denom_sq <= 0.0:
                pij = 1.0 if diff == 0.0 else 0.0
            else:
                stat = diff / np.sqrt(denom_sq)
                pij = min(1.0, 2.0 * float(t_dist.sf(stat, df)))
            p[i, j] = p[j, i] = pij
    return p


def bonferroni(pvals, m: int) -> list[float]:
    """Family-wise correction: p -> min(1, p * m)."""
    return [min(1.0, float(p) * m) for p in pvals]


def benjamini_hochberg(pvals) -> list[float]:
    """Step-up false-discovery-rate adjustment, returned in input order."""
    p = np.asarray(pvals, dtype=float)
    m = p.size
    order = np.argsort(p, kind="stable")
    adjusted = np.empty(m)
    running = 1.0
    for pos in range(m - 1, -1, -1):
        idx = order[pos]
        running = min(running, p[idx] * m / (pos + 1))
        # division can round an ulp below the raw value at the top rank
        adjusted[idx] = max(min(1.0, running), p[idx])
    return adjusted.tolist()


def cliffs_delta(x, y) -> float:
    """Dominance of sample x over sample y in [-1, 1].

    Computed from average ranks of the merged samples (O((m+n) log(m+n))),
    identical to the pairwise definition
    (#{x_i > y_j} - #{x_i < y_j}) / (m n).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise ContractError("both samples must be non-empty")
    merged = np.concatenate([x, y])
    ranks = rankdata(merged, method="average")
    # U = #{x>y} + 0.5 #{x=y}; delta = (2U - mn)/(mn), one division so that
    # swapping the samples negates the result bit-exactly
    u = ranks[:x.size].sum() - x.size * (x.size + 1) / 2.0
    mn = x.size * y.size
    return float((2.0 * u - mn) / mn)


def effect_label(delta: float) -> str:
    """Magnitude label for |delta| at the conventional thresholds."""
    mag = abs(delta)
    if mag < DELTA_SMALL:
        return "negligible"
    if mag < DELTA_MEDIUM:
        return "small"
    if mag < DELTA_LARGE:
        return "medium"
    return "large"


def bootstrap_delta_ci(x, y, n_boot: int = 10000, confidence: float = 0.95,
                       rng: GpRng | None = None) -> tuple[float, float]:
    """Percentile bootstrap interval for Cliff's delta.

    x and y are resampled independently with replacement (runs are unpaired
    across model families).
    """
    if n_boot < 1:
        raise ContractError("n_boot must be >= 1")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(0))
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    deltas = np.empty(n_boot)
    for i in range(n_boot):
        bx = x[rng.integers(x.size, size=x.size)]
        by = y[rng.integers(y.size, size=y.size)]
        deltas[i] = cliffs_delta(bx, by)
    tail = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(deltas, [tail, 1.0 - tail])
    return float(lo), float(hi)


def classify_comparison(p_friedman: float, p_conover: float, delta: float,
                        alpha: float = ALPHA) -> str:
    """Win/tie/loss rule: significance on both tests plus delta's sign.

    delta must already be oriented so that positive means the candidate
    model beats the baseline.
    """
    if p_friedman >= alpha or p_conover >= alpha:
        return "tie"
    if delta > 0:
        return "win"
    if delta < 0:
        return "loss"
    return "tie"


def win_tie_loss(verdicts: dict) -> dict:
    """Aggregate {dataset: {model: verdict}} into per-model (W, T, L) counts."""
    counts: dict = {}
    for per_model in verdicts.values():
        for model, verdict in per_model.items():
            w, t, l = counts.get(model, (0, 0, 0))
            if verdict == "win":
                w += 1
            elif verdict == "loss":
                l += 1
            else:
                t += 1
            counts[model] = (w, t, l)
    return counts


@dataclass
class PairwiseComparison:
    """One MEGP-variant-vs-baseline comparison for a single metric."""

    model: str
    delta: float
    ci_lo: float
    ci_hi: float
    label: str
    p_conover_adj: float
    verdict: str


@dataclass
class ComparisonVerdict:
    """Full statistical comparison of a metric's score table."""

    metric: str
    friedman_stat: float
    friedman_p: float
    friedman_p_adj: float
    conover_p_adj: np.ndarray
    pairwise: list = field(default_factory=list)


def compare_models(table: ScoreTable, metric: str, baseline: str,
                   bonferroni_m: int = 1, n_boot: int = 10000,
                   confidence: float = 0.95,
                   rng: GpRng | None = None) -> ComparisonVerdict:
    """Run the full pipeline for one metric against a baseline model.

    Deltas are orientation-normalized so positive always means the
    candidate beats the baseline; Conover p-values are BH-adjusted over the
    pairwise family, the Friedman p Bonferroni-adjusted with multiplier
    ``bonferroni_m``.
    """
    if baseline not in table.models:
        raise ContractError(f"baseline {baseline!r} missing from table")
    stat, p_fr = friedman_test(table)
    p_fr_adj = bonferroni([p_fr], bonferroni_m)[0]
    raw = conover_posthoc(table)
    m = len(table.models)
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    flat_adj = benjamini_hochberg([raw[i, j] for i, j in pairs])
    adj = np.ones((m, m))
    for (i, j), val in zip(pairs, flat_adj):
        adj[i, j] = adj[j, i] = val
    base_idx = table.models.index(baseline)
    base_scores = table.values[:, base_idx]
    result = ComparisonVerdict(metric=metric, friedman_stat=stat,
                               friedman_p=p_fr, friedman_p_adj=p_fr_adj,
                               conover_p_adj=adj)
    for idx, model in enumerate(table.models):
        if idx == base_idx:
            continue
        scores = table.values[:, idx]
        if table.higher_is_better:
            delta = cliffs_delta(scores, base_scores)
            lo, hi = bootstrap_delta_ci(scores, base_scores, n_boot, confidence, rng)
        else:
            delta = cliffs_delta(base_scores, scores)
            lo, hi = bootstrap_delta_ci(base_scores, scores, n_boot, confidence, rng)
        verdict = classify_comparison(p_fr_adj, adj[idx, base_idx], delta)
        result.pairwise.append(PairwiseComparison(
            model=model, delta=delta, ci_lo=lo, ci_hi=hi,
            label=effect_label(delta), p_conover_adj=float(adj[idx, base_idx]),
            verdict=verdict))
    return result
