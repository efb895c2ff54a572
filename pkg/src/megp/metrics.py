"""Convergence and generalization metrics.

Convergence metrics read a best-so-far fitness trajectory (one value per
generation, running minimum) and a per-generation crossover event log of
(mean parent fitness, offspring fitness) pairs. Generalization metrics
score predicted class probabilities against one-hot labels.
"""

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError
from .head import isolated_fitness

CCR_EPS = 1e-12
DEFAULT_ENTROPY_BINS = 30


def interval_ft(series: Sequence[float], lo: int, hi: int) -> float:
    """Mean best-so-far fitness over generations lo..hi inclusive."""
    if not 0 <= lo <= hi < len(series):
        raise ContractError(f"interval [{lo}, {hi}] outside trajectory of "
                            f"length {len(series)}")
    return float(np.mean(np.asarray(series, dtype=float)[lo:hi + 1]))


def convergence_rate(series: Sequence[float], lo: int, hi: int) -> float:
    """Average per-generation improvement of best-so-far fitness."""
    if hi <= lo:
        raise ContractError("convergence rate needs hi > lo")
    if hi >= len(series):
        raise ContractError(f"generation {hi} outside trajectory")
    return float((series[lo] - series[hi]) / (hi - lo))


class CcrResult(NamedTuple):
    value: float
    n_events: int

    @property
    def insufficient(self) -> bool:
        return self.n_events == 0


def crossover_convergence_rate(log: Sequence[Sequence[tuple]],
                               lo: int, hi: int) -> CcrResult:
    """Mean relative fitness improvement of crossover offspring.

    Each event contributes max(0, mean_parent - offspring) / mean_parent;
    intervals without events yield value 0 with the insufficient flag set.
    """
    values = []
    for gen in range(lo, min(hi, len(log) - 1) + 1):
        for parent_mean, offspring in log[gen]:
            gain = max(0.0, parent_mean - offspring)
            values.append(gain / max(parent_mean, CCR_EPS))
    if not values:
        return CcrResult(0.0, 0)
    return CcrResult(float(np.mean(values)), len(values))


def population_entropy(fitnesses: Sequence[float],
                       n_bins: int = DEFAULT_ENTROPY_BINS) -> float:
    """Shannon entropy (nats) of the fitness histogram over equal-width bins."""
    if len(fitnesses) == 0:
        raise ContractError("entropy needs at least one fitness value")
    if n_bins < 1:
        raise ContractError("n_bins must be >= 1")
    values = np.asarray(fitnesses, dtype=float)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return 0.0
    counts, _ = np.histogram(values, bins=n_bins, range=(lo, hi))
    p = counts[counts > 0] / values.size
    return float(-(p * np.log(p)).sum())


@dataclass
class ClassificationMetrics:
    log_loss: float
    precision: float
    recall: float
    f1: float
    auc: float
    excluded_classes: tuple = ()

    def as_dict(self) -> dict:
        return {"log_loss": self.log_loss, "precision": self.precision,
                "recall": self.recall, "f1": self.f1, "auc": self.auc}


def _binary_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    # Mann-Whitney formulation; tied scores contribute 0.5 via average ranks
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    ranks = rankdata(scores, method="average")
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def classification_metrics(Pr: np.ndarray, Y: np.ndarray) -> ClassificationMetrics:
    """Log-loss plus macro one-vs-rest precision, recall, F1 and AUC.

    Predicted class is the row argmax (ties to the lowest class index);
    0/0 ratios map to 0; classes absent from Y are excluded from the macro
    averages and reported in ``excluded_classes``.
    """
    Pr = np.asarray(Pr, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Pr.shape != Y.shape:
        raise ContractError("probability and label shapes do not conform")
    n, c = Pr.shape
    loss = isolated_fitness(Pr, Y)
    predicted = Pr.argmax(axis=1)
    actual = Y.argmax(axis=1)

    precisions, recalls, f1s, aucs, excluded = [], [], [], [], []
    for cls in range(c):
        pos = actual == cls
        n_pos = int(pos.sum())
        if n_pos == 0 or n_pos == n:
            excluded.append(cls)
            continue
        pred_pos = predicted == cls
        tp = int((pred_pos & pos).sum())
        fp = int((pred_pos & ~pos).sum())
        fn = int((~pred_pos & pos).sum())
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        precisions.append(prec)
        recalls.append(rec)
        f1s.append(f1)
        aucs.append(_binary_auc(Pr[:, cls], pos))
    if not precisions:
        raise ContractError("no class with both positive and negative instances")
    return ClassificationMetrics(
        log_loss=loss,
        precision=float(np.mean(precisions)),
        recall=float(np.mean(recalls)),
        f1=float(np.mean(f1s)),
        auc=float(np.mean(aucs)),
        excluded_classes=tuple(excluded),
    )
