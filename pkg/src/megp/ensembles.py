"""Cross-population linear mixing of member probabilities.

Member probability matrices are combined with nonnegative per-population,
per-class weights, renormalized row-wise, scored by mean squared error for
weight fitting and by mean cross-entropy for the ensemble fitness. Each
class's weights act as mixing proportions across populations (columns are
normalized before mixing), which keeps a single member, or identical
members, exactly equivalent to the lone member regardless of scale.
Weight fitting is derivative-free (COBYLA) from a uniform start, with the
best feasible point seen returned, so the fitted error never exceeds the
starting error.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import ContractError
from .head import PROB_CLIP, isolated_fitness


@dataclass
class EnsembleWeights:
    """Nonnegative P x C mixing weights."""

    w: np.ndarray


@dataclass
class EnsembleCandidate:
    """One member index per population, its weights, and the ensemble fitness."""

    members: tuple
    weights: EnsembleWeights
    ft_en: float
    member_ranks: tuple = ()


def _check_members(member_probs) -> tuple[int, int]:
    if not member_probs:
        raise ContractError("at least one member probability matrix required")
    n, c = member_probs[0].shape
    for m in member_probs:
        if m.shape != (n, c):
            raise ContractError("member probability matrices must share shapes")
    return n, c


def effective_weights(w: np.ndarray) -> np.ndarray:
    """Columns scaled to sum to one (zero columns fall back to uniform)."""
    w = np.asarray(w, dtype=float)
    sums = w.sum(axis=0, keepdims=True)
    safe = np.where(sums > 0.0, sums, 1.0)
    out = w / safe
    out[:, sums[0] <= 0.0] = 1.0 / w.shape[0]
    return out


def ensemble_probs(member_probs: list, w: EnsembleWeights) -> np.ndarray:
    """Weighted mixture of member probabilities, renormalized per row."""
    n, c = _check_members(member_probs)
    if w.w.shape != (len(member_probs), c):
        raise ContractError("weight matrix must be P x C")
    weights = effective_weights(w.w)
    mixed = np.zeros((n, c))
    for p, probs in enumerate(member_probs):
        mixed += weights[p] * probs
    mixed = np.maximum(mixed, PROB_CLIP)
    return mixed / mixed.sum(axis=1, keepdims=True)


def ensemble_mse(member_probs: list, w: EnsembleWeights, Y: np.ndarray) -> float:
    """Mean over instances of the squared class-probability error."""
    Y = np.asarray(Y, dtype=float)
    n, _ = _check_members(member_probs)
    if n == 0:
        raise ContractError("MSE is undefined for zero instances")
    if Y.shape != member_probs[0].shape:
        raise ContractError("label matrix shape must match member matrices")
    diff = Y - ensemble_probs(member_probs, w)
    return float((diff * diff).sum() / n)


def ensemble_fitness(member_probs: list, w: EnsembleWeights, Y: np.ndarray) -> float:
    """Mean cross-entropy of the mixed probabilities (lower is better)."""
    return isolated_fitness(ensemble_probs(member_probs, w), np.asarray(Y, dtype=float))


def default_weight_budget(n_populations: int, n_classes: int) -> int:
    return 200 * n_populations * n_classes


def optimize_ensemble_weights(member_probs: list, Y: np.ndarray,
                              max_evals: int | None = None) -> EnsembleWeights:
    """Fit nonnegative mixing weights by derivative-free MSE minimization.

    Starts from the uniform 1/P point and returns the best feasible point
    evaluated (the start included), so the result's MSE never exceeds the
    uniform mixture's. Deterministic given inputs.
    """
    Y = np.asarray(Y, dtype=float)
    n_pop, n_classes = len(member_probs), member_probs[0].shape[1]
    start = np.full((n_pop, n_classes), 1.0 / n_pop)
    if n_pop == 1:
        return EnsembleWeights(start)  # any scale mixes to the lone member
    if max_evals is None:
        max_evals = default_weight_budget(n_pop, n_classes)
    best = {"w": start, "mse": ensemble_mse(member_probs, EnsembleWeights(start), Y)}

    def objective(flat):
        w = np.maximum(flat.reshape(n_pop, n_classes), 0.0)
        mse = ensemble_mse(member_probs, EnsembleWeights(w), Y)
        if mse < best["mse"]:
            best["w"], best["mse"] = w, mse
        return mse

    minimize(objective, start.ravel(), method="COBYLA",
             constraints=[{"type": "ineq", "fun": lambda flat: flat}],
             options={"maxiter": int(max_evals), "rhobeg": 0.25})
    return EnsembleWeights(effective_weights(best["w"]))
