"""Softmax weighting layer over gene outputs and its gradient trainer.

Gene outputs are combined per class through a weight matrix and bias,
passed through a numerically stabilized softmax, and scored by mean
cross-entropy (the isolated fitness, lower is better). The objective is
convex in the parameters for fixed gene outputs, so plain minibatch
gradient descent from a zero start suffices.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .rng import GpRng

PROB_CLIP = 1e-15       # floor inside the cross-entropy logarithm
EARLY_EXIT_TOL = 1e-8   # full-data loss improvement below this counts as a stall
EARLY_EXIT_PATIENCE = 20


@dataclass
class HeadParams:
    """Per-class gene weights (K x C) and class biases (length C)."""

    W: np.ndarray
    b: np.ndarray

    def copy(self) -> "HeadParams":
        return HeadParams(self.W.copy(), self.b.copy())


def logits(G: np.ndarray, params: HeadParams) -> np.ndarray:
    """Affine map of gene outputs to class scores: Z = G W + b."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or params.W.ndim != 2 or G.shape[1] != params.W.shape[0]:
        raise ContractError("gene matrix and weight shapes do not conform")
    if params.b.shape != (params.W.shape[1],):
        raise ContractError("bias length must equal the class count")
    return G @ params.W + params.b


def softmax_probs(Z: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-shift stabilization; rows sum to 1."""
    Z = np.asarray(Z, dtype=float)
    shifted = Z - Z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def isolated_fitness(Pr: np.ndarray, Y: np.ndarray) -> float:
    """Mean cross-entropy of predicted probabilities against one-hot labels."""
    Pr = np.asarray(Pr, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Pr.shape != Y.shape:
        raise ContractError("probability and label shapes do not conform")
    if Pr.shape[0] == 0:
        raise ContractError("fitness is undefined for zero instances")
    return float(-(Y * np.log(np.maximum(Pr, PROB_CLIP))).sum() / Pr.shape[0])


def head_gradients(G: np.ndarray, params: HeadParams,
                   Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of the mean cross-entropy w.r.t. W and b."""
    G = np.asarray(G, dtype=float)
    Y = np.asarray(Y, dtype=float)
    delta = (softmax_probs(logits(G, params)) - Y) / G.shape[0]
    return G.T @ delta, delta.sum(axis=0)


def train_head(G: np.ndarray, Y: np.ndarray, epochs: int, batch_size: int,
               lr: float, rng: GpRng) -> tuple[HeadParams, float]:
    """Minibatch gradient descent from zero parameters.

    Minibatches are reshuffled every epoch. Training stops early once the
    full-data loss has improved by less than EARLY_EXIT_TOL for
    EARLY_EXIT_PATIENCE consecutive epochs, and aborts to the last finite
    parameters if the loss ever turns non-finite. Returns the final
    parameters and their full-data fitness.
    """
    G = np.asarray(G, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if batch_size < 1:
        raise ContractError("batch_size must be >= 1")
    n, k = G.shape
    c = Y.shape[1]
    W = np.zeros((k, c))
    b = np.zeros(c)

    def full_loss():
        Z = G @ W + b
        Z -= Z.max(axis=1, keepdims=True)
        np.exp(Z, out=Z)
        Z /= Z.sum(axis=1, keepdims=True)
        return float(-(Y * np.log(np.maximum(Z, PROB_CLIP))).sum() / n)

    loss = full_loss()
    best_loss = loss
    stall = 0
    for _ in range(epochs):
        prev_W, prev_b, prev_loss = W.copy(), b.copy(), loss
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            rows = order[start:start + batch_size]
            Gb = G[rows]
            Z = Gb @ W + b
            Z -= Z.max(axis=1, keepdims=True)
            np.exp(Z, out=Z)
            Z /= Z.sum(axis=1, keepdims=True)
            Z -= Y[rows]
            Z /= rows.shape[0]
            W -= lr * (Gb.T @ Z)
            b -= lr * Z.sum(axis=0)
        loss = full_loss()
        if not np.isfinite(loss):
            return HeadParams(prev_W, prev_b), prev_loss
        if best_loss - loss < EARLY_EXIT_TOL:
            stall += 1
            if stall >= EARLY_EXIT_PATIENCE:
                break
        else:
            stall = 0
        best_loss = min(best_loss, loss)
    return HeadParams(W, b), loss
