"""Focal binary cross-entropy over K one-vs-rest sigmoid outputs.

Single-label targets are treated as one-hot over K binary problems. Class
weights are inverse-frequency with clipping; the focusing exponent
down-weights well-classified terms. Loss and gradient are evaluated from
logits through log-sigmoid identities, never through log of a computed
sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

DEFAULT_GAMMA = 2.0
WEIGHT_CLIP = (0.1, 10.0)


@dataclass
class FocalConfig:
    gamma: float = DEFAULT_GAMMA
    weights: np.ndarray | None = None   # K positive reals; None means all ones

    def weight_vector(self, n_labels: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(n_labels)
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (n_labels,):
            raise ValueError(f"weights shape {w.shape} != ({n_labels},)")
        return w


def class_weights(train_counts: np.ndarray, clip: tuple[float, float] = WEIGHT_CLIP) -> np.ndarray:
    """Inverse-frequency weights N / (K * n_k), clipped to keep the rarest
    classes from dominating the loss."""
    counts = np.asarray(train_counts, dtype=np.float64)
    if np.any(counts <= 0):
        raise ValueError("every class needs at least one training record")
    n = counts.sum()
    k = counts.size
    return np.clip(n / (k * counts), clip[0], clip[1])


def focal_bce(logits: np.ndarray, target: int, config: FocalConfig) -> float:
    """Mean over K of w_k * (1 - p_t)^gamma * (-log p_t)."""
    logits = np.asarray(logits, dtype=np.float64)
    loss, _ = _kernels.focal_terms(
        logits[None, :], np.array([target], dtype=np.int64),
        config.weight_vector(logits.size), float(config.gamma),
    )
    return float(loss)


def focal_bce_grad(logits: np.ndarray, target: int, config: FocalConfig) -> np.ndarray:
    """Analytic d(loss)/d(logit_k); the modulating factor zeroes the gradient
    wherever p_t reaches 1 exactly."""
    logits = np.asarray(logits, dtype=np.float64)
    _, grad = _kernels.focal_terms(
        logits[None, :], np.array([target], dtype=np.int64),
        config.weight_vector(logits.size), float(config.gamma),
    )
    return grad[0]


def focal_bce_batch(
    logits: np.ndarray, targets: np.ndarray, config: FocalConfig
) -> tuple[float, np.ndarray]:
    """(sum of per-document losses, d(sum)/d(logits)) for a batch."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    weights = config.weight_vector(logits.shape[1])
    loss_sum, grad = _kernels.focal_terms(logits, targets, weights, float(config.gamma))
    return float(loss_sum), grad
