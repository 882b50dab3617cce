"""Scalar losses with their input gradients.

Every loss returns (value, grad) where grad has the prediction's shape and
is already divided by the element count, so backward passes receive the
gradient of the mean.
"""

from __future__ import annotations

import numpy as np


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all entries."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = (2.0 / diff.size) * diff
    return loss, grad


def bce_loss(
    probs: np.ndarray, target: np.ndarray, clip: float = 1e-7
) -> tuple[float, np.ndarray]:
    """Binary cross entropy of probabilities against {0, 1} targets.

    Probabilities are clipped away from 0 and 1 before the logs; the
    gradient is taken at the clipped values.
    """
    if probs.shape != target.shape:
        raise ValueError(f"shape mismatch: {probs.shape} vs {target.shape}")
    p = np.clip(probs, clip, 1.0 - clip)
    p64 = p.astype(np.float64)
    t64 = target.astype(np.float64)
    loss = float(np.mean(-t64 * np.log(p64) - (1.0 - t64) * np.log1p(-p64)))
    grad = ((p - target) / (p * (1.0 - p))) / p.size
    return loss, grad.astype(probs.dtype, copy=False)


def bce_with_logits_loss(
    logits: np.ndarray, target: np.ndarray
) -> tuple[float, np.ndarray]:
    """Numerically stable fused sigmoid + binary cross entropy.

    loss = mean(max(z, 0) - z t + log(1 + exp(-|z|))), grad = (sigmoid(z) - t) / n.
    Matches bce_loss(sigmoid(logits), target) without forming extreme
    probabilities.
    """
    if logits.shape != target.shape:
        raise ValueError(f"shape mismatch: {logits.shape} vs {target.shape}")
    z = logits.astype(np.float64)
    t = target.astype(np.float64)
    loss = float(np.mean(np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))))
    sig = np.empty_like(logits)
    pos = logits >= 0
    sig[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    ex = np.exp(logits[~pos])
    sig[~pos] = ex / (1.0 + ex)
    grad = (sig - target) / logits.size
    return loss, grad.astype(logits.dtype, copy=False)
