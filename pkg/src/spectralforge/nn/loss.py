"""Huber loss for multi-output regression."""

from __future__ import annotations

import numpy as np


def huber_loss(
    pred: np.ndarray, target: np.ndarray, delta: float = 1.0
) -> tuple[float, np.ndarray]:
    """Mean element-wise Huber loss and its gradient w.r.t. pred.

    Per element r = pred - target:
        l(r) = 0.5 r^2            if |r| <= delta
               delta (|r| - 0.5 delta)  otherwise
    Both the loss and its gradient are continuous at |r| = delta.
    """
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    r = pred - target
    absr = np.abs(r)
    quad = absr <= delta
    elems = np.where(quad, 0.5 * r * r, delta * (absr - 0.5 * delta))
    loss = float(elems.mean())
    grad = np.where(quad, r, delta * np.sign(r)) / r.size
    return loss, grad
