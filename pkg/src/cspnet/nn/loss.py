"""Softmax cross-entropy with the gradient in logit space."""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError


def softmax_xent(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its logit gradient.

    Stable under large logits via max subtraction; gradient is
    (softmax - onehot) / batch.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ParameterError(f"logits must be a non-empty matrix, got {z.shape}")
    if y.shape != (z.shape[0],):
        raise ParameterError("one label per batch row required")
    k = z.shape[1]
    if np.any((y < 0) | (y >= k)):
        raise ParameterError(f"labels must lie in 0..{k - 1}")
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[np.arange(n), y]))
    probs = np.exp(shifted - log_norm[:, None])
    probs[np.arange(n), y] -= 1.0
    return loss, probs / n
