"""Classification losses on 2-class logits."""

import numpy as np

from ..errors import InvalidLabelError, ShapeError


def softmax_probs(logits):
    """Stable softmax over the last axis."""
    z = np.asarray(logits)
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


def loss_cross_entropy(logits, label):
    """-log softmax(logits)[label] for a single 2-logit vector."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    if z.shape[0] != 2:
        raise ShapeError(f"expected 2 logits, got {z.shape[0]}")
    if label not in (0, 1):
        raise InvalidLabelError(f"label must be 0 or 1, got {label!r}")
    m = z.max()
    lse = m + np.log(np.exp(z - m).sum())
    return float(lse - z[label])


def cross_entropy_batch(logits, labels):
    """Mean cross-entropy over a batch plus dL/dlogits (softmax - onehot)/n.

    Returns (loss, dlogits) with dlogits in the logits dtype.
    """
    z = np.asarray(logits)
    labels = np.asarray(labels)
    if z.ndim != 2 or z.shape[1] != 2:
        raise ShapeError(f"expected (n, 2) logits, got {z.shape}")
    if not np.isin(labels, (0, 1)).all():
        raise InvalidLabelError("labels must be 0 or 1")
    n = z.shape[0]
    p = softmax_probs(z.astype(np.float64))
    picked = p[np.arange(n), labels]
    loss = float(-np.log(np.maximum(picked, 1e-38)).mean())
    d = p.copy()
    d[np.arange(n), labels] -= 1.0
    return loss, (d / n).astype(z.dtype)
