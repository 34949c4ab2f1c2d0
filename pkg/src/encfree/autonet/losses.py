"""Reconstruction losses returning (loss, gradient w.r.t. the prediction/logits).

``reduction``:
  ``"mean"``  average over every element (the reported metric).
  ``"sum"``   sum over every element, i.e. the summed per-sample squared
              distance / cross entropy. Each sample's gradient is then
              independent of the batch it was drawn in, which is what the
              per-sample latent updates need.
"""
import numpy as np

from ..errors import ParameterError, ShapeError


def _scale(count, reduction):
    if reduction == "mean":
        return 1.0 / max(count, 1)
    if reduction == "sum":
        return 1.0
    raise ParameterError(f"unknown reduction {reduction!r}")


def mse_loss(pred, target, reduction="mean"):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    s = _scale(pred.size, reduction)
    diff = pred - target
    return float(np.sum(diff * diff) * s), 2.0 * s * diff


def bce_loss(logits, targets, reduction="mean"):
    """Sigmoid + binary cross entropy fused on logits."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise ShapeError(f"logits {logits.shape} vs targets {targets.shape}")
    if targets.size and (targets.min() < 0.0 or targets.max() > 1.0):
        raise ParameterError("bce targets must lie in [0, 1]")
    s = _scale(logits.size, reduction)
    per = np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    # d/dl = sigmoid(l) - t, written without overflow
    e = np.exp(-np.abs(logits))
    sig = np.where(logits >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(np.sum(per) * s), s * (sig - targets)


def per_sample_loss(kind, pred, target):
    """Mean loss of each sample (row) separately."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    axes = tuple(range(1, pred.ndim))
    if kind == "mse":
        return np.mean((pred - target) ** 2, axis=axes)
    if kind == "bce":
        per = np.maximum(pred, 0.0) - pred * target + np.log1p(np.exp(-np.abs(pred)))
        return np.mean(per, axis=axes)
    raise ParameterError(f"unknown loss kind {kind!r}")


LOSSES = {"mse": mse_loss, "bce": bce_loss}


def get_loss(kind):
    try:
        return LOSSES[kind]
    except KeyError:
        raise ParameterError(f"unknown loss kind {kind!r}") from None
