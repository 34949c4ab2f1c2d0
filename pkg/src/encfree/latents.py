"""Per-sample trainable representations and test-time latent inference."""
import numpy as np

from .autonet import get_loss, per_sample_loss
from .errors import ContractError, DivergenceError, ParameterError, ShapeError


class LatentTable:
    """N x m table of representations, one row per sample id, with SGD momentum.

    Row ``i`` always belongs to sample id ``sample_ids[i]``; batches address
    rows by position, never by shuffled order.
    """

    def __init__(self, Z, lr=0.01, momentum=0.9, sample_ids=None):
        self.Z = np.array(Z, dtype=np.float64)
        if self.Z.ndim != 2:
            raise ShapeError(f"latent table must be 2-D, got {self.Z.shape}")
        self.velocity = np.zeros_like(self.Z)
        self.lr = float(lr)
        self.momentum = float(momentum)
        n = self.Z.shape[0]
        self.sample_ids = np.arange(n) if sample_ids is None else np.asarray(sample_ids, dtype=np.int64)
        if self.sample_ids.shape != (n,):
            raise ShapeError("sample_ids must have one entry per row")

    @property
    def shape(self):
        return self.Z.shape

    def copy(self):
        t = LatentTable(self.Z, self.lr, self.momentum, self.sample_ids)
        t.velocity = self.velocity.copy()
        return t


def init_latents(N, m, rng, scale=0.1, lr=0.01, momentum=0.9):
    if N < 1 or m < 1 or scale < 0:
        raise ParameterError("need N, m >= 1 and scale >= 0")
    return LatentTable(rng.normal(0.0, scale, (N, m)), lr=lr, momentum=momentum)


def latent_step(table, batch_ids, latent_grads):
    """Momentum SGD on exactly the rows in ``batch_ids``; other rows are untouched."""
    ids = np.asarray(batch_ids, dtype=np.int64).reshape(-1)
    if ids.size == 0:
        return table
    g = np.asarray(latent_grads, dtype=np.float64)
    if g.shape != (ids.size, table.Z.shape[1]):
        raise ShapeError(f"latent grads {g.shape} do not match {ids.size} rows x m={table.Z.shape[1]}")
    if ids.min() < 0 or ids.max() >= table.Z.shape[0]:
        raise ContractError("batch ids out of range")
    if np.unique(ids).size != ids.size:
        raise ContractError("duplicate sample ids in one batch")
    v = table.momentum * table.velocity[ids] + g
    table.velocity[ids] = v
    table.Z[ids] -= table.lr * v
    return table


def _descend(decoder, X, Z, loss_kind, steps, lr, momentum, reduction):
    loss_fn = get_loss(loss_kind)
    v = np.zeros_like(Z)
    for step in range(steps):
        out, cache = decoder.forward(Z)
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grad = loss_fn(out, X, reduction)
        if not np.isfinite(loss):
            raise DivergenceError(f"latent inference diverged at step {step}", step=step)
        _, dz = decoder.backward(cache, grad, param_grads=False)
        v *= momentum
        v += dz
        Z -= lr * v
    with np.errstate(over="ignore", invalid="ignore"):
        final = per_sample_loss(loss_kind, decoder(Z), X)
    if not np.all(np.isfinite(final)):
        raise DivergenceError(f"latent inference diverged at step {steps}", step=steps)
    return Z, final


def infer_latents(decoder, X, loss_kind="mse", steps=500, lr=0.01, momentum=0.9, rng=None,
                  init_scale=0.1, restarts=1, reduction="sum", chunk_size=256):
    """Find representations for ``X`` by gradient descent with the decoder fixed.

    The summed loss makes every sample's gradient independent of the others,
    so processing chunks of rows gives the same result as one solve per
    sample. With ``restarts > 1`` each sample keeps its lowest-loss solution.
    Returns ``(Z, final per-sample losses)``; decoder parameters are not touched.
    """
    if steps < 0:
        raise ParameterError("steps must be >= 0")
    if not decoder.frozen:
        raise ContractError("infer_latents needs a frozen decoder")
    X = np.asarray(X, dtype=np.float64)
    n_samples = X.shape[0]
    m = decoder.input_shape[0]
    best_Z = np.zeros((n_samples, m))
    best_loss = np.full(n_samples, np.inf)
    for r in range(max(1, restarts)):
        # independent stream per restart, so results don't depend on chunking
        Z0 = rng.child(r).normal(0.0, init_scale, (n_samples, m))
        for lo in range(0, n_samples, chunk_size):
            sl = slice(lo, lo + chunk_size)
            Z, loss = _descend(decoder, X[sl], Z0[sl].copy(), loss_kind, steps, lr, momentum, reduction)
            better = loss < best_loss[sl]
            best_Z[sl][better] = Z[better]
            best_loss[sl][better] = loss[better]
    return best_Z, best_loss
