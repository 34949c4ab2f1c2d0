"""Finite-difference checks of the analytic gradients.

Every check reduces a layer (or loss) output to a scalar with a fixed random
projection, then compares the analytic gradients of that scalar with central
differences. The error of one instance is

    max |analytic - numeric| / max(max |analytic|, max |numeric|, 1e-12)

i.e. the worst entry measured against the gradient's own scale, so entries
that happen to be near zero do not blow the ratio up.
"""
import numpy as np

from ..numkit import Rng
from .layers import Conv2d, ConvTranspose2d, Dense, LeakyReLU, MaskedDense, ReLU, Sigmoid
from .losses import bce_loss, mse_loss
from .network import Network

STEP = 1e-5
LAYER_KINDS = ("dense", "masked_dense", "conv2d", "conv_transpose2d", "relu", "leaky_relu", "sigmoid")
LOSS_KINDS = ("mse", "bce")


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), 1e-12)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def numeric_grad(f, x, step=STEP):
    """Central differences of scalar ``f`` at every entry of ``x`` (modified in place, then restored)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        up = f()
        flat[i] = old - step
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * step)
    return g


def _away_from_zero(rng, shape, gap=0.05):
    # keeps piecewise-linear units off their kink during differencing
    x = rng.normal(0.0, 1.0, shape)
    return np.where(np.abs(x) < gap, np.sign(x + 1e-300) * gap + x, x)


def random_layer(kind, rng):
    """A small random instance of ``kind`` and a matching input batch."""
    batch = int(rng.integers(1, 4))
    if kind in ("dense", "masked_dense"):
        n_in, n_out = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        if kind == "dense":
            layer = Dense(n_in, n_out, bias=bool(rng.integers(0, 2)), rng=rng)
        else:
            mask = (rng.uniform(0, 1, (n_out, n_in)) < 0.5).astype(float)
            layer = MaskedDense(n_in, n_out, mask, rng=rng)
        x = rng.normal(0.0, 1.0, (batch, n_in))
    elif kind in ("conv2d", "conv_transpose2d"):
        c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        k, stride, pad = int(rng.integers(1, 5)), int(rng.integers(1, 3)), int(rng.integers(0, 2))
        pad = min(pad, k - 1)
        if kind == "conv2d":
            size = int(rng.integers(k, k + 4))
            layer = Conv2d(c_in, c_out, k, stride, pad, rng=rng)
        else:
            size = int(rng.integers(1, 4))
            if (size - 1) * stride - 2 * pad + k < 1:
                pad = 0
            layer = ConvTranspose2d(c_in, c_out, k, stride, pad, rng=rng)
        x = rng.normal(0.0, 1.0, (batch, c_in, size, size))
    elif kind == "relu":
        layer, x = ReLU(), _away_from_zero(rng, (batch, int(rng.integers(1, 9))))
    elif kind == "leaky_relu":
        layer = LeakyReLU((0.01, 0.1, 0.3)[int(rng.integers(0, 3))])
        x = _away_from_zero(rng, (batch, int(rng.integers(1, 9))))
    elif kind == "sigmoid":
        layer, x = Sigmoid(), rng.normal(0.0, 3.0, (batch, int(rng.integers(1, 9))))
    else:
        raise ValueError(f"no random instance for {kind!r}")
    # nonzero biases so their gradients are exercised too
    for p in layer.params.values():
        if p.value.ndim == 1:
            p.value = rng.normal(0.0, 0.5, p.shape)
    return layer, x


def check_layer(layer, x, rng, step=STEP):
    """Worst relative error over the input gradient and every parameter gradient."""
    x = np.array(x, dtype=np.float64)
    y, _ = layer.forward(x)
    proj = rng.normal(0.0, 1.0, y.shape)

    def f():
        return float(np.sum(layer.forward(x)[0] * proj))

    grads, dx = layer.backward(layer.forward(x)[1], proj)
    worst = relative_error(dx, numeric_grad(f, x, step))
    for name, p in layer.params.items():
        num = numeric_grad(f, p.value, step)
        if p.mask is not None:
            num = num * p.mask
        worst = max(worst, relative_error(grads[name], num))
    return worst


def check_loss(kind, rng, step=STEP):
    shape = (int(rng.integers(1, 6)), int(rng.integers(1, 9)))
    pred = rng.normal(0.0, 2.0, shape)
    target = rng.normal(0.0, 1.0, shape) if kind == "mse" else rng.uniform(0.0, 1.0, shape)
    fn = mse_loss if kind == "mse" else bce_loss
    reduction = "mean" if rng.integers(0, 2) else "sum"
    _, grad = fn(pred, target, reduction)
    return relative_error(grad, numeric_grad(lambda: fn(pred, target, reduction)[0], pred, step))


def check_latent_gradient(rng, step=STEP):
    """Gradient of an mse reconstruction loss with respect to the input codes of a 2-layer decoder."""
    m, h, n = int(rng.integers(1, 5)), int(rng.integers(2, 8)), int(rng.integers(2, 10))
    net = Network.from_specs([{"kind": "dense", "in_features": m, "out_features": h},
                              {"kind": "leaky_relu", "slope": 0.1},
                              {"kind": "dense", "in_features": h, "out_features": n}], (m,), rng=rng)
    z = rng.normal(0.0, 1.0, (int(rng.integers(1, 5)), m))
    x = rng.normal(0.0, 1.0, (z.shape[0], n))
    out, cache = net.forward(z)
    _, g = mse_loss(out, x, "sum")
    _, dz = net.backward(cache, g, param_grads=False)
    return relative_error(dz, numeric_grad(lambda: mse_loss(net(z), x, "sum")[0], z, step))


def gradient_suite(instances=20, seed=0):
    """Worst error per layer kind, per loss and for the latent path, over ``instances`` draws each."""
    rng = Rng(seed)
    report = {}
    for kind in LAYER_KINDS:
        report[kind] = max(check_layer(*random_layer(kind, rng), rng) for _ in range(instances))
    for kind in LOSS_KINDS:
        report[f"{kind}_loss"] = max(check_loss(kind, rng) for _ in range(instances))
    report["latent"] = max(check_latent_gradient(rng) for _ in range(instances))
    return report
