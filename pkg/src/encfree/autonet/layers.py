"""Layer kinds with explicit forward/backward rules.

Every layer works on a leading batch axis. ``forward`` returns the output and
whatever the backward pass needs; ``backward`` returns a dict of parameter
gradients (keyed like ``params``) and the gradient with respect to the input.
"""
import numpy as np

from ..errors import ParameterError, ShapeError


class Param:
    """A trainable array plus the flags the optimizers look at."""

    def __init__(self, value, decay=True, mask=None):
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.decay = decay
        self.mask = None if mask is None else np.asarray(mask, dtype=np.float64)
        self.trainable = True
        # bumped by every in-place update; lets a forward cache detect staleness
        self.version = 0

    @property
    def shape(self):
        return self.value.shape

    def count(self):
        if self.mask is not None:
            return int(np.count_nonzero(self.mask))
        return int(self.value.size)


class Layer:
    kind = None

    def __init__(self):
        self.params = {}

    def output_shape(self, in_shape):
        return in_shape

    def spec(self):
        return {"kind": self.kind}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, cache, dy):
        raise NotImplementedError

    def input_grad(self, cache, dy):
        return self.backward(cache, dy)[1]


def _uniform_init(rng, shape, fan_in):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, shape)


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, out_features, bias=True, rng=None):
        super().__init__()
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.bias = bool(bias)
        w = _uniform_init(rng, (self.out_features, self.in_features), self.in_features) if rng else \
            np.zeros((self.out_features, self.in_features))
        self.params["weight"] = Param(w)
        if self.bias:
            self.params["bias"] = Param(np.zeros(self.out_features))

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ShapeError(f"dense expects ({self.in_features},), got {tuple(in_shape)}")
        return (self.out_features,)

    def spec(self):
        return {"kind": self.kind, "in_features": self.in_features,
                "out_features": self.out_features, "bias": self.bias}

    def _weight(self):
        return self.params["weight"].value

    def forward(self, x):
        y = x @ self._weight().T
        if self.bias:
            y = y + self.params["bias"].value
        return y, x

    def backward(self, x, dy):
        grads = {"weight": dy.T @ x}
        if self.bias:
            grads["bias"] = dy.sum(axis=0)
        return grads, dy @ self._weight()

    def input_grad(self, x, dy):
        return dy @ self._weight()


class MaskedDense(Dense):
    """Dense layer whose weight is restricted to a fixed binary pattern.

    ``mask`` has the weight's shape (out, in). Masked entries start at zero
    and receive zero gradient, so they stay exactly zero under the optimizers.
    """

    kind = "masked_dense"

    def __init__(self, in_features, out_features, mask, bias=True, rng=None):
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != (int(out_features), int(in_features)):
            raise ShapeError(f"mask shape {mask.shape} != weight shape {(out_features, in_features)}")
        if not np.isin(mask, (0.0, 1.0)).all():
            raise ParameterError("mask must be binary")
        super().__init__(in_features, out_features, bias=bias, rng=rng)
        w = self.params["weight"]
        w.mask = mask
        w.value *= mask

    def spec(self):
        d = super().spec()
        d["mask"] = self.params["weight"].mask
        return d

    def backward(self, x, dy):
        grads, dx = super().backward(x, dy)
        grads["weight"] *= self.params["weight"].mask
        return grads, dx


def conv_out_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def conv_transpose_out_size(size, kernel, stride, padding):
    return (size - 1) * stride - 2 * padding + kernel


def _pad_cb(x, p):
    if not p:
        return x
    c, b, h, w = x.shape
    xp = np.zeros((c, b, h + 2 * p, w + 2 * p), dtype=x.dtype)
    xp[:, :, p:p + h, p:p + w] = x
    return xp


# Convolutions work internally in a channel-major (C, B, H, W) layout and
# kernel-major column buffers (k, k, C, B, ho, wo): every kernel tap is one
# contiguous block, and the buffers reshape to GEMM operands without copies.

def _im2col(xp, k, stride, ho, wo):
    # xp: (C, B, Hp, Wp) padded -> (k, k, C, B, ho, wo)
    c, b = xp.shape[:2]
    cols = np.empty((k, k, c, b, ho, wo), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols


def _col2im(cols, hp, wp, stride):
    # adjoint of _im2col: scatter-add (k, k, C, B, ho, wo) back into (C, B, hp, wp)
    k, _, c, b, ho, wo = cols.shape
    xp = np.zeros((c, b, hp, wp), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[i, j]
    return xp


def _to_bc(ycb, p, h, w, bias):
    # crop padding, return to (B, C, H, W), add per-channel bias
    if p:
        ycb = ycb[:, :, p:p + h, p:p + w]
    y = np.ascontiguousarray(ycb.transpose(1, 0, 2, 3))
    if bias is not None:
        y += bias[None, :, None, None]
    return y


class _ConvBase(Layer):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, bias=True):
        super().__init__()
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_size = int(kernel_size)
        self.stride = int(stride)
        self.padding = int(padding)
        self.bias = bool(bias)
        if self.kernel_size < 1 or self.stride < 1 or self.padding < 0:
            raise ParameterError("kernel >= 1, stride >= 1 and padding >= 0 required")

    def spec(self):
        return {"kind": self.kind, "in_channels": self.in_channels,
                "out_channels": self.out_channels, "kernel_size": self.kernel_size,
                "stride": self.stride, "padding": self.padding, "bias": self.bias}

    def _check_in(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ShapeError(f"{self.kind} expects ({self.in_channels}, H, W), got {tuple(in_shape)}")

    def _bias(self):
        return self.params["bias"].value if self.bias else None


class Conv2d(_ConvBase):
    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, bias=True, rng=None):
        super().__init__(in_channels, out_channels, kernel_size, stride, padding, bias)
        k = self.kernel_size
        shape = (self.out_channels, self.in_channels, k, k)
        fan_in = self.in_channels * k * k
        self.params["weight"] = Param(_uniform_init(rng, shape, fan_in) if rng else np.zeros(shape))
        if self.bias:
            self.params["bias"] = Param(np.zeros(self.out_channels))

    def output_shape(self, in_shape):
        self._check_in(in_shape)
        ho = conv_out_size(in_shape[1], self.kernel_size, self.stride, self.padding)
        wo = conv_out_size(in_shape[2], self.kernel_size, self.stride, self.padding)
        if ho < 1 or wo < 1:
            raise ShapeError(f"conv2d output would be empty for input {tuple(in_shape)}")
        return (self.out_channels, ho, wo)

    def forward(self, x):
        b, c, h, w = x.shape
        _, ho, wo = self.output_shape(x.shape[1:])
        xp = _pad_cb(x.transpose(1, 0, 2, 3), self.padding)
        cols2 = _im2col(xp, self.kernel_size, self.stride, ho, wo).reshape(c * self.kernel_size ** 2, -1)
        y = (self._w2() @ cols2).reshape(self.out_channels, b, ho, wo)
        return _to_bc(y, 0, ho, wo, self._bias()), (x.shape, cols2)

    def backward(self, cache, dy):
        x_shape, cols2 = cache
        dy2 = dy.transpose(1, 0, 2, 3).reshape(self.out_channels, -1)
        k = self.kernel_size
        gw = (dy2 @ cols2.T).reshape(self.out_channels, k, k, self.in_channels).transpose(0, 3, 1, 2)
        grads = {"weight": np.ascontiguousarray(gw)}
        if self.bias:
            grads["bias"] = dy2.sum(axis=1)
        return grads, self._dx(x_shape, dy2, *dy.shape[2:])

    def input_grad(self, cache, dy):
        dy2 = dy.transpose(1, 0, 2, 3).reshape(self.out_channels, -1)
        return self._dx(cache[0], dy2, *dy.shape[2:])

    def _w2(self):
        # (out, in, k, k) -> (out, k*k*in), matching the column buffer order
        return self.params["weight"].value.transpose(0, 2, 3, 1).reshape(self.out_channels, -1)

    def _dx(self, x_shape, dy2, ho, wo):
        b, c, h, w = x_shape
        k, p = self.kernel_size, self.padding
        dcols = (self._w2().T @ dy2).reshape(k, k, c, b, ho, wo)
        return _to_bc(_col2im(dcols, h + 2 * p, w + 2 * p, self.stride), p, h, w, None)


class ConvTranspose2d(_ConvBase):
    """Transposed convolution; weight layout (in_channels, out_channels, k, k).

    With shared weights this is exactly the adjoint of :class:`Conv2d` built
    with (out_channels, in_channels) swapped.
    """

    kind = "conv_transpose2d"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, bias=True, rng=None):
        super().__init__(in_channels, out_channels, kernel_size, stride, padding, bias)
        k = self.kernel_size
        shape = (self.in_channels, self.out_channels, k, k)
        # fan_in taken from weight dim 1, as common frameworks do for this layer
        fan_in = self.out_channels * k * k
        self.params["weight"] = Param(_uniform_init(rng, shape, fan_in) if rng else np.zeros(shape))
        if self.bias:
            self.params["bias"] = Param(np.zeros(self.out_channels))

    def output_shape(self, in_shape):
        self._check_in(in_shape)
        ho = conv_transpose_out_size(in_shape[1], self.kernel_size, self.stride, self.padding)
        wo = conv_transpose_out_size(in_shape[2], self.kernel_size, self.stride, self.padding)
        if ho < 1 or wo < 1:
            raise ShapeError(f"conv_transpose2d output would be empty for input {tuple(in_shape)}")
        return (self.out_channels, ho, wo)

    def forward(self, x):
        b, c, h, w = x.shape
        _, ho, wo = self.output_shape(x.shape[1:])
        k, p = self.kernel_size, self.padding
        x2 = x.transpose(1, 0, 2, 3).reshape(c, -1)
        cols = (self._w2().T @ x2).reshape(k, k, self.out_channels, b, h, w)
        yp = _col2im(cols, ho + 2 * p, wo + 2 * p, self.stride)
        return _to_bc(yp, p, ho, wo, self._bias()), (x.shape, x2)

    def backward(self, cache, dy):
        x_shape, x2 = cache
        cols2 = self._dy_cols(x_shape, dy)
        k = self.kernel_size
        gw = (x2 @ cols2.T).reshape(self.in_channels, k, k, self.out_channels).transpose(0, 3, 1, 2)
        grads = {"weight": np.ascontiguousarray(gw)}
        if self.bias:
            grads["bias"] = dy.sum(axis=(0, 2, 3))
        return grads, self._dx(x_shape, cols2)

    def input_grad(self, cache, dy):
        return self._dx(cache[0], self._dy_cols(cache[0], dy))

    def _w2(self):
        # (in, out, k, k) -> (in, k*k*out), matching the column buffer order
        return self.params["weight"].value.transpose(0, 2, 3, 1).reshape(self.in_channels, -1)

    def _dy_cols(self, x_shape, dy):
        _, _, h_in, w_in = x_shape
        k = self.kernel_size
        dyp = _pad_cb(dy.transpose(1, 0, 2, 3), self.padding)
        return _im2col(dyp, k, self.stride, h_in, w_in).reshape(self.out_channels * k * k, -1)

    def _dx(self, x_shape, cols2):
        b, _, h_in, w_in = x_shape
        dx = (self._w2() @ cols2).reshape(self.in_channels, b, h_in, w_in)
        return _to_bc(dx, 0, h_in, w_in, None)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, mask, dy):
        return {}, dy * mask


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, slope):
        super().__init__()
        self.slope = float(slope)

    def spec(self):
        return {"kind": self.kind, "slope": self.slope}

    def forward(self, x):
        scale = np.where(x > 0, 1.0, self.slope).astype(x.dtype, copy=False)
        return x * scale, scale

    def backward(self, scale, dy):
        return {}, dy * scale


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x):
        y = sigmoid(x)
        return y, y

    def backward(self, y, dy):
        return {}, dy * y * (1.0 - y)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, target_shape):
        super().__init__()
        self.target_shape = tuple(int(s) for s in target_shape)

    def spec(self):
        return {"kind": self.kind, "target_shape": list(self.target_shape)}

    def output_shape(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.target_shape)):
            raise ShapeError(f"cannot reshape {tuple(in_shape)} to {self.target_shape}")
        return self.target_shape

    def forward(self, x):
        return x.reshape((x.shape[0],) + self.target_shape), x.shape

    def backward(self, in_shape, dy):
        return {}, dy.reshape(in_shape)


LAYER_KINDS = {
    cls.kind: cls
    for cls in (Dense, MaskedDense, Conv2d, ConvTranspose2d, ReLU, LeakyReLU, Sigmoid, Reshape)
}


def layer_from_spec(spec, rng=None):
    """Build a layer from a plain dict like ``{"kind": "dense", "in_features": 3, ...}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in LAYER_KINDS:
        raise ParameterError(f"unknown layer kind {kind!r}")
    cls = LAYER_KINDS[kind]
    if kind == "leaky_relu" and "slope" not in spec:
        raise ParameterError("leaky_relu needs an explicit slope")
    if cls in (Dense, MaskedDense, Conv2d, ConvTranspose2d):
        spec["rng"] = rng
    try:
        return cls(**spec)
    except TypeError as exc:
        raise ParameterError(f"bad hyperparameters for {kind}: {exc}") from None
