import hashlib

import numpy as np

from ..errors import ContractError, ParameterError, ShapeError
from .layers import Layer, layer_from_spec


class ForwardCache:
    __slots__ = ("net_id", "versions", "entries", "in_shape", "out_shape")

    def __init__(self, net_id, versions, entries, in_shape, out_shape):
        self.net_id = net_id
        self.versions = versions
        self.entries = entries
        self.in_shape = in_shape
        self.out_shape = out_shape


class Network:
    """Ordered layer stack over per-sample shape ``input_shape``.

    Parameters are addressed as ``"<layer index>.<name>"``; ``parameters()``
    returns them in a fixed order that ``backward`` gradients follow.
    ``dtype`` is the compute precision: float64 by default, float32 trades
    accuracy for roughly twice the speed on the convolution layers.
    """

    def __init__(self, layers, input_shape, dtype="float64"):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.frozen = False
        self.dtype = np.float64
        self.astype(dtype)
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                shapes.append(tuple(layer.output_shape(shapes[-1])))
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
        self.shapes = shapes

    @classmethod
    def from_specs(cls, specs, input_shape, rng=None, dtype="float64"):
        return cls([s if isinstance(s, Layer) else layer_from_spec(s, rng) for s in specs], input_shape, dtype)

    def astype(self, dtype):
        """Switch the compute precision in place (float32 or float64)."""
        dt = np.dtype(dtype)
        if dt not in (np.float32, np.float64):
            raise ParameterError(f"dtype must be float32 or float64, got {dtype!r}")
        self.dtype = dt.type
        for p in self.parameters():
            if p.value.dtype != dt:
                p.value = p.value.astype(dt)
                p.version += 1
        return self

    @property
    def output_shape(self):
        return self.shapes[-1]

    def specs(self):
        return [layer.spec() for layer in self.layers]

    def named_parameters(self):
        return [(f"{i}.{name}", p) for i, layer in enumerate(self.layers) for name, p in layer.params.items()]

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def param_count(self, trainable_only=True):
        """Trainable scalars (unmasked entries only); ``trainable_only=False`` counts frozen ones too."""
        return sum(p.count() for p in self.parameters() if p.trainable or not trainable_only)

    def freeze(self):
        self.frozen = True
        for p in self.parameters():
            p.trainable = False
        return self

    def unfreeze(self):
        self.frozen = False
        for p in self.parameters():
            p.trainable = True
        return self

    def checksum(self):
        h = hashlib.sha256()
        for name, p in self.named_parameters():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.value).tobytes())
        return h.hexdigest()

    def _versions(self):
        return tuple(p.version for p in self.parameters())

    def forward(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"layer 0 ({self.layers[0].kind if self.layers else 'none'}): "
                             f"expected input (batch, {self.input_shape}), got {x.shape}")
        entries = []
        for layer in self.layers:
            x, c = layer.forward(x)
            entries.append(c)
        return x, ForwardCache(id(self), self._versions(), entries, None, x.shape)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, output_grad, param_grads=True):
        """Reverse pass; returns (gradients aligned with ``parameters()``, input gradient).

        With ``param_grads=False`` only the input gradient is computed and the
        first element is None (used for latent inference on a frozen decoder).
        """
        if cache.net_id != id(self) or len(cache.entries) != len(self.layers):
            raise ContractError("forward cache belongs to a different network")
        if cache.versions != self._versions():
            raise ContractError("forward cache is stale: parameters changed since the forward pass")
        dy = np.asarray(output_grad, dtype=self.dtype)
        if dy.shape != cache.out_shape:
            raise ShapeError(f"output_grad shape {dy.shape} != output shape {cache.out_shape}")
        per_layer = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            if param_grads:
                per_layer[i], dy = self.layers[i].backward(cache.entries[i], dy)
            else:
                dy = self.layers[i].input_grad(cache.entries[i], dy)
        if not param_grads:
            return None, dy
        grads = [per_layer[i][name] for i, layer in enumerate(self.layers) for name in layer.params]
        return grads, dy
