"""SGD with momentum and Adam, both with classic (coupled) L2 weight decay.

The functional ``sgd_step`` / ``adam_step`` work on one array and its state
dict in place. ``SGD`` and ``Adam`` wrap them for a list of
:class:`~encfree.autonet.layers.Param`, skipping frozen params and applying
decay only where ``param.decay`` is set.
"""
import numpy as np

from .errors import ParameterError, ShapeError


def sgd_step(param, grad, state, lr, momentum=0.0, weight_decay=0.0):
    if param.shape != grad.shape:
        raise ShapeError(f"param {param.shape} vs grad {grad.shape}")
    if lr <= 0 or not 0 <= momentum < 1:
        raise ParameterError("need lr > 0 and 0 <= momentum < 1")
    g = grad + weight_decay * param if weight_decay else grad
    v = state.get("momentum")
    if v is None:
        v = state["momentum"] = np.zeros_like(param)
    v *= momentum
    v += g
    param -= lr * v
    return param, state


def adam_step(param, grad, state, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
    if param.shape != grad.shape:
        raise ShapeError(f"param {param.shape} vs grad {grad.shape}")
    if lr <= 0 or not (0 <= beta1 < 1 and 0 <= beta2 < 1) or eps <= 0:
        raise ParameterError("invalid Adam hyperparameters")
    g = grad + weight_decay * param if weight_decay else grad
    if "m" not in state:
        state["m"] = np.zeros_like(param)
        state["v"] = np.zeros_like(param)
        state["step"] = 0
    state["step"] += 1
    t = state["step"]
    m, v = state["m"], state["v"]
    m *= beta1
    m += (1 - beta1) * g
    v *= beta2
    v += (1 - beta2) * g * g
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, state


class _Optimizer:
    rule = None

    def __init__(self, params, lr, weight_decay=0.0):
        self.params = list(params)
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)
        self.state = [dict() for _ in self.params]

    def _update(self, p, g, st, wd):
        raise NotImplementedError

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ShapeError(f"{len(grads)} gradients for {len(self.params)} params")
        for p, g, st in zip(self.params, grads, self.state):
            if not p.trainable:
                continue
            self._update(p.value, g, st, self.weight_decay if p.decay else 0.0)
            if p.mask is not None:
                p.value *= p.mask
            p.version += 1

    def hyperparameters(self):
        return {"rule": self.rule, "lr": self.lr, "weight_decay": self.weight_decay}

    def state_arrays(self):
        """Flatten optimizer buffers to ``{"<index>.<buffer>": array}`` for checkpoints."""
        out = {}
        for i, st in enumerate(self.state):
            for k, v in st.items():
                out[f"{i}.{k}"] = np.asarray(v, dtype=np.float64 if k != "step" else np.int64)
        return out

    def load_state_arrays(self, arrays):
        self.state = [dict() for _ in self.params]
        for key, v in arrays.items():
            i, k = key.split(".", 1)
            dt = self.params[int(i)].value.dtype
            self.state[int(i)][k] = int(v) if k == "step" else np.array(v, dtype=dt)


class SGD(_Optimizer):
    rule = "sgd"

    def __init__(self, params, lr, momentum=0.0, weight_decay=0.0):
        super().__init__(params, lr, weight_decay)
        self.momentum = float(momentum)

    def _update(self, p, g, st, wd):
        sgd_step(p, g, st, self.lr, self.momentum, wd)

    def hyperparameters(self):
        return {**super().hyperparameters(), "momentum": self.momentum}


class Adam(_Optimizer):
    rule = "adam"

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        super().__init__(params, lr, weight_decay)
        self.beta1, self.beta2, self.eps = float(beta1), float(beta2), float(eps)

    def _update(self, p, g, st, wd):
        adam_step(p, g, st, self.lr, self.beta1, self.beta2, self.eps, wd)

    def hyperparameters(self):
        return {**super().hyperparameters(), "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


def make_optimizer(kind, params, lr, weight_decay=0.0, momentum=0.9):
    if kind == "adam":
        return Adam(params, lr=lr, weight_decay=weight_decay)
    if kind == "sgd":
        return SGD(params, lr=lr, momentum=momentum, weight_decay=weight_decay)
    raise ParameterError(f"unknown optimizer {kind!r}")
