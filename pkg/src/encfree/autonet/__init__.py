"""Layers, networks and losses with hand-written reverse-mode gradients."""
from .layers import (LAYER_KINDS, Conv2d, ConvTranspose2d, Dense, LeakyReLU, MaskedDense, Param, ReLU,
                     Reshape, Sigmoid, conv_out_size, conv_transpose_out_size, layer_from_spec, sigmoid)
from .losses import bce_loss, get_loss, mse_loss, per_sample_loss
from .network import ForwardCache, Network


def forward(net, x):
    return net.forward(x)


def backward(net, cache, output_grad):
    return net.backward(cache, output_grad)


def param_count(net, trainable_only=True):
    return net.param_count(trainable_only)


__all__ = [
    "LAYER_KINDS", "Conv2d", "ConvTranspose2d", "Dense", "ForwardCache", "LeakyReLU", "MaskedDense",
    "Network", "Param", "ReLU", "Reshape", "Sigmoid", "backward", "bce_loss", "conv_out_size",
    "conv_transpose_out_size", "forward", "get_loss", "layer_from_spec", "mse_loss", "param_count",
    "per_sample_loss", "sigmoid",
]
