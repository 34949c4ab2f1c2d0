"""Ready-made layer lists for the two experiment families.

The MNIST decoder follows the prose ordering: a 20-d representation is mapped
by a dense layer to 128x7x7, then two stride-2 transposed convolutions bring it
to 1x28x28. The last layer emits logits; apply a sigmoid for images.
"""
from .autonet import Network

MNIST_SHAPE = (1, 28, 28)


def mnist_decoder_specs(m=20, channels=64):
    c2 = 2 * channels
    return [
        {"kind": "dense", "in_features": m, "out_features": c2 * 7 * 7},
        {"kind": "relu"},
        {"kind": "reshape", "target_shape": [c2, 7, 7]},
        {"kind": "conv_transpose2d", "in_channels": c2, "out_channels": channels,
         "kernel_size": 4, "stride": 2, "padding": 1},
        {"kind": "relu"},
        {"kind": "conv_transpose2d", "in_channels": channels, "out_channels": 1,
         "kernel_size": 4, "stride": 2, "padding": 1},
    ]


def mnist_encoder_specs(m=20, channels=64):
    c2 = 2 * channels
    return [
        {"kind": "conv2d", "in_channels": 1, "out_channels": channels, "kernel_size": 4, "stride": 2, "padding": 1},
        {"kind": "relu"},
        {"kind": "conv2d", "in_channels": channels, "out_channels": c2, "kernel_size": 4, "stride": 2, "padding": 1},
        {"kind": "relu"},
        {"kind": "reshape", "target_shape": [c2 * 7 * 7]},
        {"kind": "dense", "in_features": c2 * 7 * 7, "out_features": m},
    ]


def mnist_decoder(rng, m=20, channels=64, dtype="float64"):
    return Network.from_specs(mnist_decoder_specs(m, channels), (m,), rng, dtype)


def mnist_encoder(rng, m=20, channels=64, dtype="float64"):
    return Network.from_specs(mnist_encoder_specs(m, channels), MNIST_SHAPE, rng, dtype)


def sim_decoder_specs(mask):
    n, m = mask.shape
    return [{"kind": "masked_dense", "in_features": m, "out_features": n, "mask": mask}, {"kind": "relu"}]


def sim_encoder_specs(n, m, slope=0.01):
    return [{"kind": "dense", "in_features": n, "out_features": m}, {"kind": "leaky_relu", "slope": slope}]


def sim_decoder(rng, mask, dtype="float64"):
    return Network.from_specs(sim_decoder_specs(mask), (mask.shape[1],), rng, dtype)


def sim_encoder(rng, n, m, slope=0.01, dtype="float64"):
    return Network.from_specs(sim_encoder_specs(n, m, slope), (n,), rng, dtype)


def linear_decoder(rng, m, n, bias=False):
    return Network.from_specs([{"kind": "dense", "in_features": m, "out_features": n, "bias": bias}], (m,), rng)


def linear_encoder(rng, n, m, bias=False):
    return Network.from_specs([{"kind": "dense", "in_features": n, "out_features": m, "bias": bias}], (n,), rng)
