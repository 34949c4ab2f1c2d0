"""Checkpoints: networks, optimizer buffers and latent tables in one container.

A checkpoint is a ``CKPT`` container (see :mod:`encfree.container`). Its
metadata lists every saved network under ``"networks"`` with the layer spec
list, per-sample input shape, compute dtype and frozen flag. Array names:

    net/<network>/<layer>.<param>     parameter values
    mask/<network>/<layer>            masked_dense masks
    opt/<optimizer>/<index>.<buffer>  optimizer buffers (m, v, step, momentum)
    latents/Z, latents/velocity, latents/sample_ids

Parameters are always stored as float64, so a float32 network round-trips
exactly.
"""
import csv

import numpy as np

from .autonet import Network
from .container import read_container, write_container
from .errors import FormatError
from .latents import LatentTable


class Checkpoint:
    def __init__(self, networks=None, latents=None, optimizers=None, meta=None):
        self.networks = networks or {}
        self.latents = latents
        # name -> {"hyperparameters": {...}, "arrays": {...}}
        self.optimizers = optimizers or {}
        self.meta = meta or {}


def _spec_for_disk(spec, net_name, index, arrays):
    spec = dict(spec)
    if "mask" in spec:
        arrays[f"mask/{net_name}/{index}"] = spec.pop("mask")
        spec["mask"] = {"array": f"mask/{net_name}/{index}"}
    return spec


def save_checkpoint(path, networks, latents=None, optimizers=None, meta=None):
    """``networks`` maps names to :class:`Network`; ``optimizers`` maps names to optimizers."""
    arrays = {}
    nets_meta = {}
    for name, net in networks.items():
        specs = [_spec_for_disk(s, name, i, arrays) for i, s in enumerate(net.specs())]
        nets_meta[name] = {"specs": specs, "input_shape": list(net.input_shape),
                           "dtype": np.dtype(net.dtype).name, "frozen": net.frozen}
        for pname, p in net.named_parameters():
            arrays[f"net/{name}/{pname}"] = p.value
    opt_meta = {}
    for name, opt in (optimizers or {}).items():
        opt_meta[name] = opt.hyperparameters()
        for key, a in opt.state_arrays().items():
            arrays[f"opt/{name}/{key}"] = a
    lat_meta = None
    if latents is not None:
        arrays["latents/Z"] = latents.Z
        arrays["latents/velocity"] = latents.velocity
        arrays["latents/sample_ids"] = latents.sample_ids
        lat_meta = {"lr": latents.lr, "momentum": latents.momentum}
    write_container(path, b"CKPT", {"networks": nets_meta, "optimizers": opt_meta, "latents": lat_meta,
                                    "extra": meta or {}}, arrays)


def _rebuild(name, info, arrays):
    specs = []
    for s in info["specs"]:
        s = dict(s)
        if isinstance(s.get("mask"), dict):
            key = s["mask"]["array"]
            if key not in arrays:
                raise FormatError(f"checkpoint lacks mask array {key}")
            s["mask"] = arrays[key]
        specs.append(s)
    net = Network.from_specs(specs, info["input_shape"])
    for pname, p in net.named_parameters():
        key = f"net/{name}/{pname}"
        if key not in arrays or arrays[key].shape != p.shape:
            raise FormatError(f"checkpoint parameter {key} is missing or has the wrong shape")
        p.value = np.array(arrays[key], dtype=np.float64)
    net.astype(info.get("dtype", "float64"))
    if info.get("frozen"):
        net.freeze()
    return net


def load_checkpoint(path):
    meta, arrays = read_container(path, b"CKPT")
    networks = {name: _rebuild(name, info, arrays) for name, info in meta.get("networks", {}).items()}
    latents = None
    if meta.get("latents") is not None:
        lm = meta["latents"]
        latents = LatentTable(arrays["latents/Z"], lm["lr"], lm["momentum"], arrays["latents/sample_ids"])
        latents.velocity = np.array(arrays["latents/velocity"], dtype=np.float64)
    optimizers = {}
    for name, hyper in meta.get("optimizers", {}).items():
        prefix = f"opt/{name}/"
        optimizers[name] = {"hyperparameters": hyper,
                            "arrays": {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}}
    return Checkpoint(networks, latents, optimizers, meta.get("extra", {}))


def export_latents_csv(path, Z, sample_ids, split=None):
    """One row per sample id: ``sample_id[, split], z_0..z_{m-1}``, full float precision.

    ``split`` may be a single label or one label per row.
    """
    Z = np.asarray(Z, dtype=np.float64)
    ids = np.asarray(sample_ids, dtype=np.int64)
    if split is not None and np.ndim(split) == 0:
        split = [split] * len(ids)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sample_id"] + (["split"] if split is not None else []) + [f"z_{j}" for j in range(Z.shape[1])])
        for i, row in enumerate(Z):
            lead = [str(int(ids[i]))] + ([split[i]] if split is not None else [])
            w.writerow(lead + [repr(float(v)) for v in row])
