"""Run configuration: one YAML file plus dot-path overrides.

Schema (every key optional unless noted; see ``DEFAULTS`` for values)::

    command: train-decoder        # required; one of COMMANDS
    seed: 0                       # or seeds: [0, 1, 2] for a serial sweep
    parallel: false               # run a seed sweep in worker processes
    out: runs/example
    data:
      kind: sim | idx | file
      sim: {n, m, N_train, N_test, connectivity, noise_sd, gamma_shape, gamma_scale, weight_range}
      idx: {images, labels, train_size, test_size, balanced}
      file: {train, test}         # dataset containers written by ``simulate``
    model:
      preset: mnist | sim | linear | custom
      m: 20                       # representation size (mnist, linear)
      channels: 64                # mnist width
      slope: 0.01                 # sim encoder leaky-relu slope
      bias: false                 # linear
      decoder: [...]              # custom: layer spec lists
      encoder: [...]
      dtype: float64
    train: {TrainConfig fields except seed}
    checkpoint: path              # pre-trained model for infer/eval/encoder commands
    analyze: {N: [4000]}

The data split seed and the weight-init streams are derived from ``seed``
unless ``data.sim.seed`` / ``data.idx.seed`` are given.
"""
import copy
import re

import yaml

from .errors import ConfigError
from .trainers import TrainConfig

COMMANDS = ("simulate", "train-decoder", "train-autoencoder", "train-encoder-frozen",
            "train-denoising-encoder", "infer", "eval", "analyze-load")

DEFAULTS = {
    "command": None,
    "seed": 0,
    "seeds": None,
    "parallel": False,
    "out": None,
    "data": {
        "kind": "sim",
        "sim": {"n": 1000, "m": 100, "N_train": 100, "N_test": 100, "connectivity": 0.1, "noise_sd": 0.2,
                "gamma_shape": 2.0, "gamma_scale": 1.0, "weight_range": [-1.0, 1.0], "seed": None},
        "idx": {"images": None, "labels": None, "train_size": 500, "test_size": 1000, "balanced": True,
                "seed": None},
        "file": {"train": None, "test": None},
    },
    "model": {"preset": "sim", "m": 20, "channels": 64, "slope": 0.01, "bias": False,
              "decoder": None, "encoder": None, "dtype": "float64"},
    "train": {k: v for k, v in TrainConfig().to_dict().items() if k != "seed"},
    "checkpoint": None,
    "analyze": {"N": None},
}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot (``1e-3``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                    |\.[0-9_]+(?:[eE][-+][0-9]+)?
                    |[-+]?\.(?:inf|Inf|INF)
                    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def _load_yaml(text):
    return yaml.load(text, Loader=_Loader)


# keys whose value is free-form (lists of layer specs)
_OPAQUE = {("model", "decoder"), ("model", "encoder")}


def _merge(base, over, path, errors):
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = ".".join(path + (str(key),))
        if key not in base:
            errors.append(f"{where}: unknown key")
            continue
        if isinstance(base[key], dict) and (path + (key,)) not in _OPAQUE:
            if not isinstance(value, dict):
                errors.append(f"{where}: expected a mapping, got {type(value).__name__}")
                continue
            out[key] = _merge(base[key], value, path + (key,), errors)
        else:
            out[key] = value
    return out


def parse_override(text):
    """``"train.epochs=5"`` -> (["train", "epochs"], 5); the value is read as YAML."""
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"--set has an empty key: {text!r}")
    try:
        value = _load_yaml(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"--set {key}: unreadable value ({exc})") from None
    return key.split("."), value


def apply_override(cfg, keys, value):
    node = cfg
    for i, k in enumerate(keys[:-1]):
        if not isinstance(node, dict) or k not in node or not isinstance(node[k], dict):
            raise ConfigError(f"--set {'.'.join(keys)}: {'.'.join(keys[:i + 1])} is not a section")
        node = node[k]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError(f"--set {'.'.join(keys)}: unknown key")
    if isinstance(node[keys[-1]], dict) and tuple(keys) not in _OPAQUE:
        # a mapping merges into the section instead of replacing it
        if not isinstance(value, dict):
            raise ConfigError(f"--set {'.'.join(keys)}: expected a mapping, got {type(value).__name__}")
        errors = []
        value = _merge(node[keys[-1]], value, tuple(keys), errors)
        if errors:
            raise ConfigError("invalid override:\n  " + "\n  ".join(errors))
    node[keys[-1]] = value


def _check_type(errors, where, value, types, allow_none=False):
    if value is None and allow_none:
        return
    if isinstance(value, bool) and bool not in types:
        errors.append(f"{where}: expected {'/'.join(t.__name__ for t in types)}, got bool")
    elif not isinstance(value, types):
        errors.append(f"{where}: expected {'/'.join(t.__name__ for t in types)}, got {type(value).__name__}")


def validate(cfg):
    """Raise ConfigError listing every field-level problem at once."""
    errors = []
    if cfg["command"] not in COMMANDS:
        errors.append(f"command: must be one of {', '.join(COMMANDS)}, got {cfg['command']!r}")
    _check_type(errors, "seed", cfg["seed"], (int,))
    if isinstance(cfg["seed"], int) and not isinstance(cfg["seed"], bool) and not 0 <= cfg["seed"] < 2 ** 64:
        errors.append("seed: must be an unsigned 64-bit integer")
    if cfg["seeds"] is not None:
        if not isinstance(cfg["seeds"], list) or not cfg["seeds"] or \
                not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in cfg["seeds"]):
            errors.append("seeds: must be a non-empty list of non-negative integers")
        elif len(set(cfg["seeds"])) != len(cfg["seeds"]):
            errors.append("seeds: duplicate entries")
    data = cfg["data"]
    if data["kind"] not in ("sim", "idx", "file"):
        errors.append(f"data.kind: must be sim, idx or file, got {data['kind']!r}")
    sim = data["sim"]
    for k in ("n", "m", "N_train", "N_test"):
        _check_type(errors, f"data.sim.{k}", sim[k], (int,))
    for k in ("connectivity", "noise_sd", "gamma_shape", "gamma_scale"):
        _check_type(errors, f"data.sim.{k}", sim[k], (int, float))
    wr = sim["weight_range"]
    if not (isinstance(wr, (list, tuple)) and len(wr) == 2):
        errors.append("data.sim.weight_range: expected [lo, hi]")
    if data["kind"] == "idx" and not data["idx"]["images"]:
        errors.append("data.idx.images: required when data.kind is idx")
    if data["kind"] == "file" and not data["file"]["train"] and cfg["command"] not in ("infer", "eval"):
        errors.append("data.file.train: required when data.kind is file")
    model = cfg["model"]
    if model["preset"] not in ("mnist", "sim", "linear", "custom"):
        errors.append(f"model.preset: must be mnist, sim, linear or custom, got {model['preset']!r}")
    if model["preset"] == "custom" and not isinstance(model["decoder"], list):
        errors.append("model.decoder: a layer spec list is required for the custom preset")
    if model["dtype"] not in ("float32", "float64"):
        errors.append(f"model.dtype: must be float32 or float64, got {model['dtype']!r}")
    if model["preset"] == "sim" and data["kind"] == "idx":
        errors.append("model.preset: the sim architecture needs simulated data (it uses the true adjacency)")
    needs_ckpt = ("train-encoder-frozen", "train-denoising-encoder", "infer", "eval")
    if cfg["command"] in needs_ckpt and not cfg["checkpoint"]:
        errors.append(f"checkpoint: required for {cfg['command']}")
    if cfg["command"] == "analyze-load":
        ns = cfg["analyze"]["N"]
        if ns is not None and not (isinstance(ns, list) and ns and all(isinstance(n, int) and n > 0 for n in ns)):
            errors.append("analyze.N: must be a non-empty list of positive integers")
    for k, default in DEFAULTS["train"].items():
        v = cfg["train"][k]
        if isinstance(default, bool):
            _check_type(errors, f"train.{k}", v, (bool,))
        elif isinstance(default, int):
            _check_type(errors, f"train.{k}", v, (int,))
        elif isinstance(default, float):
            _check_type(errors, f"train.{k}", v, (int, float))
        elif isinstance(default, str):
            _check_type(errors, f"train.{k}", v, (str,))
    _check_type(errors, "train.infer_lr", cfg["train"]["infer_lr"], (int, float), allow_none=True)
    clamp = cfg["train"]["clamp"]
    if clamp is not None and not (isinstance(clamp, (list, tuple)) and len(clamp) == 2):
        errors.append("train.clamp: expected [lo, hi] or null")
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))
    try:
        TrainConfig.from_dict({**cfg["train"], "seed": 0})
    except (ConfigError, TypeError) as exc:
        errors.append(f"train: {exc}")
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))
    return cfg


def load_config(path=None, overrides=(), seed=None, out=None):
    """Read ``path`` (YAML), merge onto the defaults, apply ``--set`` overrides and validate."""
    raw = {}
    if path is not None:
        with open(path) as f:
            try:
                raw = _load_yaml(f) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: not valid YAML ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    errors = []
    cfg = _merge(DEFAULTS, raw, (), errors)
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))
    for text in overrides:
        keys, value = parse_override(text)
        apply_override(cfg, keys, value)
    if seed is not None:
        cfg["seed"] = seed
        cfg["seeds"] = None
    if out is not None:
        cfg["out"] = out
    return validate(cfg)


def train_config(cfg, seed):
    return TrainConfig.from_dict({**cfg["train"], "seed": seed})


def dump_config(cfg):
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)
