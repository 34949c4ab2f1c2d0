"""Training regimes: decoder alone with learned representations, the naive
autoencoder, an encoder fitted to a frozen decoder, and the denoising variant
of the latter. Plus evaluation of each model type."""
import csv
import hashlib
import io
import json
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from .analysis import representation_score
from .autonet import get_loss
from .errors import ConfigError, ContractError, DivergenceError, ShapeError
from .latents import infer_latents, init_latents, latent_step
from .numkit import Rng
from .optimize import make_optimizer

# stream keys under Rng(cfg.seed); keeps shuffling independent of everything else
_SHUFFLE, _LATENT_INIT, _NOISE, _INFER = 0, 1, 2, 3


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    weight_optimizer: str = "adam"
    weight_lr: float = 1e-3
    weight_decay: float = 1e-5
    weight_momentum: float = 0.9
    latent_lr: float = 0.01
    latent_momentum: float = 0.9
    latent_init_scale: float = 0.1
    loss: str = "mse"
    # "sum": summed per-sample loss drives the updates; "mean": element mean
    reduction: str = "sum"
    noise_sd: float = 0.0
    clamp: tuple = None
    eval_every: int = 1
    infer_steps: int = 500
    infer_lr: float = None
    infer_momentum: float = 0.9
    infer_restarts: int = 1
    record_time: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be >= 0")
        if self.loss not in ("mse", "bce"):
            raise ConfigError(f"loss must be mse or bce, got {self.loss!r}")
        if self.reduction not in ("sum", "mean"):
            raise ConfigError(f"reduction must be sum or mean, got {self.reduction!r}")
        if self.weight_optimizer not in ("adam", "sgd"):
            raise ConfigError(f"weight_optimizer must be adam or sgd, got {self.weight_optimizer!r}")
        if self.weight_lr <= 0 or self.latent_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.infer_steps < 0 or self.infer_restarts < 1:
            raise ConfigError("infer_steps must be >= 0 and infer_restarts >= 1")
        return self

    def to_dict(self):
        d = asdict(self)
        if d["clamp"] is not None:
            d["clamp"] = list(d["clamp"])
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training option(s): {', '.join(sorted(unknown))}")
        d = dict(d)
        if d.get("clamp") is not None:
            d["clamp"] = tuple(d["clamp"])
        return cls(**d)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class MetricsLog:
    """Evaluation records: one row per (epoch, split)."""

    columns = ("epoch", "split", "loss", "pcc_mean", "seconds")

    def __init__(self, seed=None, config_hash=None):
        self.seed = seed
        self.config_hash = config_hash
        self.records = []

    def add(self, epoch, split, loss, pcc_mean=None, seconds=None):
        for r in self.records:
            if r["split"] == split and r["epoch"] >= epoch:
                raise ContractError(f"epoch {epoch} for split {split} is not after epoch {r['epoch']}")
        self.records.append({"epoch": int(epoch), "split": split, "loss": float(loss),
                             "pcc_mean": None if pcc_mean is None else float(pcc_mean),
                             "seconds": None if seconds is None else float(seconds)})

    def series(self, split, key="loss"):
        rows = [r for r in self.records if r["split"] == split]
        return np.array([r["epoch"] for r in rows]), np.array([r[key] for r in rows], dtype=float)

    def last(self, split):
        rows = [r for r in self.records if r["split"] == split]
        return rows[-1] if rows else None

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.records:
            w.writerow([r["epoch"], r["split"], repr(r["loss"]),
                        "" if r["pcc_mean"] is None else repr(r["pcc_mean"]),
                        "" if r["seconds"] is None else f"{r['seconds']:.3f}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as f:
                f.write(text)
        return text


def _as_inputs(X, shape):
    X = X.inputs() if hasattr(X, "inputs") else np.asarray(X, dtype=np.float64)
    if int(np.prod(X.shape[1:])) != int(np.prod(shape)):
        raise ShapeError(f"data items of shape {X.shape[1:]} do not fit network shape {shape}")
    X = X.reshape((X.shape[0],) + tuple(shape))
    if not np.all(np.isfinite(X)):
        raise ConfigError("training data contains non-finite values")
    return X


def _batches(cfg, epoch, N):
    order = Rng(cfg.seed).child(_SHUFFLE, epoch).permutation(N)
    return [order[i:i + cfg.batch_size] for i in range(0, N, cfg.batch_size)]


def shuffle_order(cfg, epoch, N):
    """The sample order used in ``epoch``: a pure function of (seed, epoch)."""
    return np.concatenate(_batches(cfg, epoch, N)) if N else np.empty(0, dtype=np.int64)


def _should_eval(cfg, epoch):
    if epoch == cfg.epochs:
        return True
    return cfg.eval_every > 0 and epoch % cfg.eval_every == 0


def _check(loss, epoch, batch):
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {batch}", epoch=epoch, batch=batch)


def _quiet_overflow():
    # divergence is reported through DivergenceError, not numpy warnings
    return np.errstate(over="ignore", invalid="ignore")


def _mean_loss(kind, out, target):
    return get_loss(kind)(out, target, "mean")[0]


def _chunked_forward(net, X, chunk=512):
    return np.concatenate([net(X[i:i + chunk]) for i in range(0, len(X), chunk)]) if len(X) else X


def _score(Z_true, Z):
    return None if Z_true is None else representation_score(Z_true, Z).mean


class _Clock:
    def __init__(self, enabled):
        self.enabled = enabled
        self.t0 = time.perf_counter()

    def __call__(self):
        return time.perf_counter() - self.t0 if self.enabled else None


def train_decoder(train_X, decoder, cfg, rng=None, Z_true=None, table=None, log=None, optimizer=None):
    """Fit decoder weights and one representation per sample jointly.

    Each mini-batch does one forward/backward pass; the weight optimizer steps
    on the weight gradients and the batch's latent rows take one momentum-SGD
    step on their input gradients. Returns ``(decoder, latent_table, log)``.
    Pass ``optimizer`` to keep a handle on the weight optimizer's state.
    """
    if decoder.frozen:
        raise ContractError("train_decoder needs a trainable decoder")
    X = _as_inputs(train_X, decoder.output_shape)
    if Z_true is None and hasattr(train_X, "Z_true"):
        Z_true = train_X.Z_true
    N, m = X.shape[0], decoder.input_shape[0]
    rng = rng or Rng(cfg.seed).child(_LATENT_INIT)
    if table is None:
        table = init_latents(N, m, rng, cfg.latent_init_scale, cfg.latent_lr, cfg.latent_momentum)
    elif table.Z.shape != (N, m):
        raise ShapeError(f"latent table {table.Z.shape} does not match data ({N}, {m})")
    opt = optimizer or make_optimizer(cfg.weight_optimizer, decoder.parameters(), cfg.weight_lr,
                                      cfg.weight_decay, cfg.weight_momentum)
    loss_fn = get_loss(cfg.loss)
    log = log or MetricsLog(cfg.seed, cfg.config_hash())
    with _quiet_overflow():
        _decoder_epochs(X, decoder, table, opt, loss_fn, cfg, log, Z_true)
    return decoder, table, log


def _decoder_epochs(X, decoder, table, opt, loss_fn, cfg, log, Z_true):
    clock = _Clock(cfg.record_time)
    N = X.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        for b, ids in enumerate(_batches(cfg, epoch, N)):
            out, cache = decoder.forward(table.Z[ids])
            loss, grad = loss_fn(out, X[ids], cfg.reduction)
            _check(loss, epoch, b)
            grads, dz = decoder.backward(cache, grad)
            opt.step(grads)
            latent_step(table, ids, dz)
        if _should_eval(cfg, epoch):
            train_loss = _mean_loss(cfg.loss, _chunked_forward(decoder, table.Z), X)
            _check(train_loss, epoch, None)
            log.add(epoch, "train", train_loss, _score(Z_true, table.Z), clock())


def encoder_path_parameters(encoder, decoder):
    """Parameters the encoder trainers optimize, in the order their optimizer expects."""
    return encoder.parameters() + ([] if decoder.frozen else decoder.parameters())


def _train_encoder_path(X, encoder, decoder, cfg, log, noisy, Z_true=None, optimizer=None):
    # shared loop for the autoencoder and the frozen-decoder encoder variants
    opt = optimizer or make_optimizer(cfg.weight_optimizer, encoder_path_parameters(encoder, decoder),
                                      cfg.weight_lr, cfg.weight_decay, cfg.weight_momentum)
    with _quiet_overflow():
        _encoder_epochs(X, encoder, decoder, opt, cfg, log, noisy, Z_true)


def _encoder_epochs(X, encoder, decoder, opt, cfg, log, noisy, Z_true):
    loss_fn = get_loss(cfg.loss)
    clock = _Clock(cfg.record_time)
    lo, hi = cfg.clamp if cfg.clamp is not None else (None, None)
    N = X.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        if noisy:
            Xe = X + Rng(cfg.seed).child(_NOISE, epoch).normal(0.0, cfg.noise_sd, X.shape)
            if cfg.clamp is not None:
                Xe = np.clip(Xe, lo, hi)
        else:
            Xe = X
        for b, ids in enumerate(_batches(cfg, epoch, N)):
            xb = Xe[ids]
            z, ecache = encoder.forward(xb)
            out, dcache = decoder.forward(z)
            loss, grad = loss_fn(out, xb, cfg.reduction)
            _check(loss, epoch, b)
            if decoder.frozen:
                _, dz = decoder.backward(dcache, grad, param_grads=False)
                dgrads = []
            else:
                dgrads, dz = decoder.backward(dcache, grad)
            egrads, _ = encoder.backward(ecache, dz)
            opt.step(egrads + dgrads)
        if _should_eval(cfg, epoch):
            Z = _chunked_forward(encoder, X)
            train_loss = _mean_loss(cfg.loss, _chunked_forward(decoder, Z), X)
            _check(train_loss, epoch, None)
            log.add(epoch, "train", train_loss, _score(Z_true, Z), clock())


def _check_pair(encoder, decoder):
    if encoder.output_shape != decoder.input_shape:
        raise ShapeError(f"encoder output {encoder.output_shape} != decoder input {decoder.input_shape}")


def train_autoencoder(train_X, encoder, decoder, cfg, Z_true=None, log=None, optimizer=None):
    """Plain joint training of encoder and decoder on L(x, g(f(x)))."""
    _check_pair(encoder, decoder)
    if decoder.frozen:
        raise ContractError("train_autoencoder trains both halves; unfreeze the decoder")
    X = _as_inputs(train_X, encoder.input_shape)
    if Z_true is None and hasattr(train_X, "Z_true"):
        Z_true = train_X.Z_true
    log = log or MetricsLog(cfg.seed, cfg.config_hash())
    _train_encoder_path(X, encoder, decoder, cfg, log, noisy=False, Z_true=Z_true, optimizer=optimizer)
    return encoder, decoder, log


def train_encoder_on_frozen_decoder(train_X, latent_table, encoder, decoder, cfg, Z_true=None, log=None, optimizer=None):
    """Train only the encoder through a frozen, pre-trained decoder."""
    _check_pair(encoder, decoder)
    if not decoder.frozen:
        raise ContractError("decoder must be frozen")
    X = _as_inputs(train_X, encoder.input_shape)
    if latent_table is not None and latent_table.Z.shape[0] != X.shape[0]:
        raise ShapeError("latent table rows do not match the training samples")
    if Z_true is None and hasattr(train_X, "Z_true"):
        Z_true = train_X.Z_true
    log = log or MetricsLog(cfg.seed, cfg.config_hash())
    _train_encoder_path(X, encoder, decoder, cfg, log, noisy=False, Z_true=Z_true, optimizer=optimizer)
    return encoder, log


def train_denoising_encoder(train_X, encoder, decoder, cfg, Z_true=None, log=None, optimizer=None):
    """Encoder through a frozen decoder on freshly noised inputs each epoch.

    The noisy sample is both input and target. Clamping to ``cfg.clamp`` (if
    set) happens after noising.
    """
    _check_pair(encoder, decoder)
    if not decoder.frozen:
        raise ContractError("decoder must be frozen")
    if cfg.noise_sd <= 0:
        raise ConfigError("the denoising trainer needs noise_sd > 0")
    X = _as_inputs(train_X, encoder.input_shape)
    if Z_true is None and hasattr(train_X, "Z_true"):
        Z_true = train_X.Z_true
    log = log or MetricsLog(cfg.seed, cfg.config_hash())
    _train_encoder_path(X, encoder, decoder, cfg, log, noisy=True, Z_true=Z_true, optimizer=optimizer)
    return encoder, log


def evaluate(model, test_X, cfg, Z_true=None, rng=None):
    """Mean test loss (and PCC when true factors are known).

    ``model`` is a decoder :class:`Network` (representations are inferred by
    gradient descent with the decoder frozen) or an ``(encoder, decoder)``
    pair (a plain forward pass). Returns a dict with ``loss``, ``pcc_mean``,
    ``per_dim_pcc`` and the representations ``Z``.
    """
    if Z_true is None and hasattr(test_X, "Z_true"):
        Z_true = test_X.Z_true
    if isinstance(model, tuple):
        encoder, decoder = model
        X = _as_inputs(test_X, encoder.input_shape)
        Z = _chunked_forward(encoder, X)
    else:
        decoder = model
        X = _as_inputs(test_X, decoder.output_shape)
        was_frozen = decoder.frozen
        decoder.freeze()
        try:
            Z, _ = infer_latents(decoder, X, cfg.loss, cfg.infer_steps, cfg.infer_lr or cfg.latent_lr,
                                 cfg.infer_momentum, rng or Rng(cfg.seed).child(_INFER),
                                 cfg.latent_init_scale, cfg.infer_restarts, cfg.reduction)
        finally:
            if not was_frozen:
                decoder.unfreeze()
    loss = _mean_loss(cfg.loss, _chunked_forward(decoder, Z), X)
    result = {"loss": loss, "Z": Z, "pcc_mean": None, "per_dim_pcc": None}
    if Z_true is not None:
        score = representation_score(Z_true, Z)
        result["pcc_mean"] = score.mean
        result["per_dim_pcc"] = score.per_dim
    return result
