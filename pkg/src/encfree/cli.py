"""Command-line runner.

    encfree [COMMAND] --config run.yaml [--set key=value ...] [--out DIR] [--seed N]
    encfree emit-curves RUN_DIR

Every run writes into ``--out`` (default ``config.out``, else ``runs/<command>``).
Artifacts are staged in a sibling directory and moved into place only when
the run succeeds, so a failed run leaves nothing behind.

Exit codes: 0 success, 1 invalid config or arguments, 2 missing or unreadable
input file, 3 training or inference diverged.
"""
import argparse
import csv
import json
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import architectures as arch
from .analysis import load_report
from .autonet import Network
from .checkpoint import export_latents_csv, load_checkpoint, save_checkpoint
from .config import COMMANDS, dump_config, load_config, train_config
from .data import (SimConfig, export_csv, load_dataset, load_idx, save_dataset, simulate, subsample)
from .errors import ConfigError, DivergenceError, EncFreeError, FormatError, ShapeError
from .latents import infer_latents
from .numkit import Rng
from .optimize import make_optimizer
from .trainers import (encoder_path_parameters, evaluate, train_autoencoder, train_decoder,
                       train_denoising_encoder, train_encoder_on_frozen_decoder)

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_DIVERGED = 0, 1, 2, 3

# Rng(seed) child keys for weight init; trainer streams use 0..3
_DECODER_INIT, _ENCODER_INIT = 100, 101


class InputFileError(EncFreeError):
    """An input path is missing or unreadable (exit code 2)."""


def _need_file(path, what):
    if not path or not os.path.isfile(path):
        raise InputFileError(f"{what}: no such file: {path}")
    return path


# data -----------------------------------------------------------------------

def _sim_config(cfg, seed):
    s = dict(cfg["data"]["sim"])
    s["seed"] = seed if s["seed"] is None else s["seed"]
    s["weight_range"] = tuple(s["weight_range"])
    return SimConfig(**s)


def load_data(cfg, seed):
    """Return ``(train, test)``; ``test`` may be None."""
    data = cfg["data"]
    if data["kind"] == "sim":
        return simulate(_sim_config(cfg, seed))
    if data["kind"] == "file":
        f = data["file"]
        train = load_dataset(_need_file(f["train"], "data.file.train")) if f["train"] else None
        test = load_dataset(_need_file(f["test"], "data.file.test")) if f["test"] else None
        return train, test
    idx = data["idx"]
    labels = _need_file(idx["labels"], "data.idx.labels") if idx["labels"] else None
    ds = load_idx(_need_file(idx["images"], "data.idx.images"), labels)
    split_seed = seed if idx["seed"] is None else idx["seed"]
    size = idx["train_size"]
    if idx["balanced"]:
        if ds.labels is None:
            raise ConfigError("data.idx.balanced needs data.idx.labels")
        n_labels = np.unique(ds.labels).size
        if size % n_labels:
            raise ConfigError(f"data.idx.train_size {size} is not a multiple of the {n_labels} labels")
        train = subsample(ds, size // n_labels, split_seed, balanced=True, stream=0)
    else:
        train = subsample(ds, size, split_seed, stream=0)
    test = None
    if idx["test_size"]:
        test = subsample(ds, idx["test_size"], split_seed, exclude_ids=train.sample_ids, stream=1)
    return train, test


# models ---------------------------------------------------------------------

def build_models(cfg, train, seed):
    """Fresh ``(decoder, encoder)`` for the configured preset; encoder may be None."""
    model = cfg["model"]
    rd, re = Rng(seed).child(_DECODER_INIT), Rng(seed).child(_ENCODER_INIT)
    dtype = model["dtype"]
    item_shape = tuple(train.item_shape)
    n = int(np.prod(item_shape))
    preset = model["preset"]
    if preset == "mnist":
        if item_shape != arch.MNIST_SHAPE:
            raise ShapeError(f"model.preset mnist needs 1x28x28 items, data has {item_shape}")
        return (arch.mnist_decoder(rd, model["m"], model["channels"], dtype),
                arch.mnist_encoder(re, model["m"], model["channels"], dtype))
    if preset == "sim":
        if train.A is None:
            raise ConfigError("model.preset sim needs a dataset that carries its adjacency matrix")
        m = train.A.shape[1]
        return arch.sim_decoder(rd, train.A, dtype), arch.sim_encoder(re, n, m, model["slope"], dtype)
    if preset == "linear":
        m = model["m"]
        dec = arch.linear_decoder(rd, m, n, model["bias"]).astype(dtype)
        return dec, arch.linear_encoder(re, n, m, model["bias"]).astype(dtype)
    dec = Network.from_specs(model["decoder"], (model["m"],), rd, dtype)
    enc = Network.from_specs(model["encoder"], item_shape, re, dtype) if model["encoder"] else None
    return dec, enc


def _fresh_encoder(cfg, train, seed, decoder):
    _, enc = build_models(cfg, train, seed)
    if enc is None:
        raise ConfigError("this command needs an encoder architecture (model.encoder)")
    if enc.output_shape != decoder.input_shape:
        raise ShapeError(f"encoder output {enc.output_shape} does not match the checkpoint decoder "
                         f"input {decoder.input_shape}")
    return enc


def _optimizer(tcfg, params):
    return make_optimizer(tcfg.weight_optimizer, params, tcfg.weight_lr, tcfg.weight_decay, tcfg.weight_momentum)


# outputs --------------------------------------------------------------------

def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _final(log, split):
    r = log.last(split)
    return None if r is None else {"epoch": r["epoch"], "loss": r["loss"], "pcc_mean": r["pcc_mean"]}


def _latents_out(path, parts):
    # parts: list of (split, Z, sample_ids)
    parts = [p for p in parts if p is not None]
    Z = np.concatenate([p[1] for p in parts])
    ids = np.concatenate([p[2] for p in parts])
    split = [p[0] for p in parts for _ in range(len(p[2]))]
    export_latents_csv(path, Z, ids, split)


# commands -------------------------------------------------------------------

def cmd_simulate(cfg, seed, out):
    if cfg["data"]["kind"] != "sim":
        raise ConfigError("simulate needs data.kind: sim")
    sim = _sim_config(cfg, seed)
    train, test = simulate(sim)
    save_dataset(train, os.path.join(out, "train.bin"))
    save_dataset(test, os.path.join(out, "test.bin"))
    export_csv(train, os.path.join(out, "train.csv"))
    export_csv(test, os.path.join(out, "test.csv"))
    return {"sim": sim.to_dict(), "N_train": len(train), "N_test": len(test),
            "connections": int(train.A.sum()), "var_X": float(train.X.var()) if len(train) else None}


def cmd_train_decoder(cfg, seed, out):
    tcfg = train_config(cfg, seed)
    train, test = load_data(cfg, seed)
    decoder, encoder = build_models(cfg, train, seed)
    opt = _optimizer(tcfg, decoder.parameters())
    decoder, table, log = train_decoder(train, decoder, tcfg, optimizer=opt)
    table.sample_ids = train.sample_ids.copy()
    test_part = None
    if test is not None and len(test):
        ev = evaluate(decoder, test, tcfg)
        log.add(tcfg.epochs, "test", ev["loss"], ev["pcc_mean"])
        test_part = ("test", ev["Z"], test.sample_ids)
    log.to_csv(os.path.join(out, "metrics.csv"))
    save_checkpoint(os.path.join(out, "checkpoint.bin"), {"decoder": decoder}, latents=table,
                    optimizers={"decoder": opt}, meta={"command": cfg["command"], "seed": seed})
    _latents_out(os.path.join(out, "latents.csv"), [("train", table.Z, train.sample_ids), test_part])
    return {"param_counts": {"decoder": decoder.param_count(),
                             "encoder": encoder.param_count() if encoder else None},
            "load": load_report(decoder, encoder, len(train)).to_dict(),
            "final": {"train": _final(log, "train"), "test": _final(log, "test")}}


def _encoder_run(cfg, seed, out, train, test, encoder, decoder, log, opt, tcfg, nets):
    if test is not None and len(test):
        ev = evaluate((encoder, decoder), test, tcfg)
        log.add(tcfg.epochs, "test", ev["loss"], ev["pcc_mean"])
    log.to_csv(os.path.join(out, "metrics.csv"))
    save_checkpoint(os.path.join(out, "checkpoint.bin"), nets, optimizers={"encoder_path": opt},
                    meta={"command": cfg["command"], "seed": seed})
    parts = [("train", encoder(train.inputs()), train.sample_ids)]
    if test is not None and len(test):
        parts.append(("test", encoder(test.inputs()), test.sample_ids))
    _latents_out(os.path.join(out, "latents.csv"), parts)
    return {"param_counts": {"decoder": decoder.param_count(trainable_only=False),
                             "encoder": encoder.param_count()},
            "load": load_report(decoder, encoder, len(train)).to_dict(),
            "final": {"train": _final(log, "train"), "test": _final(log, "test")}}


def cmd_train_autoencoder(cfg, seed, out):
    tcfg = train_config(cfg, seed)
    train, test = load_data(cfg, seed)
    decoder, encoder = build_models(cfg, train, seed)
    if encoder is None:
        raise ConfigError("train-autoencoder needs an encoder architecture (model.encoder)")
    opt = _optimizer(tcfg, encoder_path_parameters(encoder, decoder))
    encoder, decoder, log = train_autoencoder(train, encoder, decoder, tcfg, optimizer=opt)
    return _encoder_run(cfg, seed, out, train, test, encoder, decoder, log, opt, tcfg,
                        {"encoder": encoder, "decoder": decoder})


def _pretrained_decoder(cfg):
    ck = load_checkpoint(_need_file(cfg["checkpoint"], "checkpoint"))
    if "decoder" not in ck.networks:
        raise ConfigError(f"checkpoint {cfg['checkpoint']} holds no decoder")
    return ck, ck.networks["decoder"].freeze()


def _cmd_frozen(cfg, seed, out, noisy):
    tcfg = train_config(cfg, seed)
    ck, decoder = _pretrained_decoder(cfg)
    train, test = load_data(cfg, seed)
    encoder = _fresh_encoder(cfg, train, seed, decoder)
    before = decoder.checksum()
    opt = _optimizer(tcfg, encoder_path_parameters(encoder, decoder))
    if noisy:
        encoder, log = train_denoising_encoder(train, encoder, decoder, tcfg, optimizer=opt)
    else:
        encoder, log = train_encoder_on_frozen_decoder(train, ck.latents, encoder, decoder, tcfg, optimizer=opt)
    if decoder.checksum() != before:
        raise RuntimeError("frozen decoder changed during encoder training")
    summary = _encoder_run(cfg, seed, out, train, test, encoder, decoder, log, opt, tcfg,
                           {"encoder": encoder, "decoder": decoder})
    summary["decoder_checksum"] = before
    return summary


def cmd_train_encoder_frozen(cfg, seed, out):
    return _cmd_frozen(cfg, seed, out, noisy=False)


def cmd_train_denoising_encoder(cfg, seed, out):
    return _cmd_frozen(cfg, seed, out, noisy=True)


def _eval_split(cfg, seed):
    train, test = load_data(cfg, seed)
    if test is not None and len(test):
        return "test", test
    if train is None:
        raise ConfigError("no data to evaluate (set data.file.test or data.file.train)")
    return "train", train


def cmd_infer(cfg, seed, out):
    tcfg = train_config(cfg, seed)
    _, decoder = _pretrained_decoder(cfg)
    split, ds = _eval_split(cfg, seed)
    X = ds.inputs().reshape((len(ds),) + decoder.output_shape)
    Z, losses = infer_latents(decoder, X, tcfg.loss, tcfg.infer_steps, tcfg.infer_lr or tcfg.latent_lr,
                              tcfg.infer_momentum, Rng(seed).child(3), tcfg.latent_init_scale,
                              tcfg.infer_restarts, tcfg.reduction)
    _latents_out(os.path.join(out, "latents.csv"), [(split, Z, ds.sample_ids)])
    return {"split": split, "N": len(ds), "mean_loss": float(losses.mean()),
            "per_sample_loss": {"min": float(losses.min()), "max": float(losses.max())}}


def cmd_eval(cfg, seed, out):
    tcfg = train_config(cfg, seed)
    ck = load_checkpoint(_need_file(cfg["checkpoint"], "checkpoint"))
    split, ds = _eval_split(cfg, seed)
    if "decoder" not in ck.networks:
        raise ConfigError(f"checkpoint {cfg['checkpoint']} holds no decoder")
    decoder = ck.networks["decoder"]
    model = (ck.networks["encoder"], decoder) if "encoder" in ck.networks else decoder
    ev = evaluate(model, ds, tcfg)
    _latents_out(os.path.join(out, "latents.csv"), [(split, ev["Z"], ds.sample_ids)])
    return {"split": split, "N": len(ds), "model": "encoder+decoder" if isinstance(model, tuple) else "decoder",
            "loss": ev["loss"], "pcc_mean": ev["pcc_mean"]}


def cmd_analyze_load(cfg, seed, out):
    model = cfg["model"]
    ns = cfg["analyze"]["N"]
    if model["preset"] == "sim":
        sim = _sim_config(cfg, seed)
        sim.N_train = sim.N_test = 0
        graph, _ = simulate(sim)
        decoder = Network.from_specs(arch.sim_decoder_specs(graph.A), (sim.m,))
        encoder = Network.from_specs(arch.sim_encoder_specs(sim.n, sim.m, model["slope"]), (sim.n,))
        ns = ns or [cfg["data"]["sim"]["N_train"]]
    elif model["preset"] == "mnist":
        decoder = Network.from_specs(arch.mnist_decoder_specs(model["m"], model["channels"]), (model["m"],))
        encoder = Network.from_specs(arch.mnist_encoder_specs(model["m"], model["channels"]), arch.MNIST_SHAPE)
        ns = ns or [cfg["data"]["idx"]["train_size"]]
    else:
        train, _ = load_data(cfg, seed)
        decoder, encoder = build_models(cfg, train, seed)
        ns = ns or [len(train)]
    reports = [load_report(decoder, encoder, n) for n in ns]
    for r in reports:
        print(r.table())
        print()
    return {"loads": [r.to_dict() for r in reports]}


HANDLERS = {
    "simulate": cmd_simulate,
    "train-decoder": cmd_train_decoder,
    "train-autoencoder": cmd_train_autoencoder,
    "train-encoder-frozen": cmd_train_encoder_frozen,
    "train-denoising-encoder": cmd_train_denoising_encoder,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "analyze-load": cmd_analyze_load,
}


def run_one(cfg, seed, out):
    """Run the configured command for one seed, writing into the existing directory ``out``."""
    t0 = time.perf_counter()
    echo = dict(cfg, seed=seed, seeds=None, out=None)
    with open(os.path.join(out, "config.echo"), "w") as f:
        f.write(dump_config(echo))
    result = HANDLERS[cfg["command"]](cfg, seed, out)
    summary = {"command": cfg["command"], "seed": seed,
               "config_hash": train_config(cfg, seed).config_hash(), "config": echo, **result,
               "wall_seconds": round(time.perf_counter() - t0, 3)}
    _write_json(os.path.join(out, "summary.json"), summary)
    return summary


def _run_seed_dir(args):
    cfg, seed, path = args
    os.makedirs(path)
    return run_one(cfg, seed, path)


def run(cfg):
    """Run ``cfg`` (single seed or a seed list) with staged, all-or-nothing outputs."""
    out = cfg["out"] or os.path.join("runs", cfg["command"])
    parent = os.path.dirname(os.path.abspath(out))
    os.makedirs(parent, exist_ok=True)
    stage = tempfile.mkdtemp(prefix=".encfree-stage-", dir=parent)
    try:
        if cfg["seeds"]:
            jobs = [(cfg, s, os.path.join(stage, f"seed_{s}")) for s in cfg["seeds"]]
            if cfg["parallel"] and len(jobs) > 1:
                with ProcessPoolExecutor() as pool:
                    summaries = list(pool.map(_run_seed_dir, jobs))
            else:
                summaries = [_run_seed_dir(j) for j in jobs]
        else:
            summaries = [run_one(cfg, cfg["seed"], stage)]
        os.makedirs(out, exist_ok=True)
        for name in sorted(os.listdir(stage)):
            dst = os.path.join(out, name)
            if os.path.isdir(dst):
                shutil.rmtree(dst)
            os.replace(os.path.join(stage, name), dst)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return out, summaries


# curves ---------------------------------------------------------------------

def _read_metrics(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise FormatError(f"{path}: metrics file has no records")
    return rows


def _seed_of(metrics_path):
    summary = os.path.join(os.path.dirname(metrics_path), "summary.json")
    if os.path.isfile(summary):
        with open(summary) as f:
            return json.load(f).get("seed")
    return None


def emit_curves(run_dir, out=None):
    """Write tidy ``curves.csv`` (series, x, y, seed) and ``curves_summary.csv``
    (series, x, mean, sd, n) aggregating across seeds; returns their paths.

    Series are ``<split>_loss`` and ``<split>_pcc``; ``sd`` is the sample
    standard deviation (n - 1), left empty when only one seed has the point.
    """
    found = []
    for root, _, files in os.walk(run_dir):
        if "metrics.csv" in files and not os.path.basename(root).startswith(".encfree-stage-"):
            found.append(os.path.join(root, "metrics.csv"))
    if not found:
        raise InputFileError(f"no metrics.csv under {run_dir}")
    tidy = []
    for i, path in enumerate(sorted(found)):
        seed = _seed_of(path)
        seed = i if seed is None else seed
        for r in _read_metrics(path):
            x = int(r["epoch"])
            tidy.append((f"{r['split']}_loss", x, float(r["loss"]), seed))
            if r["pcc_mean"] not in ("", None):
                tidy.append((f"{r['split']}_pcc", x, float(r["pcc_mean"]), seed))
    tidy.sort(key=lambda t: (t[0], t[1], t[3]))
    out = out or run_dir
    os.makedirs(out, exist_ok=True)
    curves = os.path.join(out, "curves.csv")
    with open(curves, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["series", "x", "y", "seed"])
        for s, x, y, seed in tidy:
            w.writerow([s, x, repr(y), seed])
    groups = {}
    for s, x, y, _ in tidy:
        groups.setdefault((s, x), []).append(y)
    summary = os.path.join(out, "curves_summary.csv")
    with open(summary, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["series", "x", "mean", "sd", "n"])
        for (s, x), ys in sorted(groups.items()):
            ys = np.array(ys)
            sd = repr(float(ys.std(ddof=1))) if ys.size > 1 else ""
            w.writerow([s, x, repr(float(ys.mean())), sd, ys.size])
    return curves, summary


# entry point ----------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="encfree", description="Encoder-free representation learning runs.")
    p.add_argument("command", nargs="?", choices=COMMANDS + ("emit-curves",),
                   help="overrides the config's command")
    p.add_argument("run_dir", nargs="?", help="run directory (emit-curves only)")
    p.add_argument("--config", help="YAML run config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a dot-path config key; repeatable")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="run seed (replaces any seed list)")
    return p


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.command == "emit-curves":
            if not args.run_dir:
                raise ConfigError("emit-curves needs a run directory")
            if not os.path.isdir(args.run_dir):
                raise InputFileError(f"no such run directory: {args.run_dir}")
            paths = emit_curves(args.run_dir, args.out)
            print("wrote", *paths)
            return EXIT_OK
        if args.config is not None:
            _need_file(args.config, "--config")
        overrides = list(args.overrides)
        if args.command:
            overrides.insert(0, f"command={args.command}")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be a non-negative integer")
        cfg = load_config(args.config, overrides, seed=args.seed, out=args.out)
        out, summaries = run(cfg)
        for s in summaries:
            print(f"{s['command']} seed={s['seed']} -> {out} ({s['wall_seconds']:.1f}s)")
        return EXIT_OK
    except (InputFileError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FormatError as exc:
        print(f"error: unreadable input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except DivergenceError as exc:
        print(f"error: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except EncFreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
