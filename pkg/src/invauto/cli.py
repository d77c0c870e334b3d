"""Command-line entry point.

Commands: train-auto, diagnose, train-gan, convert, evaluate. Every run
writes its artifacts under --out and records them in manifest.csv there.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import data as dio
from . import diag, tensor
from .configs import ARCH_IDS, MODEL_KINDS, build_model
from .errors import ConfigError, InvAutoError
from .optim import Adam
from .training import TrainConfig, train_reconstruction, train_translator
from .translator import (build_translator, cycle_roundtrip_l1,
                         evaluate_autoencoder_proxy, evaluate_l1_paired,
                         generator_config, train_proxy_scorer, translate)

DEFAULTS = {
    "model": "invauto",
    "arch": "mlp",
    "data": "digits",
    "epochs": 10,
    "iterations": 2000,
    "batch": 128,
    "seed": 0,
    "lambda": 10.0,
    "lr": 2e-4,
    "beta1": 0.5,
    "beta2": 0.999,
    "weight_decay": 1e-6,
    "gan_config": "desk",
    "out": "out",
}


class Manifest:
    def __init__(self, out_dir):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.entries = []

    def path(self, name):
        self.entries.append(name)
        return os.path.join(self.out_dir, name)

    def write(self):
        diag.export_csv(os.path.join(self.out_dir, "manifest.csv"),
                        ["artifact"], [[e] for e in self.entries])


def _load_recon_data(spec: str, arch: str, seed: int):
    if spec == "digits":
        train, test = dio.load_digits_dataset(seed=seed)
    elif spec.startswith("mnist:"):
        folder = spec.split(":", 1)[1]
        train = dio.load_idx(os.path.join(folder, "train-images-idx3-ubyte"))
        test = dio.load_idx(os.path.join(folder, "t10k-images-idx3-ubyte"),
                            split="test")
        train.items = train.items[:, None, :, :]
        test.items = test.items[:, None, :, :]
    elif spec.startswith("folder:"):
        ds = dio.load_image_folder(spec.split(":", 1)[1])
        n_test = max(1, len(ds.items) // 5)
        train = dio.Dataset(ds.items[n_test:], "train", ds.normalization)
        test = dio.Dataset(ds.items[:n_test], "test", ds.normalization)
    else:
        raise ConfigError(f"unknown dataset spec {spec!r}")
    x_train, x_test = train.items, test.items
    if arch == "mlp":
        x_train = x_train.reshape(len(x_train), -1)
        x_test = x_test.reshape(len(x_test), -1)
        shape = (x_train.shape[1],)
    else:
        shape = x_train.shape[1:]
    return x_train, x_test, shape


def _load_domains(spec: str, size: int, seed: int, n: int = 128):
    if spec.startswith("synth-"):
        kind = spec[len("synth-"):]
        return dio.make_synthetic_domains(kind, n, size, seed)
    if spec.startswith("folders:"):
        dir_a, dir_b = spec.split(":", 1)[1].split(",")
        ds_a = dio.load_image_folder(dir_a)
        ds_b = dio.load_image_folder(dir_b)
        return ds_a, ds_b, None
    raise ConfigError(f"unknown domain spec {spec!r}")


def _train_cfg(opts) -> TrainConfig:
    return TrainConfig(epochs=opts["epochs"], iterations=opts["iterations"],
                       batch_size=opts["batch"], seed=opts["seed"],
                       lr=opts["lr"], beta1=opts["beta1"], beta2=opts["beta2"],
                       weight_decay=opts["weight_decay"],
                       lambda_cycle=opts["lambda"])


def cmd_train_auto(opts):
    man = Manifest(opts["out"])
    x_train, x_test, shape = _load_recon_data(opts["data"], opts["arch"], opts["seed"])
    model = build_model(opts["model"], opts["arch"], shape, opts["seed"])
    cfg = _train_cfg(opts)
    opt = Adam(model.parameters(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
               weight_decay=cfg.weight_decay)
    history = train_reconstruction(model, x_train, x_test, cfg, optimizer=opt)
    diag.export_csv(man.path("loss_curve.csv"),
                    ["epoch", "train_loss", "test_mse"],
                    list(zip(history["epoch"], history["train_loss"],
                             history["test_mse"])))
    dio.save_checkpoint(model, man.path("model.ckpt"),
                        extra=opt.state_tensors())
    man.write()
    return 0


def _rebuild_recon_model(opts):
    _, x_test, shape = _load_recon_data(opts["data"], opts["arch"], opts["seed"])
    model = build_model(opts["model"], opts["arch"], shape, opts["seed"])
    dio.load_checkpoint(opts["checkpoint"], model)
    return model, shape


def cmd_diagnose(opts):
    man = Manifest(opts["out"])
    model, shape = _rebuild_recon_model(opts)
    net = model.diag_network
    E = diag.materialize_encoder(net, shape)
    D = diag.materialize_decoder(net, shape)
    stats = diag.identity_deviation(E, D)
    cmean, cstd, hist = diag.row_cosine_stats(E)
    nmean, nstd = diag.row_norm_stats(E)
    diag.export_heatmap(D @ E, man.path("de_heatmap.pgm"))
    diag.export_stats_csv(stats, man.path("deviation_stats.csv"))
    diag.export_histogram_csv(hist, man.path("cosine_histogram.csv"))
    diag.export_csv(man.path("row_stats.csv"),
                    ["stat", "value"],
                    [("cosine_mean", cmean), ("cosine_std", cstd),
                     ("norm_mean", nmean), ("norm_std", nstd)])
    man.write()
    print(f"mse_total(DE-I) = {stats.mse_total:.6g}")
    return 0


def cmd_train_gan(opts):
    man = Manifest(opts["out"])
    gcfg = generator_config(opts["gan_config"])
    ds_a, ds_b, _ = _load_domains(opts["data"], gcfg.image_size, opts["seed"])
    model = build_translator(gcfg, seed=opts["seed"])
    cfg = _train_cfg(opts)
    history = train_translator(model, ds_a.items, ds_b.items, cfg)
    diag.export_csv(man.path("gan_curves.csv"),
                    ["iteration", "d_loss", "g_adv", "cycle"],
                    list(zip(history["iteration"], history["d_loss"],
                             history["g_adv"], history["cycle"])))
    dio.save_checkpoint(model, man.path("translator.ckpt"))
    man.write()
    return 0


def _load_translator(opts):
    gcfg = generator_config(opts["gan_config"])
    model = build_translator(gcfg, seed=opts["seed"])
    dio.load_checkpoint(opts["checkpoint"], model)
    return model, gcfg


def cmd_convert(opts):
    man = Manifest(opts["out"])
    model, _ = _load_translator(opts)
    ds = dio.load_image_folder(opts["in_folder"])
    workers = int(os.environ.get("INVAUTO_THREADS", "1"))

    def one(idx_img):
        i, img = idx_img
        out = translate(model, img, opts["direction"])
        dio.save_image(out, man.path(f"converted_{i:05d}.ppm"
                                     if img.shape[0] == 3 else
                                     f"converted_{i:05d}.pgm"))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, enumerate(ds.items)))
    else:
        for pair in enumerate(ds.items):
            one(pair)
    man.write()
    return 0


def cmd_evaluate(opts):
    man = Manifest(opts["out"])
    model, gcfg = _load_translator(opts)
    ds_a, ds_b, pairs = _load_domains(opts["data"], gcfg.image_size, opts["seed"])
    rows = []
    if pairs is not None:
        rows.append(("l1_paired_AB", evaluate_l1_paired(model, pairs, "AB")))
        rows.append(("l1_paired_BA", evaluate_l1_paired(model, pairs, "BA")))
    rows.append(("cycle_roundtrip_ABA",
                 cycle_roundtrip_l1(model, ds_a.items[:32], "AB")))
    rows.append(("cycle_roundtrip_BAB",
                 cycle_roundtrip_l1(model, ds_b.items[:32], "BA")))
    proxy_cfg = TrainConfig(epochs=opts["epochs"], batch_size=min(opts["batch"], 32),
                            seed=opts["seed"])
    scorer = train_proxy_scorer(ds_a.items, ds_b.items, ds_a.items.shape[1:],
                                proxy_cfg, seed=opts["seed"])
    conv_b = np.stack([translate(model, img, "AB") for img in ds_a.items[:32]])
    conv_a = np.stack([translate(model, img, "BA") for img in ds_b.items[:32]])
    rows.append(("proxy_score_AB", evaluate_autoencoder_proxy(scorer, conv_b, "B")))
    rows.append(("proxy_score_BA", evaluate_autoencoder_proxy(scorer, conv_a, "A")))
    diag.export_csv(man.path("evaluation.csv"), ["metric", "value"], rows)
    man.write()
    for name, value in rows:
        print(f"{name} = {value:.6g}")
    return 0


COMMANDS = {
    "train-auto": cmd_train_auto,
    "diagnose": cmd_diagnose,
    "train-gan": cmd_train_gan,
    "convert": cmd_convert,
    "evaluate": cmd_evaluate,
}


def _build_parser():
    parser = argparse.ArgumentParser(prog="invauto")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="key = value config file; flags override")
    parser.add_argument("--model", choices=MODEL_KINDS)
    parser.add_argument("--arch", choices=ARCH_IDS)
    parser.add_argument("--data")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--iterations", type=int)
    parser.add_argument("--batch", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--lambda", dest="lambda_", type=float)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--beta1", type=float)
    parser.add_argument("--beta2", type=float)
    parser.add_argument("--weight-decay", type=float)
    parser.add_argument("--gan-config")
    parser.add_argument("--checkpoint")
    parser.add_argument("--in-folder")
    parser.add_argument("--out-folder")
    parser.add_argument("--direction", choices=("AB", "BA"), default="AB")
    parser.add_argument("--out")
    parser.add_argument("--f64", action="store_true",
                        help="run in 64-bit mode (bit-reproducible artifacts)")
    return parser


_TYPES = {"epochs": int, "iterations": int, "batch": int, "seed": int,
          "lambda": float, "lr": float, "beta1": float, "beta2": float,
          "weight_decay": float}


def _merge_options(args) -> dict:
    opts = dict(DEFAULTS)
    if args.config:
        cp = configparser.ConfigParser()
        if not cp.read(args.config):
            raise ConfigError(f"cannot read config file {args.config!r}")
        for section in cp.sections():
            for key, value in cp.items(section):
                key = key.replace("-", "_")
                opts[key] = _TYPES.get(key, str)(value)
    for key in ("model", "arch", "data", "epochs", "iterations", "batch", "seed",
                "lr", "beta1", "beta2", "gan_config", "checkpoint",
                "in_folder", "out_folder", "direction", "out"):
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    if args.lambda_ is not None:
        opts["lambda"] = args.lambda_
    if args.weight_decay is not None:
        opts["weight_decay"] = args.weight_decay
    return opts


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        opts = _merge_options(args)
        if args.f64:
            tensor.set_default_dtype(np.float64)
        return COMMANDS[args.command](opts)
    except InvAutoError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error (missing file): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
