"""Command-line interface.

Subcommands: ``gen-data``, ``train``, ``probe``, ``export-embeddings`` and
``compare``.  Every value flag can also be supplied through an environment
variable named ``SOFTCLR_<FLAG>`` (dashes become underscores, upper case);
explicit flags beat the environment, which beats the ``--config`` file,
which beats built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint
from .config import RunConfig, Strategy
from .datapipe import (
    AugmentPolicy,
    Dataset,
    gen_gaussian_clusters,
    gen_two_moons,
    load_dataset,
    save_dataset,
    split_dataset,
    strong_policy,
    weak_policy,
)
from .model import MlpSpec, encode, forward_online
from .numerics import Rng
from .probes import ProbeConfig, knn_probe, linear_probe
from .train import train

ENV_PREFIX = "SOFTCLR_"


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _unit_float(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {value}")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1), got {value}")
    return value


class _Resolver:
    """Layered option lookup: CLI flag > environment > config file > default."""

    def __init__(self, parser: argparse.ArgumentParser, args: argparse.Namespace,
                 file_config: dict | None = None):
        self.parser = parser
        self.args = args
        self.file_config = file_config or {}

    def get(self, dest: str, parse, default=None, file_key: str | None = None,
            required: bool = False):
        value = getattr(self.args, dest, None)
        if value is not None:
            return value
        env_name = ENV_PREFIX + dest.upper()
        if env_name in os.environ:
            try:
                return parse(os.environ[env_name])
            except (argparse.ArgumentTypeError, ValueError) as exc:
                self.parser.error(f"environment variable {env_name}: {exc}")
        key = file_key or dest
        if key in self.file_config and self.file_config[key] is not None:
            raw = self.file_config[key]
            try:
                return parse(str(raw))
            except (argparse.ArgumentTypeError, ValueError) as exc:
                self.parser.error(f"config file key {key!r}: {exc}")
        if required and default is None:
            self.parser.error(f"missing required option --{dest.replace('_', '-')}")
        return default


def _load_file_config(path: str | None, parser: argparse.ArgumentParser) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config file {path}: {exc}")
    if not isinstance(data, dict):
        parser.error(f"config file {path} must hold a JSON object")
    return data


def _add_run_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--strategy", type=Strategy.parse, default=None,
                     help="onehot|moco|hard|ahcl|ascl|byol|byol-ascl (default ascl)")
    sub.add_argument("--k", dest="k", type=_nonneg_int, default=None,
                     help="number of neighbors K (default 1)")
    sub.add_argument("--tau", type=_positive_float, default=None,
                     help="loss temperature (default 0.1)")
    sub.add_argument("--tau-prime", dest="tau_prime", type=_positive_float, default=None,
                     help="label sharpening temperature (default 0.05)")
    sub.add_argument("--epochs", type=_positive_int, default=None,
                     help="training epochs (default 200)")
    sub.add_argument("--batch-size", dest="batch_size", type=_positive_int, default=None,
                     help="batch size (default 256)")
    sub.add_argument("--bank", type=_positive_int, default=None,
                     help="memory bank capacity (default 4096)")
    sub.add_argument("--ema", type=_unit_float, default=None,
                     help="momentum-encoder EMA coefficient (default 0.99)")
    sub.add_argument("--lr", type=_nonneg_float, default=None,
                     help="base learning rate (default 0.06*batch/256)")
    sub.add_argument("--sgd-momentum", dest="sgd_momentum", type=_nonneg_float, default=None,
                     help="SGD momentum (default 0.9)")
    sub.add_argument("--weight-decay", dest="weight_decay", type=_nonneg_float, default=None,
                     help="SGD weight decay (default 1e-4)")
    sub.add_argument("--seed", type=_nonneg_int, default=None, help="run seed (default 0)")
    sub.add_argument("--probe-k", dest="probe_k", type=_positive_int, default=None,
                     help="per-epoch KNN probe neighbors (default 20)")
    sub.add_argument("--probe-temperature", dest="probe_temperature", type=_positive_float,
                     default=None, help="KNN vote temperature (default 0.1)")
    sub.add_argument("--config", default=None, help="JSON file with run-config values")


def _build_config(parser, args, *, data_path: str, out_dir: str | None) -> RunConfig:
    file_config = _load_file_config(getattr(args, "config", None), parser)
    res = _Resolver(parser, args, file_config)
    # rich fields (augmentation policies, model widths) only come from the file
    try:
        weak = (AugmentPolicy.from_dict(file_config["weak"])
                if file_config.get("weak") else weak_policy())
        strong = (AugmentPolicy.from_dict(file_config["strong"])
                  if file_config.get("strong") else strong_policy())
        model = (MlpSpec.from_dict(file_config["model"])
                 if file_config.get("model") else None)
    except (KeyError, TypeError, ValueError) as exc:
        parser.error(f"bad config file section: {exc}")
    config = RunConfig(
        weak=weak,
        strong=strong,
        model=model,
        strategy=res.get("strategy", Strategy.parse, Strategy.ASCL),
        num_neighbors=res.get("k", _nonneg_int, 1, file_key="num_neighbors"),
        temperature=res.get("tau", _positive_float, 0.1, file_key="temperature"),
        sharpen_temperature=res.get("tau_prime", _positive_float, 0.05,
                                    file_key="sharpen_temperature"),
        bank_capacity=res.get("bank", _positive_int, 4096, file_key="bank_capacity"),
        ema_momentum=res.get("ema", _unit_float, 0.99, file_key="ema_momentum"),
        learning_rate=res.get("lr", _nonneg_float, None, file_key="learning_rate"),
        sgd_momentum=res.get("sgd_momentum", _nonneg_float, 0.9),
        weight_decay=res.get("weight_decay", _nonneg_float, 1e-4),
        epochs=res.get("epochs", _positive_int, 200),
        batch_size=res.get("batch_size", _positive_int, 256),
        seed=res.get("seed", _nonneg_int, 0),
        probe_k=res.get("probe_k", _positive_int, 20),
        probe_temperature=res.get("probe_temperature", _positive_float, 0.1),
        dataset_path=data_path,
        output_dir=out_dir,
    )
    try:
        config.validate()
    except ValueError as exc:
        parser.error(str(exc))
    return config


def _cmd_gen_data(parser, args) -> int:
    res = _Resolver(parser, args)
    generator = res.get("generator", str, "gaussian")
    seed = res.get("seed", _nonneg_int, 0)
    out = res.get("out", str, required=True)
    rng = Rng(seed)
    if generator == "gaussian":
        dataset = gen_gaussian_clusters(
            num_classes=res.get("classes", _positive_int, 4),
            per_class=res.get("per_class", _positive_int, 500),
            dim=res.get("dim", _positive_int, 16),
            separation=res.get("separation", _nonneg_float, 4.0),
            rng=rng,
        )
    elif generator == "moons":
        dataset = gen_two_moons(
            per_class=res.get("per_class", _positive_int, 500),
            noise_sigma=res.get("noise", _nonneg_float, 0.1),
            rng=rng,
            dim=res.get("dim", _positive_int, 2),
        )
    else:
        parser.error(f"unknown generator {generator!r} (expected gaussian or moons)")
    test_fraction = res.get("test_fraction", _fraction, 0.0)
    if test_fraction > 0:
        test_out = res.get("test_out", str, None)
        if test_out is None:
            parser.error("--test-out is required when --test-fraction > 0")
        train_ds, test_ds = split_dataset(dataset, test_fraction, seed)
        save_dataset(train_ds, out)
        save_dataset(test_ds, test_out)
        print(f"wrote {len(train_ds)} train samples to {out}")
        print(f"wrote {len(test_ds)} test samples to {test_out}")
    else:
        save_dataset(dataset, out)
        print(f"wrote {len(dataset)} samples to {out}")
    return 0


def _cmd_train(parser, args) -> int:
    res = _Resolver(parser, args)
    data_path = res.get("data", str, required=True)
    out_dir = res.get("out", str, required=True)
    eval_path = res.get("eval_data", str, None)
    config = _build_config(parser, args, data_path=data_path, out_dir=out_dir)
    dataset = load_dataset(data_path)
    eval_dataset = load_dataset(eval_path) if eval_path else None
    result = train(config, dataset, eval_dataset, output_dir=out_dir)
    final_loss = result.records[-1].loss if result.records else float("nan")
    print(f"strategy={config.strategy.value} epochs={result.epoch} steps={result.step} "
          f"final_loss={final_loss:.6f}")
    if eval_dataset is not None:
        probed = [r.knn_accuracy for r in result.records if r.knn_accuracy is not None]
        if probed:
            print(f"final_knn_accuracy={probed[-1]:.4f} best_knn_accuracy={max(probed):.4f}")
    print(f"outputs in {out_dir}")
    return 0


def _cmd_probe(parser, args) -> int:
    res = _Resolver(parser, args)
    ckpt_path = res.get("checkpoint", str, required=True)
    data_path = res.get("data", str, required=True)
    eval_path = res.get("eval_data", str, required=True)
    mode = res.get("mode", str, "knn")
    ckpt = load_checkpoint(ckpt_path)
    train_ds = load_dataset(data_path)
    test_ds = load_dataset(eval_path)
    if mode == "knn":
        acc = knn_probe(
            ckpt.params, train_ds, test_ds,
            k=res.get("k", _positive_int, 20),
            temperature=res.get("probe_temperature", _positive_float, 0.1),
        )
    elif mode == "linear":
        acc = linear_probe(
            ckpt.params, train_ds, test_ds,
            ProbeConfig(
                epochs=res.get("epochs", _positive_int, 100),
                base_lr=res.get("lr", _positive_float, 0.1),
                seed=res.get("seed", _nonneg_int, 0),
            ),
        )
    else:
        parser.error(f"unknown probe mode {mode!r} (expected knn or linear)")
    print(f"{mode}_accuracy={acc:.4f}")
    return 0


def _cmd_export_embeddings(parser, args) -> int:
    res = _Resolver(parser, args)
    ckpt_path = res.get("checkpoint", str, required=True)
    data_path = res.get("data", str, required=True)
    out = res.get("out", str, required=True)
    space = res.get("space", str, "representation")
    ckpt = load_checkpoint(ckpt_path)
    dataset = load_dataset(data_path)
    if space == "representation":
        vectors = encode(ckpt.params, dataset.samples)
    elif space == "projection":
        _, vectors, _ = forward_online(ckpt.params, dataset.samples)
    else:
        parser.error(f"unknown space {space!r} (expected representation or projection)")
    export = Dataset(
        np.asarray(vectors, dtype=np.float64),
        dataset.labels,
        dataset.num_classes,
        metadata={
            "generator": "embeddings",
            "space": space,
            "source": os.path.basename(data_path),
        },
    )
    save_dataset(export, out)
    print(f"wrote {len(export)} embeddings ({space}, dim {export.dim}) to {out}")
    return 0


def _cmd_compare(parser, args) -> int:
    res = _Resolver(parser, args)
    data_path = res.get("data", str, required=True)
    eval_path = res.get("eval_data", str, required=True)
    strategies_text = res.get("strategies", str, "onehot,hard,ahcl,ascl")
    try:
        strategies = [Strategy.parse(s) for s in strategies_text.split(",") if s.strip()]
    except ValueError as exc:
        parser.error(str(exc))
    if not strategies:
        parser.error("no strategies given")
    out_file = res.get("out", str, None)
    dataset = load_dataset(data_path)
    eval_dataset = load_dataset(eval_path)
    base = _build_config(parser, args, data_path=data_path, out_dir=None)
    header = ["strategy", "final_loss", "final_knn_accuracy", "best_knn_accuracy",
              "mean_confidence_last_epoch"]
    lines = ["\t".join(header)]
    for strategy in strategies:
        config = base.with_strategy(strategy)
        config.validate()
        result = train(config, dataset, eval_dataset)
        probed = [r.knn_accuracy for r in result.records if r.knn_accuracy is not None]
        last_epoch = result.records[-1].epoch if result.records else 0
        conf = [r.mean_confidence for r in result.records if r.epoch == last_epoch]
        lines.append("\t".join([
            strategy.value,
            f"{result.records[-1].loss:.6f}" if result.records else "nan",
            f"{probed[-1]:.4f}" if probed else "nan",
            f"{max(probed):.4f}" if probed else "nan",
            f"{float(np.mean(conf)):.4f}" if conf else "nan",
        ]))
        print(lines[-1], file=sys.stderr)
    table = "\n".join(lines) + "\n"
    sys.stdout.write(table)
    if out_file:
        with open(out_file, "w") as f:
            f.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="softclr",
        description="Soft contrastive representation learning on synthetic vector data.",
        epilog=f"Every flag can be set via {ENV_PREFIX}<FLAG> environment variables; "
               "explicit flags win over the environment, which wins over --config.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    gen.add_argument("--generator", choices=("gaussian", "moons"), default=None)
    gen.add_argument("--classes", type=_positive_int, default=None,
                     help="number of classes (gaussian)")
    gen.add_argument("--per-class", dest="per_class", type=_positive_int, default=None)
    gen.add_argument("--dim", type=_positive_int, default=None)
    gen.add_argument("--separation", type=_nonneg_float, default=None,
                     help="cluster center radius (gaussian)")
    gen.add_argument("--noise", type=_nonneg_float, default=None,
                     help="arc noise sigma (moons)")
    gen.add_argument("--seed", type=_nonneg_int, default=None)
    gen.add_argument("--out", default=None, help="output dataset path")
    gen.add_argument("--test-fraction", dest="test_fraction", type=_fraction, default=None,
                     help="held-out fraction written to --test-out")
    gen.add_argument("--test-out", dest="test_out", default=None)

    tr = sub.add_parser("train", help="train an encoder")
    tr.add_argument("--data", default=None, help="training dataset path")
    tr.add_argument("--eval-data", dest="eval_data", default=None,
                    help="held-out dataset for the per-epoch KNN probe")
    tr.add_argument("--out", default=None, help="output directory")
    _add_run_options(tr)

    pr = sub.add_parser("probe", help="evaluate a checkpointed encoder")
    pr.add_argument("--checkpoint", default=None)
    pr.add_argument("--data", default=None, help="probe training split")
    pr.add_argument("--eval-data", dest="eval_data", default=None, help="probe test split")
    pr.add_argument("--mode", choices=("knn", "linear"), default=None)
    pr.add_argument("--k", type=_positive_int, default=None, help="KNN neighbors")
    pr.add_argument("--probe-temperature", dest="probe_temperature", type=_positive_float,
                    default=None)
    pr.add_argument("--epochs", type=_positive_int, default=None, help="linear probe epochs")
    pr.add_argument("--lr", type=_positive_float, default=None, help="linear probe base lr")
    pr.add_argument("--seed", type=_nonneg_int, default=None)

    ex = sub.add_parser("export-embeddings", help="write encoder outputs for a dataset")
    ex.add_argument("--checkpoint", default=None)
    ex.add_argument("--data", default=None)
    ex.add_argument("--out", default=None)
    ex.add_argument("--space", choices=("representation", "projection"), default=None)

    cp = sub.add_parser("compare", help="run a strategy sweep under one seed")
    cp.add_argument("--data", default=None)
    cp.add_argument("--eval-data", dest="eval_data", default=None)
    cp.add_argument("--strategies", default=None,
                    help="comma-separated strategy list (default onehot,hard,ahcl,ascl)")
    cp.add_argument("--out", default=None, help="optional path for the TSV table")
    _add_run_options(cp)

    return parser


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "probe": _cmd_probe,
    "export-embeddings": _cmd_export_embeddings,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](parser, args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
