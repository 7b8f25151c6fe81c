"""Training loops: momentum-contrast with a memory bank, and the
negative-free predictor variant.  Both are deterministic under the run seed.

Per-step metrics are buffered per epoch and written as line-delimited JSON.
Wall-clock timings go to a separate sidecar so the canonical metrics log is
byte-identical across identical runs.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, Strategy
from .datapipe import Dataset, make_batches
from .membank import MemoryBank
from .model import (
    MlpSpec,
    ModelParams,
    backward,
    ema_update,
    forward_momentum,
    forward_online,
    init_params,
    predictor_backward,
    predictor_forward,
)
from .numerics import Rng, derive_seed, entropy_rows
from .objective import byol_soft_loss, soft_infonce_batch
from .optim import OptimizerState, cosine_lr, init_optimizer, sgd_step
from .probes import knn_probe
from .relabel import batch_confidence, byol_inbatch_labels, label_matrix

__all__ = ["MetricsRecord", "TrainResult", "train", "train_contrastive", "train_byol"]

# rng stream tags hanging off the run seed
_INIT_STREAM = 0
_EPOCH_STREAM = 1

METRICS_FILE = "metrics.jsonl"
TIMING_FILE = "timing.jsonl"
CONFIG_FILE = "run_config.json"
CHECKPOINT_FILE = "checkpoint.bin"


@dataclass
class MetricsRecord:
    """One training step's worth of observable state."""

    step: int
    epoch: int
    loss: float
    mean_confidence: float
    mean_label_entropy: float
    lr: float
    knn_accuracy: float | None = None
    wall_time: float = 0.0

    def to_line(self) -> str:
        """Canonical log line; excludes wall time, which is not reproducible."""
        return json.dumps(
            {
                "step": self.step,
                "epoch": self.epoch,
                "loss": self.loss,
                "mean_confidence": self.mean_confidence,
                "mean_label_entropy": self.mean_label_entropy,
                "lr": self.lr,
                "knn_accuracy": self.knn_accuracy,
            }
        )


@dataclass
class TrainResult:
    config: RunConfig
    params: ModelParams
    optimizer: OptimizerState
    bank: MemoryBank | None
    records: list[MetricsRecord]
    epoch: int
    step: int
    checkpoint_path: str | None = None

    def to_checkpoint(self) -> Checkpoint:
        return Checkpoint(
            config=self.config,
            params=self.params,
            optimizer=self.optimizer,
            bank=self.bank,
            epoch=self.epoch,
            step=self.step,
        )


def _training_fields(config: RunConfig) -> dict:
    d = config.to_dict()
    d.pop("dataset_path", None)
    d.pop("output_dir", None)
    return d


class _RunWriter:
    """Streams per-epoch metrics (and timings) to the output directory."""

    def __init__(self, output_dir: str | None, config: RunConfig):
        self.dir = output_dir
        if output_dir is None:
            return
        os.makedirs(output_dir, exist_ok=True)
        with open(os.path.join(output_dir, CONFIG_FILE), "w") as f:
            f.write(config.to_json() + "\n")
        # truncate any previous logs
        open(os.path.join(output_dir, METRICS_FILE), "w").close()
        open(os.path.join(output_dir, TIMING_FILE), "w").close()

    def write_epoch(self, records: list[MetricsRecord]) -> None:
        if self.dir is None:
            return
        with open(os.path.join(self.dir, METRICS_FILE), "a") as f:
            for rec in records:
                f.write(rec.to_line() + "\n")
        with open(os.path.join(self.dir, TIMING_FILE), "a") as f:
            for rec in records:
                f.write(json.dumps({"step": rec.step, "wall_time": rec.wall_time}) + "\n")


def _stack_views(batch) -> tuple[np.ndarray, np.ndarray]:
    queries = np.stack([pair.query_view for pair in batch])
    targets = np.stack([pair.target_view for pair in batch])
    return queries, targets


def _resolve_spec(config: RunConfig, dataset: Dataset) -> MlpSpec:
    spec = config.model or MlpSpec.for_input(dataset.dim)
    if spec.input_dim != dataset.dim:
        raise ValueError(
            f"model expects input dim {spec.input_dim} but dataset has {dataset.dim}"
        )
    return spec


def _restore_or_init(config: RunConfig, dataset: Dataset, resume_from):
    spec = _resolve_spec(config, dataset)
    if resume_from is None:
        params = init_params(spec, Rng(config.seed, (_INIT_STREAM,)))
        optimizer = init_optimizer(params.tensors, params.online_keys())
        bank = (
            MemoryBank(config.bank_capacity, spec.projection_dim)
            if config.uses_bank
            else None
        )
        return params, optimizer, bank, 0, 0
    ckpt = resume_from if isinstance(resume_from, Checkpoint) else load_checkpoint(resume_from)
    if _training_fields(ckpt.config) != _training_fields(config):
        raise ValueError("checkpoint config does not match the requested run config")
    return ckpt.params, ckpt.optimizer, ckpt.bank, ckpt.epoch, ckpt.step


def train(
    config: RunConfig,
    dataset: Dataset,
    eval_dataset: Dataset | None = None,
    output_dir: str | None = None,
    resume_from=None,
    stop_after_epoch: int | None = None,
) -> TrainResult:
    """Run the loop matching ``config.strategy``; see the per-loop doc strings."""
    config.validate()
    if config.uses_bank:
        return train_contrastive(
            config, dataset, eval_dataset, output_dir, resume_from, stop_after_epoch
        )
    return train_byol(
        config, dataset, eval_dataset, output_dir, resume_from, stop_after_epoch
    )


def _epoch_range(config: RunConfig, start_epoch: int, stop_after_epoch: int | None):
    last = config.epochs if stop_after_epoch is None else min(config.epochs, stop_after_epoch)
    return range(start_epoch, last)


def _finalize(
    config, params, optimizer, bank, records, epoch, step, output_dir
) -> TrainResult:
    result = TrainResult(
        config=config,
        params=params,
        optimizer=optimizer,
        bank=bank,
        records=records,
        epoch=epoch,
        step=step,
    )
    if output_dir is not None:
        path = os.path.join(output_dir, CHECKPOINT_FILE)
        save_checkpoint(path, result.to_checkpoint())
        result.checkpoint_path = path
    return result


def train_contrastive(
    config: RunConfig,
    dataset: Dataset,
    eval_dataset: Dataset | None = None,
    output_dir: str | None = None,
    resume_from=None,
    stop_after_epoch: int | None = None,
) -> TrainResult:
    """Momentum-contrast loop with soft pseudo-labels.

    Per step: augment both views, embed them with the online and momentum
    encoders, build labels from target-to-bank similarities, take the soft
    cross-entropy step, EMA the momentum copy, then enqueue the targets.
    The bank starts empty; the first step therefore reduces to the positive
    term only.
    """
    config.validate()
    if config.strategy not in (Strategy.ONEHOT, Strategy.HARD, Strategy.AHCL, Strategy.ASCL):
        raise ValueError(f"train_contrastive cannot run strategy {config.strategy.value}")
    params, optimizer, bank, start_epoch, step = _restore_or_init(
        config, dataset, resume_from
    )
    if bank is None:
        raise ValueError("resumed checkpoint has no memory bank state")
    label_cfg = config.label_config()
    base_lr = config.resolved_learning_rate
    writer = _RunWriter(output_dir, config)
    records: list[MetricsRecord] = []
    for epoch in _epoch_range(config, start_epoch, stop_after_epoch):
        lr = cosine_lr(epoch / config.epochs, base_lr)
        epoch_seed = derive_seed(config.seed, _EPOCH_STREAM, epoch)
        batches = make_batches(
            dataset, config.batch_size, epoch_seed, config.weak, config.strong
        )
        epoch_records: list[MetricsRecord] = []
        for batch in batches:
            t0 = time.perf_counter()
            queries, targets = _stack_views(batch)
            z_t = forward_momentum(params, targets)
            _, z_q, cache = forward_online(params, queries)
            snapshot = bank.snapshot()
            sims = np.clip(z_t @ snapshot.T, -1.0, 1.0)
            labels = label_matrix(sims, label_cfg)
            loss, grad_z, _ = soft_infonce_batch(
                z_q, labels, z_t, snapshot, config.temperature
            )
            grads = backward(params, cache, grad_z)
            sgd_step(
                params.tensors, grads, optimizer, lr,
                config.sgd_momentum, config.weight_decay,
            )
            ema_update(params, config.ema_momentum)
            bank.enqueue_batch(z_t)
            step += 1
            epoch_records.append(
                MetricsRecord(
                    step=step,
                    epoch=epoch,
                    loss=float(loss),
                    mean_confidence=float(
                        np.mean(batch_confidence(sims, config.sharpen_temperature))
                    ),
                    mean_label_entropy=float(np.mean(entropy_rows(labels))),
                    lr=lr,
                    wall_time=time.perf_counter() - t0,
                )
            )
        if eval_dataset is not None and epoch_records:
            epoch_records[-1].knn_accuracy = knn_probe(
                params, dataset, eval_dataset, config.probe_k, config.probe_temperature
            )
        writer.write_epoch(epoch_records)
        records.extend(epoch_records)
    final_epoch = (
        min(config.epochs, stop_after_epoch) if stop_after_epoch is not None else config.epochs
    )
    final_epoch = max(start_epoch, final_epoch)
    return _finalize(
        config, params, optimizer, bank, records, final_epoch, step, output_dir
    )


def train_byol(
    config: RunConfig,
    dataset: Dataset,
    eval_dataset: Dataset | None = None,
    output_dir: str | None = None,
    resume_from=None,
    stop_after_epoch: int | None = None,
) -> TrainResult:
    """Negative-free loop: predictor output chases the momentum targets.

    Labels are one-hot at the sample's own batch position for the plain
    variant, or in-batch soft labels for the adaptive variant.  Batches
    smaller than 3 (a tiny final partial batch) are skipped because in-batch
    confidence is undefined there.
    """
    config.validate()
    if config.strategy not in (Strategy.BYOL, Strategy.BYOL_ASCL):
        raise ValueError(f"train_byol cannot run strategy {config.strategy.value}")
    params, optimizer, _, start_epoch, step = _restore_or_init(config, dataset, resume_from)
    base_lr = config.resolved_learning_rate
    writer = _RunWriter(output_dir, config)
    records: list[MetricsRecord] = []
    for epoch in _epoch_range(config, start_epoch, stop_after_epoch):
        lr = cosine_lr(epoch / config.epochs, base_lr)
        epoch_seed = derive_seed(config.seed, _EPOCH_STREAM, epoch)
        batches = make_batches(
            dataset, config.batch_size, epoch_seed, config.weak, config.strong
        )
        epoch_records: list[MetricsRecord] = []
        for batch in batches:
            if len(batch) < 3:
                continue
            t0 = time.perf_counter()
            queries, targets = _stack_views(batch)
            z_t = forward_momentum(params, targets)
            _, z_q, cache = forward_online(params, queries)
            predictions, pred_cache = predictor_forward(params, z_q)
            b = len(batch)
            if config.strategy is Strategy.BYOL_ASCL:
                labels = byol_inbatch_labels(
                    z_t, config.num_neighbors, config.sharpen_temperature
                )
            else:
                labels = np.eye(b)
            loss, grad_u, _ = byol_soft_loss(predictions, z_t, labels)
            pred_grads, grad_z = predictor_backward(params, pred_cache, grad_u)
            grads = backward(params, cache, grad_z)
            grads.update(pred_grads)
            sgd_step(
                params.tensors, grads, optimizer, lr,
                config.sgd_momentum, config.weight_decay,
            )
            ema_update(params, config.ema_momentum)
            step += 1
            off_mask = ~np.eye(b, dtype=bool)
            off_sims = np.clip(z_t @ z_t.T, -1.0, 1.0)[off_mask].reshape(b, b - 1)
            epoch_records.append(
                MetricsRecord(
                    step=step,
                    epoch=epoch,
                    loss=float(loss),
                    mean_confidence=float(
                        np.mean(batch_confidence(off_sims, config.sharpen_temperature))
                    ),
                    mean_label_entropy=float(np.mean(entropy_rows(labels))),
                    lr=lr,
                    wall_time=time.perf_counter() - t0,
                )
            )
        if eval_dataset is not None and epoch_records:
            epoch_records[-1].knn_accuracy = knn_probe(
                params, dataset, eval_dataset, config.probe_k, config.probe_temperature
            )
        writer.write_epoch(epoch_records)
        records.extend(epoch_records)
    final_epoch = (
        min(config.epochs, stop_after_epoch) if stop_after_epoch is not None else config.epochs
    )
    final_epoch = max(start_epoch, final_epoch)
    return _finalize(
        config, params, optimizer, None, records, final_epoch, step, output_dir
    )
