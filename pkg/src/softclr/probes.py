"""Frozen-encoder evaluation probes: weighted KNN and a linear classifier.

Both probes look at encoder representations f(x), not projections: the
projector is part of the loss machinery, not of the evaluated features.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .datapipe import Dataset
from .model import ModelParams, encode
from .numerics import Rng, as_matrix, softmax_rows

__all__ = ["knn_probe", "linear_probe", "weighted_knn_predict", "ProbeConfig"]


def _safe_unit_rows(m: np.ndarray) -> np.ndarray:
    # zero rows (a ReLU net can emit them) get no direction and vote nothing
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


def weighted_knn_predict(
    train_features,
    train_labels,
    test_features,
    k: int = 20,
    temperature: float = 0.1,
    num_classes: int | None = None,
) -> np.ndarray:
    """Cosine-similarity-weighted vote among the k nearest train rows.

    Each neighbor votes with weight exp(cos/temperature); class ties resolve
    to the lowest class id.  ``k`` larger than the train set is clamped with
    a warning.
    """
    train = as_matrix(train_features, "train_features")
    test = as_matrix(test_features, "test_features")
    labels = np.asarray(train_labels)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > train.shape[0]:
        warnings.warn(
            f"k={k} exceeds train size {train.shape[0]}; clamping", stacklevel=2
        )
        k = train.shape[0]
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    sims = _safe_unit_rows(test) @ _safe_unit_rows(train).T
    # stable argsort keeps the tie-break (lower train index wins) deterministic
    nearest = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    rows = np.arange(test.shape[0])[:, np.newaxis]
    weights = np.exp(sims[rows, nearest] / temperature)
    votes = np.zeros((test.shape[0], num_classes))
    neighbor_labels = labels[nearest]
    for cls in range(num_classes):
        votes[:, cls] = np.sum(weights * (neighbor_labels == cls), axis=1)
    return votes.argmax(axis=1)


def knn_probe(
    params: ModelParams,
    train_split: Dataset,
    test_split: Dataset,
    k: int = 20,
    temperature: float = 0.1,
) -> float:
    """Accuracy of the weighted-KNN vote on frozen encoder representations."""
    train_reps = encode(params, train_split.samples)
    test_reps = encode(params, test_split.samples)
    predicted = weighted_knn_predict(
        train_reps, train_split.labels, test_reps, k=k,
        temperature=temperature, num_classes=train_split.num_classes,
    )
    return float(np.mean(predicted == test_split.labels))


@dataclass(frozen=True)
class ProbeConfig:
    """Linear-probe training knobs: SGD with two step-wise lr drops."""

    epochs: int = 100
    base_lr: float = 0.1
    sgd_momentum: float = 0.9
    batch_size: int = 256
    seed: int = 0


def _probe_lr(cfg: ProbeConfig, epoch: int) -> float:
    # lr drops by 10x at 60% and again at 80% of the probe epochs
    if epoch >= int(0.8 * cfg.epochs):
        return cfg.base_lr * 0.01
    if epoch >= int(0.6 * cfg.epochs):
        return cfg.base_lr * 0.1
    return cfg.base_lr


def train_linear_classifier(
    features, labels, num_classes: int, cfg: ProbeConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Softmax regression on frozen features; returns (weights, bias)."""
    x = as_matrix(features, "features")
    y = np.asarray(labels)
    n, dim = x.shape
    w = np.zeros((dim, num_classes))
    b = np.zeros(num_classes)
    vw = np.zeros_like(w)
    vb = np.zeros_like(b)
    onehot = np.eye(num_classes)[y]
    rng = Rng(cfg.seed)
    for epoch in range(cfg.epochs):
        lr = _probe_lr(cfg, epoch)
        perm = rng.split(epoch).permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb, yb = x[idx], onehot[idx]
            probs = softmax_rows(xb @ w + b, 1.0)
            delta = (probs - yb) / len(idx)
            gw = xb.T @ delta
            gb = delta.sum(axis=0)
            vw = cfg.sgd_momentum * vw + gw
            vb = cfg.sgd_momentum * vb + gb
            w -= lr * vw
            b -= lr * vb
    return w, b


def linear_probe(
    params: ModelParams,
    train_split: Dataset,
    test_split: Dataset,
    cfg: ProbeConfig | None = None,
) -> float:
    """Accuracy of a linear classifier trained on frozen representations."""
    cfg = cfg or ProbeConfig()
    train_reps = encode(params, train_split.samples)
    test_reps = encode(params, test_split.samples)
    w, b = train_linear_classifier(
        train_reps, train_split.labels, train_split.num_classes, cfg
    )
    predicted = (test_reps @ w + b).argmax(axis=1)
    return float(np.mean(predicted == test_split.labels))
