"""Pseudo-label construction for soft contrastive training.

A pseudo label is a nonnegative weight vector over ``[target view, bank
entries...]`` (index 0 is always the target view) that sums to 1 after
normalization.  Four strategies are provided:

* ``onehot`` — all mass on the target view (the classic instance-
  discrimination label; with it, the soft loss reduces to plain infoNCE).
* ``hard``   — the target view plus the top-K most similar bank entries,
  all weighted equally.
* ``ahcl``   — like ``hard`` but neighbor mass is scaled by a confidence
  score derived from how concentrated the neighborhood distribution is.
* ``ascl``   — the full sharpened neighborhood distribution enters the
  label, confidence-scaled and clipped so no neighbor outweighs the
  target view itself.

Neighborhood evidence always comes from the momentum branch: similarities
are measured between the *target* embedding and the bank, never the query.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBankError, InvalidLabelError
from .numerics import as_matrix, as_vector, entropy_rows, softmax_rows, topk_indices

__all__ = [
    "LabelStrategy",
    "LabelConfig",
    "onehot_label",
    "similarity_row",
    "relative_distribution",
    "confidence",
    "hard_label",
    "ahcl_label",
    "ascl_label",
    "normalize_label",
    "byol_inbatch_labels",
    "label_matrix",
    "batch_confidence",
]


class LabelStrategy(str, enum.Enum):
    ONEHOT = "onehot"
    HARD = "hard"
    AHCL = "ahcl"
    ASCL = "ascl"


@dataclass(frozen=True)
class LabelConfig:
    """Label-construction hyperparameters (defaults: K=1, sharpening 0.05)."""

    strategy: LabelStrategy = LabelStrategy.ASCL
    num_neighbors: int = 1
    sharpen_temperature: float = 0.05

    def __post_init__(self):
        if self.num_neighbors < 0:
            raise ValueError(f"num_neighbors must be >= 0, got {self.num_neighbors}")
        if not self.sharpen_temperature > 0:
            raise ValueError(
                f"sharpen_temperature must be positive, got {self.sharpen_temperature}"
            )


def onehot_label(bank_size: int) -> np.ndarray:
    """Weight 1 on the target view, 0 on every bank entry."""
    if bank_size < 0:
        raise ValueError(f"bank_size must be >= 0, got {bank_size}")
    y = np.zeros(bank_size + 1, dtype=np.float64)
    y[0] = 1.0
    return y


def similarity_row(target, bank) -> np.ndarray:
    """Cosine similarity of one target embedding to every bank entry.

    ``bank`` may be a MemoryBank or a matrix of unit-norm rows.  Entries are
    clamped into [-1, 1] against rounding overshoot.
    """
    t = as_vector(target, "target")
    entries = bank.snapshot() if hasattr(bank, "snapshot") else as_matrix(bank, "bank")
    if entries.shape[0] == 0:
        raise EmptyBankError("similarity_row needs a nonempty bank")
    if entries.shape[1] != t.size:
        raise ValueError(f"dim mismatch: target {t.size}, bank {entries.shape[1]}")
    return np.clip(entries @ t, -1.0, 1.0)


def relative_distribution(d, sharpen_temperature: float) -> np.ndarray:
    """Sharpened softmax of a similarity row: the neighborhood distribution."""
    return softmax_rows(as_vector(d, "d")[np.newaxis, :], sharpen_temperature)[0]


def confidence(q) -> float:
    """One minus the normalized entropy of a neighborhood distribution.

    0 means the distribution is uniform (no idea who the neighbors are),
    1 means all mass sits on a single entry.  Needs at least two entries,
    since a one-entry distribution has no meaningful entropy scale.
    """
    dist = as_vector(q, "q")
    n = dist.size
    if n < 2:
        raise ValueError(f"confidence needs a distribution over >= 2 entries, got {n}")
    h = float(entropy_rows(dist[np.newaxis, :])[0])
    return float(np.clip(1.0 - h / np.log(n), 0.0, 1.0))


def normalize_label(weights) -> np.ndarray:
    """Scale label weights to sum to 1; all-zero or negative labels raise."""
    y = as_vector(weights, "label")
    if np.any(y < 0.0):
        raise InvalidLabelError("label weights must be nonnegative")
    total = float(np.sum(y))
    if total <= 0.0:
        raise InvalidLabelError("label weights sum to zero")
    return y / total


def _clamped_neighbors(d: np.ndarray, num_neighbors: int) -> int:
    # K is clamped to bank occupancy so the first, partially filled
    # iterations never fault.
    return min(int(num_neighbors), d.size)


def hard_label(d, num_neighbors: int) -> np.ndarray:
    """Equal mass on the target view and each of the top-K bank neighbors."""
    row = as_vector(d, "d")
    k = _clamped_neighbors(row, num_neighbors)
    y = np.zeros(row.size + 1, dtype=np.float64)
    y[0] = 1.0
    if k > 0:
        y[topk_indices(row, k) + 1] = 1.0
    return normalize_label(y)


def _confidence_of(d: np.ndarray, sharpen_temperature: float) -> float:
    # A single-entry bank has no entropy scale; treat it as zero confidence
    # so early labels fall back to one-hot.
    if d.size < 2:
        return 0.0
    return confidence(relative_distribution(d, sharpen_temperature))


def ahcl_label(d, num_neighbors: int, sharpen_temperature: float) -> np.ndarray:
    """Top-K neighbors weighted by the neighborhood confidence c.

    Uniform similarities give c = 0 and the label collapses to one-hot; a
    fully concentrated neighborhood gives c = 1 and the label equals the
    hard label.
    """
    row = as_vector(d, "d")
    k = _clamped_neighbors(row, num_neighbors)
    c = _confidence_of(row, sharpen_temperature)
    y = np.zeros(row.size + 1, dtype=np.float64)
    y[0] = 1.0
    if k > 0:
        y[topk_indices(row, k) + 1] = c
    return normalize_label(y)


def ascl_label(d, num_neighbors: int, sharpen_temperature: float) -> np.ndarray:
    """Soft label: every bank entry gets min(1, c * K * q_j).

    The sharpened distribution q itself carries the neighbor mass, scaled by
    the confidence c and the configured neighbor count K.  The clip at 1
    keeps any single neighbor from outweighing the target view.  K = 0 turns
    off all neighbor mass, recovering the one-hot label.
    """
    row = as_vector(d, "d")
    y = np.zeros(row.size + 1, dtype=np.float64)
    y[0] = 1.0
    if num_neighbors > 0 and row.size > 0:
        q = relative_distribution(row, sharpen_temperature)
        c = _confidence_of(row, sharpen_temperature)
        y[1:] = np.minimum(1.0, c * float(num_neighbors) * q)
    return normalize_label(y)


def byol_inbatch_labels(batch_targets, num_neighbors: int, sharpen_temperature: float) -> np.ndarray:
    """Soft labels over a batch for negative-free training.

    Row i is the label of sample i over all batch positions: weight 1 at
    position i, and min(1, c_i * K * q_ij) at every other position, where q_i
    is the sharpened similarity distribution of target i over the other b-1
    targets and c_i its confidence.  Rows are normalized.  Requires b >= 3 so
    the confidence denominator ln(b-1) is positive.
    """
    t = as_matrix(batch_targets, "batch_targets")
    b = t.shape[0]
    if b < 3:
        raise ValueError(f"in-batch labels need a batch of >= 3, got {b}")
    sims = np.clip(t @ t.T, -1.0, 1.0)
    # row i holds similarities to the b-1 other targets, in index order
    off_mask = ~np.eye(b, dtype=bool)
    d = sims[off_mask].reshape(b, b - 1)
    y = np.zeros((b, b), dtype=np.float64)
    np.fill_diagonal(y, 1.0)
    if num_neighbors > 0:
        q = softmax_rows(d, sharpen_temperature)
        h = entropy_rows(q)
        c = np.clip(1.0 - h / np.log(b - 1), 0.0, 1.0)
        y[off_mask] = np.minimum(1.0, (c[:, np.newaxis] * float(num_neighbors)) * q).ravel()
    return y / np.sum(y, axis=1, keepdims=True)


def batch_confidence(similarities, sharpen_temperature: float) -> np.ndarray:
    """Per-row neighborhood confidence; rows shorter than 2 report 0."""
    d = as_matrix(similarities, "similarities")
    n = d.shape[1]
    if n < 2:
        return np.zeros(d.shape[0], dtype=np.float64)
    q = softmax_rows(d, sharpen_temperature)
    h = entropy_rows(q)
    return np.clip(1.0 - h / np.log(n), 0.0, 1.0)


def label_matrix(similarities, config: LabelConfig) -> np.ndarray:
    """Build one pseudo label per row of a similarity matrix.

    Vectorized equivalent of calling the per-row strategy function on each
    row; the same softmax/entropy kernels are used, so rows match the
    scalar ops bit for bit.
    """
    d = as_matrix(similarities, "similarities")
    num, n = d.shape
    y = np.zeros((num, n + 1), dtype=np.float64)
    y[:, 0] = 1.0
    k = min(config.num_neighbors, n)
    if n == 0 or config.strategy is LabelStrategy.ONEHOT or k == 0:
        return y
    if config.strategy is LabelStrategy.ASCL:
        q = softmax_rows(d, config.sharpen_temperature)
        c = batch_confidence(d, config.sharpen_temperature)
        y[:, 1:] = np.minimum(
            1.0, (c[:, np.newaxis] * float(config.num_neighbors)) * q
        )
    else:
        top = np.argsort(-d, axis=1, kind="stable")[:, :k]
        rows = np.repeat(np.arange(num), k)
        if config.strategy is LabelStrategy.HARD:
            y[rows, top.ravel() + 1] = 1.0
        else:  # AHCL
            c = batch_confidence(d, config.sharpen_temperature)
            y[rows, top.ravel() + 1] = np.repeat(c, k)
    return y / np.sum(y, axis=1, keepdims=True)
