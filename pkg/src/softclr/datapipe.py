"""Synthetic datasets, the weak/strong augmentation pair, and batching.

Datasets are plain float64 sample matrices with integer class labels that
ride along purely for the evaluation probes; training never sees them.
The on-disk format is a small self-describing binary container.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import Rng, as_matrix

__all__ = [
    "Dataset",
    "AugmentPolicy",
    "ViewPair",
    "weak_policy",
    "strong_policy",
    "gen_gaussian_clusters",
    "gen_two_moons",
    "augment",
    "make_batches",
    "split_dataset",
    "save_dataset",
    "load_dataset",
]

MAGIC = b"SCLRVDS1"
FORMAT_VERSION = 1

# rng sub-stream tags used by make_batches
_PERM, _AUG_WEAK, _AUG_STRONG = 0, 1, 2


@dataclass
class Dataset:
    samples: np.ndarray  # (n, dim) float64
    labels: np.ndarray  # (n,) int32, probe-only
    num_classes: int
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.samples = as_matrix(self.samples, "samples")
        self.labels = np.asarray(self.labels, dtype=np.int32)
        if self.labels.shape != (self.samples.shape[0],):
            raise ValueError("labels must be one int per sample")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.num_classes
        ):
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class AugmentPolicy:
    """Vector-space augmentation knobs.

    Applied in order: random scale, additive Gaussian jitter, coordinate
    dropout, random rotation of one coordinate pair.  The weak default only
    scales and jitters mildly; the strong default does everything.
    """

    kind: str = "weak"
    jitter_sigma: float = 0.05
    drop_prob: float = 0.0
    scale_range: tuple[float, float] = (0.9, 1.1)
    rotate: bool = False

    def __post_init__(self):
        if not 0.0 <= self.drop_prob < 1.0:
            raise ValueError("drop_prob must be in [0, 1)")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise ValueError("scale_range must be positive with lo <= hi")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "jitter_sigma": self.jitter_sigma,
            "drop_prob": self.drop_prob,
            "scale_range": list(self.scale_range),
            "rotate": self.rotate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentPolicy":
        return cls(
            kind=d["kind"],
            jitter_sigma=float(d["jitter_sigma"]),
            drop_prob=float(d["drop_prob"]),
            scale_range=tuple(d["scale_range"]),
            rotate=bool(d["rotate"]),
        )


def weak_policy() -> AugmentPolicy:
    return AugmentPolicy()


def strong_policy() -> AugmentPolicy:
    return AugmentPolicy(
        kind="strong", jitter_sigma=0.2, drop_prob=0.2, scale_range=(0.5, 1.5), rotate=True
    )


@dataclass(frozen=True)
class ViewPair:
    """Two augmented views of one source sample: strong query, weak target."""

    query_view: np.ndarray
    target_view: np.ndarray
    source_index: int


def _random_frame(rng: Rng, dim: int, count: int) -> np.ndarray:
    """`count` orthonormal direction rows (random frame); falls back to random
    unit directions when more directions than dimensions are requested."""
    if count <= dim:
        m = rng.normal(size=(dim, count))
        q, r = np.linalg.qr(m)
        return (q * np.sign(np.diag(r))).T
    d = rng.normal(size=(count, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def gen_gaussian_clusters(
    num_classes: int, per_class: int, dim: int, separation: float, rng: Rng
) -> Dataset:
    """Isotropic unit-variance Gaussian blobs with centers on a sphere.

    Centers sit at radius ``separation`` along a random orthonormal frame, so
    the pairwise center distance is separation * sqrt(2) whenever the number
    of classes fits in the dimension.  ``separation 0`` collapses all classes
    onto one distribution.
    """
    if num_classes < 1 or per_class < 1 or dim < 1:
        raise ValueError("num_classes, per_class and dim must all be >= 1")
    if separation < 0:
        raise ValueError("separation must be >= 0")
    centers = _random_frame(rng.split(0), dim, num_classes) * separation
    noise = rng.split(1).normal(size=(num_classes * per_class, dim))
    samples = np.repeat(centers, per_class, axis=0) + noise
    labels = np.repeat(np.arange(num_classes, dtype=np.int32), per_class)
    return Dataset(
        samples,
        labels,
        num_classes,
        metadata={
            "generator": "gaussian_clusters",
            "seed": str(rng.seed),
            "dim": str(dim),
            "separation": repr(float(separation)),
            "per_class": str(per_class),
        },
    )


def gen_two_moons(per_class: int, noise_sigma: float, rng: Rng, dim: int = 2) -> Dataset:
    """Two interleaved half-circles, zero-padded to ``dim`` then randomly rotated."""
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if dim < 2:
        raise ValueError("dim must be >= 2")
    t = np.linspace(0.0, np.pi, per_class)
    outer = np.stack([np.cos(t), np.sin(t)], axis=1)
    inner = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
    pts = np.concatenate([outer, inner], axis=0)
    if noise_sigma > 0:
        pts = pts + rng.split(0).normal(scale=noise_sigma, size=pts.shape)
    padded = np.zeros((pts.shape[0], dim), dtype=np.float64)
    padded[:, :2] = pts
    # random orthogonal mixing spreads the structure over all coordinates
    basis = _random_frame(rng.split(1), dim, dim)
    samples = padded @ basis
    labels = np.concatenate(
        [np.zeros(per_class, dtype=np.int32), np.ones(per_class, dtype=np.int32)]
    )
    return Dataset(
        samples,
        labels,
        2,
        metadata={
            "generator": "two_moons",
            "seed": str(rng.seed),
            "dim": str(dim),
            "noise_sigma": repr(float(noise_sigma)),
            "per_class": str(per_class),
        },
    )


def augment(x, policy: AugmentPolicy, rng: Rng) -> np.ndarray:
    """Randomly perturb a sample (or batch of samples, row-wise).

    Draws are consumed in a fixed order (scale, jitter, dropout, rotation),
    so for a given rng stream the output is a pure function of the input and
    the stream position.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    batch = arr[np.newaxis, :] if single else as_matrix(arr, "x")
    n, dim = batch.shape
    lo, hi = policy.scale_range
    scale = rng.uniform(lo, hi, size=(n, 1))
    out = batch * scale
    if policy.jitter_sigma > 0:
        out = out + rng.normal(scale=policy.jitter_sigma, size=batch.shape)
    if policy.drop_prob > 0:
        out = out * (rng.random(size=batch.shape) >= policy.drop_prob)
    if policy.rotate and dim >= 2:
        i = rng.integers(0, dim, size=n)
        j = rng.integers(0, dim, size=n)
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        rows = np.arange(n)
        vi, vj = out[rows, i].copy(), out[rows, j].copy()
        out[rows, i] = cos_t * vi - sin_t * vj
        out[rows, j] = sin_t * vi + cos_t * vj
    return out[0] if single else out


def make_batches(
    dataset: Dataset,
    batch_size: int,
    epoch_seed: int,
    weak: AugmentPolicy | None = None,
    strong: AugmentPolicy | None = None,
) -> list[list[ViewPair]]:
    """One epoch of shuffled view-pair batches; the final partial batch is kept.

    Views are generated for the whole dataset in sample-index order before
    shuffling, so each sample's augmentation noise depends only on
    (epoch_seed, sample index, branch), never on batch composition.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    weak = weak or weak_policy()
    strong = strong or strong_policy()
    root = Rng(epoch_seed)
    weak_views = augment(dataset.samples, weak, root.split(_AUG_WEAK))
    strong_views = augment(dataset.samples, strong, root.split(_AUG_STRONG))
    perm = root.split(_PERM).permutation(len(dataset))
    batches: list[list[ViewPair]] = []
    for start in range(0, len(dataset), batch_size):
        idx = perm[start : start + batch_size]
        batches.append(
            [ViewPair(strong_views[i], weak_views[i], int(i)) for i in idx]
        )
    return batches


def split_dataset(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic stratified train/test split (per-class shuffle by seed)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = Rng(seed)
    train_idx, test_idx = [], []
    for cls in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == cls)
        idx = idx[rng.split(cls).permutation(idx.size)]
        n_test = int(round(idx.size * test_fraction))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)
    meta = dict(dataset.metadata)

    def subset(indices, tag):
        return Dataset(
            dataset.samples[indices].copy(),
            dataset.labels[indices].copy(),
            dataset.num_classes,
            metadata={**meta, "split": tag},
        )

    return subset(train_idx, "train"), subset(test_idx, "test")


def save_dataset(dataset: Dataset, path: str) -> None:
    """Write the binary container; bit-exact round trip with ``load_dataset``."""
    meta_text = "".join(f"{k}={v}\n" for k, v in sorted(dataset.metadata.items()))
    meta_bytes = meta_text.encode("utf-8")
    n, dim = dataset.samples.shape
    header = MAGIC + struct.pack(
        "<IIIII", FORMAT_VERSION, dim, n, dataset.num_classes, len(meta_bytes)
    )
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(header)
        f.write(meta_bytes)
        f.write(np.ascontiguousarray(dataset.samples, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(dataset.labels, dtype="<i4").tobytes())
    os.replace(tmp, path)


def load_dataset(path: str) -> Dataset:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a dataset file (bad magic)")
        version, dim, n, num_classes, meta_len = struct.unpack("<IIIII", f.read(20))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        metadata: dict[str, str] = {}
        for line in f.read(meta_len).decode("utf-8").splitlines():
            key, _, value = line.partition("=")
            metadata[key] = value
        samples = np.frombuffer(f.read(n * dim * 8), dtype="<f8").reshape(n, dim)
        labels = np.frombuffer(f.read(n * 4), dtype="<i4")
    return Dataset(samples.astype(np.float64), labels, num_classes, metadata)
