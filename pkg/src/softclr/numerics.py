"""Dense float64 math primitives and deterministic random number streams.

Everything downstream (labels, losses, the training loop) is built on the
handful of functions here.  All public functions are pure, operate on 64-bit
floats, and raise on non-finite results rather than propagating NaNs.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidDistributionError

__all__ = [
    "Rng",
    "derive_seed",
    "tempered_softmax",
    "softmax_rows",
    "entropy_rows",
    "shannon_entropy",
    "cosine_sim",
    "l2_normalize",
    "normalize_rows",
    "topk_indices",
    "as_vector",
    "as_matrix",
]


def as_vector(x, name: str = "input") -> np.ndarray:
    """Coerce to a finite 1-D float64 array of length >= 1."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains NaN or Inf")
    return v


def as_matrix(x, name: str = "input") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN or Inf")
    return m


def softmax_rows(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise tempered softmax with max-subtraction for stability.

    The single-vector `tempered_softmax` delegates here, so per-sample and
    batched callers produce bit-identical rows.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    scaled = np.asarray(logits, dtype=np.float64) / temperature
    shifted = scaled - np.max(scaled, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def tempered_softmax(logits, temperature: float) -> np.ndarray:
    """Softmax of ``logits / temperature``; entries in (0, 1], summing to 1."""
    v = as_vector(logits, "logits")
    return softmax_rows(v[np.newaxis, :], temperature)[0]


def entropy_rows(dist: np.ndarray) -> np.ndarray:
    """Shannon entropy (natural log) of each row, with 0*log(0) = 0."""
    d = np.asarray(dist, dtype=np.float64)
    terms = np.where(d > 0.0, d * np.log(np.where(d > 0.0, d, 1.0)), 0.0)
    return -np.sum(terms, axis=-1)


def shannon_entropy(dist) -> float:
    """Entropy -sum(p * ln p) of a probability vector.

    The input must be entrywise nonnegative and sum to 1 within 1e-9,
    otherwise InvalidDistributionError is raised.
    """
    d = as_vector(dist, "distribution")
    if np.any(d < 0.0):
        raise InvalidDistributionError("distribution has negative entries")
    total = float(np.sum(d))
    if abs(total - 1.0) > 1e-9:
        raise InvalidDistributionError(f"distribution sums to {total}, not 1")
    return float(entropy_rows(d[np.newaxis, :])[0])


def cosine_sim(a, b) -> float:
    """Cosine similarity of two vectors, clamped into [-1, 1]."""
    va = as_vector(a, "a")
    vb = as_vector(b, "b")
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for zero vectors")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def l2_normalize(v) -> np.ndarray:
    """Scale a vector to unit L2 norm; zero vectors are rejected."""
    x = as_vector(v, "vector")
    n = float(np.linalg.norm(x))
    if n == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return x / n


def normalize_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise unit normalization; any zero row is rejected."""
    x = as_matrix(m, "matrix")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize a zero row")
    return x / norms


def topk_indices(values, k: int) -> np.ndarray:
    """Indices of the k largest entries, descending by value.

    Ties are broken by ascending index so the result is deterministic and
    independent of any RNG.
    """
    v = as_vector(values, "values")
    if k < 0 or k > v.size:
        raise ValueError(f"k={k} out of range for length {v.size}")
    if k == 0:
        return np.empty(0, dtype=np.intp)
    # stable argsort on negated values keeps ascending-index order among ties
    order = np.argsort(-v, kind="stable")
    return order[:k]


def derive_seed(seed: int, *path: int) -> int:
    """Deterministically derive a 64-bit child seed from a root seed and path."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class Rng:
    """Deterministic, splittable random stream (Philox, counter-based).

    The same (seed, path) pair yields the same sequence on every platform and
    in every process.  ``split`` derives an independent child stream, which is
    how per-sample noise is made reproducible regardless of batch order.
    A single Rng instance is not thread-safe; split instead of sharing.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def split(self, *path: int) -> "Rng":
        """Child stream at ``self.path + path``; independent of the parent."""
        return Rng(self.seed, self.path + tuple(int(p) for p in path))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size=size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._gen.normal(loc, scale, size=size)

    def random(self, size=None):
        return self._gen.random(size=size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Rng(seed={self.seed}, path={self.path})"
