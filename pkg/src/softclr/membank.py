"""Fixed-capacity FIFO queue of momentum-branch embeddings."""

from __future__ import annotations

import numpy as np

from .errors import EmptyBankError
from .numerics import as_matrix

__all__ = ["MemoryBank", "EmptyBankError"]

UNIT_NORM_TOL = 1e-9


class MemoryBank:
    """Ring buffer of unit-norm embeddings; oldest entries are evicted first.

    The bank starts empty and fills over the first training iterations.  It
    never renormalizes what it stores: callers must enqueue unit vectors, and
    violations raise immediately.
    """

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self._buf = np.zeros((capacity, dim), dtype=np.float64)
        self._cursor = 0  # next write position
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def occupancy(self) -> int:
        return self._size

    @property
    def is_full(self) -> bool:
        return self._size == self.capacity

    def enqueue_batch(self, batch) -> "MemoryBank":
        """Append a batch of unit-norm embeddings, evicting the oldest."""
        b = as_matrix(batch, "batch")
        if b.shape[0] > self.capacity:
            raise ValueError(
                f"batch of {b.shape[0]} exceeds bank capacity {self.capacity}"
            )
        if b.shape[1] != self.dim:
            raise ValueError(f"expected dim {self.dim}, got {b.shape[1]}")
        norms = np.linalg.norm(b, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            worst = float(np.max(np.abs(norms - 1.0)))
            raise ValueError(f"bank entries must be unit-norm (deviation {worst:.3e})")
        for row in b:
            self._buf[self._cursor] = row
            self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self.capacity, self._size + b.shape[0])
        return self

    def snapshot(self) -> np.ndarray:
        """Copy of the contents in insertion order (oldest first).

        The copy is unaffected by later enqueues, so one snapshot can serve a
        whole loss/label computation.
        """
        if self._size < self.capacity:
            return self._buf[: self._size].copy()
        return np.concatenate(
            [self._buf[self._cursor :], self._buf[: self._cursor]], axis=0
        )

    def require_nonempty(self) -> None:
        if self._size == 0:
            raise EmptyBankError("memory bank is empty")

    def state(self) -> dict:
        """Serializable state; see ``MemoryBank.from_state``."""
        return {"capacity": self.capacity, "dim": self.dim, "entries": self.snapshot()}

    @classmethod
    def from_state(cls, state: dict) -> "MemoryBank":
        bank = cls(state["capacity"], state["dim"])
        entries = np.asarray(state["entries"], dtype=np.float64)
        if entries.size:
            bank.enqueue_batch(entries)
        return bank
