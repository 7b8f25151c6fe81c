"""Momentum SGD with coupled weight decay, plus the cosine learning-rate law."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["OptimizerState", "init_optimizer", "sgd_step", "cosine_lr"]


@dataclass
class OptimizerState:
    velocities: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def init_optimizer(tensors: dict[str, np.ndarray], keys=None) -> OptimizerState:
    keys = list(tensors) if keys is None else keys
    return OptimizerState({k: np.zeros_like(tensors[k]) for k in keys})


def sgd_step(
    tensors: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    momentum: float,
    weight_decay: float,
) -> None:
    """In-place update: v <- momentum*v + g + wd*theta; theta <- theta - lr*v.

    Only keys present in ``grads`` are touched, so heads that did not take
    part in the forward pass (e.g. the predictor in bank-based training)
    stay frozen.
    """
    if lr < 0:
        raise ValueError(f"lr must be >= 0, got {lr}")
    for key, grad in grads.items():
        theta = tensors[key]
        if grad.shape != theta.shape:
            raise ValueError(f"{key}: grad shape {grad.shape} != param shape {theta.shape}")
        v = state.velocities[key]
        v *= momentum
        v += grad + weight_decay * theta
        theta -= lr * v
    state.step += 1


def cosine_lr(epoch_progress: float, base_lr: float) -> float:
    """Cosine annealing from base_lr at progress 0 to exactly 0 at progress 1."""
    if not 0.0 <= epoch_progress <= 1.0:
        raise ValueError(f"progress must be in [0, 1], got {epoch_progress}")
    return max(0.0, base_lr * 0.5 * (1.0 + float(np.cos(np.pi * epoch_progress))))
