"""Contrastive losses with exact analytic gradients.

Two families live here: soft cross-entropy over (query, target, bank) with
the gradient taken in projection space, and the negative-free cosine loss
over a batch of predictions and targets.  Gradients flow only into the
online branch; the target and bank embeddings are constants.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidLabelError
from .numerics import as_matrix, as_vector

__all__ = ["soft_infonce", "soft_infonce_batch", "infonce", "byol_soft_loss"]

LABEL_SUM_TOL = 1e-9


def _bank_matrix(bank, dim: int) -> np.ndarray:
    if bank is None:
        return np.zeros((0, dim), dtype=np.float64)
    entries = bank.snapshot() if hasattr(bank, "snapshot") else np.asarray(bank, dtype=np.float64)
    if entries.size == 0:
        return np.zeros((0, dim), dtype=np.float64)
    return as_matrix(entries, "bank")


def _check_labels(y: np.ndarray, expected_len: int) -> None:
    if y.shape[-1] != expected_len:
        raise InvalidLabelError(
            f"label length {y.shape[-1]} does not match target+bank size {expected_len}"
        )
    if np.any(y < 0.0):
        raise InvalidLabelError("label weights must be nonnegative")
    sums = np.sum(y, axis=-1)
    if np.any(np.abs(sums - 1.0) > LABEL_SUM_TOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise InvalidLabelError(f"labels must sum to 1 (deviation {worst:.3e})")


def _log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    return shifted - lse


def soft_infonce_batch(queries, labels, targets, bank, temperature: float):
    """Soft cross-entropy loss for a whole batch.

    For each row i the prediction distribution is the tempered softmax of
    ``[q_i . t_i, q_i . bank_1, ...]`` and the loss is the cross-entropy
    against label row i.  Returns ``(mean_loss, grad, per_sample)`` where
    ``grad[i]`` is the gradient of the *mean* loss with respect to query i.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    q = as_matrix(queries, "queries")
    t = as_matrix(targets, "targets")
    y = as_matrix(labels, "labels")
    if q.shape != t.shape:
        raise ValueError(f"queries {q.shape} and targets {t.shape} differ")
    entries = _bank_matrix(bank, q.shape[1])
    _check_labels(y, entries.shape[0] + 1)
    b = q.shape[0]
    pos = np.sum(q * t, axis=1, keepdims=True)
    logits = np.concatenate([pos, q @ entries.T], axis=1) / temperature
    logp = _log_softmax_rows(logits)
    per_sample = -np.sum(y * logp, axis=1)
    p = np.exp(logp)
    delta = (p - y) / (temperature * b)
    grad = delta[:, :1] * t + delta[:, 1:] @ entries
    return float(np.mean(per_sample)), grad, per_sample


def soft_infonce(query, label, target, bank, temperature: float):
    """Per-sample soft cross-entropy loss and its gradient w.r.t. the query.

    The gradient is ``(1/tau) * sum_j (p_j - y_j) z'_j`` with ``z'_0`` the
    target and the rest the bank entries; it is exact, not finite-differenced.
    """
    q = as_vector(query, "query")
    t = as_vector(target, "target")
    y = as_vector(label, "label")
    loss, grad, _ = soft_infonce_batch(
        q[np.newaxis, :], y[np.newaxis, :], t[np.newaxis, :], bank, temperature
    )
    return loss, grad[0]


def infonce(query, target, bank, temperature: float) -> float:
    """Instance-discrimination loss: one positive against the bank.

    Computed stably via log-sum-exp; with an empty bank only the positive
    term remains and the loss is exactly 0.
    """
    q = as_vector(query, "query")
    t = as_vector(target, "target")
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    entries = _bank_matrix(bank, q.size)
    logits = np.concatenate([[np.dot(q, t)], entries @ q]) / temperature
    logp = _log_softmax_rows(logits[np.newaxis, :])[0]
    return float(-logp[0])


def byol_soft_loss(predictions, targets, labels):
    """Soft cosine-alignment loss for the negative-free path.

    Per sample i the loss is ``2 - 2 * sum_j y_ij cos(t_i, u_j)`` over the
    batch's predictions ``u_j``; the total is the mean over i.  Returns
    ``(mean_loss, grad, per_sample)`` with ``grad[j]`` the gradient of the
    mean loss w.r.t. prediction j (taken before normalization, which happens
    inside the cosine).
    """
    u = as_matrix(predictions, "predictions")
    t = as_matrix(targets, "targets")
    y = as_matrix(labels, "labels")
    b = u.shape[0]
    if t.shape[0] != b or y.shape != (b, b):
        raise ValueError(
            f"inconsistent batch: predictions {u.shape}, targets {t.shape}, labels {y.shape}"
        )
    _check_labels(y, b)
    u_norms = np.linalg.norm(u, axis=1, keepdims=True)
    if np.any(u_norms == 0.0):
        raise ValueError("zero-norm prediction vector")
    t_norms = np.linalg.norm(t, axis=1, keepdims=True)
    if np.any(t_norms == 0.0):
        raise ValueError("zero-norm target vector")
    u_hat = u / u_norms
    t_hat = t / t_norms
    cos = t_hat @ u_hat.T  # cos[i, j] = cos(t_i, u_j)
    per_sample = 2.0 - 2.0 * np.sum(y * cos, axis=1)
    # d cos(t_i, u_j) / d u_j = (t_hat_i - cos_ij * u_hat_j) / ||u_j||
    col_weight = np.sum(y * cos, axis=0)  # sum_i y_ij cos_ij
    grad = (-2.0 / b) * (y.T @ t_hat - col_weight[:, np.newaxis] * u_hat) / u_norms
    return float(np.mean(per_sample)), grad, per_sample
