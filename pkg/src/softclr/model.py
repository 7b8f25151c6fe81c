"""Small MLP encoder/projector/predictor with hand-written backprop.

The online copy (encoder f, projector g, predictor h) is trained by gradient
descent; the momentum copy (encoder + projector only) trails it through an
exponential moving average and is never back-propagated.  Projections are
L2-normalized so that inner products between them are cosines.

Parameters live in a flat ``{key: array}`` dict; keys look like ``enc.0.W``
or ``tgt_proj.1.b``.  That keeps the optimizer, the EMA update and the
checkpoint container trivial.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStateError
from .numerics import Rng, as_matrix

__all__ = [
    "MlpSpec",
    "ModelParams",
    "ForwardCache",
    "init_params",
    "forward_online",
    "forward_momentum",
    "predictor_forward",
    "predictor_backward",
    "backward",
    "ema_update",
    "encode",
]

ONLINE_HEADS = ("enc", "proj", "pred")
MOMENTUM_OF = {"tgt_enc": "enc", "tgt_proj": "proj"}


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths for each head; every hidden layer uses ReLU.

    ``encoder`` maps input to the representation used by evaluation probes,
    ``projector`` maps the representation to the (normalized) embedding the
    losses see, and ``predictor`` is the extra online head used only by the
    negative-free trainer.
    """

    encoder: tuple[int, ...] = (16, 64, 64)
    projector: tuple[int, ...] = (64, 32, 16)
    predictor: tuple[int, ...] = (16, 32, 16)
    normalize_projection: bool = True

    def __post_init__(self):
        for name, widths in (("encoder", self.encoder), ("projector", self.projector),
                             ("predictor", self.predictor)):
            if len(widths) < 2 or any(w < 1 for w in widths):
                raise ValueError(f"{name} widths must be >= 1 with at least one layer: {widths}")
        if self.projector[-1] < 2:
            raise ValueError("projector output width must be >= 2")
        if self.encoder[-1] != self.projector[0]:
            raise ValueError("projector input must match encoder output")
        if self.projector[-1] != self.predictor[0]:
            raise ValueError("predictor input must match projector output")

    @property
    def input_dim(self) -> int:
        return self.encoder[0]

    @property
    def representation_dim(self) -> int:
        return self.encoder[-1]

    @property
    def projection_dim(self) -> int:
        return self.projector[-1]

    def to_dict(self) -> dict:
        return {
            "encoder": list(self.encoder),
            "projector": list(self.projector),
            "predictor": list(self.predictor),
            "normalize_projection": self.normalize_projection,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(
            encoder=tuple(d["encoder"]),
            projector=tuple(d["projector"]),
            predictor=tuple(d["predictor"]),
            normalize_projection=bool(d.get("normalize_projection", True)),
        )

    @classmethod
    def for_input(cls, input_dim: int, hidden: int = 64, representation: int = 64,
                  projection_hidden: int = 32, projection: int = 16,
                  predictor_hidden: int = 32) -> "MlpSpec":
        return cls(
            encoder=(input_dim, hidden, representation),
            projector=(representation, projection_hidden, projection),
            predictor=(projection, predictor_hidden, projection),
        )


def _head_keys(head: str, widths: tuple[int, ...]) -> list[tuple[str, str]]:
    return [(f"{head}.{i}.W", f"{head}.{i}.b") for i in range(len(widths) - 1)]


@dataclass
class ModelParams:
    spec: MlpSpec
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def layers(self, head: str) -> list[tuple[np.ndarray, np.ndarray]]:
        src = MOMENTUM_OF.get(head, head)
        widths = {"enc": self.spec.encoder, "proj": self.spec.projector,
                  "pred": self.spec.predictor}[src]
        return [(self.tensors[wk], self.tensors[bk]) for wk, bk in _head_keys(head, widths)]

    def online_keys(self, include_predictor: bool = True) -> list[str]:
        heads = ONLINE_HEADS if include_predictor else ONLINE_HEADS[:2]
        keys = []
        for head in heads:
            widths = {"enc": self.spec.encoder, "proj": self.spec.projector,
                      "pred": self.spec.predictor}[head]
            for wk, bk in _head_keys(head, widths):
                keys.extend([wk, bk])
        return keys

    def copy(self) -> "ModelParams":
        return ModelParams(self.spec, {k: v.copy() for k, v in self.tensors.items()})


def init_params(spec: MlpSpec, rng: Rng) -> ModelParams:
    """Scaled-uniform weight init (range sqrt(3/fan_in)), zero biases.

    The momentum copy starts as an exact clone of the online copy, so both
    branches agree at step 0.
    """
    tensors: dict[str, np.ndarray] = {}
    for head, widths in (("enc", spec.encoder), ("proj", spec.projector),
                         ("pred", spec.predictor)):
        for i, (wk, bk) in enumerate(_head_keys(head, widths)):
            fan_in, fan_out = widths[i], widths[i + 1]
            bound = np.sqrt(3.0 / fan_in)
            tensors[wk] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            tensors[bk] = np.zeros(fan_out, dtype=np.float64)
    for tgt, src in MOMENTUM_OF.items():
        widths = spec.encoder if src == "enc" else spec.projector
        for (twk, tbk), (swk, sbk) in zip(_head_keys(tgt, widths), _head_keys(src, widths)):
            tensors[twk] = tensors[swk].copy()
            tensors[tbk] = tensors[sbk].copy()
    return ModelParams(spec, tensors)


def _mlp_forward(layers, x: np.ndarray):
    """Linear+ReLU chain; the final layer stays linear.  Returns (out, caches)."""
    caches = []
    h = x
    for i, (w, b) in enumerate(layers):
        pre = h @ w + b
        caches.append((h, pre))
        h = np.maximum(pre, 0.0) if i < len(layers) - 1 else pre
    return h, caches


def _mlp_backward(layers, caches, d_out: np.ndarray):
    grads = [None] * len(layers)
    delta = d_out
    for i in range(len(layers) - 1, -1, -1):
        h_in, pre = caches[i]
        if i < len(layers) - 1:
            delta = delta * (pre > 0.0)
        grads[i] = (h_in.T @ delta, delta.sum(axis=0))
        delta = delta @ layers[i][0].T
    return grads, delta


@dataclass
class ForwardCache:
    enc_caches: list
    proj_caches: list
    prenorm: np.ndarray
    norms: np.ndarray
    projection: np.ndarray
    single: bool


def _as_batch(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return arr[np.newaxis, :], True
    return as_matrix(arr, "x"), False


def forward_online(params: ModelParams, x):
    """Online pass: representation f(x), unit projection, and a backward cache.

    Accepts a single vector or a batch (rows).  Raises if any projection
    vector is exactly zero before normalization, which can only happen with
    degenerate (e.g. all-zero) weights.
    """
    batch, single = _as_batch(x)
    if batch.shape[1] != params.spec.input_dim:
        raise ValueError(f"expected input dim {params.spec.input_dim}, got {batch.shape[1]}")
    rep, enc_caches = _mlp_forward(params.layers("enc"), batch)
    v, proj_caches = _mlp_forward(params.layers("proj"), rep)
    if params.spec.normalize_projection:
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ValueError("projection collapsed to the zero vector; cannot normalize")
        z = v / norms
    else:
        norms = np.ones((v.shape[0], 1))
        z = v
    cache = ForwardCache(enc_caches, proj_caches, v, norms, z, single)
    if single:
        return rep[0], z[0], cache
    return rep, z, cache


def forward_momentum(params: ModelParams, x) -> np.ndarray:
    """Momentum-branch projection; no cache is kept (never back-propagated)."""
    batch, single = _as_batch(x)
    if batch.shape[1] != params.spec.input_dim:
        raise ValueError(f"expected input dim {params.spec.input_dim}, got {batch.shape[1]}")
    rep, _ = _mlp_forward(params.layers("tgt_enc"), batch)
    v, _ = _mlp_forward(params.layers("tgt_proj"), rep)
    if params.spec.normalize_projection:
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ValueError("projection collapsed to the zero vector; cannot normalize")
        v = v / norms
    return v[0] if single else v


def encode(params: ModelParams, x, momentum: bool = False) -> np.ndarray:
    """Representation f(x) (pre-projector), as used by the evaluation probes."""
    batch, single = _as_batch(x)
    head = "tgt_enc" if momentum else "enc"
    rep, _ = _mlp_forward(params.layers(head), batch)
    return rep[0] if single else rep


def backward(params: ModelParams, cache: ForwardCache, grad_wrt_projection) -> dict[str, np.ndarray]:
    """Gradients of every online encoder/projector tensor.

    Chains the incoming projection-space gradient through the normalization
    Jacobian ``(I - z z^T)/||v||``, the projector and the encoder.  The cache
    must come from a matching ``forward_online`` call.
    """
    if cache is None:
        raise InvalidStateError("backward needs the cache of a prior forward_online call")
    d_z = np.asarray(grad_wrt_projection, dtype=np.float64)
    if d_z.ndim == 1:
        d_z = d_z[np.newaxis, :]
    if d_z.shape != cache.projection.shape:
        raise InvalidStateError(
            f"gradient shape {d_z.shape} does not match cached projection "
            f"{cache.projection.shape}"
        )
    if params.spec.normalize_projection:
        z = cache.projection
        d_v = (d_z - np.sum(d_z * z, axis=1, keepdims=True) * z) / cache.norms
    else:
        d_v = d_z
    proj_grads, d_rep = _mlp_backward(params.layers("proj"), cache.proj_caches, d_v)
    enc_grads, _ = _mlp_backward(params.layers("enc"), cache.enc_caches, d_rep)
    grads: dict[str, np.ndarray] = {}
    for (wk, bk), (dw, db) in zip(_head_keys("enc", params.spec.encoder), enc_grads):
        grads[wk], grads[bk] = dw, db
    for (wk, bk), (dw, db) in zip(_head_keys("proj", params.spec.projector), proj_grads):
        grads[wk], grads[bk] = dw, db
    return grads


def predictor_forward(params: ModelParams, z):
    """Predictor pass h(z) on online projections; returns (prediction, cache)."""
    batch, single = _as_batch(z)
    out, caches = _mlp_forward(params.layers("pred"), batch)
    return (out[0] if single else out), (caches, single)


def predictor_backward(params: ModelParams, cache, grad_wrt_prediction):
    """Gradients of the predictor tensors plus the gradient w.r.t. its input."""
    if cache is None:
        raise InvalidStateError("predictor_backward needs a predictor_forward cache")
    caches, single = cache
    d_out = np.asarray(grad_wrt_prediction, dtype=np.float64)
    if d_out.ndim == 1:
        d_out = d_out[np.newaxis, :]
    pred_grads, d_in = _mlp_backward(params.layers("pred"), caches, d_out)
    grads: dict[str, np.ndarray] = {}
    for (wk, bk), (dw, db) in zip(_head_keys("pred", params.spec.predictor), pred_grads):
        grads[wk], grads[bk] = dw, db
    return grads, (d_in[0] if single else d_in)


def ema_update(params: ModelParams, momentum: float) -> ModelParams:
    """Momentum copy update: every target tensor moves toward its online twin."""
    if not 0.0 <= momentum <= 1.0:
        raise ValueError(f"momentum must be in [0, 1], got {momentum}")
    for tgt, src in MOMENTUM_OF.items():
        widths = params.spec.encoder if src == "enc" else params.spec.projector
        for (twk, tbk), (swk, sbk) in zip(_head_keys(tgt, widths), _head_keys(src, widths)):
            params.tensors[twk] = momentum * params.tensors[twk] + (1.0 - momentum) * params.tensors[swk]
            params.tensors[tbk] = momentum * params.tensors[tbk] + (1.0 - momentum) * params.tensors[sbk]
    return params
