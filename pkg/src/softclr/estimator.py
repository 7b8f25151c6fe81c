"""scikit-learn compatible wrappers around the training engine.

``ContrastiveEncoder`` is a transformer: ``fit(X)`` runs self-supervised
training on the rows of X (any ``y`` is ignored) and ``transform(X)``
returns frozen encoder representations, ready for downstream pipelines.
``SoftKnnClassifier`` is the probe as an estimator: an exp(cos/T)-weighted
nearest-neighbor vote, handy after a ContrastiveEncoder in a Pipeline.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .config import RunConfig, Strategy
from .datapipe import Dataset, strong_policy, weak_policy
from .model import MlpSpec, encode, forward_online
from .probes import weighted_knn_predict
from .train import train

__all__ = ["ContrastiveEncoder", "SoftKnnClassifier"]


class ContrastiveEncoder(TransformerMixin, BaseEstimator):
    """Self-supervised representation learner with soft pseudo-labels.

    Parameters mirror the run configuration; ``learning_rate=None`` applies
    the 0.06 * batch_size / 256 scaling rule.  After ``fit``, ``transform``
    maps rows to encoder representations and ``project`` to unit-norm
    projections.

    Attributes set by fit: ``params_`` (model weights), ``metrics_`` (per-step
    records), ``n_features_in_``.
    """

    def __init__(
        self,
        strategy: str = "ascl",
        num_neighbors: int = 1,
        temperature: float = 0.1,
        sharpen_temperature: float = 0.05,
        bank_capacity: int = 4096,
        ema_momentum: float = 0.99,
        learning_rate: float | None = None,
        sgd_momentum: float = 0.9,
        weight_decay: float = 1e-4,
        epochs: int = 200,
        batch_size: int = 256,
        hidden_width: int = 64,
        representation_width: int = 64,
        projection_hidden_width: int = 32,
        projection_width: int = 16,
        random_state: int = 0,
    ):
        self.strategy = strategy
        self.num_neighbors = num_neighbors
        self.temperature = temperature
        self.sharpen_temperature = sharpen_temperature
        self.bank_capacity = bank_capacity
        self.ema_momentum = ema_momentum
        self.learning_rate = learning_rate
        self.sgd_momentum = sgd_momentum
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.hidden_width = hidden_width
        self.representation_width = representation_width
        self.projection_hidden_width = projection_hidden_width
        self.projection_width = projection_width
        self.random_state = random_state

    def _run_config(self, n_features: int) -> RunConfig:
        spec = MlpSpec.for_input(
            n_features,
            hidden=self.hidden_width,
            representation=self.representation_width,
            projection_hidden=self.projection_hidden_width,
            projection=self.projection_width,
        )
        # keep the bank legal for small fits without changing semantics
        bank = max(self.bank_capacity, self.batch_size)
        return RunConfig(
            strategy=Strategy.parse(self.strategy),
            num_neighbors=self.num_neighbors,
            temperature=self.temperature,
            sharpen_temperature=self.sharpen_temperature,
            bank_capacity=bank,
            ema_momentum=self.ema_momentum,
            learning_rate=self.learning_rate,
            sgd_momentum=self.sgd_momentum,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.random_state,
            weak=weak_policy(),
            strong=strong_policy(),
            model=spec,
        )

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64, ensure_min_samples=1)
        config = self._run_config(X.shape[1])
        dataset = Dataset(
            X, np.zeros(X.shape[0], dtype=np.int32), 1, metadata={"generator": "array"}
        )
        result = train(config, dataset)
        self.params_ = result.params
        self.metrics_ = result.records
        self.run_config_ = config
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return encode(self.params_, X)

    def project(self, X) -> np.ndarray:
        """Unit-norm projection-head outputs (the space the loss works in)."""
        check_is_fitted(self, "params_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        _, z, _ = forward_online(self.params_, X)
        return z


class SoftKnnClassifier(ClassifierMixin, BaseEstimator):
    """Cosine-similarity weighted KNN vote with exp(sim/temperature) weights."""

    def __init__(self, n_neighbors: int = 20, temperature: float = 0.1):
        self.n_neighbors = n_neighbors
        self.temperature = temperature

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        self._train_features = X
        self._train_targets = encoded
        return self

    def predict(self, X):
        check_is_fitted(self, "classes_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        votes = weighted_knn_predict(
            self._train_features,
            self._train_targets,
            X,
            k=self.n_neighbors,
            temperature=self.temperature,
            num_classes=len(self.classes_),
        )
        return self.classes_[votes]
