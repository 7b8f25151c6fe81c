"""Run configuration: every hyperparameter of a training run, serializable."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

from .datapipe import AugmentPolicy, strong_policy, weak_policy
from .model import MlpSpec
from .relabel import LabelConfig, LabelStrategy

__all__ = ["Strategy", "RunConfig", "BANK_STRATEGIES", "BYOL_STRATEGIES"]


class Strategy(str, enum.Enum):
    """Training strategy: which pseudo label feeds which loop."""

    ONEHOT = "onehot"  # plain momentum-contrast baseline
    HARD = "hard"
    AHCL = "ahcl"
    ASCL = "ascl"
    BYOL = "byol"
    BYOL_ASCL = "byol-ascl"

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        name = text.strip().lower().replace("_", "-")
        if name == "moco":  # common alias for the baseline
            return cls.ONEHOT
        for member in cls:
            if member.value == name:
                return member
        valid = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown strategy {text!r} (expected one of: {valid}, moco)")


BANK_STRATEGIES = (Strategy.ONEHOT, Strategy.HARD, Strategy.AHCL, Strategy.ASCL)
BYOL_STRATEGIES = (Strategy.BYOL, Strategy.BYOL_ASCL)


@dataclass
class RunConfig:
    """Hyperparameters of one training run, with the stock defaults.

    ``learning_rate`` left as None applies the linear scaling rule
    0.06 * batch_size / 256.
    """

    strategy: Strategy = Strategy.ASCL
    num_neighbors: int = 1
    temperature: float = 0.1
    sharpen_temperature: float = 0.05
    bank_capacity: int = 4096
    ema_momentum: float = 0.99
    learning_rate: float | None = None
    sgd_momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 200
    batch_size: int = 256
    seed: int = 0
    weak: AugmentPolicy = field(default_factory=weak_policy)
    strong: AugmentPolicy = field(default_factory=strong_policy)
    model: MlpSpec | None = None  # None: default widths sized to the data
    probe_k: int = 20
    probe_temperature: float = 0.1
    dataset_path: str | None = None
    output_dir: str | None = None

    @property
    def resolved_learning_rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return 0.06 * self.batch_size / 256.0

    @property
    def uses_bank(self) -> bool:
        return self.strategy in BANK_STRATEGIES

    def label_config(self) -> LabelConfig:
        strategy = (
            LabelStrategy(self.strategy.value)
            if self.strategy in BANK_STRATEGIES
            else LabelStrategy.ASCL
        )
        return LabelConfig(
            strategy=strategy,
            num_neighbors=self.num_neighbors,
            sharpen_temperature=self.sharpen_temperature,
        )

    def validate(self) -> None:
        problems = []
        if self.num_neighbors < 0:
            problems.append("num_neighbors must be >= 0")
        if not self.temperature > 0:
            problems.append("temperature must be positive")
        if not self.sharpen_temperature > 0:
            problems.append("sharpen_temperature must be positive")
        if not 0.0 <= self.ema_momentum <= 1.0:
            problems.append("ema_momentum must be in [0, 1]")
        if self.learning_rate is not None and self.learning_rate < 0:
            problems.append("learning_rate must be >= 0")
        if self.sgd_momentum < 0 or self.weight_decay < 0:
            problems.append("sgd_momentum and weight_decay must be >= 0")
        if self.epochs < 1:
            problems.append("epochs must be >= 1")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.seed < 0:
            problems.append("seed must be >= 0")
        if self.uses_bank:
            if self.bank_capacity < 1:
                problems.append("bank_capacity must be >= 1")
            elif self.batch_size > self.bank_capacity:
                problems.append("batch_size cannot exceed bank_capacity")
            if self.num_neighbors > self.bank_capacity:
                problems.append("num_neighbors cannot exceed bank_capacity")
        if self.strategy is Strategy.BYOL_ASCL and self.batch_size < 3:
            problems.append("byol-ascl needs batch_size >= 3 for in-batch labels")
        if self.probe_k < 1:
            problems.append("probe_k must be >= 1")
        if not self.probe_temperature > 0:
            problems.append("probe_temperature must be positive")
        if problems:
            raise ValueError("invalid run config: " + "; ".join(problems))

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "num_neighbors": self.num_neighbors,
            "temperature": self.temperature,
            "sharpen_temperature": self.sharpen_temperature,
            "bank_capacity": self.bank_capacity,
            "ema_momentum": self.ema_momentum,
            "learning_rate": self.learning_rate,
            "sgd_momentum": self.sgd_momentum,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "weak": self.weak.to_dict(),
            "strong": self.strong.to_dict(),
            "model": self.model.to_dict() if self.model is not None else None,
            "probe_k": self.probe_k,
            "probe_temperature": self.probe_temperature,
            "dataset_path": self.dataset_path,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        kwargs = dict(d)
        kwargs["strategy"] = Strategy.parse(kwargs.get("strategy", "ascl"))
        if kwargs.get("weak") is not None:
            kwargs["weak"] = AugmentPolicy.from_dict(kwargs["weak"])
        if kwargs.get("strong") is not None:
            kwargs["strong"] = AugmentPolicy.from_dict(kwargs["strong"])
        if kwargs.get("model") is not None:
            kwargs["model"] = MlpSpec.from_dict(kwargs["model"])
        kwargs = {k: v for k, v in kwargs.items() if v is not None or k in ("learning_rate", "model", "dataset_path", "output_dir")}
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def with_strategy(self, strategy: Strategy) -> "RunConfig":
        return replace(self, strategy=strategy)
