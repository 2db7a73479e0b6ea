"""Uniform facade over the four classifier variants.

Every trained model exposes the same surface: ``variant``, ``feature_dim``,
``scores(Q)`` (continuous, for ROC analysis), ``predict(Q)`` (labels in
{-1, +1} under the variant's threshold and tie rule), and ``state_doc`` /
``from_state`` for serialization.  ``train`` dispatches on a LearnerConfig;
the seed is passed separately so experiment harnesses can derive it without
reference to hyperparameter values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import ConfigError, FormatError
from .forest import ForestModel, train_forest
from .knn import KNNModel, train_knn
from .mlp import MlpModel, train_mlp
from .svm import SvmModel, train_svm

MODEL_FORMAT = "bytegrams-model"
MODEL_VERSION = 1

LEARNER_VARIANTS = ("knn", "linear_svm", "random_forest", "mlp")

_ALLOWED_PARAMS = {
    "knn": {"k"},
    "linear_svm": {"C", "tol"},
    "random_forest": {"n_trees", "max_depth"},
    "mlp": {"hidden", "alpha", "max_iter"},
}

_MODEL_CLASSES = {
    "knn": KNNModel,
    "linear_svm": SvmModel,
    "random_forest": ForestModel,
    "mlp": MlpModel,
}


@dataclass(frozen=True)
class LearnerConfig:
    """A variant name plus its hyperparameters (seed excluded)."""

    variant: str
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.variant not in LEARNER_VARIANTS:
            raise ConfigError(
                f"unknown learner variant {self.variant!r}; expected one of "
                f"{', '.join(LEARNER_VARIANTS)}")
        extra = set(self.params) - _ALLOWED_PARAMS[self.variant]
        if extra:
            raise ConfigError(
                f"unknown parameters for {self.variant}: "
                f"{', '.join(sorted(extra))} (allowed: "
                f"{', '.join(sorted(_ALLOWED_PARAMS[self.variant]))})")


def default_configs() -> list[LearnerConfig]:
    """The four standard configurations used by the experiment sweeps."""
    return [
        LearnerConfig("knn", {"k": 5}),
        LearnerConfig("linear_svm", {"C": 1.0, "tol": 1e-3}),
        LearnerConfig("random_forest", {"n_trees": 10, "max_depth": 10}),
        LearnerConfig("mlp", {"hidden": 100, "alpha": 1e-5, "max_iter": 200}),
    ]


def train(config: LearnerConfig, X, z, seed: int = 0):
    """Train one model; only forest and mlp consume the seed."""
    config.validate()
    p = config.params
    if config.variant == "knn":
        return train_knn(X, z, **p)
    if config.variant == "linear_svm":
        return train_svm(X, z, **p)
    if config.variant == "random_forest":
        return train_forest(X, z, seed=seed, **p)
    return train_mlp(X, z, seed=seed, **p)


def save_model(model, path) -> None:
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION}
    doc.update(model.state_doc())
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="ascii") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(
                f"{path}: invalid model file at line {exc.lineno}: "
                f"{exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise FormatError(
            f"{path}: unsupported version {doc.get('version')!r}")
    variant = doc.get("variant")
    cls = _MODEL_CLASSES.get(variant)
    if cls is None:
        raise FormatError(f"{path}: unknown model variant {variant!r}")
    return cls.from_state(doc)
