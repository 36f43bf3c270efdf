"""Shared predictor plumbing: training metadata, registry, JSON persistence."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainingInfo:
    """What a trainer did: hyperparameters, effort, convergence, loss trace."""

    hyperparams: dict
    n_iter: int
    final_train_loss: float
    converged: bool
    trace: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "hyperparams": self.hyperparams,
            "n_iter": self.n_iter,
            "final_train_loss": self.final_train_loss,
            "converged": self.converged,
            "trace": list(self.trace),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainingInfo":
        return cls(
            hyperparams=dict(raw["hyperparams"]),
            n_iter=int(raw["n_iter"]),
            final_train_loss=float(raw["final_train_loss"]),
            converged=bool(raw["converged"]),
            trace=tuple(float(v) for v in raw.get("trace", ())),
        )


class Predictor(Protocol):
    family: str
    info: TrainingInfo

    def predict(self, X: np.ndarray) -> np.ndarray: ...

    def to_dict(self) -> dict: ...


def check_training_inputs(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Validate and coerce (X, y) for any trainer."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-d, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y shape {y.shape} does not match X rows {X.shape[0]}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"need at least one sample and one feature, got {X.shape}")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("training inputs contain non-finite values")
    return X, y


def check_prediction_input(X: np.ndarray, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} feature columns, got shape {X.shape}")
    return X


# ---------------------------------------------------------------------------
# family registry
# ---------------------------------------------------------------------------

Trainer = Callable[[np.ndarray, np.ndarray, dict, int], "Predictor"]

_TRAINERS: dict[str, Trainer] = {}
_MODEL_CLASSES: dict[str, type] = {}


def register_family(family: str, trainer: Trainer, model_class: type) -> None:
    """Register a model family for training and deserialization.

    Tests and extensions may register additional families (an injected
    perfect predictor, for instance); the four built-ins register on
    package import.
    """
    if not family or family != family.upper():
        raise ValueError(f"family tag must be non-empty upper case, got {family!r}")
    _TRAINERS[family] = trainer
    _MODEL_CLASSES[family] = model_class


def known_families() -> tuple[str, ...]:
    return tuple(sorted(_TRAINERS))


def trainer_for(family: str) -> Trainer:
    try:
        return _TRAINERS[family]
    except KeyError:
        raise ValueError(
            f"unknown model family {family!r}; known: {sorted(_TRAINERS)}"
        ) from None


def train(family: str, X: np.ndarray, y: np.ndarray, params: dict, seed: int) -> "Predictor":
    return trainer_for(family)(X, y, params, seed)


def predict(model: "Predictor", X: np.ndarray) -> np.ndarray:
    """Dispatch to the model's own deterministic predict."""
    return model.predict(X)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def model_document(model: "Predictor") -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "family": model.family,
        "model": model.to_dict(),
    }


def save_model(model: "Predictor", path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_document(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str | Path) -> "Predictor":
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    version = raw.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {version!r}")
    family = raw.get("family")
    if family not in _MODEL_CLASSES:
        raise ValueError(f"{path}: unknown model family {family!r}")
    return _MODEL_CLASSES[family].from_dict(raw["model"])


def finite_or_raise(values: np.ndarray, context: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise RuntimeError(f"{context}: non-finite values encountered")
    return values
