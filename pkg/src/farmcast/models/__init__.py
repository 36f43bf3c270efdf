"""Regression model families trained on standardized feature matrices.

Four families share the registry interface: LASSO (coordinate descent),
SVR (pairwise dual ascent, RBF kernel), MLP (mini-batch SGD) and GBRT
(residual-boosted regression trees). Each trainer accepts a hyperparameter
dict plus a seed and returns a model object with ``predict`` and
``to_dict``/``from_dict``.
"""

from __future__ import annotations

import numpy as np

from .base import (
    MODEL_FORMAT_VERSION,
    Predictor,
    TrainingInfo,
    known_families,
    load_model,
    model_document,
    predict,
    register_family,
    save_model,
    train,
    trainer_for,
)
from .gbrt import GbrtModel, train_gbrt, tree_predict
from .lasso import LassoModel, lambda_max, lasso_objective, train_lasso
from .mlp import MlpModel, forward, init_parameters, loss_and_gradients, mse_loss, train_mlp
from .svr import SvrModel, dual_objective, rbf_kernel, train_svr


def _train_lasso(X: np.ndarray, y: np.ndarray, params: dict, seed: int) -> LassoModel:
    del seed  # deterministic given the data
    return train_lasso(X, y, **params)


def _train_svr(X: np.ndarray, y: np.ndarray, params: dict, seed: int) -> SvrModel:
    del seed
    return train_svr(X, y, **params)


def _train_mlp(X: np.ndarray, y: np.ndarray, params: dict, seed: int) -> MlpModel:
    return train_mlp(X, y, seed=seed, **params)


def _train_gbrt(X: np.ndarray, y: np.ndarray, params: dict, seed: int) -> GbrtModel:
    del seed
    return train_gbrt(X, y, **params)


register_family("LASSO", _train_lasso, LassoModel)
register_family("SVR", _train_svr, SvrModel)
register_family("MLP", _train_mlp, MlpModel)
register_family("GBRT", _train_gbrt, GbrtModel)

__all__ = [
    "MODEL_FORMAT_VERSION",
    "GbrtModel",
    "LassoModel",
    "MlpModel",
    "Predictor",
    "SvrModel",
    "TrainingInfo",
    "dual_objective",
    "forward",
    "init_parameters",
    "known_families",
    "lambda_max",
    "lasso_objective",
    "load_model",
    "loss_and_gradients",
    "model_document",
    "mse_loss",
    "predict",
    "rbf_kernel",
    "register_family",
    "save_model",
    "train",
    "train_gbrt",
    "train_lasso",
    "train_mlp",
    "train_svr",
    "trainer_for",
    "tree_predict",
]
