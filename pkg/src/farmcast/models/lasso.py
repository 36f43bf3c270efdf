"""L1-regularized linear regression by cyclic coordinate descent.

Minimizes (1/2n)||y - b - Xw||^2 + lam*||w||_1 with an unpenalized
intercept b. Coordinates are updated by soft-thresholding against the
partial residual; the intercept falls out of centering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import TrainingInfo, check_prediction_input, check_training_inputs


@dataclass(frozen=True)
class LassoModel:
    coef: np.ndarray
    intercept: float
    lam: float
    info: TrainingInfo

    family = "LASSO"

    def __post_init__(self) -> None:
        coef = np.asarray(self.coef, dtype=np.float64).copy()
        coef.flags.writeable = False
        object.__setattr__(self, "coef", coef)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = check_prediction_input(X, self.coef.size)
        return X @ self.coef + self.intercept

    def to_dict(self) -> dict:
        return {
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "lam": self.lam,
            "info": self.info.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "LassoModel":
        return cls(
            coef=np.asarray(raw["coef"], dtype=np.float64),
            intercept=float(raw["intercept"]),
            lam=float(raw["lam"]),
            info=TrainingInfo.from_dict(raw["info"]),
        )


def lasso_objective(X: np.ndarray, y: np.ndarray, coef: np.ndarray, intercept: float, lam: float) -> float:
    resid = y - intercept - X @ coef
    n = y.size
    return float(resid @ resid) / (2.0 * n) + lam * float(np.sum(np.abs(coef)))


def lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest lam for which the solution is exactly all-zero."""
    X, y = check_training_inputs(X, y)
    xc = X - X.mean(axis=0)
    yc = y - y.mean()
    return float(np.max(np.abs(xc.T @ yc))) / y.size


def train_lasso(
    X: np.ndarray,
    y: np.ndarray,
    lam: float = 1e-3,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> LassoModel:
    """Fit by cyclic coordinate descent until the largest coefficient
    change in a sweep drops below tol (or max_iter sweeps)."""
    X, y = check_training_inputs(X, y)
    if not (lam >= 0.0 and math.isfinite(lam)):
        raise ValueError(f"lam must be non-negative and finite, got {lam}")
    if tol <= 0.0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter >= 1")

    n, f = X.shape
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    xc = X - x_mean
    yc = y - y_mean
    # Per-coordinate curvature (1/n)||x_j||^2; zero for constant columns.
    curve = np.einsum("ij,ij->j", xc, xc) / n

    w = np.zeros(f)
    resid = yc.copy()
    converged = False
    sweeps = 0
    trace: list[float] = []
    for sweeps in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(f):
            if curve[j] == 0.0:
                continue
            rho = float(xc[:, j] @ resid) / n + curve[j] * w[j]
            w_new = math.copysign(max(abs(rho) - lam, 0.0), rho) / curve[j]
            delta = w_new - w[j]
            if delta != 0.0:
                resid -= delta * xc[:, j]
                w[j] = w_new
                max_delta = max(max_delta, abs(delta))
        trace.append(max_delta)
        if max_delta < tol:
            converged = True
            break

    intercept = y_mean - float(x_mean @ w)
    info = TrainingInfo(
        hyperparams={"lam": lam, "tol": tol, "max_iter": max_iter},
        n_iter=sweeps,
        final_train_loss=lasso_objective(X, y, w, intercept, lam),
        converged=converged,
        trace=tuple(trace),
    )
    return LassoModel(coef=w, intercept=intercept, lam=lam, info=info)
