"""Epsilon-insensitive support vector regression with an RBF kernel.

Solves the dual in the reduced variables beta_i = alpha_i - alpha_i*
(box [-C, C], sum(beta) = 0):

    maximize  D(beta) = y'beta - eps*||beta||_1 - (1/2) beta'K beta

by pairwise coordinate ascent: pick the most violating (up, down) pair,
then maximize exactly along e_i - e_j. The 1-d restriction is piecewise
quadratic with kinks where beta_i or beta_j crosses zero, so the exact
maximizer is found among segment stationary points, kinks and box ends.
The bias is the multiplier of the equality constraint, recovered from the
KKT interval at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import TrainingInfo, check_prediction_input, check_training_inputs


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||a_i - b_j||^2) for all row pairs."""
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def dual_objective(beta: np.ndarray, K: np.ndarray, y: np.ndarray, epsilon: float) -> float:
    return float(y @ beta - epsilon * np.sum(np.abs(beta)) - 0.5 * beta @ K @ beta)


@dataclass(frozen=True)
class SvrModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    C: float
    epsilon: float
    gamma: float
    n_features: int
    info: TrainingInfo

    family = "SVR"

    def __post_init__(self) -> None:
        sv = np.asarray(self.support_vectors, dtype=np.float64).reshape(-1, self.n_features)
        coef = np.asarray(self.dual_coef, dtype=np.float64).ravel()
        if sv.shape[0] != coef.size:
            raise ValueError("support vector and dual coefficient counts differ")
        if coef.size and np.max(np.abs(coef)) > self.C * (1.0 + 1e-12):
            raise ValueError("dual coefficients outside the box [-C, C]")
        for arr, name in ((sv, "support_vectors"), (coef, "dual_coef")):
            frozen = arr.copy()
            frozen.flags.writeable = False
            object.__setattr__(self, name, frozen)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = check_prediction_input(X, self.n_features)
        if self.dual_coef.size == 0:
            return np.full(X.shape[0], self.bias)
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    def to_dict(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "bias": self.bias,
            "C": self.C,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "n_features": self.n_features,
            "info": self.info.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SvrModel":
        return cls(
            support_vectors=np.asarray(raw["support_vectors"], dtype=np.float64),
            dual_coef=np.asarray(raw["dual_coef"], dtype=np.float64),
            bias=float(raw["bias"]),
            C=float(raw["C"]),
            epsilon=float(raw["epsilon"]),
            gamma=float(raw["gamma"]),
            n_features=int(raw["n_features"]),
            info=TrainingInfo.from_dict(raw["info"]),
        )


def train_svr(
    X: np.ndarray,
    y: np.ndarray,
    C: float = 1.0,
    epsilon: float = 0.1,
    gamma: float = 1.0,
    tol: float = 1e-4,
    max_iter: int = 200,
) -> SvrModel:
    """Train until the maximal KKT violation drops below tol.

    ``max_iter`` counts sweeps of n pair updates each. Kernel rows are
    computed lazily and cached, so only rows touched by the active set are
    ever materialized.
    """
    X, y = check_training_inputs(X, y)
    if C <= 0.0:
        raise ValueError(f"C must be positive, got {C}")
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if tol <= 0.0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter >= 1")

    n = y.size
    beta = np.zeros(n)
    fcache = np.zeros(n)  # K @ beta, maintained incrementally
    rows: dict[int, np.ndarray] = {}

    def kernel_row(i: int) -> np.ndarray:
        row = rows.get(i)
        if row is None:
            diff = X - X[i]
            row = np.exp(-gamma * np.einsum("ij,ij->i", diff, diff))
            rows[i] = row
        return row

    def objective() -> float:
        return float(y @ beta - epsilon * np.sum(np.abs(beta)) - 0.5 * beta @ fcache)

    updates = 0
    max_updates = max_iter * n
    trace = [objective()]
    converged = False
    while True:
        resid = y - fcache
        gain_up = resid - np.where(beta >= 0.0, epsilon, -epsilon)
        gain_dn = -resid - np.where(beta <= 0.0, epsilon, -epsilon)
        up = np.where(beta < C, gain_up, -np.inf)
        dn = np.where(beta > -C, gain_dn, -np.inf)
        i = int(np.argmax(up))
        j = int(np.argmax(dn))
        if up[i] + dn[j] <= tol:
            converged = True
            break
        if updates >= max_updates:
            break

        ki = kernel_row(i)
        kj = kernel_row(j)
        eta = 2.0 - 2.0 * float(ki[j])  # K_ii = K_jj = 1 for RBF
        bi, bj = float(beta[i]), float(beta[j])
        lo = max(-C - bi, bj - C)
        hi = min(C - bi, bj + C)
        g0 = float(resid[i] - resid[j])

        def gain(d: float) -> float:
            value = g0 * d - 0.5 * eta * d * d
            value -= epsilon * (abs(bi + d) - abs(bi) + abs(bj - d) - abs(bj))
            return value

        points = sorted({lo, hi, *(k for k in (-bi, bj) if lo < k < hi)})
        candidates = list(points)
        if eta > 0.0:
            for a, b in zip(points, points[1:]):
                mid = 0.5 * (a + b)
                sign_i = 1.0 if bi + mid >= 0.0 else -1.0
                sign_j = 1.0 if bj - mid >= 0.0 else -1.0
                stationary = (g0 - epsilon * (sign_i - sign_j)) / eta
                if a <= stationary <= b:
                    candidates.append(stationary)
        step = max(candidates, key=gain)
        if gain(step) <= 0.0:
            break  # no ascent along the best pair: numerically stalled
        beta[i] = min(C, max(-C, bi + step))
        beta[j] = min(C, max(-C, bj - step))
        fcache += step * (ki - kj)
        updates += 1
        if updates % n == 0:
            trace.append(objective())

    if updates % n != 0:
        trace.append(objective())
    resid = y - fcache
    gain_up = resid - np.where(beta >= 0.0, epsilon, -epsilon)
    gain_dn = -resid - np.where(beta <= 0.0, epsilon, -epsilon)
    b_low = float(np.max(np.where(beta < C, gain_up, -np.inf)))
    b_high = -float(np.max(np.where(beta > -C, gain_dn, -np.inf)))
    bias = 0.5 * (b_low + b_high)

    support = np.flatnonzero(beta != 0.0)
    train_pred = fcache + bias
    info = TrainingInfo(
        hyperparams={
            "C": C,
            "epsilon": epsilon,
            "gamma": gamma,
            "tol": tol,
            "max_iter": max_iter,
        },
        n_iter=updates,
        final_train_loss=float(np.mean((train_pred - y) ** 2)),
        converged=converged,
        trace=tuple(trace),
    )
    return SvrModel(
        support_vectors=X[support],
        dual_coef=beta[support],
        bias=bias,
        C=C,
        epsilon=epsilon,
        gamma=gamma,
        n_features=X.shape[1],
        info=info,
    )
