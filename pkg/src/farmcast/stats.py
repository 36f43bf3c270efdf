"""Distributional statistics for squared forecast errors.

Squared errors of a power forecast follow a scaled chi-square law, which is
a two-parameter gamma family. This module fits that family (moments and
maximum likelihood), compares fits with the closed-form Kullback-Leibler
divergence, and tests bins for distributional equality with the
Kruskal-Wallis rank test. The chi-square survival function needed for the
test is computed from the regularized incomplete gamma function implemented
here; only gammaln/digamma/polygamma come from scipy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, polygamma

__all__ = [
    "ErrorSample",
    "GammaFit",
    "KwResult",
    "Metrics",
    "chi2_survival",
    "error_measures",
    "fit_gamma",
    "kld_gamma",
    "kruskal_wallis",
    "regularized_upper_gamma",
]

# Values of exactly zero have no gamma log-likelihood; clamp instead of drop.
ZERO_CLAMP = 1e-12

_MLE_TOL = 1e-10
_MLE_MAX_ITER = 200

_IGAM_EPS = 1e-15
_IGAM_MAX_ITER = 1000


# ---------------------------------------------------------------------------
# incomplete gamma / chi-square survival
# ---------------------------------------------------------------------------

def _lower_series(a: float, x: float) -> float:
    # P(a, x) as the standard power series around x = 0.
    term = 1.0 / a
    total = term
    denom = a
    for _ in range(_IGAM_MAX_ITER):
        denom += 1.0
        term *= x / denom
        total += term
        if abs(term) < abs(total) * _IGAM_EPS:
            break
    log_prefactor = -x + a * math.log(x) - gammaln(a)
    return total * math.exp(log_prefactor)


def _upper_continued_fraction(a: float, x: float) -> float:
    # Q(a, x) by the Legendre continued fraction, modified Lentz evaluation.
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0.0 else 1.0 / tiny
    h = d
    for i in range(1, _IGAM_MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _IGAM_EPS:
            break
    log_prefactor = -x + a * math.log(x) - gammaln(a)
    return h * math.exp(log_prefactor)


def regularized_upper_gamma(a: float, x: float) -> float:
    """Normalized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a)."""
    if not (a > 0.0) or not math.isfinite(a):
        raise ValueError(f"shape parameter must be positive and finite, got {a}")
    if not (x >= 0.0) or not math.isfinite(x):
        raise ValueError(f"argument must be non-negative and finite, got {x}")
    if x == 0.0:
        return 1.0
    # The series converges fast left of the transition line, the continued
    # fraction right of it; both achieve relative accuracy ~1e-15 there.
    if x < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _lower_series(a, x)))
    return min(1.0, max(0.0, _upper_continued_fraction(a, x)))


def chi2_survival(x: float, dof: float) -> float:
    """P[X >= x] for a chi-square variable with ``dof`` degrees of freedom."""
    if dof <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {dof}")
    return regularized_upper_gamma(0.5 * dof, 0.5 * x)


# ---------------------------------------------------------------------------
# samples and point metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorSample:
    """A labeled sample of squared errors (non-negative, finite)."""

    values: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("error sample must be a non-empty 1-d array")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"error sample {self.label!r} contains non-finite values")
        if np.any(values < 0.0):
            raise ValueError(f"error sample {self.label!r} contains negative values")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class Metrics:
    """Pointwise forecast quality measures."""

    mse: float
    mae: float
    r2: float  # NaN marks the undefined case of a zero-variance target


def error_measures(y_true: np.ndarray, y_pred: np.ndarray) -> Metrics:
    """MSE, MAE and R2 between a target series and its prediction.

    R2 is returned as NaN when the target has zero variance; returning 1.0
    there would reward a constant predictor on a constant series.
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError(
            f"shape mismatch: y_true {y_true.shape} vs y_pred {y_pred.shape}"
        )
    if y_true.size == 0:
        raise ValueError("cannot compute measures of an empty series")
    err = y_true - y_pred
    mse = float(np.mean(err * err))
    mae = float(np.mean(np.abs(err)))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = float("nan")
    else:
        r2 = 1.0 - float(np.sum(err * err)) / ss_tot
    return Metrics(mse=mse, mae=mae, r2=r2)


# ---------------------------------------------------------------------------
# gamma fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaFit:
    """A fitted gamma(shape, scale) density for a squared-error sample."""

    shape: float
    scale: float
    n: int
    method: str

    def __post_init__(self) -> None:
        if not (self.shape > 0.0 and math.isfinite(self.shape)):
            raise ValueError(f"gamma shape must be positive and finite, got {self.shape}")
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ValueError(f"gamma scale must be positive and finite, got {self.scale}")
        if self.method not in ("mle", "moments"):
            raise ValueError(f"unknown fit method {self.method!r}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "scale": self.scale,
            "n": self.n,
            "method": self.method,
        }


def fit_gamma(sample: ErrorSample, method: str = "mle") -> GammaFit:
    """Fit a two-parameter gamma density to a squared-error sample.

    ``method="moments"``: shape = m^2/v, scale = v/m with the unbiased
    sample variance v. ``method="mle"``: Newton iteration on the profile
    likelihood equation ln(k) - psi(k) = ln(mean) - mean(ln x), started
    from the moments fit, scale = mean/shape. Zeros are clamped to
    ``ZERO_CLAMP`` so the log-likelihood stays defined.
    """
    if method not in ("mle", "moments"):
        raise ValueError(f"unknown fit method {method!r}")
    x = np.maximum(sample.values, ZERO_CLAMP)
    n = x.size
    if n < 2:
        raise ValueError("gamma fit needs at least two values")
    if np.all(x == x[0]):
        raise ValueError(f"degenerate sample {sample.label!r}: all values equal")
    m = float(np.mean(x))
    v = float(np.var(x, ddof=1))
    if m <= 0.0:
        raise ValueError("non-positive sample mean")
    k = m * m / v
    if method == "moments":
        return GammaFit(shape=k, scale=v / m, n=n, method="moments")

    s = math.log(m) - float(np.mean(np.log(x)))
    # ln k - psi(k) is strictly decreasing on k > 0, so the root is unique
    # and Newton from the moments estimate converges monotonically.
    for _ in range(_MLE_MAX_ITER):
        f = math.log(k) - float(digamma(k)) - s
        fprime = 1.0 / k - float(polygamma(1, k))
        k_next = k - f / fprime
        if k_next <= 0.0:
            k_next = 0.5 * k
        if abs(k_next - k) < _MLE_TOL:
            k = k_next
            break
        k = k_next
    return GammaFit(shape=k, scale=m / k, n=n, method="mle")


def kld_gamma(p: GammaFit, q: GammaFit) -> float:
    """Closed-form Kullback-Leibler divergence KL(p || q) between gamma fits.

    KL = (k_p - k_q) psi(k_p) - ln G(k_p) + ln G(k_q)
         + k_q ln(s_q / s_p) + k_p (s_p - s_q) / s_q
    with shapes k and scales s. Asymmetric; zero iff the parameters agree.
    """
    kp, sp = p.shape, p.scale
    kq, sq = q.shape, q.scale
    value = (
        (kp - kq) * float(digamma(kp))
        - float(gammaln(kp))
        + float(gammaln(kq))
        + kq * math.log(sq / sp)
        + kp * (sp - sq) / sq
    )
    # Mathematically >= 0; rounding can leave a tiny negative residue.
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# Kruskal-Wallis rank test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KwResult:
    """Kruskal-Wallis H statistic with its chi-square p-value."""

    h: float
    dof: int
    p_value: float
    tie_correction: float
    alpha: float = 0.05

    @property
    def significant(self) -> bool:
        return bool(self.p_value < self.alpha)

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "dof": self.dof,
            "p_value": self.p_value,
            "tie_correction": self.tie_correction,
            "alpha": self.alpha,
            "significant": None if math.isnan(self.p_value) else self.significant,
        }


def _midranks(pooled: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Ranks 1..N with tied values sharing the mean of their rank block.
    order = np.argsort(pooled, kind="stable")
    ordered = pooled[order]
    n = pooled.size
    boundaries = np.flatnonzero(ordered[1:] != ordered[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    counts = ends - starts
    block_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(block_rank, counts)
    return ranks, counts


def kruskal_wallis(groups: list[np.ndarray], alpha: float = 0.05) -> KwResult:
    """Kruskal-Wallis H test that the groups share one distribution.

    Mid-ranks for ties, the tie-corrected H statistic, and a p-value from
    the chi-square survival function with len(groups) - 1 degrees of
    freedom. When every pooled value is identical the statistic is
    undefined: H and p come back NaN with tie_correction 0.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(arrays) < 2:
        raise ValueError("need at least two groups")
    for i, g in enumerate(arrays):
        if g.size < 1:
            raise ValueError(f"group {i} is empty")
        if not np.all(np.isfinite(g)):
            raise ValueError(f"group {i} contains non-finite values")
    pooled = np.concatenate(arrays)
    n_total = pooled.size
    if n_total < 3:
        raise ValueError("need at least three values in total")

    ranks, tie_counts = _midranks(pooled)
    dof = len(arrays) - 1
    tie_term = float(np.sum(tie_counts.astype(np.float64) ** 3 - tie_counts))
    correction = 1.0 - tie_term / (float(n_total) ** 3 - float(n_total))
    if correction <= 0.0:
        return KwResult(
            h=float("nan"),
            dof=dof,
            p_value=float("nan"),
            tie_correction=0.0,
            alpha=alpha,
        )

    h = 0.0
    offset = 0
    for g in arrays:
        rank_sum = float(np.sum(ranks[offset : offset + g.size]))
        h += rank_sum * rank_sum / g.size
        offset += g.size
    h = 12.0 / (n_total * (n_total + 1.0)) * h - 3.0 * (n_total + 1.0)
    h /= correction
    h = max(h, 0.0)
    return KwResult(
        h=h,
        dof=dof,
        p_value=chi2_survival(h, dof),
        tie_correction=correction,
        alpha=alpha,
    )
