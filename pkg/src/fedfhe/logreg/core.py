"""Logistic-regression configuration, sigmoid fitting, and plaintext
reference routines.

The encrypted kernels (kernels module) evaluate the affine surrogate
0.5 + x/4 inside the ciphertext pipeline; the least-squares polynomial
produced by fit_sigmoid_poly is kept for plaintext scoring and model
export, where its better fit matters and no level budget applies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

CONST_BITS = 20  # must match params.const_bits of the desk profile
SURROGATE_SLOPE = 0.25


@dataclass(frozen=True)
class LrConfig:
    """Training hyperparameters shared by every gradient procedure."""

    learning_rate_schedule: Callable[[int], float] = field(
        default=lambda t: 0.1)
    iterations: int = 30
    batch_size: int | None = None
    sigmoid_degree: int = 3
    sigmoid_range: tuple[float, float] = (-8.0, 8.0)
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    def alpha(self, t: int) -> float:
        a = self.learning_rate_schedule(t)
        if a < 0:
            raise ValueError(f"learning rate at t={t} must be non-negative")
        return a


@dataclass(frozen=True)
class SigmoidPoly:
    """Odd-plus-half polynomial approximating the sigmoid on [lo, hi]."""

    coeffs: tuple[float, ...]  # ascending powers, even terms zero
    lo: float
    hi: float

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, float),
                                                self.coeffs)


@dataclass
class WeightState:
    """Model weights together with their replicated-layout ciphertext."""

    beta: np.ndarray
    ct_beta: object | None = None
    transcript: object | None = None


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def fit_sigmoid_poly(degree: int = 3,
                     fit_range: tuple[float, float] = (-8.0, 8.0),
                     grid: int = 10_001) -> SigmoidPoly:
    """Near-minimax odd polynomial fit of the sigmoid.

    The constant term is pinned to 1/2 and even powers to zero, so
    g(x) + g(-x) = 1 holds exactly for the fitted polynomial.  A
    reweighted least-squares loop pushes the fit toward the uniform-
    error optimum; on [-8,8] that lands near 0.089 for degree 3 and
    0.041 for degree 5 (no degree-3 polynomial does better than 0.089).
    """
    if degree not in (3, 5, 7):
        raise ValueError("degree must be one of 3, 5, 7")
    lo, hi = fit_range
    if not lo < hi:
        raise ValueError("fit range must satisfy lo < hi")
    x = np.linspace(lo, hi, grid)
    target = sigmoid(x) - 0.5
    powers = np.arange(1, degree + 1, 2)
    basis = x[:, None] ** powers[None, :]
    weights = np.ones(grid)
    for _ in range(120):
        w = weights / weights.sum()
        odd, *_ = np.linalg.lstsq(basis * w[:, None] ** 0.5,
                                  target * w ** 0.5, rcond=None)
        resid = np.abs(basis @ odd - target)
        weights = weights * np.maximum(resid, 1e-12)
    coeffs = np.zeros(degree + 1)
    coeffs[0] = 0.5
    coeffs[powers] = odd
    return SigmoidPoly(tuple(coeffs), lo, hi)


def quantized_rate(alpha: float, n: int, const_bits: int = CONST_BITS):
    """Learning-rate constant exactly as the ciphertext pipeline sees it:
    alpha/n encoded at 2^const_bits and rounded to an integer."""
    return round((alpha / n) * 2 ** const_bits) / 2 ** const_bits


def margin_rows(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Label-folded rows y_i * (1, x_i); labels must be in {-1, +1}."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise ValueError("labels must be encoded as -1/+1")
    return y[:, None] * np.hstack([np.ones((len(X), 1)), X])


def plain_grad_step(Z: np.ndarray, beta: np.ndarray, alpha: float,
                    target: np.ndarray | None = None) -> np.ndarray:
    """Plaintext replica of one encrypted gradient step.

    Mirrors the pipeline's arithmetic exactly: the affine surrogate
    0.5 + u/4 and the learning-rate constant quantized at 2^const_bits.
    With target=None, Z holds label-folded rows and the step ascends
    along sum g(z'b) z with g(u) = 1 - (0.5 + u/4); with a 0/1 target
    vector, Z holds raw rows and the step descends along the residual
    gradient sum (0.5 + u/4 - target) z.
    """
    n = len(Z)
    u = Z @ beta
    rate = quantized_rate(alpha, n)
    if target is None:
        g = 1.0 - (0.5 + SURROGATE_SLOPE * u)
        return beta + rate * (g @ Z)
    resid = (0.5 + SURROGATE_SLOPE * u) - target
    return beta - rate * (resid @ Z)


def plain_train(X: np.ndarray, y: np.ndarray, config: LrConfig,
                seed: int | None = None) -> np.ndarray:
    """Centralized surrogate-gradient training on label-folded rows."""
    Z = margin_rows(X, y)
    beta = np.zeros(Z.shape[1])
    rng = np.random.default_rng(config.seed if seed is None else seed)
    n = len(Z)
    batch = min(config.batch_size or n, n)
    for t in range(config.iterations):
        idx = rng.choice(n, batch, replace=False)
        beta = plain_grad_step(Z[idx], beta, config.alpha(t))
    return beta


def surrogate_loss(Z: np.ndarray, beta: np.ndarray) -> float:
    """Quadratic loss whose gradient the surrogate step follows."""
    u = Z @ beta
    return float(np.mean(u * u / 8.0 - u / 2.0))


def score_accuracy(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Sigmoid-threshold accuracy; a prediction exactly at 0.5 never
    counts as a positive hit."""
    if len(X) == 0:
        raise ValueError("empty test set")
    rows = np.hstack([np.ones((len(X), 1)), np.asarray(X, float)])
    pred = sigmoid(rows @ beta)
    correct = np.where(pred > 0.5, y > 0, y < 0)
    return float(np.mean(correct))


def save_lr_model(path, beta, scaler_mean, scaler_std, poly: SigmoidPoly,
                  feature_names=None, config: LrConfig | None = None):
    doc = {
        "version": 1,
        "feature_names": list(feature_names or
                              [f"x{i}" for i in range(len(beta) - 1)]),
        "beta": [float(b) for b in beta],
        "scaler": {"mean": [float(m) for m in scaler_mean],
                   "std": [float(s) for s in scaler_std]},
        "sigmoid_poly": {"coeffs": list(poly.coeffs), "lo": poly.lo,
                         "hi": poly.hi},
        "config": {
            "iterations": config.iterations if config else None,
            "batch_size": config.batch_size if config else None,
            "sigmoid_degree": config.sigmoid_degree if config else None,
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_lr_model(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != 1:
        raise ValueError("unsupported model version")
    poly = SigmoidPoly(tuple(doc["sigmoid_poly"]["coeffs"]),
                       doc["sigmoid_poly"]["lo"], doc["sigmoid_poly"]["hi"])
    return (np.array(doc["beta"]), np.array(doc["scaler"]["mean"]),
            np.array(doc["scaler"]["std"]), poly)
