"""Regularized logistic regression trained by full-batch gradient descent.

Labels are in {-1, +1}; the objective is mean log-loss plus an L2 penalty of
(alpha_reg / 2) * ||w||^2 over the whole vector, intercept included.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EvaluationError, TrainingError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    local_iterations: int = 250
    alpha_reg: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.local_iterations < 0:
            raise ConfigError(f"local_iterations must be >= 0, got {self.local_iterations}")
        if self.alpha_reg < 0:
            raise ConfigError(f"alpha_reg must be >= 0, got {self.alpha_reg}")


def sigmoid(z):
    """Numerically stable logistic function (exp only of non-positive args)."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def _check_data(w, features, labels):
    if features.shape[0] == 0:
        raise EvaluationError("empty dataset")
    if features.shape[1] != w.shape[0]:
        raise EvaluationError(
            f"feature width {features.shape[1]} does not match weight length {w.shape[0]}")
    if labels.shape[0] != features.shape[0]:
        raise EvaluationError("label count does not match row count")


def loss(w: np.ndarray, features: np.ndarray, labels: np.ndarray,
         alpha_reg: float) -> float:
    """Mean log(1 + exp(-y * w.x)) + (alpha_reg / 2) * ||w||^2."""
    w = np.asarray(w, dtype=np.float64)
    _check_data(w, features, labels)
    margins = labels * (features @ w)
    data_term = np.logaddexp(0.0, -margins).mean()
    return float(data_term + 0.5 * alpha_reg * w @ w)


def gradient(w: np.ndarray, features: np.ndarray, labels: np.ndarray,
             alpha_reg: float) -> np.ndarray:
    """Mean of -y * x * sigmoid(-y * w.x), plus alpha_reg * w."""
    w = np.asarray(w, dtype=np.float64)
    _check_data(w, features, labels)
    margins = labels * (features @ w)
    slack = sigmoid(-margins)
    data_term = -(features.T @ (labels * slack)) / features.shape[0]
    return data_term + alpha_reg * w


def train(start: np.ndarray, features: np.ndarray, labels: np.ndarray,
          config: TrainConfig) -> np.ndarray:
    """Run exactly config.local_iterations full-batch GD steps from ``start``."""
    w = np.array(start, dtype=np.float64, copy=True)
    # Divergence shows up as overflow; the isfinite check below reports it.
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(config.local_iterations):
            w = w - config.learning_rate * gradient(w, features, labels, config.alpha_reg)
            if not np.all(np.isfinite(w)):
                raise TrainingError(f"non-finite weights at local iteration {step + 1}")
    return w


def predict(w: np.ndarray, features: np.ndarray):
    """Fraud probability sigmoid(w.x); classified fraud iff >= 0.5."""
    w = np.asarray(w, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != w.shape[0]:
        raise EvaluationError(
            f"feature width {features.shape[-1]} does not match weight length {w.shape[0]}")
    return sigmoid(features @ w)
