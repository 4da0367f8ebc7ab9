"""Multi-party sensitivity and per-weight Laplace noise (output perturbation).

The aggregate weighted average over n parties, each holding at least k rows
and training with L2 strength alpha_reg, has global sensitivity
2 / (n * k * alpha_reg); each client perturbs every weight with i.i.d.
Laplace noise of scale sensitivity / epsilon before masking.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class PrivacyConfig:
    epsilon: float
    n: int
    k: int
    alpha_reg: float

    def __post_init__(self):
        for name in ("epsilon", "n", "k", "alpha_reg"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive, got {getattr(self, name)}")

    @property
    def sensitivity(self) -> float:
        return 2.0 / (self.n * self.k * self.alpha_reg)

    @property
    def scale(self) -> float:
        """Laplace scale b = sensitivity / epsilon."""
        return self.sensitivity / self.epsilon


@dataclass(frozen=True)
class NoiseVector:
    values: np.ndarray
    client_id: int
    iteration: int


def sensitivity(config: PrivacyConfig) -> float:
    return config.sensitivity


def _inverse_cdf(u: np.ndarray, scale: float) -> np.ndarray:
    # Median-centered inverse CDF; one uniform draw per sample.
    centered = u - 0.5
    inner = 1.0 - 2.0 * np.abs(centered)
    inner = np.maximum(inner, np.finfo(np.float64).tiny)  # guard u == 0
    return -scale * np.sign(centered) * np.log(inner)


def laplace_sample(scale: float, rng: np.random.Generator) -> float:
    """One draw from Laplace(0, scale) via the inverse CDF."""
    if scale <= 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    u = rng.random()
    return float(_inverse_cdf(np.asarray(u), scale))


def make_noise(config: PrivacyConfig, m_plus_1: int,
               rng: np.random.Generator, client_id: int = 0,
               iteration: int = 0) -> NoiseVector:
    """Fresh i.i.d. per-weight noise at scale b for one protocol iteration."""
    if m_plus_1 < 1:
        raise ConfigError(f"weight count must be >= 1, got {m_plus_1}")
    u = rng.random(m_plus_1)
    values = _inverse_cdf(u, config.scale)
    return NoiseVector(values=values, client_id=client_id, iteration=iteration)
