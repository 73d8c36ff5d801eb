"""Linear contextual Thompson sampling over K arms.

Each arm keeps Gaussian posterior sufficient statistics (B, f) with B
initialized to the identity, the ridge mean mu_hat = B^-1 f, and a
maintained inverse updated by the Sherman-Morrison rank-1 identity. A full
re-inversion every INVERSE_REFRESH_EVERY updates bounds floating-point
drift. Arm selection draws mu_tilde ~ N(mu_hat, v^2 B^-1) per arm via a
Cholesky factor of B^-1 and picks the arm maximizing x . mu_tilde.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InputError, NumericalError

# Cadence of the full inversion that resets accumulated rank-1 drift.
INVERSE_REFRESH_EVERY = 1000


@dataclass(frozen=True)
class CtsConfig:
    """Posterior hyperparameters.

    The exploration scale v = R * sqrt((24 / epsilon) * d * ln(1 / gamma))
    is derived, not stored. Defaults are a pragmatic choice: the source
    analysis gives the formula but no experimental values, and the
    theoretical scale is far too conservative at small horizons.
    """

    R: float = 0.5
    epsilon: float = 0.5
    gamma: float = 0.1
    d: int = 1
    K: int = 1
    seed: int = 0

    def validate(self) -> None:
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ConfigError(f"R must be positive and finite, got {self.R}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.d < 1:
            raise ConfigError(f"context dimension must be >= 1, got {self.d}")
        if self.K < 1:
            raise ConfigError(f"arm count must be >= 1, got {self.K}")


def exploration_scale(cfg: CtsConfig) -> float:
    """v = R * sqrt((24 / epsilon) * d * ln(1 / gamma))."""
    cfg.validate()
    return cfg.R * math.sqrt((24.0 / cfg.epsilon) * cfg.d * math.log(1.0 / cfg.gamma))


@dataclass
class ArmPosterior:
    """Per-arm sufficient statistics with a maintained inverse of B."""

    B: np.ndarray
    B_inv: np.ndarray
    f: np.ndarray
    mu_hat: np.ndarray
    n_updates: int = 0

    @classmethod
    def fresh(cls, d: int) -> "ArmPosterior":
        return cls(
            B=np.eye(d),
            B_inv=np.eye(d),
            f=np.zeros(d),
            mu_hat=np.zeros(d),
        )


class CtsBandit:
    """K-armed linear Thompson sampling bandit over d-dimensional contexts.

    Single-writer: never mutate one instance from two threads. Rewards are
    accepted as arbitrary reals (budgeted rewards downstream can be
    negative).
    """

    def __init__(self, K: int, d: int, cfg: CtsConfig | None = None):
        cfg = CtsConfig() if cfg is None else cfg
        cfg = replace(cfg, K=int(K), d=int(d))
        cfg.validate()
        self.config = cfg
        self.d = cfg.d
        self.K = cfg.K
        # Tests force v = 0.0 to obtain the deterministic greedy policy.
        self.v = exploration_scale(cfg)
        self.rng = np.random.default_rng(cfg.seed)
        self.arms = [ArmPosterior.fresh(self.d) for _ in range(self.K)]

    def _check_context(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise InputError(f"context has shape {x.shape}, expected ({self.d},)")
        if not np.all(np.isfinite(x)):
            raise InputError("context contains non-finite entries")
        return x

    def sample_arm(self, x) -> int:
        """Draw one posterior sample per arm and return the argmax arm.

        Ties break to the lowest arm index. With v == 0 this is the greedy
        argmax of x . mu_hat (the standard-normal draws are still consumed,
        keeping the RNG stream position independent of v).
        """
        x = self._check_context(x)
        scores = np.empty(self.K)
        for i, arm in enumerate(self.arms):
            try:
                L = np.linalg.cholesky(arm.B_inv)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(
                    f"posterior covariance of arm {i} is not positive definite "
                    f"(after {arm.n_updates} updates)"
                ) from exc
            mu_tilde = arm.mu_hat + self.v * (L @ self.rng.standard_normal(self.d))
            scores[i] = x @ mu_tilde
        return int(np.argmax(scores))

    def update(self, arm: int, x, r: float) -> None:
        """B += x x^T, f += r x, rank-1 inverse update, mu_hat = B^-1 f."""
        if not 0 <= arm < self.K:
            raise InputError(f"arm index {arm} out of range [0, {self.K})")
        x = self._check_context(x)
        a = self.arms[arm]
        a.B += np.outer(x, x)
        a.f += float(r) * x
        z = a.B_inv @ x
        a.B_inv -= np.outer(z, z) / (1.0 + float(x @ z))
        a.n_updates += 1
        if a.n_updates % INVERSE_REFRESH_EVERY == 0:
            inv = np.linalg.inv(a.B)
            # B is symmetric by construction; keep its inverse exactly so.
            a.B_inv = (inv + inv.T) / 2.0
        a.mu_hat = a.B_inv @ a.f

    def posterior_mean(self, arm: int) -> np.ndarray:
        """Ridge mean (I + X^T X)^-1 X^T r of the arm's update history."""
        if not 0 <= arm < self.K:
            raise InputError(f"arm index {arm} out of range [0, {self.K})")
        return self.arms[arm].mu_hat.copy()

    def reinitialize(self) -> None:
        """Reset every arm to the fresh state; the RNG state is preserved."""
        self.arms = [ArmPosterior.fresh(self.d) for _ in range(self.K)]


def new_bandit(K: int, d: int, cfg: CtsConfig | None = None) -> CtsBandit:
    """Construct a fresh bandit: every arm has B = I_d, f = 0, mu_hat = 0."""
    return CtsBandit(K, d, cfg)
