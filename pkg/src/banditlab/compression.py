"""Dual-bandit adaptive compression.

Bandit B1 picks a compression level from the raw context; the level's
encoder compresses the context to width max(1, round(c * D)); bandit B2
classifies the zero-padded representation. Both bandits learn from
budgeted rewards r - alpha * c, so the level chooser can be charged for
retaining information. With staged=True both bandits are reinitialized at
every mini-batch boundary.
"""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass, replace

from .encoders import (
    AutoencoderModel,
    LinearEncoderModel,
    TrainConfig,
    compression_width,
    fit_linear_encoder,
    train_autoencoder,
    update_autoencoder,
)
from .errors import ConfigError, InputError, ProtocolError
from .seeding import derive_seed
from .thompson import CtsBandit, CtsConfig

DEFAULT_LEVELS = (0.25, 0.5, 0.75, 1.0)

_TAG_B1 = 11
_TAG_B2 = 12
_TAG_PRETRAIN = 13
_TAG_FINETUNE = 14


@dataclass(frozen=True)
class CompressionLevels:
    """Strictly increasing fractions of the input dimension, each in (0, 1]."""

    values: tuple[float, ...] = DEFAULT_LEVELS

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigError("need at least one compression level")
        if any(not 0.0 < v <= 1.0 for v in vals):
            raise ConfigError(f"levels must lie in (0, 1], got {vals}")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError(f"levels must be strictly increasing, got {vals}")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> float:
        return self.values[i]


@dataclass(frozen=True)
class BudgetSplit:
    """Budget weights charged to the level bandit (alpha_k) and the
    classifier bandit (alpha_p)."""

    alpha_k: float = 0.1
    alpha_p: float = 0.0

    def __post_init__(self):
        if self.alpha_k < 0 or self.alpha_p < 0:
            raise ConfigError("budget weights must be >= 0")


def assign_reward(split: BudgetSplit, r: float, c: float) -> tuple[float, float]:
    """(r - alpha_k * c, r - alpha_p * c); either side may go negative."""
    return r - split.alpha_k * c, r - split.alpha_p * c


@dataclass(frozen=True)
class CompressionConfig:
    input_dim: int
    n_classes: int
    levels: CompressionLevels = CompressionLevels()
    encoder_kind: str = "linear"  # "linear" | "autoencoder"
    split: BudgetSplit = BudgetSplit()
    staged: bool = False
    batch_size: int = 1000
    bandit: CtsConfig = CtsConfig()
    train: TrainConfig = TrainConfig()
    finetune_epochs: int = 5
    seed: int = 0

    def validate(self) -> None:
        if self.input_dim < 1 or self.n_classes < 1 or self.batch_size < 1:
            raise ConfigError("input_dim, n_classes, batch_size must be >= 1")
        if self.encoder_kind not in ("linear", "autoencoder"):
            raise ConfigError(f"unknown encoder kind {self.encoder_kind!r}")


@dataclass
class _Pending:
    level: int
    x: np.ndarray
    z: np.ndarray
    arm: int


class CompressionAgent:
    """Two-bandit step/observe loop choosing a compression level per round."""

    def __init__(self, cfg: CompressionConfig):
        cfg.validate()
        self.cfg = cfg
        self.levels = cfg.levels
        self.widths = [compression_width(c, cfg.input_dim) for c in cfg.levels.values]
        self.level_bandit = CtsBandit(
            K=len(cfg.levels),
            d=cfg.input_dim,
            cfg=replace(cfg.bandit, seed=derive_seed(cfg.seed, _TAG_B1)),
        )
        self.class_bandit = CtsBandit(
            K=cfg.n_classes,
            d=cfg.input_dim,
            cfg=replace(cfg.bandit, seed=derive_seed(cfg.seed, _TAG_B2)),
        )
        self.encoders: list[AutoencoderModel | LinearEncoderModel] = []
        self.history: list[np.ndarray] = []
        self.batch_buffer: list[np.ndarray] = []
        self.pending: _Pending | None = None
        self.batch_index = 0

    def pretrain(self, contexts) -> None:
        """Fit one encoder per compression level on the unlabeled history."""
        X = np.asarray(contexts, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise InputError("pretraining data must be a non-empty list of contexts")
        if X.shape[1] != self.cfg.input_dim:
            raise InputError(
                f"pretraining dimension {X.shape[1]} != configured {self.cfg.input_dim}"
            )
        self.encoders = []
        for i, width in enumerate(self.widths):
            if self.cfg.encoder_kind == "linear":
                self.encoders.append(fit_linear_encoder(X, width))
            else:
                cfg = replace(self.cfg.train, seed=derive_seed(self.cfg.seed, _TAG_PRETRAIN, i))
                self.encoders.append(train_autoencoder(X, width, cfg))
        self.history = list(X)
        self.level_bandit.reinitialize()
        self.class_bandit.reinitialize()
        self.batch_buffer = []
        self.pending = None
        self.batch_index = 0

    def _check_ready(self) -> None:
        if not self.encoders:
            raise ProtocolError("agent must be pretrained before stepping")

    def _check_context(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.cfg.input_dim,):
            raise InputError(f"context has shape {x.shape}, expected ({self.cfg.input_dim},)")
        return x

    def _pad(self, z: np.ndarray) -> np.ndarray:
        out = np.zeros(self.cfg.input_dim)
        out[: len(z)] = z
        return out

    def select_compression(self, x) -> int:
        """Level index sampled by B1 from the raw context."""
        return self.level_bandit.sample_arm(self._check_context(x))

    def step(self, x) -> tuple[int, int]:
        """Choose (level index, class arm) for x; observe() must follow."""
        if self.pending is not None:
            raise ProtocolError("step called with an unresolved previous step")
        self._check_ready()
        x = self._check_context(x)
        level = self.level_bandit.sample_arm(x)
        z = self._pad(self.encoders[level].encode(x))
        arm = self.class_bandit.sample_arm(z)
        self.pending = _Pending(level=level, x=x, z=z, arm=arm)
        self.batch_buffer.append(x)
        self.history.append(x)
        return level, arm

    def observe(self, reward: float) -> tuple[float, float]:
        """Split the reward into budgeted shares and update both bandits."""
        if self.pending is None:
            raise ProtocolError("observe called without a pending step")
        p = self.pending
        c = self.levels[p.level]
        r_k, r_p = assign_reward(self.cfg.split, float(reward), c)
        self.level_bandit.update(p.level, p.x, r_k)
        self.class_bandit.update(p.arm, p.z, r_p)
        self.pending = None
        if len(self.batch_buffer) >= self.cfg.batch_size:
            self.end_of_batch()
        return r_k, r_p

    def round(self, x, true_label: int) -> tuple[int, int, float]:
        """One full round against a labeled example: returns (level, arm, r)
        with r = 1 iff the classification was correct."""
        level, arm = self.step(x)
        r = 1.0 if arm == int(true_label) else 0.0
        self.observe(r)
        return level, arm, r

    def end_of_batch(self) -> None:
        """Update every level's encoder; staged agents reset both bandits."""
        batch = self.batch_buffer
        self.batch_buffer = []
        if batch:
            X = np.stack(batch)
            for i, width in enumerate(self.widths):
                if self.cfg.encoder_kind == "linear":
                    self.encoders[i] = fit_linear_encoder(np.stack(self.history), width)
                else:
                    cfg = replace(
                        self.cfg.train,
                        epochs=self.cfg.finetune_epochs,
                        seed=derive_seed(self.cfg.seed, _TAG_FINETUNE, self.batch_index, i),
                    )
                    update_autoencoder(self.encoders[i], X, cfg)
        if self.cfg.staged:
            self.level_bandit.reinitialize()
            self.class_bandit.reinitialize()
        self.batch_index += 1
