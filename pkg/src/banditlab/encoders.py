"""Context-to-representation encoders.

Two families, both supporting the width rule n = max(1, round(c * D)):

* AutoencoderModel - one hidden layer, sigmoid on both layers, mean squared
  reconstruction error, plain SGD. Inputs are expected in [0, 1] (the
  ingestion pipeline min-max scales features), matching the sigmoid output
  range.
* LinearEncoderModel - mean-centering followed by projection onto the top-m
  principal directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.5
    minibatch_size: int = 32
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1 or self.minibatch_size < 1 or self.learning_rate <= 0:
            raise InputError(
                "epochs, minibatch_size must be >= 1 and learning_rate > 0, "
                f"got {self}"
            )


def compression_width(c: float, D: int) -> int:
    """Representation width for compression level c: max(1, round(c * D))."""
    return max(1, int(math.floor(c * D + 0.5)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Two-branch form avoids overflow warnings for large |z|.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class AutoencoderModel:
    """x -> sigmoid(W1 x + b1) -> sigmoid(W2 h + b2), trained by SGD on MSE."""

    def __init__(self, W1, b1, W2, b2):
        self.W1 = np.asarray(W1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.W2 = np.asarray(W2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        if self.W1.ndim != 2 or self.W2.shape != (self.W1.shape[1], self.W1.shape[0]):
            raise InputError("autoencoder weight shapes inconsistent")
        # Full-data MSE after each epoch of the most recent training call;
        # index 0 is the pre-training value. Diagnostics only, not serialized.
        self.loss_history: list[float] = []

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def output_dim(self) -> int:
        return self.W1.shape[0]

    @classmethod
    def initialize(cls, D: int, n: int, rng: np.random.Generator) -> "AutoencoderModel":
        """Fresh parameters, uniform in [-1/sqrt(D), 1/sqrt(D)]."""
        s = 1.0 / math.sqrt(D)
        return cls(
            W1=rng.uniform(-s, s, size=(n, D)),
            b1=rng.uniform(-s, s, size=n),
            W2=rng.uniform(-s, s, size=(D, n)),
            b2=rng.uniform(-s, s, size=D),
        )

    def _forward(self, X: np.ndarray):
        H = _sigmoid(X @ self.W1.T + self.b1)
        Y = _sigmoid(H @ self.W2.T + self.b2)
        return H, Y

    def mse(self, X) -> float:
        """Mean squared reconstruction error over rows of X."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        _, Y = self._forward(X)
        return float(np.mean((Y - X) ** 2))

    def encode(self, x) -> np.ndarray:
        x = _check_vector(x, self.input_dim)
        return _sigmoid(self.W1 @ x + self.b1)

    def decode(self, z) -> np.ndarray:
        z = _check_vector(z, self.output_dim)
        return _sigmoid(self.W2 @ z + self.b2)

    def reconstruct(self, x) -> np.ndarray:
        return self.decode(self.encode(x))

    def gradients(self, X: np.ndarray):
        """Gradient of the minibatch MSE w.r.t. (W1, b1, W2, b2)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        B, D = X.shape
        H, Y = self._forward(X)
        # L = mean over batch and dimensions of (Y - X)^2
        dA2 = (2.0 / (B * D)) * (Y - X) * Y * (1.0 - Y)
        gW2 = dA2.T @ H
        gb2 = dA2.sum(axis=0)
        dH = dA2 @ self.W2
        dA1 = dH * H * (1.0 - H)
        gW1 = dA1.T @ X
        gb1 = dA1.sum(axis=0)
        return gW1, gb1, gW2, gb2

    def _sgd(self, X: np.ndarray, cfg: TrainConfig, rng: np.random.Generator) -> None:
        self.loss_history = [self.mse(X)]
        n = len(X)
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n, cfg.minibatch_size):
                batch = X[order[start : start + cfg.minibatch_size]]
                gW1, gb1, gW2, gb2 = self.gradients(batch)
                self.W1 -= cfg.learning_rate * gW1
                self.b1 -= cfg.learning_rate * gb1
                self.W2 -= cfg.learning_rate * gW2
                self.b2 -= cfg.learning_rate * gb2
            mse = self.mse(X)
            if not math.isfinite(mse):
                raise NumericalError(
                    f"autoencoder training diverged: MSE non-finite at epoch "
                    f"{epoch + 1}/{cfg.epochs} (lr={cfg.learning_rate}, n={n})"
                )
            self.loss_history.append(mse)


class LinearEncoderModel:
    """x -> P (x - mean), with orthonormal rows of P from a PCA fit."""

    def __init__(self, mean, P):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.P = np.asarray(P, dtype=np.float64)
        if self.P.ndim != 2 or self.P.shape[1] != self.mean.shape[0]:
            raise InputError("projection/mean shapes inconsistent")

    @property
    def input_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def output_dim(self) -> int:
        return self.P.shape[0]

    def encode(self, x) -> np.ndarray:
        x = _check_vector(x, self.input_dim)
        return self.P @ (x - self.mean)

    def decode(self, z) -> np.ndarray:
        z = _check_vector(z, self.output_dim)
        return self.P.T @ z + self.mean

    def reconstruct(self, x) -> np.ndarray:
        return self.decode(self.encode(x))


EncoderModel = AutoencoderModel | LinearEncoderModel


def _check_vector(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dim,):
        raise InputError(f"vector has shape {x.shape}, expected ({dim},)")
    return x


def _as_matrix(data) -> np.ndarray:
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError(f"expected a non-empty list of vectors, got shape {X.shape}")
    return X


def train_autoencoder(data, n: int, cfg: TrainConfig | None = None) -> AutoencoderModel:
    """Train a fresh autoencoder with hidden width n on the given vectors."""
    cfg = TrainConfig() if cfg is None else cfg
    cfg.validate()
    X = _as_matrix(data)
    if n < 1:
        raise InputError(f"hidden width must be >= 1, got {n}")
    rng = np.random.default_rng(cfg.seed)
    model = AutoencoderModel.initialize(X.shape[1], n, rng)
    model._sgd(X, cfg, rng)
    return model


def update_autoencoder(model: AutoencoderModel, batch, cfg: TrainConfig | None = None) -> None:
    """Continue SGD from the model's current parameters over the batch."""
    cfg = TrainConfig() if cfg is None else cfg
    cfg.validate()
    X = _as_matrix(batch)
    if X.shape[1] != model.input_dim:
        raise InputError(
            f"batch dimension {X.shape[1]} does not match model input {model.input_dim}"
        )
    model._sgd(X, cfg, np.random.default_rng(cfg.seed))


def fit_linear_encoder(data, m: int) -> LinearEncoderModel:
    """PCA projection onto the top-m principal directions of centered data."""
    X = _as_matrix(data)
    n, D = X.shape
    if n < 2:
        raise InputError(f"need at least 2 points to fit a linear encoder, got {n}")
    if not 1 <= m <= D:
        raise InputError(f"target dimension {m} out of range [1, {D}]")
    mean = X.mean(axis=0)
    # Full SVD so rank-deficient data still yields m orthonormal rows.
    _, _, Vt = np.linalg.svd(X - mean, full_matrices=True)
    P = Vt[:m].copy()
    # Sign convention: largest-magnitude entry of each row is positive.
    for row in P:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    return LinearEncoderModel(mean, P)


def encode(model: EncoderModel, x) -> np.ndarray:
    """Representation of x under either encoder kind."""
    return model.encode(x)


def reconstruct(model: EncoderModel, x) -> np.ndarray:
    """Round-trip x through the encoder and back to input space."""
    return model.reconstruct(x)
