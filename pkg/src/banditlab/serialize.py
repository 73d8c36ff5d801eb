"""Flat binary save/load for encoder, cluster, and bandit state.

Layout (little-endian): 4-byte magic "BLB1", 1 kind byte, kind-specific
dimension header (uint32s), then the payload arrays as row-major float64
(int64 for cluster counts and update counters). The same container backs
model files and agent pretrain snapshots.

Kinds: 1 = autoencoder (D, n; W1, b1, W2, b2), 2 = linear encoder
(D, m; mean, P), 3 = cluster model (D, k; centroids, counts),
4 = bandit (d, K; R, epsilon, gamma, seed; per-arm update counts;
per arm B, B_inv, f, mu_hat).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .clustering import ClusterModel
from .encoders import AutoencoderModel, LinearEncoderModel
from .errors import DataFormatError
from .thompson import ArmPosterior, CtsBandit, CtsConfig

MAGIC = b"BLB1"

KIND_AUTOENCODER = 1
KIND_LINEAR = 2
KIND_CLUSTERS = 3
KIND_BANDIT = 4


class _Reader:
    def __init__(self, buf: bytes, path: str):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise DataFormatError(f"{self.path}: truncated (wanted {n} more bytes)")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, count: int = 1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count))
        return vals[0] if count == 1 else vals

    def f64(self, count: int = 1):
        vals = struct.unpack(f"<{count}d", self.take(8 * count))
        return vals[0] if count == 1 else vals

    def i64(self, count: int = 1):
        vals = struct.unpack(f"<{count}q", self.take(8 * count))
        return vals[0] if count == 1 else vals

    def array(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        raw = self.take(8 * n)
        return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise DataFormatError(f"{self.path}: {len(self.buf) - self.pos} trailing bytes")


def _arr(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def save_model(obj, path) -> None:
    """Serialize an encoder, cluster model, or bandit to the flat layout."""
    parts: list[bytes] = [MAGIC]
    if isinstance(obj, AutoencoderModel):
        n, D = obj.W1.shape
        parts.append(struct.pack("<BII", KIND_AUTOENCODER, D, n))
        parts += [_arr(obj.W1), _arr(obj.b1), _arr(obj.W2), _arr(obj.b2)]
    elif isinstance(obj, LinearEncoderModel):
        m, D = obj.P.shape
        parts.append(struct.pack("<BII", KIND_LINEAR, D, m))
        parts += [_arr(obj.mean), _arr(obj.P)]
    elif isinstance(obj, ClusterModel):
        parts.append(struct.pack("<BII", KIND_CLUSTERS, obj.dim, obj.k))
        parts.append(_arr(obj.centroids))
        parts.append(obj.counts.astype("<i8").tobytes())
    elif isinstance(obj, CtsBandit):
        cfg = obj.config
        parts.append(struct.pack("<BII", KIND_BANDIT, obj.d, obj.K))
        parts.append(struct.pack("<dddq", cfg.R, cfg.epsilon, cfg.gamma, cfg.seed))
        parts.append(struct.pack(f"<{obj.K}q", *(a.n_updates for a in obj.arms)))
        for a in obj.arms:
            parts += [_arr(a.B), _arr(a.B_inv), _arr(a.f), _arr(a.mu_hat)]
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    Path(path).write_bytes(b"".join(parts))


def load_model(path):
    """Load any object written by save_model; validates magic, kind, sizes."""
    path = str(path)
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != MAGIC:
        raise DataFormatError(f"{path}: bad magic, not a banditlab model file")
    kind = r.take(1)[0]
    if kind == KIND_AUTOENCODER:
        D, n = r.u32(2)
        obj = AutoencoderModel(
            W1=r.array((n, D)), b1=r.array((n,)), W2=r.array((D, n)), b2=r.array((D,))
        )
    elif kind == KIND_LINEAR:
        D, m = r.u32(2)
        obj = LinearEncoderModel(mean=r.array((D,)), P=r.array((m, D)))
    elif kind == KIND_CLUSTERS:
        D, k = r.u32(2)
        centroids = r.array((k, D))
        counts = np.frombuffer(r.take(8 * k), dtype="<i8").astype(np.int64)
        obj = ClusterModel(centroids, counts)
    elif kind == KIND_BANDIT:
        d, K = r.u32(2)
        R, epsilon, gamma, seed = struct.unpack("<dddq", r.take(32))
        n_updates = r.i64(K)
        n_updates = (n_updates,) if K == 1 else n_updates
        obj = CtsBandit(K, d, CtsConfig(R=R, epsilon=epsilon, gamma=gamma, seed=seed))
        for i in range(K):
            obj.arms[i] = ArmPosterior(
                B=r.array((d, d)),
                B_inv=r.array((d, d)),
                f=r.array((d,)),
                mu_hat=r.array((d,)),
                n_updates=int(n_updates[i]),
            )
    else:
        raise DataFormatError(f"{path}: unknown kind byte {kind}")
    r.done()
    return obj
