"""Embedding-selection bandit agents.

One agent = one sequential step/observe loop. Four policy variants share
the loop:

* baseline  - contextual Thompson sampling on the raw context.
* universal - a single autoencoder trained on all pre-training data, the
              bandit runs on its codes; fine-tuned (or optionally fully
              retrained) each mini-batch.
* minibatch - per-cluster autoencoders; clusters are recomputed from the
              full context history at every mini-batch boundary.
* online    - per-cluster autoencoders; the matched centroid is updated
              after every step, no boundary re-clustering.

The classification bandit is shared across clusters and is never
reinitialized at batch boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .clustering import (
    ClusterModel,
    assign_cluster,
    kmeans_fit,
    recompute_clusters,
    update_cluster_online,
)
from .encoders import AutoencoderModel, TrainConfig, train_autoencoder, update_autoencoder
from .errors import InputError, ProtocolError
from .seeding import derive_seed
from .thompson import CtsBandit, CtsConfig

# Seed-stream purpose tags: every random consumer is keyed independently so
# variants with identical seeds stay comparable draw for draw.
_TAG_BANDIT = 1
_TAG_KMEANS = 2
_TAG_PRETRAIN = 3
_TAG_FINETUNE = 4


class PolicyVariant(str, Enum):
    BASELINE = "baseline"
    UNIVERSAL = "universal"
    MINIBATCH = "minibatch"
    ONLINE = "online"

    @property
    def clustered(self) -> bool:
        return self in (PolicyVariant.MINIBATCH, PolicyVariant.ONLINE)


@dataclass(frozen=True)
class AgentConfig:
    variant: PolicyVariant
    input_dim: int
    n_classes: int
    k: int = 4
    batch_size: int = 1000
    embed_dim: int | None = None  # None -> ceil(input_dim / 4)
    bandit: CtsConfig = CtsConfig()
    train: TrainConfig = TrainConfig()
    finetune_epochs: int = 5
    universal_full_retrain: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.input_dim < 1 or self.n_classes < 1:
            raise InputError("input_dim and n_classes must be >= 1")
        if self.k < 1 or self.batch_size < 1 or self.finetune_epochs < 1:
            raise InputError("k, batch_size, finetune_epochs must be >= 1")
        if self.embed_dim is not None and self.embed_dim < 1:
            raise InputError("embed_dim must be >= 1")


@dataclass
class _Pending:
    cluster: int | None
    z: np.ndarray
    arm: int


class EmbeddingBanditAgent:
    """Strictly alternating step/observe decision loop over a context stream."""

    def __init__(self, cfg: AgentConfig):
        cfg.validate()
        self.cfg = cfg
        self.variant = cfg.variant
        self.embed_dim = cfg.embed_dim or math.ceil(cfg.input_dim / 4)
        bandit_dim = cfg.input_dim if self.variant is PolicyVariant.BASELINE else self.embed_dim
        self.bandit = CtsBandit(
            K=cfg.n_classes,
            d=bandit_dim,
            cfg=replace(cfg.bandit, seed=derive_seed(cfg.seed, _TAG_BANDIT)),
        )
        self.clusters: ClusterModel | None = None
        self.encoders: list[AutoencoderModel] = []
        self.history: list[np.ndarray] = []
        self.batch_buffer: list[np.ndarray] = []
        self.pending: _Pending | None = None
        self.batch_index = 0
        self._pretrained = False

    # -- lifecycle ---------------------------------------------------------

    def pretrain(self, contexts) -> None:
        """Fit clusters/encoders on the unlabeled history; bandit starts fresh."""
        cfg = self.cfg
        X = np.asarray(contexts, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise InputError("pretraining data must be a non-empty list of contexts")
        if X.shape[1] != cfg.input_dim:
            raise InputError(
                f"pretraining dimension {X.shape[1]} != configured {cfg.input_dim}"
            )
        if self.variant.clustered and len(X) < cfg.k:
            raise InputError(f"need at least k={cfg.k} pretraining points, got {len(X)}")

        if self.variant is PolicyVariant.UNIVERSAL:
            self.encoders = [self._train_encoder(X, cluster=0)]
        elif self.variant.clustered:
            self.clusters = kmeans_fit(X, cfg.k, seed=derive_seed(cfg.seed, _TAG_KMEANS, 0))
            assign = self._assignments(X)
            self.encoders = []
            for j in range(cfg.k):
                members = X[assign == j]
                # A cluster emptied by degenerate data falls back to all points.
                self.encoders.append(self._train_encoder(members if len(members) else X, cluster=j))

        self.history = list(X) if self.variant is not PolicyVariant.BASELINE else []
        self.bandit.reinitialize()
        self.batch_buffer = []
        self.pending = None
        self.batch_index = 0
        self._pretrained = True

    def _train_encoder(self, X: np.ndarray, cluster: int) -> AutoencoderModel:
        cfg = replace(self.cfg.train, seed=derive_seed(self.cfg.seed, _TAG_PRETRAIN, cluster))
        return train_autoencoder(X, self.embed_dim, cfg)

    def _finetune_cfg(self, cluster: int) -> TrainConfig:
        return replace(
            self.cfg.train,
            epochs=self.cfg.finetune_epochs,
            seed=derive_seed(self.cfg.seed, _TAG_FINETUNE, self.batch_index, cluster),
        )

    def _assignments(self, X: np.ndarray) -> np.ndarray:
        return np.asarray([assign_cluster(self.clusters, x) for x in X], dtype=np.int64)

    # -- decision loop -----------------------------------------------------

    def step(self, x) -> int:
        """Pick an arm for context x; a reward must be observed before the
        next step."""
        if self.pending is not None:
            raise ProtocolError("step called with an unresolved previous step")
        if self.variant is not PolicyVariant.BASELINE and not self._pretrained:
            raise ProtocolError("agent must be pretrained before stepping")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.cfg.input_dim,):
            raise InputError(f"context has shape {x.shape}, expected ({self.cfg.input_dim},)")

        cluster: int | None = None
        if self.variant is PolicyVariant.BASELINE:
            z = x
        elif self.variant is PolicyVariant.UNIVERSAL:
            z = self.encoders[0].encode(x)
        else:
            cluster = assign_cluster(self.clusters, x)
            if self.variant is PolicyVariant.ONLINE:
                update_cluster_online(self.clusters, x, cluster)
            z = self.encoders[cluster].encode(x)

        arm = self.bandit.sample_arm(z)
        self.pending = _Pending(cluster=cluster, z=z, arm=arm)
        self.batch_buffer.append(x)
        if self.variant is not PolicyVariant.BASELINE:
            self.history.append(x)
        return arm

    def observe(self, reward: float) -> None:
        """Feed back the reward of the pending step and update the bandit."""
        if self.pending is None:
            raise ProtocolError("observe called without a pending step")
        self.bandit.update(self.pending.arm, self.pending.z, float(reward))
        self.pending = None
        if len(self.batch_buffer) >= self.cfg.batch_size:
            self.end_of_batch()

    def end_of_batch(self) -> None:
        """Mini-batch boundary: re-cluster (minibatch variant) and update
        encoders. The bandit is NOT reinitialized."""
        batch = self.batch_buffer
        self.batch_buffer = []
        if self.variant is PolicyVariant.BASELINE or not batch:
            self.batch_index += 1
            return
        X = np.stack(batch)

        if self.variant is PolicyVariant.UNIVERSAL:
            if self.cfg.universal_full_retrain:
                cfg = replace(
                    self.cfg.train,
                    seed=derive_seed(self.cfg.seed, _TAG_FINETUNE, self.batch_index, 0),
                )
                self.encoders[0] = train_autoencoder(
                    np.stack(self.history), self.embed_dim, cfg
                )
            else:
                update_autoencoder(self.encoders[0], X, self._finetune_cfg(0))
        else:
            if self.variant is PolicyVariant.MINIBATCH:
                new_clusters = recompute_clusters(
                    np.stack(self.history),
                    self.cfg.k,
                    seed=derive_seed(self.cfg.seed, _TAG_KMEANS, self.batch_index + 1),
                )
                self.encoders = _match_encoders(
                    self.clusters.centroids, new_clusters.centroids, self.encoders
                )
                self.clusters = new_clusters
            assign = self._assignments(X)
            for j in range(self.cfg.k):
                members = X[assign == j]
                if len(members):
                    update_autoencoder(self.encoders[j], members, self._finetune_cfg(j))

        self.batch_index += 1


def _match_encoders(old_centroids, new_centroids, encoders):
    """Carry encoders across a re-clustering by greedy nearest-centroid
    pairing between old and new centroids."""
    k = len(new_centroids)
    d2 = ((old_centroids[:, None, :] - new_centroids[None, :, :]) ** 2).sum(axis=2)
    cost = d2.copy()
    matched = [None] * k
    for _ in range(k):
        o, n = np.unravel_index(np.argmin(cost), cost.shape)
        matched[int(n)] = encoders[int(o)]
        cost[o, :] = np.inf
        cost[:, n] = np.inf
    return matched
