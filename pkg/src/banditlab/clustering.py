"""k-means clustering over contexts.

Batch fit (k-means++ seeding, Lloyd iterations), nearest-centroid
assignment, the single-centroid online running-mean update, and full
recomputation over accumulated history.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError, NumericalError

MAX_LLOYD_ITERATIONS = 100
# Relative slack for the objective monotonicity check; Lloyd is exactly
# monotone, the slack only absorbs float accumulation order.
_MONOTONE_RTOL = 1e-9


class ClusterModel:
    """k centroids plus the number of points each has absorbed."""

    def __init__(self, centroids, counts):
        self.centroids = np.asarray(centroids, dtype=np.float64)
        self.counts = np.asarray(counts, dtype=np.int64).copy()
        if self.centroids.ndim != 2 or len(self.counts) != len(self.centroids):
            raise InputError("centroids must be k x D with one count per centroid")
        if not np.all(np.isfinite(self.centroids)):
            raise InputError("centroids contain non-finite entries")
        # Per-iteration within-cluster sum of squares of the fit that
        # produced this model (diagnostics; empty for hand-built models).
        self.objective_history: list[float] = []

    @property
    def k(self) -> int:
        return len(self.centroids)

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def objective(self, data) -> float:
        """Within-cluster sum of squares of data under nearest assignment."""
        X = _as_matrix(data, self.dim)
        return float(_squared_distances(X, self.centroids).min(axis=1).sum())


def _as_matrix(data, dim: int | None = None) -> np.ndarray:
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError(f"expected a non-empty list of vectors, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise InputError(f"data dimension {X.shape[1]} does not match model dimension {dim}")
    return X


def _squared_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # (n, k) matrix of squared Euclidean distances.
    d2 = (X**2).sum(axis=1)[:, None] - 2.0 * X @ C.T + (C**2).sum(axis=1)[None, :]
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    for j in range(1, k):
        d2 = _squared_distances(X, centroids[:j]).min(axis=1)
        total = d2.sum()
        if total <= 0.0:
            centroids[j] = X[rng.integers(n)]
        else:
            centroids[j] = X[rng.choice(n, p=d2 / total)]
    return centroids


def kmeans_fit(data, k: int, seed: int = 0) -> ClusterModel:
    """Lloyd's algorithm with k-means++ seeding.

    Runs until the assignment reaches a fixpoint or MAX_LLOYD_ITERATIONS.
    The within-cluster sum of squares is verified non-increasing across
    iterations; a cluster emptied by an iteration is reseeded to the point
    farthest from its current centroid (the check is suspended for that
    iteration only).
    """
    X = _as_matrix(data)
    if k < 1:
        raise InputError(f"cluster count must be >= 1, got {k}")
    if len(X) < k:
        raise InputError(f"need at least k={k} points, got {len(X)}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(X, k, rng)

    history: list[float] = []
    prev_assign = None
    check_monotone = True
    for _ in range(MAX_LLOYD_ITERATIONS):
        d2 = _squared_distances(X, centroids)
        assign = d2.argmin(axis=1)
        objective = float(d2[np.arange(len(X)), assign].sum())
        if history and check_monotone and objective > history[-1] * (1.0 + _MONOTONE_RTOL) + 1e-12:
            raise NumericalError(
                f"Lloyd objective increased: {history[-1]} -> {objective}"
            )
        history.append(objective)
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign

        check_monotone = True
        for j in range(k):
            members = X[assign == j]
            if len(members) == 0:
                farthest = int(np.argmax(((X - centroids[j]) ** 2).sum(axis=1)))
                centroids[j] = X[farthest]
                check_monotone = False
            else:
                centroids[j] = members.mean(axis=0)

    counts = np.bincount(prev_assign if prev_assign is not None else assign, minlength=k)
    model = ClusterModel(centroids, counts)
    model.objective_history = history
    return model


def assign_cluster(model: ClusterModel, x) -> int:
    """Index of the nearest centroid in Euclidean distance; ties to lowest."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise InputError(f"point has shape {x.shape}, expected ({model.dim},)")
    d2 = ((model.centroids - x) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def update_cluster_online(model: ClusterModel, x, j: int) -> None:
    """Absorb x into cluster j as a running mean; other centroids untouched."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise InputError(f"point has shape {x.shape}, expected ({model.dim},)")
    if not 0 <= j < model.k:
        raise InputError(f"cluster index {j} out of range [0, {model.k})")
    model.counts[j] += 1
    model.centroids[j] += (x - model.centroids[j]) / model.counts[j]


def recompute_clusters(all_data_so_far, k: int, seed: int = 0) -> ClusterModel:
    """Full refit over accumulated history; same contract as kmeans_fit."""
    return kmeans_fit(all_data_so_far, k, seed)
