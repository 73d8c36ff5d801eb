"""Labeled context streams with bandit feedback.

Sources (CSV, IDX image files, synthetic Gaussian mixtures) are ingested,
min-max scaled into [0, 1] using statistics from the pre-training split
only, and materialized as a batched Stream. Nonstationarity layers then
rewrite the stream batch by batch: cluster-membership drift, negative
inputs, per-batch label shuffling, and multi-task domain mixing.

Only the 0/1 feedback bit ever crosses to an agent; labels stay inside the
harness.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from . import clustering
from .errors import ConfigError, DataFormatError, InputError
from .seeding import derive_seed

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

_WEIGHT_SUM_TOL = 1e-9


# ---------------------------------------------------------------------------
# Declarative stream specification (also the service/CLI wire format)
# ---------------------------------------------------------------------------


class GaussianMixtureSource(BaseModel):
    """Synthetic isotropic Gaussian mixture; one label per component."""

    kind: Literal["gaussian_mixture"] = "gaussian_mixture"
    dim: int = Field(ge=1)
    components: int = Field(ge=1)
    means: Optional[list[list[float]]] = None
    separation: float = 6.0
    std: float = 1.0
    weights: Optional[list[float]] = None
    labels: Optional[list[int]] = None


class CsvSource(BaseModel):
    kind: Literal["csv"] = "csv"
    path: str
    label_column: Union[int, str] = -1


class IdxSource(BaseModel):
    kind: Literal["idx"] = "idx"
    images_path: str
    labels_path: str


SourceSpec = Union[GaussianMixtureSource, CsvSource, IdxSource]


class ClusterDriftLayer(BaseModel):
    """Per-batch cluster-membership probabilities; one weight row per batch."""

    kind: Literal["cluster_drift"] = "cluster_drift"
    schedule: list[list[float]]
    k: Optional[int] = Field(default=None, ge=1)


class NegativeInputsLayer(BaseModel):
    """Replace x by 1 - x with probability p (0.5, or per-batch uniform)."""

    kind: Literal["negative_inputs"] = "negative_inputs"
    mode: Literal["half", "rand"] = "half"


class ShuffledLabelsLayer(BaseModel):
    """Uniformly permute the class labels once per batch."""

    kind: Literal["shuffled_labels"] = "shuffled_labels"


class MultiTaskLayer(BaseModel):
    """Interleave a second domain, stretching both to a common dimension."""

    kind: Literal["multi_task"] = "multi_task"
    source: SourceSpec = Field(discriminator="kind")
    target_dim: int = Field(ge=1)
    pretrain_count: int = Field(default=0, ge=0)


LayerSpec = Union[ClusterDriftLayer, NegativeInputsLayer, ShuffledLabelsLayer, MultiTaskLayer]


class StreamSpec(BaseModel):
    """Declarative description of a labeled context stream."""

    source: SourceSpec = Field(discriminator="kind")
    pretrain_count: int = Field(ge=0)
    online_count: Optional[int] = Field(default=None, ge=1)
    batch_size: Optional[int] = Field(default=None, ge=1)
    layers: list[LayerSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_drift_schedules(self) -> "StreamSpec":
        for layer in self.layers:
            if isinstance(layer, ClusterDriftLayer):
                for b, row in enumerate(layer.schedule):
                    w = np.asarray(row, dtype=np.float64)
                    if np.any(w < 0) or abs(w.sum() - 1.0) > _WEIGHT_SUM_TOL:
                        raise ValueError(
                            f"drift schedule row {b} must be a probability vector"
                        )
        return self


# ---------------------------------------------------------------------------
# Materialized streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabeledExample:
    x: np.ndarray
    label: int


@dataclass
class Stream:
    """A fully materialized stream: scaled pretraining contexts plus batches.

    components, when present, carries the generating component of each
    online example (parallel to batches) for cluster-drift resampling.
    """

    pretrain: np.ndarray
    batches: list[list[LabeledExample]]
    n_classes: int
    batch_size: int
    components: list[list[int]] | None = None

    @property
    def dim(self) -> int:
        return self.pretrain.shape[1]

    def examples(self) -> list[LabeledExample]:
        return [ex for batch in self.batches for ex in batch]


def bandit_feedback(chosen_arm: int, label: int) -> float:
    """1.0 iff the chosen arm equals the label; the only bit agents see."""
    return 1.0 if int(chosen_arm) == int(label) else 0.0


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MinMaxScaler:
    """Per-feature affine map into [0, 1], fit on the pre-training split.

    Applied unchanged online (no lookahead); outputs are clipped so online
    extremes beyond the pre-training range stay inside the unit box, which
    the negative-inputs layer relies on. Constant features map to 0.
    """

    lo: np.ndarray
    span: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "MinMaxScaler":
        lo = X.min(axis=0)
        span = X.max(axis=0) - lo
        span = np.where(span > 0, span, 1.0)
        return cls(lo=lo, span=span)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return np.clip((np.asarray(X, dtype=np.float64) - self.lo) / self.span, 0.0, 1.0)


def load_csv(path, label_column: Union[int, str]) -> list[LabeledExample]:
    """Parse a numeric CSV with one categorical/integer label column.

    Labels are densely re-indexed 0..C-1 in first-appearance order. A
    leading header row is used when the label column is named, and detected
    (non-numeric fields) when it is an index.
    """
    with open(path, newline="") as fh:
        rows = [(lineno, row) for lineno, row in enumerate(csv.reader(fh), start=1) if row]
    if not rows:
        raise DataFormatError(f"{path}: empty file")

    header: list[str] | None = None
    first = rows[0][1]
    if isinstance(label_column, str):
        if label_column not in first:
            raise DataFormatError(f"{path}: no header column named {label_column!r}")
        label_idx = first.index(label_column)
        header = first
    else:
        label_idx = label_column
        try:
            for i, cell in enumerate(first):
                if i != label_idx % len(first):
                    float(cell)
        except ValueError:
            header = first
    if header is not None:
        rows = rows[1:]
        if not rows:
            raise DataFormatError(f"{path}: header but no data rows")

    width = len(rows[0][1])
    label_idx %= width
    label_ids: dict[str, int] = {}
    examples: list[LabeledExample] = []
    for lineno, row in rows:
        if len(row) != width:
            raise DataFormatError(f"{path}: line {lineno}: expected {width} fields, got {len(row)}")
        try:
            feats = [float(cell) for i, cell in enumerate(row) if i != label_idx]
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: non-numeric feature: {exc}") from exc
        raw = row[label_idx].strip()
        if raw not in label_ids:
            label_ids[raw] = len(label_ids)
        examples.append(LabeledExample(np.asarray(feats, dtype=np.float64), label_ids[raw]))
    return examples


def load_idx(images_path, labels_path) -> list[LabeledExample]:
    """Load the standard big-endian IDX image/label container pair.

    Pixels are scaled into [0, 1] by /255 and images flattened row-major.
    """
    img_raw = open(images_path, "rb").read()
    lab_raw = open(labels_path, "rb").read()
    if len(img_raw) < 16 or struct.unpack(">I", img_raw[:4])[0] != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"{images_path}: bad IDX image magic")
    if len(lab_raw) < 8 or struct.unpack(">I", lab_raw[:4])[0] != IDX_LABELS_MAGIC:
        raise DataFormatError(f"{labels_path}: bad IDX label magic")
    n, rows, cols = struct.unpack(">III", img_raw[4:16])
    n_lab = struct.unpack(">I", lab_raw[4:8])[0]
    if n != n_lab:
        raise DataFormatError(f"IDX count mismatch: {n} images vs {n_lab} labels")
    if len(img_raw) != 16 + n * rows * cols or len(lab_raw) != 8 + n:
        raise DataFormatError("IDX payload truncated or oversized")
    pixels = np.frombuffer(img_raw, dtype=np.uint8, offset=16).astype(np.float64) / 255.0
    X = pixels.reshape(n, rows * cols)
    labels = np.frombuffer(lab_raw, dtype=np.uint8, offset=8)
    return [LabeledExample(X[i], int(labels[i])) for i in range(n)]


def _mixture_means(src: GaussianMixtureSource) -> np.ndarray:
    if src.means is not None:
        means = np.asarray(src.means, dtype=np.float64)
        if means.shape != (src.components, src.dim):
            raise ConfigError(
                f"means must be {src.components} x {src.dim}, got {means.shape}"
            )
        return means
    # Block layout: component j is offset by `separation` on its own slice
    # of coordinates, giving well-separated clusters in every dimension.
    means = np.zeros((src.components, src.dim))
    block = max(1, src.dim // src.components)
    for j in range(src.components):
        lo = (j * block) % src.dim
        means[j, lo : lo + block] = src.separation
    return means


def synth_gaussian_mixture(
    src: GaussianMixtureSource, pretrain_count: int, online_count: int, seed: int
):
    """Draw (pretrain contexts, online LabeledExamples, component ids).

    Components are sampled by weight; the pretraining portion discards
    labels. std == 0 collapses every sample onto its component mean.
    """
    means = _mixture_means(src)
    k = src.components
    weights = np.full(k, 1.0 / k) if src.weights is None else np.asarray(src.weights, float)
    if weights.shape != (k,) or np.any(weights < 0) or abs(weights.sum() - 1.0) > _WEIGHT_SUM_TOL:
        raise ConfigError("mixture weights must be a probability vector over components")
    labels = list(range(k)) if src.labels is None else list(src.labels)
    if len(labels) != k:
        raise ConfigError(f"need one label per component, got {len(labels)}")
    rng = np.random.default_rng(seed)

    def draw(count: int):
        comps = rng.choice(k, size=count, p=weights)
        X = means[comps] + src.std * rng.standard_normal((count, src.dim))
        return X, comps

    pre_X, _ = draw(pretrain_count)
    on_X, on_comps = draw(online_count)
    online = [LabeledExample(on_X[i], labels[on_comps[i]]) for i in range(online_count)]
    return pre_X, online, [int(c) for c in on_comps]


# ---------------------------------------------------------------------------
# Stream construction and layer application
# ---------------------------------------------------------------------------


def _rebatch(items: list, batch_size: int) -> list[list]:
    return [items[i : i + batch_size] for i in range(0, len(items), batch_size)]


def _replay(pool: list, count: int) -> list:
    """Wrap-around cursor: restart from the beginning after the last sample."""
    if not pool:
        raise InputError("cannot replay an empty example pool")
    return [pool[i % len(pool)] for i in range(count)]


def _base_stream(
    source: SourceSpec, pretrain_count: int, online_count: int, batch_size: int, seed: int
) -> Stream:
    """Ingest one source, fit/apply the scaler, and batch the online part."""
    if isinstance(source, GaussianMixtureSource):
        pre_X, online, comps = synth_gaussian_mixture(
            source, pretrain_count, online_count, seed
        )
        n_classes = max(ex.label for ex in online) + 1 if online else 1
    else:
        if isinstance(source, CsvSource):
            examples = load_csv(source.path, source.label_column)
        else:
            examples = load_idx(source.images_path, source.labels_path)
        if pretrain_count >= len(examples):
            raise ConfigError(
                f"pretrain_count {pretrain_count} leaves no online examples "
                f"(dataset has {len(examples)})"
            )
        pre_X = np.stack([ex.x for ex in examples[:pretrain_count]]) if pretrain_count else np.empty((0, len(examples[0].x)))
        online = _replay(examples[pretrain_count:], online_count)
        comps = None
        n_classes = max(ex.label for ex in examples) + 1

    if len(pre_X) == 0:
        raise ConfigError("pretrain_count must be >= 1 to fit the feature scaler")
    scaler = MinMaxScaler.fit(pre_X)
    pre_scaled = scaler.transform(pre_X)
    online_scaled = [
        LabeledExample(scaler.transform(ex.x[None, :])[0], ex.label) for ex in online
    ]
    return Stream(
        pretrain=pre_scaled,
        batches=_rebatch(online_scaled, batch_size),
        n_classes=n_classes,
        batch_size=batch_size,
        components=_rebatch(comps, batch_size) if comps is not None else None,
    )


def apply_cluster_drift(stream: Stream, schedule, seed: int, k: int | None = None) -> Stream:
    """Recompose batches by drawing from per-component pools per schedule.

    Uses the stream's generating components when present; otherwise the
    pre-training split is clustered into k clusters and online examples are
    pooled by nearest-centroid assignment.
    """
    schedule = [np.asarray(row, dtype=np.float64) for row in schedule]
    if len(schedule) != len(stream.batches):
        raise ConfigError(
            f"schedule length {len(schedule)} != number of batches {len(stream.batches)}"
        )
    flat = stream.examples()
    if stream.components is not None:
        comp_of = [c for batch in stream.components for c in batch]
        n_comp = max(comp_of) + 1
    else:
        if k is None:
            raise ConfigError("cluster_drift on unlabeled-component data needs k")
        model = clustering.kmeans_fit(stream.pretrain, k, seed=derive_seed(seed, 0))
        comp_of = [clustering.assign_cluster(model, ex.x) for ex in flat]
        n_comp = k

    pools: list[list[LabeledExample]] = [[] for _ in range(n_comp)]
    for ex, c in zip(flat, comp_of):
        pools[c].append(ex)

    rng = np.random.default_rng(derive_seed(seed, 1))
    cursors = [0] * n_comp
    batches: list[list[LabeledExample]] = []
    components: list[list[int]] = []
    for b, weights in enumerate(schedule):
        if weights.shape != (n_comp,) or np.any(weights < 0) or abs(weights.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise ConfigError(f"schedule row {b} is not a probability vector over {n_comp} components")
        for j in range(n_comp):
            if weights[j] > 0 and not pools[j]:
                raise ConfigError(f"schedule row {b} draws from empty component {j}")
        batch: list[LabeledExample] = []
        comps: list[int] = []
        for _ in range(len(stream.batches[b])):
            j = int(rng.choice(n_comp, p=weights))
            batch.append(pools[j][cursors[j] % len(pools[j])])
            cursors[j] += 1
            comps.append(j)
        batches.append(batch)
        components.append(comps)
    return replace(stream, batches=batches, components=components)


def apply_negative_inputs(stream: Stream, mode: str, seed: int) -> Stream:
    """Per example, with probability p, present 1 - x instead of x.

    p is 0.5 in "half" mode and drawn uniformly in (0, 1) once per batch in
    "rand" mode. Features must already live in [0, 1].
    """
    if mode not in ("half", "rand"):
        raise ConfigError(f"negative-inputs mode must be 'half' or 'rand', got {mode!r}")
    rng = np.random.default_rng(seed)
    batches = []
    for batch in stream.batches:
        p = 0.5 if mode == "half" else float(rng.uniform())
        out = []
        for ex in batch:
            if ex.x.min() < 0.0 or ex.x.max() > 1.0:
                raise InputError("negative-inputs layer requires features in [0, 1]")
            if rng.random() < p:
                out.append(LabeledExample(1.0 - ex.x, ex.label))
            else:
                out.append(ex)
        batches.append(out)
    return replace(stream, batches=batches)


def apply_shuffled_labels(stream: Stream, seed: int) -> Stream:
    """Independently permute the class labels within every batch."""
    rng = np.random.default_rng(seed)
    batches = []
    for batch in stream.batches:
        perm = rng.permutation(stream.n_classes)
        batches.append([LabeledExample(ex.x, int(perm[ex.label])) for ex in batch])
    return replace(stream, batches=batches)


def stretch(x: np.ndarray, target_dim: int) -> np.ndarray:
    """Resample a vector to target_dim by linear interpolation over index
    positions; endpoints are preserved."""
    if target_dim < 1:
        raise ConfigError(f"target dimension must be >= 1, got {target_dim}")
    x = np.asarray(x, dtype=np.float64)
    if len(x) == target_dim:
        return x.copy()
    if len(x) == 1:
        return np.full(target_dim, x[0])
    pos = np.linspace(0.0, len(x) - 1.0, target_dim)
    return np.interp(pos, np.arange(len(x)), x)


def mix_domains(stream_a: Stream, stream_b: Stream, target_dim: int, seed: int) -> Stream:
    """Interleave two domains by uniform coin, on a shared stretched dimension.

    stream_b's labels are offset by stream_a's class count, so the mixed
    stream has C_A + C_B classes. Pre-training contexts are concatenated.
    """
    a = stream_a.examples()
    b = [
        LabeledExample(ex.x, ex.label + stream_a.n_classes) for ex in stream_b.examples()
    ]
    if not a or not b:
        raise InputError("both streams must be non-empty")

    def prep(ex: LabeledExample) -> LabeledExample:
        return LabeledExample(stretch(ex.x, target_dim), ex.label)

    rng = np.random.default_rng(seed)
    merged: list[LabeledExample] = []
    ia = ib = 0
    while ia < len(a) and ib < len(b):
        if rng.random() < 0.5:
            merged.append(prep(a[ia]))
            ia += 1
        else:
            merged.append(prep(b[ib]))
            ib += 1
    merged.extend(prep(ex) for ex in a[ia:])
    merged.extend(prep(ex) for ex in b[ib:])

    pretrain = np.vstack(
        [
            np.stack([stretch(row, target_dim) for row in stream_a.pretrain]),
            np.stack([stretch(row, target_dim) for row in stream_b.pretrain]),
        ]
    )
    return Stream(
        pretrain=pretrain,
        batches=_rebatch(merged, stream_a.batch_size),
        n_classes=stream_a.n_classes + stream_b.n_classes,
        batch_size=stream_a.batch_size,
        components=None,
    )


def build_stream(
    spec: StreamSpec,
    batch_size: int,
    rounds: int,
    seed: int,
    default_drift_k: int | None = None,
) -> Stream:
    """Materialize a StreamSpec: ingest, scale, batch, then apply layers in
    their declared order. Deterministic in (spec, seed)."""
    batch_size = spec.batch_size or batch_size
    online_count = spec.online_count or rounds
    if online_count < rounds:
        raise ConfigError(
            f"stream provides {online_count} online examples but {rounds} rounds requested"
        )
    stream = _base_stream(
        spec.source, spec.pretrain_count, online_count, batch_size, derive_seed(seed, 0)
    )
    for idx, layer in enumerate(spec.layers, start=1):
        layer_seed = derive_seed(seed, idx)
        if isinstance(layer, ClusterDriftLayer):
            stream = apply_cluster_drift(
                stream, layer.schedule, layer_seed, k=layer.k or default_drift_k
            )
        elif isinstance(layer, NegativeInputsLayer):
            stream = apply_negative_inputs(stream, layer.mode, layer_seed)
        elif isinstance(layer, ShuffledLabelsLayer):
            stream = apply_shuffled_labels(stream, layer_seed)
        elif isinstance(layer, MultiTaskLayer):
            second = _base_stream(
                layer.source,
                layer.pretrain_count or spec.pretrain_count,
                online_count,
                batch_size,
                derive_seed(seed, idx, 1),
            )
            stream = mix_domains(stream, second, layer.target_dim, layer_seed)
    return stream
