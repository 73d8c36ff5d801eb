"""Configuration-driven experiment harness.

Builds streams, pretrains agents, runs the step/feedback/observe loop,
and writes per-round and summary CSVs. Every byte of output is a pure
function of (config, seed): streams, agents, and training draws are all
keyed off the run seed through derived SeedSequences.

Agents only ever receive contexts and 0/1 feedback bits; labels never
cross the harness boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator

from .agents import AgentConfig, EmbeddingBanditAgent, PolicyVariant
from .compression import (
    BudgetSplit,
    CompressionAgent,
    CompressionConfig,
    CompressionLevels,
)
from .encoders import TrainConfig
from .environments import Stream, StreamSpec, bandit_feedback, build_stream
from .errors import ConfigError, DataFormatError, InputError
from .seeding import derive_seed
from .serialize import load_model, save_model
from .thompson import CtsConfig

CSV_SCHEMA_LINE = "# schema=1"
ROUNDS_HEADER = "round,batch,variant,arm,reward,level,c,r_k,r_p,cum_reward,cum_accuracy"
SUMMARY_HEADER = "variant,seed,k,final_accuracy,total_errors"

_SEED_STREAM = 1
_SEED_AGENT = 2

_VARIANT_ALIASES = {
    "cb": "baseline",
    "ue": "universal",
    "me": "minibatch",
    "oe": "online",
}


class BanditParams(BaseModel):
    R: float = 0.5
    epsilon: float = 0.5
    gamma: float = 0.1


class TrainParams(BaseModel):
    epochs: int = Field(default=20, ge=1)
    learning_rate: float = Field(default=0.5, gt=0)
    minibatch_size: int = Field(default=32, ge=1)


class VariantSpec(BaseModel):
    """One agent to run; compression-specific fields are ignored otherwise."""

    kind: Literal["baseline", "universal", "minibatch", "online", "compression"]
    name: Optional[str] = None
    levels: list[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0])
    alpha_k: float = 0.1
    alpha_p: float = 0.0
    staged: bool = False
    encoder_kind: Literal["linear", "autoencoder"] = "linear"

    @field_validator("kind", mode="before")
    @classmethod
    def _alias(cls, v):
        if isinstance(v, str):
            return _VARIANT_ALIASES.get(v.lower(), v.lower()) if v.lower() in _VARIANT_ALIASES else v
        return v

    @property
    def display_name(self) -> str:
        return self.name or self.kind


class ExperimentConfig(BaseModel):
    stream: StreamSpec
    variants: list[VariantSpec] = Field(min_length=1)
    k: int = Field(default=4, ge=1)
    embed_dim: Optional[int] = Field(default=None, ge=1)
    batch_size: int = Field(default=1000, ge=1)
    rounds: int = Field(ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    out_dir: Optional[str] = None
    bandit: BanditParams = BanditParams()
    train: TrainParams = TrainParams()
    finetune_epochs: int = Field(default=5, ge=1)
    universal_full_retrain: bool = False


def load_config(path) -> ExperimentConfig:
    """Parse a YAML experiment file; validation errors carry field paths."""
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return validate_config(raw, origin=str(path))


def validate_config(raw, origin: str = "config") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        lines = [
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        ]
        raise ConfigError(f"{origin}: " + "; ".join(lines)) from exc


@dataclass(frozen=True)
class RunRecord:
    """One round's log row."""

    round: int
    batch: int
    variant: str
    arm: int
    reward: float
    level: int | None
    c: float | None
    r_k: float | None
    r_p: float | None
    cum_reward: float
    cum_accuracy: float

    def csv_row(self) -> str:
        def num(v):
            return "" if v is None else f"{v:.12g}"

        lvl = "" if self.level is None else str(self.level)
        return (
            f"{self.round},{self.batch},{self.variant},{self.arm},{num(self.reward)},"
            f"{lvl},{num(self.c)},{num(self.r_k)},{num(self.r_p)},"
            f"{num(self.cum_reward)},{num(self.cum_accuracy)}"
        )


@dataclass(frozen=True)
class SummaryRow:
    variant: str
    seed: int
    k: int
    final_accuracy: float
    total_errors: int

    def csv_row(self) -> str:
        return (
            f"{self.variant},{self.seed},{self.k},"
            f"{self.final_accuracy:.12g},{self.total_errors}"
        )


def make_agent(
    variant: VariantSpec,
    *,
    input_dim: int,
    n_classes: int,
    seed: int,
    k: int = 4,
    batch_size: int = 1000,
    embed_dim: int | None = None,
    bandit: BanditParams = BanditParams(),
    train: TrainParams = TrainParams(),
    finetune_epochs: int = 5,
    universal_full_retrain: bool = False,
):
    """Construct the agent a VariantSpec describes, seeded deterministically."""
    bandit_cfg = CtsConfig(R=bandit.R, epsilon=bandit.epsilon, gamma=bandit.gamma)
    train_cfg = TrainConfig(
        epochs=train.epochs,
        learning_rate=train.learning_rate,
        minibatch_size=train.minibatch_size,
    )
    if variant.kind == "compression":
        return CompressionAgent(
            CompressionConfig(
                input_dim=input_dim,
                n_classes=n_classes,
                levels=CompressionLevels(tuple(variant.levels)),
                encoder_kind=variant.encoder_kind,
                split=BudgetSplit(alpha_k=variant.alpha_k, alpha_p=variant.alpha_p),
                staged=variant.staged,
                batch_size=batch_size,
                bandit=bandit_cfg,
                train=train_cfg,
                finetune_epochs=finetune_epochs,
                seed=seed,
            )
        )
    return EmbeddingBanditAgent(
        AgentConfig(
            variant=PolicyVariant(variant.kind),
            input_dim=input_dim,
            n_classes=n_classes,
            k=k,
            batch_size=batch_size,
            embed_dim=embed_dim,
            bandit=bandit_cfg,
            train=train_cfg,
            finetune_epochs=finetune_epochs,
            universal_full_retrain=universal_full_retrain,
            seed=seed,
        )
    )


def _agent_for_run(cfg: ExperimentConfig, variant: VariantSpec, input_dim: int, n_classes: int, seed: int):
    return make_agent(
        variant,
        input_dim=input_dim,
        n_classes=n_classes,
        seed=seed,
        k=cfg.k,
        batch_size=cfg.batch_size,
        embed_dim=cfg.embed_dim,
        bandit=cfg.bandit,
        train=cfg.train,
        finetune_epochs=cfg.finetune_epochs,
        universal_full_retrain=cfg.universal_full_retrain,
    )


def _build_run_stream(cfg: ExperimentConfig, seed: int) -> Stream:
    return build_stream(
        cfg.stream,
        batch_size=cfg.batch_size,
        rounds=cfg.rounds,
        seed=derive_seed(seed, _SEED_STREAM),
        default_drift_k=cfg.k,
    )


def run_single(
    cfg: ExperimentConfig,
    variant: VariantSpec,
    seed: int,
    snapshot_dir: str | None = None,
) -> tuple[list[RunRecord], SummaryRow]:
    """Run one (variant, seed) pair and return its records and summary."""
    stream = _build_run_stream(cfg, seed)
    agent_seed = derive_seed(seed, _SEED_AGENT)
    agent = _agent_for_run(cfg, variant, stream.dim, stream.n_classes, agent_seed)
    if snapshot_dir is None:
        agent.pretrain(stream.pretrain)
    else:
        load_agent_snapshot(Path(snapshot_dir) / _snapshot_name(variant, seed), agent, stream)

    is_compression = isinstance(agent, CompressionAgent)
    records: list[RunRecord] = []
    cum_reward = 0.0
    examples = stream.examples()
    for t in range(cfg.rounds):
        ex = examples[t]
        if is_compression:
            level, arm = agent.step(ex.x)
            reward = bandit_feedback(arm, ex.label)
            r_k, r_p = agent.observe(reward)
            c = agent.levels[level]
        else:
            level = c = r_k = r_p = None
            arm = agent.step(ex.x)
            reward = bandit_feedback(arm, ex.label)
            agent.observe(reward)
        cum_reward += reward
        records.append(
            RunRecord(
                round=t + 1,
                batch=t // cfg.batch_size,
                variant=variant.display_name,
                arm=arm,
                reward=reward,
                level=level,
                c=c,
                r_k=r_k,
                r_p=r_p,
                cum_reward=cum_reward,
                cum_accuracy=cum_reward / (t + 1),
            )
        )
    summary = SummaryRow(
        variant=variant.display_name,
        seed=seed,
        k=cfg.k,
        final_accuracy=cum_reward / cfg.rounds,
        total_errors=int(round(cfg.rounds - cum_reward)),
    )
    return records, summary


def _rounds_filename(variant: VariantSpec, seed: int) -> str:
    return f"rounds_{variant.display_name}_seed{seed}.csv"


def _write_rounds_csv(path: Path, records: list[RunRecord]) -> None:
    lines = [CSV_SCHEMA_LINE, ROUNDS_HEADER]
    lines.extend(r.csv_row() for r in records)
    path.write_text("\n".join(lines) + "\n")


def write_summary_csv(path: Path, rows: list[SummaryRow]) -> None:
    lines = [CSV_SCHEMA_LINE, SUMMARY_HEADER]
    lines.extend(r.csv_row() for r in rows)
    path.write_text("\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig, snapshot_dir: str | None = None) -> list[SummaryRow]:
    """Run every (variant, seed) pair; write CSVs when out_dir is set."""
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    summary: list[SummaryRow] = []
    for variant in cfg.variants:
        for seed in cfg.seeds:
            records, row = run_single(cfg, variant, seed, snapshot_dir=snapshot_dir)
            summary.append(row)
            if out:
                _write_rounds_csv(out / _rounds_filename(variant, seed), records)
    if out:
        write_summary_csv(out / "summary.csv", summary)
    return summary


@dataclass(frozen=True)
class RankRow:
    rank: int
    variant: str
    mean_accuracy: float
    seeds: int


def rank_summary(rows: list[SummaryRow], cfg: ExperimentConfig) -> list[RankRow]:
    """Mean accuracy per variant across seeds, descending; declaration order
    breaks ties. Raises if any (variant, seed) run is missing."""
    if len(cfg.variants) < 2:
        raise InputError("compare needs at least 2 variants")
    by_variant: dict[str, dict[int, float]] = {}
    for row in rows:
        by_variant.setdefault(row.variant, {})[row.seed] = row.final_accuracy
    means = []
    for order, variant in enumerate(cfg.variants):
        name = variant.display_name
        got = by_variant.get(name, {})
        missing = [s for s in cfg.seeds if s not in got]
        if missing:
            raise InputError(f"missing runs for variant {name!r}, seeds {missing}")
        means.append((order, name, sum(got[s] for s in cfg.seeds) / len(cfg.seeds)))
    means.sort(key=lambda t: (-t[2], t[0]))
    return [
        RankRow(rank=i + 1, variant=name, mean_accuracy=acc, seeds=len(cfg.seeds))
        for i, (_, name, acc) in enumerate(means)
    ]


def load_summary_csv(path) -> list[SummaryRow]:
    lines = Path(path).read_text().splitlines()
    rows = []
    for line in lines:
        if not line or line.startswith("#") or line.startswith("variant,"):
            continue
        variant, seed, k, acc, errors = line.split(",")
        rows.append(SummaryRow(variant, int(seed), int(k), float(acc), int(errors)))
    return rows


def compare(cfg: ExperimentConfig, run_if_missing: bool = True) -> list[RankRow]:
    """Rank variants by mean accuracy, reusing out_dir/summary.csv when it
    already exists."""
    summary_path = Path(cfg.out_dir) / "summary.csv" if cfg.out_dir else None
    if summary_path and summary_path.exists():
        rows = load_summary_csv(summary_path)
    elif run_if_missing:
        rows = run_experiment(cfg)
    else:
        raise InputError("no summary.csv found; run the experiment first")
    return rank_summary(rows, cfg)


CONFIG_TEMPLATE = """\
# banditlab experiment configuration (YAML, schema 1).
# CLI flags (--seed, --out, --rounds, --variant) override these values.

out_dir: runs/demo        # where per-round and summary CSVs land
rounds: 4000              # online decision rounds per (variant, seed)
batch_size: 1000          # mini-batch length; embeddings update at boundaries
k: 4                      # number of clusters / per-cluster embeddings
embed_dim: null           # shared embedding width; null -> ceil(D / 4)
seeds: [1, 2, 3]          # one full run per seed

bandit:                   # exploration scale v = R*sqrt((24/epsilon)*d*ln(1/gamma))
  R: 0.05
  epsilon: 1.0
  gamma: 0.5

train:                    # autoencoder pretraining (SGD on reconstruction MSE)
  epochs: 30
  learning_rate: 1.0
  minibatch_size: 32
finetune_epochs: 5        # boundary fine-tuning passes over each mini-batch

stream:
  pretrain_count: 3000    # unlabeled contexts handed to pretrain()
  online_count: null      # null -> exactly `rounds` examples
  source:
    kind: gaussian_mixture   # or csv {path, label_column} / idx {images_path, labels_path}
    dim: 32
    components: 4
    separation: 6.0       # block offset between component means
    std: 1.0
    # means: [[...], ...] # optional explicit component means
    # weights: [0.25, 0.25, 0.25, 0.25]
    # labels:  [0, 1, 2, 3]
  layers: []              # applied in order; available layers:
  # - {kind: shuffled_labels}
  # - {kind: negative_inputs, mode: half}     # or rand
  # - {kind: cluster_drift, schedule: [[1.0, 0, 0, 0], ...]}  # one row per batch
  # - {kind: multi_task, target_dim: 32, pretrain_count: 500,
  #    source: {kind: csv, path: other.csv, label_column: -1}}

variants:                 # kinds: baseline (CB), universal (uE),
  - kind: baseline        #        minibatch (mE), online (oE), compression
  - kind: universal
  - kind: minibatch
  - kind: online
  # - kind: compression
  #   levels: [0.25, 0.5, 0.75, 1.0]
  #   alpha_k: 0.1        # budget charged to the level-selection bandit
  #   alpha_p: 0.0        # budget charged to the classification bandit
  #   staged: false       # true: reinitialize both bandits every mini-batch
  #   encoder_kind: linear   # or autoencoder
"""


# ---------------------------------------------------------------------------
# Pretrain snapshots
# ---------------------------------------------------------------------------


def _snapshot_name(variant: VariantSpec, seed: int) -> str:
    return f"{variant.display_name}_seed{seed}"


def pretrain_snapshot(cfg: ExperimentConfig) -> list[str]:
    """Pretrain every (variant, seed) pair and save its initialization so
    runs can start from disk instead of retraining."""
    if not cfg.out_dir:
        raise ConfigError("pretrain snapshots need out_dir")
    root = Path(cfg.out_dir) / "snapshots"
    written: list[str] = []
    for variant in cfg.variants:
        for seed in cfg.seeds:
            stream = _build_run_stream(cfg, seed)
            agent = _agent_for_run(
                cfg, variant, stream.dim, stream.n_classes, derive_seed(seed, _SEED_AGENT)
            )
            agent.pretrain(stream.pretrain)
            snap = root / _snapshot_name(variant, seed)
            snap.mkdir(parents=True, exist_ok=True)
            _save_agent(snap, agent, variant, seed, stream)
            written.append(str(snap))
    return written


def _save_agent(snap: Path, agent, variant: VariantSpec, seed: int, stream: Stream) -> None:
    files: dict[str, str] = {}
    if isinstance(agent, CompressionAgent):
        save_model(agent.level_bandit, snap / "bandit_levels.bin")
        save_model(agent.class_bandit, snap / "bandit_classes.bin")
        files["bandit_levels"] = "bandit_levels.bin"
        files["bandit_classes"] = "bandit_classes.bin"
        for i, enc in enumerate(agent.encoders):
            name = f"encoder_{i:02d}.bin"
            save_model(enc, snap / name)
            files[f"encoder_{i}"] = name
    else:
        save_model(agent.bandit, snap / "bandit.bin")
        files["bandit"] = "bandit.bin"
        if agent.clusters is not None:
            save_model(agent.clusters, snap / "clusters.bin")
            files["clusters"] = "clusters.bin"
        for i, enc in enumerate(agent.encoders):
            name = f"encoder_{i:02d}.bin"
            save_model(enc, snap / name)
            files[f"encoder_{i}"] = name
    manifest = {
        "schema": 1,
        "variant": variant.kind,
        "name": variant.display_name,
        "seed": seed,
        "input_dim": stream.dim,
        "n_classes": stream.n_classes,
        "files": files,
    }
    (snap / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_agent_snapshot(snap: Path, agent, stream: Stream) -> None:
    """Restore a pretrained agent's state in place of calling pretrain().

    The agent's context history is re-derived from the stream's pretraining
    split (identical under the same seed), so snapshots carry models only.
    """
    snap = Path(snap)
    manifest_path = snap / "manifest.json"
    if not manifest_path.exists():
        raise DataFormatError(f"{snap}: no manifest.json; not a snapshot directory")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("input_dim") != stream.dim or manifest.get("n_classes") != stream.n_classes:
        raise DataFormatError(
            f"{snap}: snapshot for dim={manifest.get('input_dim')}, "
            f"classes={manifest.get('n_classes')}; stream has dim={stream.dim}, "
            f"classes={stream.n_classes}"
        )
    files = manifest["files"]

    def load(key):
        return load_model(snap / files[key])

    if isinstance(agent, CompressionAgent):
        agent.level_bandit = load("bandit_levels")
        agent.class_bandit = load("bandit_classes")
        agent.encoders = [
            load(f"encoder_{i}") for i in range(len(agent.widths))
        ]
        agent.history = list(stream.pretrain)
        agent.batch_buffer = []
        agent.pending = None
        agent.batch_index = 0
    else:
        agent.bandit = load("bandit")
        if "clusters" in files:
            agent.clusters = load("clusters")
        n_enc = sum(1 for key in files if key.startswith("encoder_"))
        agent.encoders = [load(f"encoder_{i}") for i in range(n_enc)]
        agent.history = (
            list(stream.pretrain) if agent.variant is not PolicyVariant.BASELINE else []
        )
        agent.batch_buffer = []
        agent.pending = None
        agent.batch_index = 0
        agent._pretrained = True
