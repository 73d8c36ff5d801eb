"""banditlab: contextual Thompson-sampling bandits with adaptive,
cluster-driven context embeddings, plus environments and an experiment
harness exposed over HTTP and a thin CLI."""

__version__ = "0.1.0"

from .agents import AgentConfig, EmbeddingBanditAgent, PolicyVariant
from .clustering import (
    ClusterModel,
    assign_cluster,
    kmeans_fit,
    recompute_clusters,
    update_cluster_online,
)
from .compression import (
    BudgetSplit,
    CompressionAgent,
    CompressionConfig,
    CompressionLevels,
    assign_reward,
)
from .encoders import (
    AutoencoderModel,
    LinearEncoderModel,
    TrainConfig,
    compression_width,
    encode,
    fit_linear_encoder,
    reconstruct,
    train_autoencoder,
    update_autoencoder,
)
from .environments import (
    LabeledExample,
    Stream,
    StreamSpec,
    bandit_feedback,
    build_stream,
    load_csv,
    load_idx,
    mix_domains,
    synth_gaussian_mixture,
)
from .errors import (
    BanditLabError,
    ConfigError,
    DataFormatError,
    InputError,
    NumericalError,
    ProtocolError,
)
from .experiments import (
    ExperimentConfig,
    RunRecord,
    SummaryRow,
    VariantSpec,
    compare,
    load_config,
    make_agent,
    pretrain_snapshot,
    run_experiment,
    run_single,
)
from .serialize import load_model, save_model
from .thompson import ArmPosterior, CtsBandit, CtsConfig, exploration_scale, new_bandit
