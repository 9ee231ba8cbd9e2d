"""Knowledge-graph embedding training with parameter ensembles.

Public surface: dataset loading and indices (kg), scoring models and
gradients (models), optimizers (optim), the three ensemble constructions
(ensemble), filtered ranking (evaluation), multi-hop queries (queries),
checkpoints (checkpoint), and the training driver (training, config).
"""

from .config import TrainConfig
from .ensemble import (
    AswaState,
    SnapshotEnsemble,
    SwaState,
    aswa_epoch_step,
    snape_capture,
    snape_score_all_tails,
    swa_absorb,
)
from .evaluation import RankingReport, SplitEvaluator, evaluate_split, filtered_rank
from .kg import Dataset, Vocab, build_filter, build_kvsall, load_dataset, save_dataset
from .models import (
    EmbeddingState,
    GradientBatch,
    init_embeddings,
    kvsall_loss_and_grad,
    make_scorer,
    score_all_tails,
    score_triple,
)
from .optim import AdamState, adam_step, cyclic_lr, sgd_step
from .queries import BeamConfig, Query, answer_query, evaluate_queries, generate_queries
from .training import RunManifest, run_training

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AswaState",
    "BeamConfig",
    "Dataset",
    "EmbeddingState",
    "GradientBatch",
    "Query",
    "RankingReport",
    "RunManifest",
    "SnapshotEnsemble",
    "SplitEvaluator",
    "SwaState",
    "TrainConfig",
    "Vocab",
    "adam_step",
    "answer_query",
    "aswa_epoch_step",
    "build_filter",
    "build_kvsall",
    "cyclic_lr",
    "evaluate_queries",
    "evaluate_split",
    "filtered_rank",
    "generate_queries",
    "init_embeddings",
    "kvsall_loss_and_grad",
    "load_dataset",
    "make_scorer",
    "run_training",
    "save_dataset",
    "score_all_tails",
    "score_triple",
    "sgd_step",
    "snape_capture",
    "snape_score_all_tails",
    "swa_absorb",
    "__version__",
]
