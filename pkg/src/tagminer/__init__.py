"""tagminer: mine and evaluate interpretable classifier failure modes from image tags."""

__version__ = "0.1.0"

from .core import (
    ClassIndex,
    FailureMode,
    ImageRecord,
    MinerConfig,
    TaggedDataset,
    build_class_index,
    describe_mode,
    group_accuracy,
    group_mask,
    normalize_tag,
)
from .ingest import (
    EmbeddingTable,
    InputError,
    assemble,
    load_embeddings,
    load_predictions,
    load_tags,
    split_records,
)
from .miner import (
    MineReport,
    MineStats,
    audit_report,
    check_minimality,
    mine,
    mine_exhaustive,
    mine_greedy,
)
from .evaluate import GeneralizationRecord, ablation_summary, generalize, subset_ablation
from .quality import QualityReport, auroc, score_modes, similarity
from .latent import DistanceStats, NeighborhoodStats, distance_stats, neighborhood_stats
from .synth import PlantSpec, default_specs, generate, generate_records

__all__ = [
    "ClassIndex",
    "FailureMode",
    "ImageRecord",
    "MinerConfig",
    "TaggedDataset",
    "build_class_index",
    "describe_mode",
    "group_accuracy",
    "group_mask",
    "normalize_tag",
    "EmbeddingTable",
    "InputError",
    "assemble",
    "load_embeddings",
    "load_predictions",
    "load_tags",
    "split_records",
    "MineReport",
    "MineStats",
    "audit_report",
    "check_minimality",
    "mine",
    "mine_exhaustive",
    "mine_greedy",
    "GeneralizationRecord",
    "ablation_summary",
    "generalize",
    "subset_ablation",
    "QualityReport",
    "auroc",
    "score_modes",
    "similarity",
    "DistanceStats",
    "NeighborhoodStats",
    "distance_stats",
    "neighborhood_stats",
    "PlantSpec",
    "default_specs",
    "generate",
    "generate_records",
]
