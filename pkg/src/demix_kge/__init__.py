"""Knowledge graph embedding training with refined negative sampling.

Corrupted triples that score like true facts are treated as suspected
false negatives and softened by mixing them with boundary positives of the
same query pattern, instead of being pushed down with hard zero labels.
"""

from .demix import (
    CapPool,
    DemixConfig,
    MixedTriple,
    MpnPartition,
    PatternStats,
    build_cap_pool,
    delta_at_epoch,
    estimate_mpn,
    mix,
    pattern_stats,
    refine_batch,
    select_partner,
)
from .errors import ConfigError, KgeError, ParseError, VocabError
from .evaluator import (
    EstimationReport,
    MetricsReport,
    RankResult,
    compute_metrics,
    estimation_accuracy,
    evaluate,
    rank_triple,
)
from .kg_store import (
    HEAD,
    TAIL,
    DataSplits,
    FilterIndex,
    PatternIndex,
    TripleSet,
    Vocab,
    build_filter_index,
    build_pattern_index,
    load_splits,
    load_triples,
    load_vocab,
)
from .sampler import (
    NegSampleBatch,
    SamplerConfig,
    bernoulli_stats,
    sample_corruptions,
    self_adv_weights,
)
from .scoring import (
    EmbeddingModel,
    GradSink,
    init_model,
    load_checkpoint,
    save_checkpoint,
    score,
    score_and_grad,
    score_batch,
)
from .synth import make_synth_kg, write_dataset
from .trainer import (
    AdamState,
    TrainConfig,
    adam_step,
    bce,
    loss_self_adv,
    loss_uniform,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "HEAD", "TAIL",
    "AdamState", "CapPool", "ConfigError", "DataSplits", "DemixConfig",
    "EmbeddingModel", "EstimationReport", "FilterIndex", "GradSink",
    "KgeError", "MetricsReport", "MixedTriple", "MpnPartition",
    "NegSampleBatch", "ParseError", "PatternIndex", "PatternStats",
    "RankResult", "SamplerConfig", "TrainConfig", "TripleSet", "Vocab",
    "VocabError",
    "adam_step", "bce", "bernoulli_stats", "build_cap_pool",
    "build_filter_index", "build_pattern_index", "compute_metrics",
    "delta_at_epoch", "estimate_mpn", "estimation_accuracy", "evaluate",
    "init_model", "load_checkpoint", "load_splits", "load_triples",
    "load_vocab", "loss_self_adv", "loss_uniform", "make_synth_kg", "mix",
    "pattern_stats", "rank_triple", "refine_batch", "sample_corruptions",
    "save_checkpoint", "score", "score_and_grad", "score_batch",
    "select_partner", "self_adv_weights", "train", "write_dataset",
]
