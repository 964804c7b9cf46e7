"""Atypical-pronunciation assessment over frozen speech features.

Per-phoneme Gaussian mixture scoring (MixGoP), the classifier-based GoP
formulations, kNN / one-class-SVM OOD baselines, rank-correlation
evaluation, allophony quantification (ANMI), and learnable attention
pooling, plus a CLI wiring them into train / score / evaluate / ablate /
analyze pipelines.
"""

from .allophony import (
    ClusterAssignment,
    EnvironmentLabel,
    anmi,
    anmi_by_phoneme,
    cluster_phoneme,
    encode_environment,
)
from .attention import (
    AttentionPooler,
    mixgop_attn,
    soft_rank,
    soft_rank_with_grad,
    train_attention,
)
from .classifier import (
    GOP_METHODS,
    LinearPhonemeClassifier,
    gop_score,
    train_classifier,
)
from .evaluate import (
    EvalReport,
    ScoreEntry,
    ScoreTable,
    build_score_table,
    evaluate,
    kendall_tau,
    pool_utterance,
)
from .feature_store import (
    BOUNDARY,
    FeatureSet,
    PhonemeInventory,
    SegmentRecord,
    group_by_phoneme,
    load_feature_set,
    load_natural_classes,
    subsample_per_phoneme,
    write_feature_set,
)
from .gmm import PhonemeGmm, fit_phoneme_gmms, kmeans_init
from .ood import KnnOutlierScorer, OneClassSvmSmo

__version__ = "0.1.0"

__all__ = [
    "BOUNDARY",
    "GOP_METHODS",
    "AttentionPooler",
    "ClusterAssignment",
    "EnvironmentLabel",
    "EvalReport",
    "FeatureSet",
    "KnnOutlierScorer",
    "LinearPhonemeClassifier",
    "OneClassSvmSmo",
    "PhonemeGmm",
    "PhonemeInventory",
    "ScoreEntry",
    "ScoreTable",
    "SegmentRecord",
    "anmi",
    "anmi_by_phoneme",
    "build_score_table",
    "cluster_phoneme",
    "encode_environment",
    "evaluate",
    "fit_phoneme_gmms",
    "gop_score",
    "group_by_phoneme",
    "kendall_tau",
    "kmeans_init",
    "load_feature_set",
    "load_natural_classes",
    "mixgop_attn",
    "pool_utterance",
    "soft_rank",
    "soft_rank_with_grad",
    "subsample_per_phoneme",
    "train_attention",
    "train_classifier",
    "write_feature_set",
]
