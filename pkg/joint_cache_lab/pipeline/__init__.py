"""
Dataset preparation, training with early stopping, evaluation, deployment
of a learned replacement policy and the mode ablation.

Usage:
    from joint_cache_lab.config import RunConfig
    from joint_cache_lab.pipeline import prepare_dataset, train_model, evaluate_accuracy

    data = prepare_dataset(trace, RunConfig())
    result = train_model(data, "joint")
    report = evaluate_accuracy(result.model, data, "joint", seed=0)
"""

from joint_cache_lab.pipeline.ablation import AblationTable, run_ablation, run_cell
from joint_cache_lab.pipeline.data import (
    SPLITS,
    PreparedData,
    cache_config_of,
    geometry_of,
    labels_digest,
    prepare_dataset,
)
from joint_cache_lab.pipeline.deployment import (
    ModelPredictor,
    deployment_hit_rates,
    model_replacement_policy,
    oracle_policy,
    policy_from_checkpoint,
)
from joint_cache_lab.pipeline.evaluation import (
    DECISION_THRESHOLD,
    REPORT_FIELDS,
    ClassificationStats,
    EvalReport,
    classification_stats,
    evaluate_accuracy,
    oov_rates,
    predict_split,
    read_reports,
    replacement_metrics,
    write_reports,
)
from joint_cache_lab.pipeline.split import MIN_SPLIT_SIZE, SplitSpec, split_dataset
from joint_cache_lab.pipeline.training import (
    CHECKPOINT_CACHE_KEYS,
    METRIC_FIELDS,
    MODES,
    EpochMetrics,
    TrainingResult,
    init_replacement_bias,
    settings_of,
    train_model,
)

__all__ = [
    "AblationTable",
    "run_ablation",
    "run_cell",
    "SPLITS",
    "PreparedData",
    "cache_config_of",
    "geometry_of",
    "labels_digest",
    "prepare_dataset",
    "ModelPredictor",
    "deployment_hit_rates",
    "model_replacement_policy",
    "oracle_policy",
    "policy_from_checkpoint",
    "DECISION_THRESHOLD",
    "REPORT_FIELDS",
    "ClassificationStats",
    "EvalReport",
    "classification_stats",
    "evaluate_accuracy",
    "oov_rates",
    "predict_split",
    "read_reports",
    "replacement_metrics",
    "write_reports",
    "MIN_SPLIT_SIZE",
    "SplitSpec",
    "split_dataset",
    "CHECKPOINT_CACHE_KEYS",
    "METRIC_FIELDS",
    "MODES",
    "EpochMetrics",
    "TrainingResult",
    "init_replacement_bias",
    "settings_of",
    "train_model",
]
