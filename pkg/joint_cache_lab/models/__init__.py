"""
Replacement and prefetch models: independent baselines, the joint encoder,
and the contrastive two-stage model.

Usage:
    from joint_cache_lab.models import ModelDims, build_model, train_step, StepSettings

    dims = ModelDims(pc_vocab=vocabs.pc.size, page_vocab=vocabs.page.size)
    model = build_model("joint", dims, seed=0)
    losses = train_step(model, collate_replacement(repl), collate_prefetch(views), StepSettings())
"""

from joint_cache_lab.models.architectures import (
    MODEL_CLASSES,
    BaselineModel,
    ContrastiveModel,
    JointModel,
    ModelOutputs,
    PolicyModel,
    Predictions,
    PrefetchModel,
    ReplacementModel,
    build_model,
    joint_forward,
    output_losses,
    prefetch_forward,
    replacement_forward,
)
from joint_cache_lab.models.components import (
    LSTM_LAYERS,
    CacheEncoder,
    ModelDims,
    PrefetchBatch,
    PrefetchEncoder,
    PrefetchHeads,
    ReplacementBatch,
    ReplacementHead,
    check_aligned,
    collate_prefetch,
    collate_replacement,
    grad_norms,
    zero_params,
)
from joint_cache_lab.models.serialization import (
    CHECKPOINT_KINDS,
    merge_baseline,
    model_from_checkpoint,
    model_to_checkpoint,
)
from joint_cache_lab.models.training import (
    PairGroup,
    PretrainResult,
    StepSettings,
    batch_losses,
    contrastive_epoch_loss,
    contrastive_pretrain,
    contrastive_stage2_train,
    frozen_features,
    group_pairs,
    joint_train_step,
    pair_cosines,
    pair_group_loss,
    train_step,
    trainable_names,
)

__all__ = [
    "MODEL_CLASSES",
    "BaselineModel",
    "ContrastiveModel",
    "JointModel",
    "ModelOutputs",
    "PolicyModel",
    "Predictions",
    "PrefetchModel",
    "ReplacementModel",
    "build_model",
    "joint_forward",
    "output_losses",
    "prefetch_forward",
    "replacement_forward",
    "LSTM_LAYERS",
    "CacheEncoder",
    "ModelDims",
    "PrefetchBatch",
    "PrefetchEncoder",
    "PrefetchHeads",
    "ReplacementBatch",
    "ReplacementHead",
    "check_aligned",
    "collate_prefetch",
    "collate_replacement",
    "grad_norms",
    "zero_params",
    "CHECKPOINT_KINDS",
    "merge_baseline",
    "model_from_checkpoint",
    "model_to_checkpoint",
    "PairGroup",
    "PretrainResult",
    "StepSettings",
    "batch_losses",
    "contrastive_epoch_loss",
    "contrastive_pretrain",
    "contrastive_stage2_train",
    "frozen_features",
    "group_pairs",
    "joint_train_step",
    "pair_cosines",
    "pair_group_loss",
    "train_step",
    "trainable_names",
]
