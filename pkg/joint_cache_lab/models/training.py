"""
Optimizer steps for every model family, plus contrastive pretraining.

A step only updates parameters on the path of a loss with a non-zero
weight, so a zero-weighted head stays bit-identical.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from joint_cache_lab.errors import ConfigError, DataIntegrityError
from joint_cache_lab.features import PairSample
from joint_cache_lab.models.architectures import ContrastiveModel, PolicyModel, output_losses
from joint_cache_lab.models.components import (
    PrefetchBatch,
    ReplacementBatch,
    check_aligned,
    collate_prefetch,
    collate_replacement,
)
from joint_cache_lab.nnkit import (
    AdamConfig,
    ContrastiveConfig,
    Node,
    Tape,
    adam_step_with,
    backward,
    cosine_similarity,
    info_nce,
    weighted_sum,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepSettings:
    adam: AdamConfig = AdamConfig()
    lambda_repl: float = 1.0
    lambda_pf: float = 1.0
    pos_weight: float = 1.0
    finetune_lr_scale: float = 0.1


def trainable_names(model: PolicyModel, settings: StepSettings, active: Sequence[str]) -> List[str]:
    """Ordered union of the parameter paths of the active, non-zero-weighted losses."""
    names: "OrderedDict[str, None]" = OrderedDict()
    if "repl" in active and settings.lambda_repl != 0:
        names.update((n, None) for n in model.repl_path())
    if "pf" in active and settings.lambda_pf != 0:
        names.update((n, None) for n in model.pf_path())
    return list(names)


def _lr_scales(model: PolicyModel, settings: StepSettings) -> Optional[Dict[str, float]]:
    if isinstance(model, ContrastiveModel) and model.finetune:
        return {name: settings.finetune_lr_scale for name in model.encoder_names()}
    return None


def train_step(
    model: PolicyModel,
    rbatch: Optional[ReplacementBatch],
    pbatch: Optional[PrefetchBatch],
    settings: StepSettings = StepSettings(),
    features: Optional[np.ndarray] = None,
) -> Dict[str, float]:
    """
    One Adam step on λ_r·bce + λ_p·(page xent + offset xent).

    Args:
        model: Any PolicyModel
        rbatch, pbatch: Replacement and prefetch views (either may be None
            for the baselines)
        settings: Optimizer and loss weights
        features: Precomputed encoder features for a frozen contrastive
            model; the encoders are not re-run

    Returns:
        Loss values before the update: `repl`, `pf` (when present) and `total`
    """
    tape = Tape()
    if features is not None:
        out = model.head_outputs(tape, tape.constant(features.astype(model.params.dtype)))
    else:
        out = model.outputs(tape, rbatch, pbatch)
    losses = output_losses(tape, out, rbatch, pbatch, settings.pos_weight)

    weights = {"repl": settings.lambda_repl, "pf": settings.lambda_pf}
    terms: List[Tuple[Node, float]] = [(losses[k], weights[k]) for k in losses if weights[k] != 0]
    values = {k: float(v.value) for k, v in losses.items()}
    values["total"] = sum(float(node.value) * w for node, w in terms)
    if not terms:
        return values

    total = weighted_sum(tape, terms)
    backward(tape, total)
    names = trainable_names(model, settings, list(losses))
    adam_step_with(model.params, settings.adam, names=names, lr_scales=_lr_scales(model, settings))
    return values


def joint_train_step(
    model: PolicyModel,
    rbatch: ReplacementBatch,
    pbatch: PrefetchBatch,
    settings: StepSettings = StepSettings(),
) -> Dict[str, float]:
    """Step on time-aligned replacement and prefetch views."""
    check_aligned(rbatch, pbatch)
    return train_step(model, rbatch, pbatch, settings)


def batch_losses(
    model: PolicyModel,
    rbatch: Optional[ReplacementBatch],
    pbatch: Optional[PrefetchBatch],
    pos_weight: float = 1.0,
) -> Dict[str, float]:
    """Loss values without touching gradients or parameters."""
    tape = Tape()
    return {k: float(v.value) for k, v in model.losses(tape, rbatch, pbatch, pos_weight).items()}


def frozen_features(model: ContrastiveModel, rbatch: ReplacementBatch, pbatch: PrefetchBatch) -> np.ndarray:
    """Encoder features for stage 2 with frozen encoders."""
    return model.features(Tape(), rbatch, pbatch).value.copy()


def contrastive_stage2_train(
    model: ContrastiveModel,
    batches: Sequence[Tuple[ReplacementBatch, PrefetchBatch]],
    settings: StepSettings = StepSettings(),
    epochs: int = 1,
) -> List[float]:
    """
    Train the policy heads (and, with `finetune`, the encoders at a reduced
    learning rate) for a fixed number of epochs over pre-built batches.

    Returns:
        Mean total loss per epoch
    """
    cache = None if model.finetune else [frozen_features(model, rb, pb) for rb, pb in batches]
    curve = []
    for _ in range(epochs):
        totals = [
            train_step(model, rb, pb, settings, None if cache is None else cache[i])["total"]
            for i, (rb, pb) in enumerate(batches)
        ]
        curve.append(float(np.mean(totals)) if totals else 0.0)
    return curve


# ==============================================================================
# Contrastive pretraining
# ==============================================================================


@dataclass
class PairGroup:
    positive: PairSample
    negatives: List[PairSample]


@dataclass
class PretrainResult:
    initial_loss: float
    loss_curve: List[float] = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.loss_curve)


def group_pairs(pairs: Sequence[PairSample]) -> List[PairGroup]:
    """
    Gather each positive with its sampled negatives.

    Raises:
        ConfigError: No positive pair
        DataIntegrityError: Groups carry different negative counts
    """
    groups: "OrderedDict[int, PairGroup]" = OrderedDict()
    loose: Dict[int, List[PairSample]] = {}
    for pair in pairs:
        if pair.is_positive:
            groups[pair.group_id] = PairGroup(pair, loose.pop(pair.group_id, []))
        elif pair.group_id in groups:
            groups[pair.group_id].negatives.append(pair)
        else:
            loose.setdefault(pair.group_id, []).append(pair)
    if not groups:
        raise ConfigError("contrastive pretraining needs at least one positive pair")
    counts = {len(g.negatives) for g in groups.values()}
    if len(counts) != 1 or 0 in counts:
        raise DataIntegrityError(f"pair groups carry uneven negative counts {sorted(counts)}")
    return list(groups.values())


def pair_group_loss(model: ContrastiveModel, tape: Tape, groups: Sequence[PairGroup], temperature: float) -> Node:
    anchors = model.project_cache(tape, collate_replacement([g.positive.replacement for g in groups]))
    positives = model.project_prefetch(tape, collate_prefetch([g.positive.prefetch for g in groups]))
    flat = collate_prefetch([n.prefetch for g in groups for n in g.negatives])
    negatives = model.project_negatives(tape, flat, len(groups))
    return info_nce(tape, anchors, positives, negatives, temperature)


def contrastive_epoch_loss(
    model: ContrastiveModel, groups: Sequence[PairGroup], cfg: ContrastiveConfig, batch_size: int = 16
) -> float:
    """Mean InfoNCE over all groups, weighted by batch size."""
    total = 0.0
    for start in range(0, len(groups), batch_size):
        chunk = groups[start:start + batch_size]
        total += float(pair_group_loss(model, Tape(), chunk, cfg.temperature).value) * len(chunk)
    return total / len(groups)


def contrastive_pretrain(
    model: ContrastiveModel,
    pairs: Sequence[PairSample],
    cfg: ContrastiveConfig = ContrastiveConfig(),
    epochs: int = 20,
    adam: AdamConfig = AdamConfig(),
    batch_size: int = 16,
    seed: int = 0,
) -> PretrainResult:
    """
    Stage 1: pull each replacement projection toward the prefetch projection
    of its positive partner and away from that positive's negatives. Only
    encoders and projection heads are updated.

    Returns:
        The loss before any update and the full-data loss after each epoch

    Raises:
        ConfigError: `pairs` holds no positive
    """
    groups = group_pairs(pairs)
    rng = np.random.default_rng(seed)
    names = model.pretrain_path()
    result = PretrainResult(contrastive_epoch_loss(model, groups, cfg, batch_size))
    logger.info(f"Contrastive pretraining on {len(groups)} positives, initial loss {result.initial_loss:.4f}")

    for epoch in range(epochs):
        order = rng.permutation(len(groups))
        for start in range(0, len(order), batch_size):
            chunk = [groups[i] for i in order[start:start + batch_size]]
            tape = Tape()
            loss = pair_group_loss(model, tape, chunk, cfg.temperature)
            backward(tape, loss)
            adam_step_with(model.params, adam, names=names)
        result.loss_curve.append(contrastive_epoch_loss(model, groups, cfg, batch_size))
        logger.debug(f"Pretrain epoch {epoch}: loss {result.loss_curve[-1]:.4f}")
    return result


def pair_cosines(model: ContrastiveModel, pairs: Sequence[PairSample]) -> Tuple[float, float]:
    """Mean projection cosine of positive pairs and of negative pairs."""
    if not pairs:
        return 0.0, 0.0
    tape = Tape()
    anchors = model.project_cache(tape, collate_replacement([p.replacement for p in pairs])).value
    targets = model.project_prefetch(tape, collate_prefetch([p.prefetch for p in pairs])).value
    cos = cosine_similarity(anchors, targets)
    positive = np.array([p.is_positive for p in pairs])
    mean_pos = float(cos[positive].mean()) if positive.any() else 0.0
    mean_neg = float(cos[~positive].mean()) if (~positive).any() else 0.0
    return mean_pos, mean_neg
