"""
Training loop with early stopping for the three regimes.

    baseline     independent replacement and prefetch models
    joint        shared embedding over both encoders, trained end to end
    contrastive  InfoNCE pretraining of the encoders, then the policy heads
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, TextIO, Tuple

import numpy as np

from joint_cache_lab.errors import ConfigError, SplitError
from joint_cache_lab.models import (
    BaselineModel,
    ContrastiveModel,
    PolicyModel,
    PretrainResult,
    StepSettings,
    build_model,
    contrastive_pretrain,
    frozen_features,
    model_to_checkpoint,
    pair_cosines,
    train_step,
)
from joint_cache_lab.nnkit import AdamConfig, ContrastiveConfig
from joint_cache_lab.pipeline.data import PreparedData
from joint_cache_lab.pipeline.evaluation import replacement_metrics

logger = logging.getLogger(__name__)

MODES = ("baseline", "joint", "contrastive")
BIAS_CLAMP = (0.01, 0.99)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_repl_loss: float
    train_pf_loss: float
    val_loss: float
    val_accuracy: float


METRIC_FIELDS = ["epoch", "train_loss", "train_repl_loss", "train_pf_loss", "val_loss", "val_accuracy"]

# Config keys recorded in checkpoints; evaluation needs the same cache geometry.
CHECKPOINT_CACHE_KEYS = ("num_sets", "associativity", "block_size", "page_size")


@dataclass
class TrainingResult:
    mode: str
    seed: int
    model: PolicyModel
    history: List[EpochMetrics] = field(default_factory=list)
    best_epoch: int = -1
    pretrain: Optional[PretrainResult] = None
    alignment: Optional[Tuple[float, float]] = None

    @property
    def best(self) -> EpochMetrics:
        return self.history[self.best_epoch]

    def checkpoints(self, data: PreparedData) -> Dict[str, bytes]:
        """Checkpoint bytes keyed by model kind (the baseline yields two)."""
        extra = {"mode": self.mode, "trace_digest": data.trace_digest, "label_digest": data.label_digest}
        extra.update((key, str(getattr(data.config, key))) for key in CHECKPOINT_CACHE_KEYS)
        models = list(self.model.split()) if isinstance(self.model, BaselineModel) else [self.model]
        return {m.kind: model_to_checkpoint(m, data.vocabs, self.seed, extra) for m in models}

    def write_metrics(self, stream: TextIO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(METRIC_FIELDS)
        for m in self.history:
            writer.writerow([
                m.epoch, f"{m.train_loss:.6f}", f"{m.train_repl_loss:.6f}", f"{m.train_pf_loss:.6f}",
                f"{m.val_loss:.6f}", f"{m.val_accuracy:.6f}",
            ])

    def write_pretrain_curve(self, stream: TextIO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        if self.pretrain is None:
            return
        writer.writerow([-1, f"{self.pretrain.initial_loss:.6f}"])
        for epoch, loss in enumerate(self.pretrain.loss_curve):
            writer.writerow([epoch, f"{loss:.6f}"])


def settings_of(data: PreparedData) -> StepSettings:
    c = data.config
    return StepSettings(
        adam=AdamConfig(c.learning_rate, c.beta1, c.beta2, c.adam_eps),
        lambda_repl=c.lambda_repl,
        lambda_pf=c.lambda_pf,
        pos_weight=c.pos_weight,
        finetune_lr_scale=c.finetune_lr_scale,
    )


def init_replacement_bias(model: PolicyModel, positive_rate: float) -> None:
    """Start the replacement logit at the log-odds of the training labels."""
    name = model.repl_bias_name
    if name is None:
        return
    p = min(max(positive_rate, BIAS_CLAMP[0]), BIAS_CLAMP[1])
    model.params[name] = np.array([np.log(p / (1.0 - p))])


def _improved(acc: float, loss: float, best_acc: float, best_loss: float) -> bool:
    return acc > best_acc or (acc == best_acc and loss < best_loss)


def _pretrain(model: ContrastiveModel, data: PreparedData, seed: int) -> Optional[PretrainResult]:
    c = data.config
    if not any(p.is_positive for p in data.pairs["train"]):
        logger.warning("No positive pairs in the training region; skipping contrastive pretraining")
        return None
    return contrastive_pretrain(
        model,
        data.pairs["train"],
        ContrastiveConfig(temperature=c.temperature),
        epochs=c.pretrain_epochs,
        adam=AdamConfig(c.learning_rate, c.beta1, c.beta2, c.adam_eps),
        batch_size=c.batch_size,
        seed=seed,
    )


def train_model(data: PreparedData, mode: str, seed: Optional[int] = None) -> TrainingResult:
    """
    Train one regime on prepared data and keep the best validation epoch.

    An epoch improves on the best so far when validation accuracy rises, or
    stays equal with a lower validation loss. Training stops after
    `patience` epochs without improvement or at `max_epochs`.

    Raises:
        ConfigError: Unknown mode
        SplitError: Empty training split
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {mode!r}")
    c = data.config
    seed = c.seed if seed is None else seed
    if not data.samples["train"]:
        raise SplitError("training split is empty")

    kwargs = {"finetune": c.finetune} if mode == "contrastive" else {}
    model = build_model(mode, data.dims(), seed, **kwargs)
    init_replacement_bias(model, data.positive_rate("train"))
    settings = settings_of(data)
    result = TrainingResult(mode, seed, model)

    if isinstance(model, ContrastiveModel):
        result.pretrain = _pretrain(model, data, seed)

    features = None
    if isinstance(model, ContrastiveModel) and not model.finetune:
        features = np.concatenate(
            [frozen_features(model, rb, pb) for rb, pb in data.batches("train", c.batch_size)]
        )

    rng = np.random.default_rng(seed)
    best_model = model.clone()
    best_acc, best_loss = -1.0, float("inf")
    stale = 0
    for epoch in range(c.max_epochs):
        totals, repl_losses, pf_losses = [], [], []
        for indices in data.batch_indices("train", c.batch_size, rng):
            rbatch, pbatch = data.collate("train", indices)
            cached = None if features is None else features[indices]
            values = train_step(model, rbatch, pbatch, settings, cached)
            totals.append(values["total"])
            repl_losses.append(values.get("repl", 0.0))
            pf_losses.append(values.get("pf", 0.0))

        val_acc, val_loss = replacement_metrics(model, data, "val")
        metrics = EpochMetrics(
            epoch, float(np.mean(totals)), float(np.mean(repl_losses)), float(np.mean(pf_losses)),
            val_loss, val_acc,
        )
        result.history.append(metrics)
        logger.info(
            f"[{mode}] epoch {epoch}: loss {metrics.train_loss:.4f} "
            f"(repl {metrics.train_repl_loss:.4f}, pf {metrics.train_pf_loss:.4f}) "
            f"val acc {val_acc:.4f} val loss {val_loss:.4f}"
        )

        if _improved(val_acc, val_loss, best_acc, best_loss):
            best_acc, best_loss = val_acc, val_loss
            best_model = model.clone()
            result.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= c.patience:
                logger.info(f"[{mode}] early stop after epoch {epoch}; best epoch {result.best_epoch}")
                break

    result.model = best_model
    if isinstance(best_model, ContrastiveModel) and data.pairs["test"]:
        result.alignment = pair_cosines(best_model, data.pairs["test"])
        logger.info(
            f"[{mode}] held-out pair cosine: positive {result.alignment[0]:.4f}, "
            f"negative {result.alignment[1]:.4f}"
        )
    return result
