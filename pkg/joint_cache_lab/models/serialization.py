"""
Model checkpoints: JCL1 bytes plus the metadata needed to rebuild the model.
"""

import json
import logging
from typing import Dict, Optional, Sequence, Tuple

from joint_cache_lab.errors import CheckpointFormatError, ConfigError
from joint_cache_lab.features import FeatureVocabs
from joint_cache_lab.models.architectures import (
    MODEL_CLASSES,
    BaselineModel,
    ContrastiveModel,
    PolicyModel,
    PrefetchModel,
    ReplacementModel,
)
from joint_cache_lab.models.components import ModelDims
from joint_cache_lab.nnkit import load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

CHECKPOINT_KINDS = ("baseline_repl", "baseline_pf", "joint", "contrastive")


def model_to_checkpoint(
    model: PolicyModel,
    vocabs: FeatureVocabs,
    seed: int,
    extra: Optional[Dict[str, str]] = None,
    include_optimizer: bool = True,
) -> bytes:
    """
    Serialize one checkpointable model.

    A BaselineModel is not checkpointable as a whole; save the halves from
    `BaselineModel.split()`.
    """
    if model.kind not in CHECKPOINT_KINDS:
        raise ConfigError(f"model kind {model.kind!r} has no checkpoint form; split it first")
    meta = {
        "model_kind": model.kind,
        "vocab_sizes": f"pc={vocabs.pc.size},page={vocabs.page.size}",
        "H": str(model.dims.history_length),
        "seed": str(seed),
        "dims": model.dims.to_json(),
        "vocabs": json.dumps(vocabs.to_dict(), sort_keys=True),
    }
    if isinstance(model, ContrastiveModel):
        meta["finetune"] = "true" if model.finetune else "false"
    meta.update(extra or {})
    return save_checkpoint(model.params, meta, include_optimizer)


def model_from_checkpoint(data: bytes) -> Tuple[PolicyModel, FeatureVocabs, Dict[str, str]]:
    """
    Rebuild a model, its vocabularies and the remaining metadata.

    Raises:
        CheckpointFormatError: Malformed bytes or metadata
    """
    store, meta = load_checkpoint(data)
    kind = meta.get("model_kind")
    if kind not in CHECKPOINT_KINDS:
        raise CheckpointFormatError(f"unknown model_kind {kind!r}", 0)
    try:
        dims = ModelDims.from_json(meta["dims"])
        vocabs = FeatureVocabs.from_dict(json.loads(meta["vocabs"]))
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointFormatError(f"invalid model metadata: {e}", 0) from e

    kwargs = {"finetune": meta.get("finetune") == "true"} if kind == "contrastive" else {}
    reference = MODEL_CLASSES[kind].build(dims, **kwargs).params
    missing = [n for n in reference.params if n not in store]
    if missing:
        raise CheckpointFormatError(f"checkpoint lacks parameters {missing[:3]}", 0)
    wrong = [n for n, value in reference.items() if store[n].shape != value.shape]
    if wrong:
        raise CheckpointFormatError(f"checkpoint parameters {wrong[:3]} do not match dims {meta['dims']}", 0)
    model: PolicyModel = MODEL_CLASSES[kind](dims, store, **kwargs)
    logger.debug(f"Loaded {kind} checkpoint with {store.num_parameters()} parameters")
    return model, vocabs, meta


def merge_baseline(models: Sequence[PolicyModel]) -> PolicyModel:
    """Join a baseline_repl and a baseline_pf checkpoint into one BaselineModel."""
    if len(models) == 1:
        return models[0]
    repl = [m for m in models if isinstance(m, ReplacementModel)]
    pf = [m for m in models if isinstance(m, PrefetchModel)]
    if len(models) != 2 or len(repl) != 1 or len(pf) != 1:
        raise ConfigError("only a baseline_repl and a baseline_pf checkpoint can be combined")
    return BaselineModel.from_parts(repl[0], pf[0])
