"""
The model families: independent baselines, the joint encoder and the
contrastive two-stage model.

Every model reads the same (ReplacementBatch, PrefetchBatch) pair and
exposes the same surface: `outputs`, `losses`, `predict`, `repl_path`,
`pf_path` and `clone`. Only the wiring differs.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from joint_cache_lab.errors import AlignmentError, ConfigError
from joint_cache_lab.features import PrefetchSample, ReplacementSample
from joint_cache_lab.models.components import (
    CacheEncoder,
    ModelDims,
    PrefetchBatch,
    PrefetchEncoder,
    PrefetchHeads,
    ReplacementBatch,
    ReplacementHead,
    apply_dense,
    check_aligned,
    collate_prefetch,
    collate_replacement,
    dense_names,
    init_dense,
)
from joint_cache_lab.nnkit import (
    Node,
    ParamStore,
    Tape,
    concat,
    reshape,
    sigmoid,
    sigmoid_bce,
    softmax,
    softmax_xent_op,
    tanh,
    weighted_sum,
)

logger = logging.getLogger(__name__)


@dataclass
class ModelOutputs:
    repl_logit: Optional[Node] = None
    page_logits: Optional[Node] = None
    offset_logits: Optional[Node] = None


@dataclass
class Predictions:
    p_friendly: Optional[np.ndarray] = None
    page_probs: Optional[np.ndarray] = None
    offset_probs: Optional[np.ndarray] = None


class PolicyModel(ABC):
    """Common surface of every architecture."""

    kind = "model"
    has_replacement = True
    has_prefetch = True

    def __init__(self, dims: ModelDims, params: ParamStore):
        self.dims = dims
        self.params = params

    @classmethod
    def build(cls, dims: ModelDims, seed: int = 0, dtype=np.float32, **kwargs) -> "PolicyModel":
        model = cls(dims, ParamStore(dtype), **kwargs)
        model.init(np.random.default_rng(seed))
        logger.debug(f"Built {cls.kind} model with {model.params.num_parameters()} parameters")
        return model

    @abstractmethod
    def init(self, rng: np.random.Generator) -> None:
        """Create all parameters."""

    @abstractmethod
    def outputs(
        self, tape: Tape, rbatch: Optional[ReplacementBatch], pbatch: Optional[PrefetchBatch]
    ) -> ModelOutputs:
        """Record the forward pass and return head logits."""

    @abstractmethod
    def repl_path(self) -> List[str]:
        """Parameters the replacement loss can reach."""

    @abstractmethod
    def pf_path(self) -> List[str]:
        """Parameters the prefetch loss can reach."""

    @property
    def repl_bias_name(self) -> Optional[str]:
        return None

    def clone(self, dtype=None) -> "PolicyModel":
        other = self.__class__.__new__(self.__class__)
        other.__dict__.update(self.__dict__)
        other.params = self.params.astype(dtype or self.params.dtype)
        other._rebind()
        return other

    def _rebind(self) -> None:
        """Point sub-models at self.params after a clone."""

    def losses(
        self,
        tape: Tape,
        rbatch: Optional[ReplacementBatch],
        pbatch: Optional[PrefetchBatch],
        pos_weight: float = 1.0,
    ) -> Dict[str, Node]:
        return output_losses(tape, self.outputs(tape, rbatch, pbatch), rbatch, pbatch, pos_weight)

    def predict(
        self, rbatch: Optional[ReplacementBatch], pbatch: Optional[PrefetchBatch]
    ) -> Predictions:
        out = self.outputs(Tape(), rbatch, pbatch)
        result = Predictions()
        if out.repl_logit is not None:
            result.p_friendly = sigmoid(out.repl_logit.value.reshape(-1).astype(np.float64))
        if out.page_logits is not None:
            result.page_probs = softmax(out.page_logits.value.astype(np.float64))
            result.offset_probs = softmax(out.offset_logits.value.astype(np.float64))
        return result


# ==============================================================================
# Baselines
# ==============================================================================


class ReplacementModel(PolicyModel):
    """PC-history encoder with a binary cache-friendly head."""

    kind = "baseline_repl"
    has_prefetch = False

    def __init__(self, dims: ModelDims, params: ParamStore, prefix: str = "repl"):
        super().__init__(dims, params)
        self.prefix = prefix
        self.encoder = CacheEncoder(dims, f"{prefix}.enc")
        self.head = ReplacementHead(f"{prefix}.head", self.encoder.out_dim)

    def init(self, rng):
        self.encoder.init(self.params, rng)
        self.head.init(self.params, rng)

    def outputs(self, tape, rbatch, pbatch=None) -> ModelOutputs:
        if rbatch is None:
            return ModelOutputs()
        return ModelOutputs(repl_logit=self.head(tape, self.params, self.encoder(tape, self.params, rbatch)))

    def repl_path(self) -> List[str]:
        return self.encoder.names() + self.head.names()

    def pf_path(self) -> List[str]:
        return []

    @property
    def repl_bias_name(self) -> Optional[str]:
        return self.head.bias_name


class PrefetchModel(PolicyModel):
    """PC/page/offset encoder with page and offset softmax heads."""

    kind = "baseline_pf"
    has_replacement = False

    def __init__(self, dims: ModelDims, params: ParamStore, prefix: str = "pf"):
        super().__init__(dims, params)
        self.prefix = prefix
        self.encoder = PrefetchEncoder(dims, f"{prefix}.enc")
        self.heads = PrefetchHeads(f"{prefix}.head", self.encoder.out_dim, dims)

    def init(self, rng):
        self.encoder.init(self.params, rng)
        self.heads.init(self.params, rng)

    def outputs(self, tape, rbatch=None, pbatch=None) -> ModelOutputs:
        if pbatch is None:
            return ModelOutputs()
        page, offset = self.heads(tape, self.params, self.encoder(tape, self.params, pbatch))
        return ModelOutputs(page_logits=page, offset_logits=offset)

    def repl_path(self) -> List[str]:
        return []

    def pf_path(self) -> List[str]:
        return self.encoder.names() + self.heads.names()


class BaselineModel(PolicyModel):
    """Independent replacement and prefetch models trained side by side."""

    kind = "baseline"

    def __init__(self, dims: ModelDims, params: ParamStore):
        super().__init__(dims, params)
        self.repl = ReplacementModel(dims, params)
        self.pf = PrefetchModel(dims, params)

    @classmethod
    def from_parts(cls, repl: ReplacementModel, pf: PrefetchModel) -> "BaselineModel":
        store = ParamStore(repl.params.dtype)
        for source in (repl.params, pf.params):
            merged = source.copy()
            for name, value in merged.items():
                store.add(name, value)
            store.adam_m.update(merged.adam_m)
            store.adam_v.update(merged.adam_v)
            store.steps.update(merged.steps)
        return cls(repl.dims, store)

    def init(self, rng):
        self.repl.init(rng)
        self.pf.init(rng)

    def _rebind(self) -> None:
        self.repl = ReplacementModel(self.dims, self.params)
        self.pf = PrefetchModel(self.dims, self.params)

    def outputs(self, tape, rbatch, pbatch) -> ModelOutputs:
        r = self.repl.outputs(tape, rbatch)
        p = self.pf.outputs(tape, None, pbatch)
        return ModelOutputs(r.repl_logit, p.page_logits, p.offset_logits)

    def repl_path(self) -> List[str]:
        return self.repl.repl_path()

    def pf_path(self) -> List[str]:
        return self.pf.pf_path()

    @property
    def repl_bias_name(self) -> Optional[str]:
        return self.repl.repl_bias_name

    def split(self) -> Tuple[ReplacementModel, PrefetchModel]:
        """Standalone models over copies of each half's parameters."""
        repl = ReplacementModel(self.dims, self.params.subset("repl."))
        pf = PrefetchModel(self.dims, self.params.subset("pf."))
        return repl, pf


# ==============================================================================
# Joint encoder
# ==============================================================================


class JointModel(PolicyModel):
    """
    Both encoders feed one combining dense layer; both heads read only the
    resulting shared embedding.
    """

    kind = "joint"

    def __init__(self, dims: ModelDims, params: ParamStore):
        super().__init__(dims, params)
        self.cache_encoder = CacheEncoder(dims, "cache_enc")
        self.pf_encoder = PrefetchEncoder(dims, "pf_enc")
        self.combined_in = self.cache_encoder.out_dim + self.pf_encoder.out_dim
        self.repl_head = ReplacementHead("repl_head", dims.shared_dim)
        self.pf_heads = PrefetchHeads("pf_head", dims.shared_dim, dims)

    def init(self, rng):
        self.cache_encoder.init(self.params, rng)
        self.pf_encoder.init(self.params, rng)
        init_dense(self.params, "combine", self.combined_in, self.dims.shared_dim, rng)
        self.repl_head.init(self.params, rng)
        self.pf_heads.init(self.params, rng)

    def shared(self, tape: Tape, rbatch: ReplacementBatch, pbatch: PrefetchBatch) -> Node:
        check_aligned(rbatch, pbatch)
        joined = concat(tape, [
            self.cache_encoder(tape, self.params, rbatch),
            self.pf_encoder(tape, self.params, pbatch),
        ])
        return tanh(tape, apply_dense(tape, self.params, "combine", joined))

    def outputs(self, tape, rbatch, pbatch) -> ModelOutputs:
        shared = self.shared(tape, rbatch, pbatch)
        page, offset = self.pf_heads(tape, self.params, shared)
        return ModelOutputs(self.repl_head(tape, self.params, shared), page, offset)

    def _trunk(self) -> List[str]:
        return self.cache_encoder.names() + self.pf_encoder.names() + dense_names("combine")

    def repl_path(self) -> List[str]:
        return self._trunk() + self.repl_head.names()

    def pf_path(self) -> List[str]:
        return self._trunk() + self.pf_heads.names()

    @property
    def repl_bias_name(self) -> Optional[str]:
        return self.repl_head.bias_name


# ==============================================================================
# Contrastive
# ==============================================================================


class ContrastiveModel(PolicyModel):
    """
    Two encoders with projection heads for pretraining, then policy heads
    over the concatenated encoder outputs. With `finetune` off, stage 2
    reaches only the heads.
    """

    kind = "contrastive"

    def __init__(self, dims: ModelDims, params: ParamStore, finetune: bool = False):
        super().__init__(dims, params)
        self.finetune = finetune
        self.cache_encoder = CacheEncoder(dims, "cache_enc")
        self.pf_encoder = PrefetchEncoder(dims, "pf_enc")
        self.feature_dim = self.cache_encoder.out_dim + self.pf_encoder.out_dim
        self.repl_head = ReplacementHead("repl_head", self.feature_dim)
        self.pf_heads = PrefetchHeads("pf_head", self.feature_dim, dims)

    def init(self, rng):
        self.cache_encoder.init(self.params, rng)
        self.pf_encoder.init(self.params, rng)
        init_dense(self.params, "proj.cache", self.cache_encoder.out_dim, self.dims.projection_dim, rng)
        init_dense(self.params, "proj.pf", self.pf_encoder.out_dim, self.dims.projection_dim, rng)
        self.repl_head.init(self.params, rng)
        self.pf_heads.init(self.params, rng)

    # Stage 1 -----------------------------------------------------------------

    def project_cache(self, tape: Tape, rbatch: ReplacementBatch) -> Node:
        return apply_dense(tape, self.params, "proj.cache", self.cache_encoder(tape, self.params, rbatch))

    def project_prefetch(self, tape: Tape, pbatch: PrefetchBatch) -> Node:
        return apply_dense(tape, self.params, "proj.pf", self.pf_encoder(tape, self.params, pbatch))

    def project_negatives(self, tape: Tape, pbatch: PrefetchBatch, groups: int) -> Node:
        flat = self.project_prefetch(tape, pbatch)
        return reshape(tape, flat, (groups, len(pbatch) // groups, self.dims.projection_dim))

    def pretrain_path(self) -> List[str]:
        return (
            self.cache_encoder.names() + self.pf_encoder.names()
            + dense_names("proj.cache") + dense_names("proj.pf")
        )

    def encoder_names(self) -> List[str]:
        return self.cache_encoder.names() + self.pf_encoder.names()

    # Stage 2 -----------------------------------------------------------------

    def features(self, tape: Tape, rbatch: ReplacementBatch, pbatch: PrefetchBatch) -> Node:
        check_aligned(rbatch, pbatch)
        return concat(tape, [
            self.cache_encoder(tape, self.params, rbatch),
            self.pf_encoder(tape, self.params, pbatch),
        ])

    def head_outputs(self, tape: Tape, features: Node) -> ModelOutputs:
        page, offset = self.pf_heads(tape, self.params, features)
        return ModelOutputs(self.repl_head(tape, self.params, features), page, offset)

    def outputs(self, tape, rbatch, pbatch) -> ModelOutputs:
        return self.head_outputs(tape, self.features(tape, rbatch, pbatch))

    def repl_path(self) -> List[str]:
        return (self.encoder_names() if self.finetune else []) + self.repl_head.names()

    def pf_path(self) -> List[str]:
        return (self.encoder_names() if self.finetune else []) + self.pf_heads.names()

    @property
    def repl_bias_name(self) -> Optional[str]:
        return self.repl_head.bias_name


def output_losses(
    tape: Tape,
    out: ModelOutputs,
    rbatch: Optional[ReplacementBatch],
    pbatch: Optional[PrefetchBatch],
    pos_weight: float = 1.0,
) -> Dict[str, Node]:
    """`repl` (BCE) and `pf` (page + offset cross-entropy over rows with a target) loss nodes."""
    losses: Dict[str, Node] = {}
    if out.repl_logit is not None and rbatch is not None:
        losses["repl"] = sigmoid_bce(tape, out.repl_logit, rbatch.labels, pos_weight)
    if out.page_logits is not None and pbatch is not None:
        page = softmax_xent_op(tape, out.page_logits, pbatch.target_page, pbatch.has_target)
        offset = softmax_xent_op(tape, out.offset_logits, pbatch.target_offset, pbatch.has_target)
        losses["pf"] = weighted_sum(tape, [(page, 1.0), (offset, 1.0)])
    return losses


MODEL_CLASSES = {
    "baseline": BaselineModel,
    "baseline_repl": ReplacementModel,
    "baseline_pf": PrefetchModel,
    "joint": JointModel,
    "contrastive": ContrastiveModel,
}


def build_model(kind: str, dims: ModelDims, seed: int = 0, dtype=np.float32, **kwargs) -> PolicyModel:
    """Construct and initialise a model by kind name."""
    if kind not in MODEL_CLASSES:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {', '.join(MODEL_CLASSES)}")
    return MODEL_CLASSES[kind].build(dims, seed, dtype, **kwargs)


# ==============================================================================
# Single-sample forward passes
# ==============================================================================


def replacement_forward(model: PolicyModel, sample: ReplacementSample, view: Optional[PrefetchSample] = None) -> float:
    """P(cache-friendly) for one sample; models with a prefetch encoder need the aligned view."""
    pbatch = collate_prefetch([view]) if view is not None else None
    return float(model.predict(collate_replacement([sample]), pbatch).p_friendly[0])


def prefetch_forward(model: PrefetchModel, sample: PrefetchSample) -> Tuple[np.ndarray, np.ndarray]:
    """(page distribution, offset distribution) for one sample."""
    result = model.predict(None, collate_prefetch([sample]))
    return result.page_probs[0], result.offset_probs[0]


def joint_forward(
    model: JointModel, rs: ReplacementSample, ps: PrefetchSample
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Shared embedding computed once and read by both heads."""
    if rs.event_index != ps.event_index:
        raise AlignmentError(
            f"replacement view at event {rs.event_index} vs prefetch view at event {ps.event_index}"
        )
    result = model.predict(collate_replacement([rs]), collate_prefetch([ps]))
    return float(result.p_friendly[0]), result.page_probs[0], result.offset_probs[0]
