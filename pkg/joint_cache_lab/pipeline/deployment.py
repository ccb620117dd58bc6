"""
Plugging a trained replacement model back into the simulator.

The model runs once per demand insertion, on the same features the
training samples carried; the answer is stored on the line and
PriorityLruPolicy evicts predicted-averse lines first.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from joint_cache_lab.cachesim import (
    AccessContext,
    CacheConfig,
    LabelPredictor,
    LinePredictor,
    LruPolicy,
    PriorityLruPolicy,
    prefetcher_by_name,
    simulate,
)
from joint_cache_lab.errors import ConfigError
from joint_cache_lab.features import PAD_ID, FeatureVocabs, context_vector, offset_token
from joint_cache_lab.models import PolicyModel, PrefetchBatch, ReplacementBatch, model_from_checkpoint
from joint_cache_lab.oracle import InsertionLabel, LabeledInsertion
from joint_cache_lab.pipeline.evaluation import DECISION_THRESHOLD
from joint_cache_lab.trace import BlockGeometry, Trace, page_and_offset

logger = logging.getLogger(__name__)


def _window(tokens: List[int], length: int) -> np.ndarray:
    out = np.full(length, PAD_ID, dtype=np.int64)
    recent = tokens[-length:]
    if recent:
        out[-len(recent):] = recent
    return out


class ModelPredictor(LinePredictor):
    """
    Keeps tokenized demand histories as the simulation runs and asks the
    model about each demand insertion. Prefetch fills get `default`.
    """

    def __init__(
        self,
        model: PolicyModel,
        vocabs: FeatureVocabs,
        geometry: BlockGeometry,
        default: bool = True,
    ):
        if not model.has_replacement:
            raise ConfigError(f"{model.kind} model has no replacement head")
        self.model = model
        self.vocabs = vocabs
        self.geometry = geometry
        self.default = default
        self.length = model.dims.history_length
        self.needs_view = model.kind in ("joint", "contrastive")
        self.reset(None)

    def reset(self, config: Optional[CacheConfig]) -> None:
        self.pcs: List[int] = []
        self.pages: List[int] = []
        self.offsets: List[int] = []
        self.queries = 0

    def observe(self, ctx: AccessContext) -> None:
        page, offset = page_and_offset(ctx.block, self.geometry)
        self.pcs.append(self.vocabs.pc.lookup(ctx.access.pc))
        self.pages.append(self.vocabs.page.lookup(page))
        self.offsets.append(offset_token(offset))

    def probability(self, ctx: AccessContext) -> float:
        context = context_vector(ctx.set_index, ctx.stride_id, ctx.miss_type, ctx.access.core_id)
        event = np.array([ctx.event_index], dtype=np.int64)
        rbatch = ReplacementBatch(
            pc_history=_window(self.pcs, self.length)[None, :],
            context=context[None, :],
            labels=np.zeros(1),
            event_index=event,
        )
        pbatch = None
        if self.needs_view:
            pbatch = PrefetchBatch(
                pc_history=_window(self.pcs, self.length)[None, :],
                page_history=_window(self.pages, self.length)[None, :],
                offset_history=_window(self.offsets, self.length)[None, :],
                target_page=np.zeros(1, dtype=np.int64),
                target_offset=np.zeros(1, dtype=np.int64),
                has_target=np.zeros(1, dtype=bool),
                event_index=event,
            )
        self.queries += 1
        return float(self.model.predict(rbatch, pbatch).p_friendly[0])

    def predict(self, ctx: AccessContext) -> bool:
        if ctx.is_prefetch:
            return self.default
        return self.probability(ctx) >= DECISION_THRESHOLD


def model_replacement_policy(
    model: PolicyModel, vocabs: FeatureVocabs, geometry: BlockGeometry = BlockGeometry()
) -> PriorityLruPolicy:
    """
    Replacement policy driven by a trained model.

    Raises:
        ConfigError: The model has no replacement head
    """
    return PriorityLruPolicy(ModelPredictor(model, vocabs, geometry))


def policy_from_checkpoint(data: bytes, geometry: BlockGeometry = BlockGeometry()) -> PriorityLruPolicy:
    model, vocabs, _ = model_from_checkpoint(data)
    return model_replacement_policy(model, vocabs, geometry)


def oracle_policy(labels: Sequence[LabeledInsertion]) -> PriorityLruPolicy:
    """Perfect predictor: replays MIN labels by trace position."""
    known = {l.trace_position: l.label is InsertionLabel.FRIENDLY for l in labels}
    return PriorityLruPolicy(LabelPredictor(known))


def deployment_hit_rates(
    model: PolicyModel,
    vocabs: FeatureVocabs,
    trace: Trace,
    cache_config: CacheConfig,
    prefetcher: str = "stride",
    observe: str = "all",
) -> Tuple[float, float]:
    """
    Demand hit rates of the learned policy and of LRU over the same trace
    with the same prefetcher.
    """
    policy = model_replacement_policy(model, vocabs, cache_config.geometry)
    learned = simulate(trace, cache_config, policy, prefetcher_by_name(prefetcher), observe)
    lru = simulate(trace, cache_config, LruPolicy(), prefetcher_by_name(prefetcher), observe)
    logger.info(
        f"Deployed {model.kind} policy on {trace.source_name}: hit rate "
        f"{learned.hit_rate():.4f} vs LRU {lru.hit_rate():.4f}"
    )
    return learned.hit_rate(), lru.hit_rate()
