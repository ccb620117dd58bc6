"""
Replacement policies.

A policy sees every demand access (`on_access`), every hit and insertion,
and picks a victim way when a full set takes a new line.

Usage:
    from joint_cache_lab.cachesim import LruPolicy, PriorityLruPolicy, LabelPredictor

    policy = PriorityLruPolicy(LabelPredictor({12: False}))
"""

import logging
from abc import ABC, abstractmethod
from typing import Dict, Optional, Sequence

from joint_cache_lab.cachesim.model import AccessContext, CacheConfig, CacheLineState
from joint_cache_lab.errors import ConfigError

logger = logging.getLogger(__name__)


def lru_choose_victim(lines: Sequence[CacheLineState]) -> int:
    """Way with the smallest last_touch; lowest way wins ties."""
    best_way = 0
    for way in range(1, len(lines)):
        if lines[way].last_touch < lines[best_way].last_touch:
            best_way = way
    return best_way


class ReplacementPolicy(ABC):
    """Callback interface the simulator drives."""

    name = "policy"

    def reset(self, config: CacheConfig) -> None:
        """Called once before a simulation starts."""

    def on_access(self, ctx: AccessContext) -> None:
        """Called for every demand access, after lookup."""

    def on_hit(self, set_index: int, way: int, line: CacheLineState, ctx: AccessContext) -> None:
        """Called after a demand hit updated the line."""

    def on_insert(self, set_index: int, way: int, line: CacheLineState, ctx: AccessContext) -> None:
        """Called after a new line was filled."""

    @abstractmethod
    def choose_victim(
        self, set_index: int, lines: Sequence[CacheLineState], ctx: AccessContext
    ) -> int:
        """Return the way to evict from a full set."""


class LruPolicy(ReplacementPolicy):
    name = "lru"

    def choose_victim(self, set_index, lines, ctx) -> int:
        return lru_choose_victim(lines)


class MruPolicy(ReplacementPolicy):
    """Evicts the most recently used line."""

    name = "mru"

    def choose_victim(self, set_index, lines, ctx) -> int:
        best_way = 0
        for way in range(1, len(lines)):
            if lines[way].last_touch > lines[best_way].last_touch:
                best_way = way
        return best_way


# ==============================================================================
# Predictor-driven eviction
# ==============================================================================


class LinePredictor(ABC):
    """Predicts whether an incoming line is cache-friendly."""

    def reset(self, config: CacheConfig) -> None:
        pass

    def observe(self, ctx: AccessContext) -> None:
        """Sees every demand access in order, before any prediction for it."""

    @abstractmethod
    def predict(self, ctx: AccessContext) -> bool:
        """True means cache-friendly."""


class ConstantPredictor(LinePredictor):
    def __init__(self, friendly: bool = True):
        self.friendly = friendly

    def predict(self, ctx: AccessContext) -> bool:
        return self.friendly


class LabelPredictor(LinePredictor):
    """Replays known labels keyed by trace position (e.g. oracle labels)."""

    def __init__(self, labels: Dict[int, bool], default: bool = True):
        self.labels = labels
        self.default = default

    def predict(self, ctx: AccessContext) -> bool:
        if ctx.is_prefetch:
            return self.default
        return self.labels.get(ctx.trace_position, self.default)


class PriorityLruPolicy(ReplacementPolicy):
    """
    Evicts the least recently used predicted-averse line, else the LRU line.

    The predictor runs once per insertion and its answer is stored on the
    line, so eviction order reflects the prediction made at fill time.
    """

    name = "predicted"

    def __init__(self, predictor: LinePredictor):
        self.predictor = predictor

    def reset(self, config: CacheConfig) -> None:
        self.predictor.reset(config)

    def on_access(self, ctx: AccessContext) -> None:
        self.predictor.observe(ctx)

    def on_insert(self, set_index, way, line, ctx) -> None:
        line.predicted_friendly = bool(self.predictor.predict(ctx))

    def choose_victim(self, set_index, lines, ctx) -> int:
        victim: Optional[int] = None
        for way, line in enumerate(lines):
            if line.predicted_friendly is False:
                if victim is None or line.last_touch < lines[victim].last_touch:
                    victim = way
        return lru_choose_victim(lines) if victim is None else victim


POLICIES = {
    "lru": LruPolicy,
    "mru": MruPolicy,
}


def policy_by_name(name: str) -> ReplacementPolicy:
    try:
        return POLICIES[name]()
    except KeyError:
        raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}") from None
