"""
Baseline prefetchers.

Prefetch requests carry the triggering access's PC and cycle; their
degree comes from CacheConfig.prefetch_degree.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional

from joint_cache_lab.cachesim.model import CacheConfig
from joint_cache_lab.errors import ConfigError
from joint_cache_lab.trace import MemoryAccess, block_of
from joint_cache_lab.trace.model import BlockGeometry


@dataclass
class StrideEntry:
    last_block: int
    last_stride: Optional[int] = None


def stride_prefetcher_observe(
    history: Dict[int, StrideEntry],
    access: MemoryAccess,
    geometry: BlockGeometry = BlockGeometry(),
    degree: int = 1,
) -> List[int]:
    """
    Update the per-PC stride table and return prefetch candidates.

    Emits block + k*stride for k = 1..degree when the current stride repeats
    the previous one for this PC and is non-zero.
    """
    block = block_of(access.address, geometry)
    entry = history.get(access.pc)
    if entry is None:
        history[access.pc] = StrideEntry(last_block=block)
        return []
    stride = block - entry.last_block
    confirmed = stride != 0 and stride == entry.last_stride
    entry.last_block = block
    entry.last_stride = stride
    if not confirmed:
        return []
    return [block + k * stride for k in range(1, degree + 1)]


class Prefetcher(ABC):
    name = "prefetcher"

    def __init__(self):
        self.degree = 1
        self.geometry = BlockGeometry()

    def reset(self, config: CacheConfig) -> None:
        self.degree = config.prefetch_degree
        self.geometry = config.geometry

    @abstractmethod
    def observe(self, access: MemoryAccess, block: int, hit: bool) -> List[int]:
        """Return candidate blocks to prefetch after this demand access."""


class StridePrefetcher(Prefetcher):
    name = "stride"

    def __init__(self):
        super().__init__()
        self.table: Dict[int, StrideEntry] = {}

    def reset(self, config: CacheConfig) -> None:
        super().reset(config)
        self.table = {}

    def observe(self, access, block, hit) -> List[int]:
        return stride_prefetcher_observe(self.table, access, self.geometry, self.degree)


class NextLinePrefetcher(Prefetcher):
    name = "next_line"

    def observe(self, access, block, hit) -> List[int]:
        return [block + k for k in range(1, self.degree + 1)]


def prefetcher_by_name(name: str) -> Optional[Prefetcher]:
    if name == "none":
        return None
    if name == "stride":
        return StridePrefetcher()
    if name in ("next_line", "next-line"):
        return NextLinePrefetcher()
    raise ConfigError(f"unknown prefetcher {name!r}; choose from stride, next_line, none")
