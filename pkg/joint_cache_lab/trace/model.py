"""
Trace data model and address arithmetic.
"""

import hashlib
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Tuple

from joint_cache_lab.errors import ConfigError

U16_MAX = (1 << 16) - 1
U64_MAX = (1 << 64) - 1


def _is_power_of_two(value: int) -> bool:
    return value > 0 and (value & (value - 1)) == 0


@dataclass(frozen=True)
class BlockGeometry:
    """Block and page sizes in bytes; both powers of two."""

    block_size_bytes: int = 64
    page_size_bytes: int = 4096

    def __post_init__(self):
        if not _is_power_of_two(self.block_size_bytes):
            raise ConfigError(f"block size must be a power of two, got {self.block_size_bytes}")
        if not _is_power_of_two(self.page_size_bytes):
            raise ConfigError(f"page size must be a power of two, got {self.page_size_bytes}")
        if self.page_size_bytes < self.block_size_bytes:
            raise ConfigError(
                f"page size {self.page_size_bytes} smaller than block size {self.block_size_bytes}"
            )

    @property
    def blocks_per_page(self) -> int:
        return self.page_size_bytes // self.block_size_bytes


class AccessKind(Enum):
    LOAD = "load"
    STORE = "store"


@dataclass(frozen=True)
class MemoryAccess:
    """One demand access from a trace."""

    cycle: int
    core_id: int
    pc: int
    address: int
    kind: AccessKind = AccessKind.LOAD


@dataclass
class Trace:
    """Ordered accesses plus a label naming where they came from."""

    accesses: List[MemoryAccess]
    source_name: str = "<memory>"
    geometry: BlockGeometry = field(default_factory=BlockGeometry)

    def __len__(self) -> int:
        return len(self.accesses)

    def __iter__(self) -> Iterator[MemoryAccess]:
        return iter(self.accesses)

    def blocks(self) -> List[int]:
        """Block number of every access, in trace order."""
        size = self.geometry.block_size_bytes
        return [a.address // size for a in self.accesses]

    def digest(self) -> str:
        """SHA-256 over the serialized CSV form."""
        from joint_cache_lab.trace.parser import write_trace

        buffer = io.StringIO()
        write_trace(self, buffer)
        return hashlib.sha256(buffer.getvalue().encode("utf-8")).hexdigest()


def block_of(address: int, geometry: BlockGeometry) -> int:
    """Block number holding byte `address`."""
    return address // geometry.block_size_bytes


def page_and_offset(block: int, geometry: BlockGeometry) -> Tuple[int, int]:
    """Split a block number into (page, block offset within the page)."""
    return divmod(block, geometry.blocks_per_page)
