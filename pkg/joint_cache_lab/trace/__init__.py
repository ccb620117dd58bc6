"""
Trace data model, CSV codec, address arithmetic and synthetic workloads.

Usage:
    from joint_cache_lab.trace import parse_trace, block_of, page_and_offset, BlockGeometry

    with open("trace.csv") as f:
        trace = parse_trace(f, BlockGeometry())
    page, offset = page_and_offset(block_of(trace.accesses[0].address, trace.geometry), trace.geometry)
"""

from joint_cache_lab.trace.model import (
    AccessKind,
    BlockGeometry,
    MemoryAccess,
    Trace,
    block_of,
    page_and_offset,
)
from joint_cache_lab.trace.parser import HEADER, parse_trace, read_sidecar, write_sidecar, write_trace
from joint_cache_lab.trace.synthetic import GeneratorKind, GeneratorParams, gen_synthetic

__all__ = [
    "AccessKind",
    "BlockGeometry",
    "MemoryAccess",
    "Trace",
    "block_of",
    "page_and_offset",
    "HEADER",
    "parse_trace",
    "read_sidecar",
    "write_sidecar",
    "write_trace",
    "GeneratorKind",
    "GeneratorParams",
    "gen_synthetic",
]
