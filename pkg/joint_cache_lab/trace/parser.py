"""
CSV trace codec.

Format: UTF-8, header `cycle,core,pc,addr,kind`, one access per row.
pc and addr may be decimal or 0x-prefixed hex; kind is `load` or `store`.
"""

import csv
import logging
from typing import Dict, List, Mapping, TextIO

from joint_cache_lab.errors import TraceParseError, TraceValidationError
from joint_cache_lab.trace.model import (
    U16_MAX,
    U64_MAX,
    AccessKind,
    BlockGeometry,
    MemoryAccess,
    Trace,
)

logger = logging.getLogger(__name__)

HEADER = ["cycle", "core", "pc", "addr", "kind"]

_KINDS = {kind.value: kind for kind in AccessKind}


def _parse_int(text: str, column: str, line: int, limit: int) -> int:
    text = text.strip()
    try:
        value = int(text, 16) if text.lower().startswith("0x") else int(text, 10)
    except ValueError:
        raise TraceParseError(f"invalid {column} {text!r}", line, column) from None
    if value < 0 or value > limit:
        raise TraceParseError(f"{column} out of range", line, column)
    return value


def parse_trace(
    stream: TextIO,
    geometry: BlockGeometry = BlockGeometry(),
    source_name: str = "<stream>",
) -> Trace:
    """
    Parse a CSV trace.

    Args:
        stream: Text stream positioned at the header row
        geometry: Block geometry attached to the resulting trace
        source_name: Label stored on the trace

    Returns:
        Trace with one MemoryAccess per data row, in file order

    Raises:
        TraceParseError: Malformed header or row (names line and column)
        TraceValidationError: Cycles decrease (names the first offending line)
    """
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise TraceParseError("missing header", 1) from None
    if [h.strip().lower() for h in header] != HEADER:
        raise TraceParseError(f"expected header {','.join(HEADER)}", 1)

    accesses: List[MemoryAccess] = []
    last_cycle = -1
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(HEADER):
            raise TraceParseError(f"expected {len(HEADER)} fields, got {len(row)}", line)
        cycle = _parse_int(row[0], "cycle", line, U64_MAX)
        core = _parse_int(row[1], "core", line, U16_MAX)
        pc = _parse_int(row[2], "pc", line, U64_MAX)
        address = _parse_int(row[3], "addr", line, U64_MAX)
        kind = _KINDS.get(row[4].strip().lower())
        if kind is None:
            raise TraceParseError("unknown kind", line, "kind")
        if cycle < last_cycle:
            raise TraceValidationError(f"cycle {cycle} decreases from {last_cycle}", line)
        last_cycle = cycle
        accesses.append(MemoryAccess(cycle, core, pc, address, kind))

    logger.debug(f"Parsed {len(accesses)} accesses from {source_name}")
    return Trace(accesses=accesses, source_name=source_name, geometry=geometry)


def write_trace(trace: Trace, stream: TextIO) -> None:
    """Serialize a trace as CSV with hex pc/addr and LF line endings."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(HEADER)
    for a in trace.accesses:
        writer.writerow([a.cycle, a.core_id, hex(a.pc), hex(a.address), a.kind.value])


def write_sidecar(meta: Mapping[str, object], stream: TextIO) -> None:
    """Sorted `key = value` lines describing where a file came from."""
    for key in sorted(meta):
        stream.write(f"{key} = {meta[key]}\n")


def read_sidecar(stream: TextIO) -> Dict[str, str]:
    meta: Dict[str, str] = {}
    for raw in stream:
        line = raw.split("#", 1)[0].strip()
        if line and "=" in line:
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta
