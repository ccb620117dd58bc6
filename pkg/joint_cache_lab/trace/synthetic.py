"""
Deterministic synthetic workloads.

Usage:
    from joint_cache_lab.trace import GeneratorKind, GeneratorParams, gen_synthetic

    loop = gen_synthetic(GeneratorKind.LOOP, GeneratorParams(working_set=4, length=12), seed=7)
    coupled = gen_synthetic(GeneratorKind.COUPLED, GeneratorParams(phases=20, phase_len=50), seed=1)
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, List

import numpy as np

from joint_cache_lab.errors import ConfigError
from joint_cache_lab.trace.model import AccessKind, BlockGeometry, MemoryAccess, Trace

logger = logging.getLogger(__name__)

LOOP_PC = 0x400A00
STREAM_PC = 0x401B40
COUPLED_PC = 0x402C80

# Coupled loop region lives far above any stream page.
COUPLED_LOOP_PAGE = 1 << 24
COUPLED_LOOP_BLOCKS = 8


class GeneratorKind(Enum):
    LOOP = "loop"
    STREAM = "stream"
    STRIDE = "stride"
    MIXED = "mixed"
    COUPLED = "coupled"


@dataclass(frozen=True)
class GeneratorParams:
    """Knobs shared by the generators; each kind reads the ones it needs."""

    length: int = 1000
    working_set: int = 8
    stride: int = 2
    phases: int = 20
    phase_len: int = 50
    mix_ratio: float = 0.5
    store_fraction: float = 0.0

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


def _validate(kind: GeneratorKind, p: GeneratorParams) -> None:
    if not 0.0 <= p.store_fraction <= 1.0:
        raise ConfigError(f"store_fraction must be in [0, 1], got {p.store_fraction}")
    if kind is GeneratorKind.COUPLED:
        if p.phases < 1 or p.phase_len < 1:
            raise ConfigError(f"coupled needs phases >= 1 and phase_len >= 1, got {p.phases}, {p.phase_len}")
        return
    if p.length < 1:
        raise ConfigError(f"length must be >= 1, got {p.length}")
    if kind in (GeneratorKind.LOOP, GeneratorKind.MIXED) and p.working_set < 1:
        raise ConfigError(f"working_set must be >= 1, got {p.working_set}")
    if kind is GeneratorKind.LOOP and p.length < p.working_set:
        raise ConfigError(f"loop length {p.length} shorter than working set {p.working_set}")
    if kind is GeneratorKind.STRIDE and p.stride == 0:
        raise ConfigError("stride must be non-zero")
    if kind is GeneratorKind.MIXED and not 0.0 < p.mix_ratio < 1.0:
        raise ConfigError(f"mix_ratio must be in (0, 1), got {p.mix_ratio}")


def _loop_blocks(p: GeneratorParams, base: int) -> List[int]:
    return [base + i % p.working_set for i in range(p.length)]


def _coupled_blocks(p: GeneratorParams, bpp: int, stream_page: int) -> List[int]:
    # One block per page in both regions, so every access lands on a new page.
    # The stream walks runs of COUPLED_LOOP_BLOCKS ascending blocks, each run
    # below the previous one, so its strides match the loop and its wraparound.
    step = bpp + 1
    loop_base = COUPLED_LOOP_PAGE * bpp
    stream_base = stream_page * bpp
    stream_len = (p.phases // 2) * p.phase_len
    runs = -(-stream_len // COUPLED_LOOP_BLOCKS)
    blocks: List[int] = []
    streamed = 0
    for phase in range(p.phases):
        for i in range(p.phase_len):
            if phase % 2 == 0:
                blocks.append(loop_base + (i % COUPLED_LOOP_BLOCKS) * step)
            else:
                run, j = divmod(streamed, COUPLED_LOOP_BLOCKS)
                blocks.append(stream_base + ((runs - 1 - run) * COUPLED_LOOP_BLOCKS + j) * step)
                streamed += 1
    return blocks


def gen_synthetic(
    kind: GeneratorKind,
    params: GeneratorParams = GeneratorParams(),
    seed: int = 0,
    geometry: BlockGeometry = BlockGeometry(),
) -> Trace:
    """
    Generate a synthetic trace.

    Args:
        kind: Workload shape
        params: Generator parameters
        seed: PRNG seed; identical arguments give identical traces
        geometry: Block geometry used to turn blocks into byte addresses

    Returns:
        Trace named after the kind and seed

    Raises:
        ConfigError: Parameters invalid for this kind
    """
    _validate(kind, params)
    rng = np.random.default_rng(seed)
    bpp = geometry.blocks_per_page
    region = int(rng.integers(16, 4096)) * bpp

    pcs: List[int]
    if kind is GeneratorKind.LOOP:
        blocks = _loop_blocks(params, region)
        pcs = [LOOP_PC + 4 * (i % params.working_set) for i in range(params.length)]
    elif kind is GeneratorKind.STREAM:
        blocks = [region + i for i in range(params.length)]
        pcs = [STREAM_PC] * params.length
    elif kind is GeneratorKind.STRIDE:
        # Keep negative strides above block zero.
        base = region + max(0, -params.stride) * params.length
        blocks = [base + i * params.stride for i in range(params.length)]
        pcs = [STREAM_PC] * params.length
    elif kind is GeneratorKind.MIXED:
        picks = rng.random(params.length) < params.mix_ratio
        loop_base = region + (1 << 16) * bpp
        blocks, pcs = [], []
        looped = streamed = 0
        for take_loop in picks:
            if take_loop:
                blocks.append(loop_base + looped % params.working_set)
                pcs.append(LOOP_PC)
                looped += 1
            else:
                blocks.append(region + streamed)
                pcs.append(STREAM_PC)
                streamed += 1
    else:
        blocks = _coupled_blocks(params, bpp, region // bpp)
        pcs = [COUPLED_PC] * len(blocks)

    n = len(blocks)
    cycles = np.cumsum(rng.integers(1, 5, size=n))
    stores = rng.random(n) < params.store_fraction
    size = geometry.block_size_bytes
    accesses = [
        MemoryAccess(
            cycle=int(cycles[i]),
            core_id=0,
            pc=pcs[i],
            address=blocks[i] * size,
            kind=AccessKind.STORE if stores[i] else AccessKind.LOAD,
        )
        for i in range(n)
    ]
    logger.debug(f"Generated {kind.value} trace: {n} accesses (seed {seed})")
    return Trace(accesses=accesses, source_name=f"{kind.value}-s{seed}", geometry=geometry)
