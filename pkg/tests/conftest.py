"""Shared fixtures for the Joint Cache Lab test suite."""

from typing import Callable, Optional, Sequence

import pytest

from joint_cache_lab.cachesim import CacheConfig
from joint_cache_lab.config import RunConfig
from joint_cache_lab.trace import (
    AccessKind,
    BlockGeometry,
    GeneratorKind,
    GeneratorParams,
    MemoryAccess,
    Trace,
    gen_synthetic,
)

BLOCK = BlockGeometry().block_size_bytes


def trace_of_blocks(
    blocks: Sequence[int], pcs: Optional[Sequence[int]] = None, name: str = "blocks"
) -> Trace:
    """Trace touching `blocks` in order, one cycle apart."""
    pcs = list(pcs) if pcs is not None else [0x400000] * len(blocks)
    accesses = [
        MemoryAccess(cycle=i, core_id=0, pc=pc, address=b * BLOCK, kind=AccessKind.LOAD)
        for i, (b, pc) in enumerate(zip(blocks, pcs))
    ]
    return Trace(accesses=accesses, source_name=name)


@pytest.fixture
def make_trace() -> Callable[..., Trace]:
    return trace_of_blocks


@pytest.fixture
def one_set_cache() -> Callable[[int], CacheConfig]:
    def build(ways: int) -> CacheConfig:
        return CacheConfig(num_sets=1, associativity=ways)

    return build


@pytest.fixture(scope="session")
def coupled_trace() -> Trace:
    return gen_synthetic(GeneratorKind.COUPLED, GeneratorParams(phases=20, phase_len=50), seed=1)


@pytest.fixture(scope="session")
def loop_trace() -> Trace:
    return gen_synthetic(GeneratorKind.LOOP, GeneratorParams(length=400, working_set=8), seed=0)


@pytest.fixture
def small_config() -> RunConfig:
    """Tiny dims and a short schedule for fast training tests."""
    return RunConfig(
        history_length=4,
        embed_dim=4,
        hidden_dim=6,
        shared_dim=4,
        projection_dim=4,
        batch_size=8,
        max_epochs=3,
        patience=2,
        pretrain_epochs=2,
        seeds=(0,),
    )
