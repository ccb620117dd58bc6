"""
Exhaustive optimal-replacement search, used to cross-check MIN on tiny traces.
"""

from functools import lru_cache
from typing import FrozenSet, Tuple

from joint_cache_lab.cachesim import CacheConfig
from joint_cache_lab.errors import OracleLimitError
from joint_cache_lab.trace import Trace, block_of

MAX_TRACE_LENGTH = 14
MAX_ASSOCIATIVITY = 3


def brute_force_optimal(trace: Trace, config: CacheConfig) -> int:
    """
    Maximum demand hits achievable by any replacement policy (no bypass).

    Raises:
        OracleLimitError: Trace longer than 14 accesses or associativity above 3
    """
    if len(trace) > MAX_TRACE_LENGTH:
        raise OracleLimitError(f"trace length {len(trace)} exceeds {MAX_TRACE_LENGTH}")
    if config.associativity > MAX_ASSOCIATIVITY:
        raise OracleLimitError(
            f"associativity {config.associativity} exceeds {MAX_ASSOCIATIVITY}"
        )

    blocks = tuple(block_of(a.address, config.geometry) for a in trace.accesses)
    ways = config.associativity

    State = Tuple[FrozenSet[int], ...]

    @lru_cache(maxsize=None)
    def best(position: int, state: State) -> int:
        if position == len(blocks):
            return 0
        block = blocks[position]
        set_index = config.set_of(block)
        resident = state[set_index]
        if block in resident:
            return 1 + best(position + 1, state)
        if len(resident) < ways:
            options = [resident | {block}]
        else:
            options = [(resident - {victim}) | {block} for victim in resident]
        outcomes = []
        for option in options:
            next_state = state[:set_index] + (frozenset(option),) + state[set_index + 1:]
            outcomes.append(best(position + 1, next_state))
        return max(outcomes)

    empty: State = tuple(frozenset() for _ in range(config.num_sets))
    return best(0, empty)
