"""Belady MIN replay, exhaustive cross-check and the labels codec."""

import io

import numpy as np
import pytest

from joint_cache_lab.cachesim import CacheConfig
from joint_cache_lab.errors import DataIntegrityError, OracleLimitError
from joint_cache_lab.oracle import (
    LABEL_CSV_HEADER,
    InsertionLabel,
    belady_simulate,
    brute_force_optimal,
    next_use_scan,
    read_labels,
    write_labels,
)
from joint_cache_lab.trace import GeneratorKind, GeneratorParams, gen_synthetic

A, B, C = 1, 2, 3


@pytest.mark.parametrize(
    "blocks,expected",
    [([A, B, A], [2, None, None]), ([], []), ([A, A, A], [1, 2, None])],
)
def test_next_use_scan(blocks, expected):
    assert next_use_scan(blocks) == expected


class TestBelady:
    def test_evicts_farthest(self, make_trace, one_set_cache):
        result = belady_simulate(make_trace([A, B, C, A]), one_set_cache(2))
        assert result.hits == 1
        assert [(e.victim_block, e.inserted_block) for e in result.evictions] == [(B, C)]
        labels = [(i.block, i.label) for i in result.insertions]
        assert labels == [
            (A, InsertionLabel.FRIENDLY),
            (B, InsertionLabel.AVERSE),
            (C, InsertionLabel.AVERSE),
        ]

    def test_stream_all_averse(self):
        trace = gen_synthetic(GeneratorKind.STREAM, GeneratorParams(length=100), seed=0)
        result = belady_simulate(trace, CacheConfig(num_sets=4, associativity=2))
        assert result.hits == 0
        assert all(i.label is InsertionLabel.AVERSE for i in result.insertions)
        assert result.friendly_fraction() == 0.0

    def test_loop_fitting_in_cache(self):
        trace = gen_synthetic(GeneratorKind.LOOP, GeneratorParams(working_set=4, length=40), seed=0)
        result = belady_simulate(trace, CacheConfig(num_sets=4, associativity=1))
        assert len(result.insertions) == 4
        assert result.friendly_fraction() == 1.0

    def test_ties_break_to_lowest_way(self, make_trace, one_set_cache):
        result = belady_simulate(make_trace([A, B, C]), one_set_cache(2))
        assert result.evictions[0].way == 0

    def test_hits_attribute_to_friendly_insertions(self):
        trace = gen_synthetic(GeneratorKind.MIXED, GeneratorParams(length=400, working_set=12), seed=6)
        result = belady_simulate(trace, CacheConfig(num_sets=4, associativity=2))
        assert sum(i.hits for i in result.insertions) == result.hits
        for insertion in result.insertions:
            assert (insertion.hits > 0) == (insertion.label is InsertionLabel.FRIENDLY)

    def test_matches_exhaustive_search(self, make_trace):
        rng = np.random.default_rng(42)
        for trial in range(200):
            ways = int(rng.integers(1, 4))
            sets = int(rng.choice([1, 2]))
            length = int(rng.integers(1, 15))
            blocks = rng.integers(0, 6, size=length).tolist()
            config = CacheConfig(num_sets=sets, associativity=ways)
            trace = make_trace(blocks)
            assert belady_simulate(trace, config).hits == brute_force_optimal(trace, config), blocks


class TestBruteForce:
    @pytest.mark.parametrize(
        "blocks,ways,hits",
        [([A, B, C, A], 2, 1), ([A, A], 1, 1), ([A, B, A, B], 1, 0)],
    )
    def test_examples(self, make_trace, one_set_cache, blocks, ways, hits):
        assert brute_force_optimal(make_trace(blocks), one_set_cache(ways)) == hits

    def test_refuses_long_traces(self, make_trace, one_set_cache):
        with pytest.raises(OracleLimitError, match="length"):
            brute_force_optimal(make_trace([A] * 15), one_set_cache(1))

    def test_refuses_wide_sets(self, make_trace, one_set_cache):
        with pytest.raises(OracleLimitError, match="associativity"):
            brute_force_optimal(make_trace([A]), one_set_cache(4))


class TestLabelsCodec:
    def test_round_trip(self, make_trace, one_set_cache):
        insertions = belady_simulate(make_trace([A, B, C, A, B]), one_set_cache(2)).insertions
        buffer = io.StringIO()
        write_labels(insertions, buffer)
        assert buffer.getvalue().splitlines()[0] == ",".join(LABEL_CSV_HEADER)
        again = read_labels(io.StringIO(buffer.getvalue()))
        assert [(i.insertion_id, i.trace_position, i.block, i.label) for i in again] == [
            (i.insertion_id, i.trace_position, i.block, i.label) for i in insertions
        ]

    def test_bad_header(self):
        with pytest.raises(DataIntegrityError, match="header"):
            read_labels(io.StringIO("id,label\n"))

    def test_bad_row(self):
        text = ",".join(LABEL_CSV_HEADER) + "\n0,0,1,0x10,0,maybe\n"
        with pytest.raises(DataIntegrityError, match="line 2"):
            read_labels(io.StringIO(text))
