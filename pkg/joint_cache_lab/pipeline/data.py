"""
From a trace to training-ready samples.

`prepare_dataset` runs the LRU + prefetcher simulation that produces the
event log, labels the demand stream with MIN, splits the labeled
insertions chronologically, builds vocabularies from the training region
only, and extracts replacement samples, their aligned prefetch views and
contrastive pairs for each split.
"""

import hashlib
import io
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from joint_cache_lab.cachesim import CacheConfig, CacheEvent, LruPolicy, SimResult, prefetcher_by_name, simulate
from joint_cache_lab.config import RunConfig
from joint_cache_lab.errors import AlignmentError, DataIntegrityError
from joint_cache_lab.features import (
    FeatureVocabs,
    PairSample,
    PrefetchSample,
    ReplacementSample,
    VocabField,
    build_vocab,
    extract_prefetch_samples,
    extract_replacement_samples,
    make_pairs,
)
from joint_cache_lab.models import (
    ModelDims,
    PrefetchBatch,
    ReplacementBatch,
    collate_prefetch,
    collate_replacement,
)
from joint_cache_lab.oracle import LabeledInsertion, belady_simulate, write_labels
from joint_cache_lab.pipeline.split import SplitSpec, split_dataset
from joint_cache_lab.trace import BlockGeometry, Trace

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


def geometry_of(config: RunConfig) -> BlockGeometry:
    return BlockGeometry(config.block_size, config.page_size)


def cache_config_of(config: RunConfig) -> CacheConfig:
    return CacheConfig(
        num_sets=config.num_sets,
        associativity=config.associativity,
        geometry=geometry_of(config),
        prefetch_degree=config.prefetch_degree,
    )


def labels_digest(labels: Sequence[LabeledInsertion]) -> str:
    buffer = io.StringIO()
    write_labels(labels, buffer)
    return hashlib.sha256(buffer.getvalue().encode("utf-8")).hexdigest()


@dataclass
class PreparedData:
    """Everything a training run reads, split chronologically."""

    trace: Trace
    config: RunConfig
    cache_config: CacheConfig
    sim: SimResult
    labels: List[LabeledInsertion]
    vocabs: FeatureVocabs
    samples: Dict[str, List[ReplacementSample]]
    views: Dict[str, List[PrefetchSample]]
    pairs: Dict[str, List[PairSample]]
    trace_digest: str
    label_digest: str
    oracle_hits: Optional[int] = None
    region_end: Dict[str, int] = field(default_factory=dict)

    @property
    def events(self) -> List[CacheEvent]:
        return self.sim.events

    def dims(self) -> ModelDims:
        c = self.config
        return ModelDims(
            pc_vocab=self.vocabs.pc.size,
            page_vocab=self.vocabs.page.size,
            blocks_per_page=self.cache_config.geometry.blocks_per_page,
            embed_dim=c.embed_dim,
            hidden_dim=c.hidden_dim,
            shared_dim=c.shared_dim,
            projection_dim=c.projection_dim,
            history_length=c.history_length,
        )

    def sizes(self) -> Tuple[int, int, int]:
        return tuple(len(self.samples[s]) for s in SPLITS)  # type: ignore[return-value]

    def positive_rate(self, split: str = "train") -> float:
        samples = self.samples[split]
        return sum(s.label for s in samples) / len(samples) if samples else 0.0

    def batch_indices(
        self, split: str, batch_size: int, rng: Optional[np.random.Generator] = None
    ) -> List[np.ndarray]:
        """Sample indices per batch; shuffled when `rng` is given."""
        n = len(self.samples[split])
        order = np.arange(n) if rng is None else rng.permutation(n)
        return [order[start:start + batch_size] for start in range(0, n, batch_size)]

    def collate(self, split: str, indices: Sequence[int]) -> Tuple[ReplacementBatch, PrefetchBatch]:
        samples, views = self.samples[split], self.views[split]
        return (
            collate_replacement([samples[i] for i in indices]),
            collate_prefetch([views[i] for i in indices]),
        )

    def batches(
        self, split: str, batch_size: int, rng: Optional[np.random.Generator] = None
    ) -> List[Tuple[ReplacementBatch, PrefetchBatch]]:
        """Aligned batches for one split."""
        return [self.collate(split, idx) for idx in self.batch_indices(split, batch_size, rng)]


def _align(samples: Sequence[ReplacementSample], by_event: Dict[int, PrefetchSample]) -> List[PrefetchSample]:
    views = []
    for s in samples:
        view = by_event.get(s.event_index)
        if view is None:
            raise AlignmentError(f"no prefetch view at event {s.event_index}")
        views.append(view)
    return views


def prepare_dataset(
    trace: Trace,
    config: RunConfig,
    labels: Optional[Sequence[LabeledInsertion]] = None,
    spec: SplitSpec = SplitSpec(),
    vocabs: Optional[FeatureVocabs] = None,
) -> PreparedData:
    """
    Build every split for one (trace, config).

    Args:
        trace: Demand trace
        config: Run configuration (cache, features, seed for pair sampling)
        labels: Precomputed MIN labels; computed here when omitted
        spec: Split fractions
        vocabs: Vocabularies of an existing model; built from the training
            region when omitted

    Raises:
        SplitError: Fewer than 5 labeled insertions
        DataIntegrityError: Labels that do not join with the event log
    """
    cache_config = cache_config_of(config)
    geometry = cache_config.geometry
    if trace.geometry != geometry:
        trace = Trace(trace.accesses, trace.source_name, geometry)

    sim = simulate(
        trace, cache_config, LruPolicy(), prefetcher_by_name(config.prefetcher),
        observe=config.prefetch_observe,
    )
    oracle_hits = None
    if labels is None:
        oracle = belady_simulate(trace, cache_config)
        labels, oracle_hits = oracle.insertions, oracle.hits
    labels = sorted(labels, key=lambda l: l.trace_position)
    if labels and labels[-1].trace_position >= len(trace):
        raise DataIntegrityError(
            f"label at position {labels[-1].trace_position} beyond a trace of {len(trace)} accesses"
        )

    train_labels, val_labels, test_labels = split_dataset(labels, spec)
    region_end = {
        "train": train_labels[-1].trace_position if train_labels else -1,
        "val": val_labels[-1].trace_position if val_labels else -1,
        "test": len(trace) - 1,
    }
    if region_end["val"] < 0:
        region_end["val"] = region_end["train"]

    train_events = [e for e in sim.events if e.trace_position <= region_end["train"]]
    if vocabs is None:
        vocabs = FeatureVocabs(
            pc=build_vocab(train_events, VocabField.PC, geometry, config.pc_min_count),
            page=build_vocab(train_events, VocabField.PAGE, geometry, config.page_min_count),
        )

    h = config.history_length
    all_views = extract_prefetch_samples(
        sim.events, vocabs, geometry, h, aligned=True, target=config.prefetch_target
    )
    by_event = {v.event_index: v for v in all_views}

    samples: Dict[str, List[ReplacementSample]] = {}
    views: Dict[str, List[PrefetchSample]] = {}
    pairs: Dict[str, List[PairSample]] = {}
    start = -1
    for split, split_labels in zip(SPLITS, (train_labels, val_labels, test_labels)):
        samples[split] = extract_replacement_samples(sim.events, split_labels, vocabs, h, geometry)
        views[split] = _align(samples[split], by_event)
        end = region_end[split]
        region_views = [v for v in all_views if start < v.trace_position <= end]
        pairs[split] = make_pairs(
            samples[split], region_views, sim.events,
            window=config.pair_window,
            negatives_per_positive=config.negatives_per_positive,
            seed=config.seed,
            pairing=config.pairing,
        )
        start = end

    data = PreparedData(
        trace=trace,
        config=config,
        cache_config=cache_config,
        sim=sim,
        labels=list(labels),
        vocabs=vocabs,
        samples=samples,
        views=views,
        pairs=pairs,
        trace_digest=trace.digest(),
        label_digest=labels_digest(labels),
        oracle_hits=oracle_hits,
        region_end=region_end,
    )
    train, val, test = data.sizes()
    logger.info(
        f"Prepared {trace.source_name}: {len(labels)} insertions -> {train}/{val}/{test}, "
        f"vocab pc={vocabs.pc.size} page={vocabs.page.size}, "
        f"{sum(p.is_positive for p in pairs['train'])} train positives"
    )
    return data
