"""
Feature extraction: vocabularies, replacement/prefetch samples, contrastive pairs.

Usage:
    from joint_cache_lab.features import (
        FeatureVocabs, VocabField, build_vocab, extract_replacement_samples,
        extract_prefetch_samples, make_pairs,
    )

    vocabs = FeatureVocabs(pc=build_vocab(train_events, VocabField.PC),
                           page=build_vocab(train_events, VocabField.PAGE, geometry))
    repl = extract_replacement_samples(events, labels, vocabs, history_length=16)
    views = extract_prefetch_samples(events, vocabs, geometry, 16, aligned=True)
    pairs = make_pairs(repl, views, events, window=32, negatives_per_positive=4, seed=0)
"""

from joint_cache_lab.features.pairs import PAIRINGS, PairSample, make_pairs, write_pairs
from joint_cache_lab.features.samples import (
    CONTEXT_DIM,
    PREFETCH_TARGETS,
    DemandSeries,
    PrefetchSample,
    ReplacementSample,
    context_vector,
    extract_prefetch_samples,
    extract_replacement_samples,
    offset_token,
    write_prefetch_samples,
    write_replacement_samples,
)
from joint_cache_lab.features.vocab import (
    OOV_ID,
    PAD_ID,
    FeatureVocabs,
    Vocab,
    VocabField,
    build_vocab,
)

__all__ = [
    "PAIRINGS",
    "PairSample",
    "make_pairs",
    "write_pairs",
    "CONTEXT_DIM",
    "PREFETCH_TARGETS",
    "DemandSeries",
    "PrefetchSample",
    "ReplacementSample",
    "context_vector",
    "extract_prefetch_samples",
    "extract_replacement_samples",
    "offset_token",
    "write_prefetch_samples",
    "write_replacement_samples",
    "OOV_ID",
    "PAD_ID",
    "FeatureVocabs",
    "Vocab",
    "VocabField",
    "build_vocab",
]
