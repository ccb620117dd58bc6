"""
Token vocabularies for PCs and pages.

Ids are dense: 0 is padding, 1 is out-of-vocabulary, real values start at 2
in first-appearance order.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence

from joint_cache_lab.cachesim import CacheEvent
from joint_cache_lab.errors import ConfigError
from joint_cache_lab.trace import BlockGeometry, page_and_offset

logger = logging.getLogger(__name__)

PAD_ID = 0
OOV_ID = 1


class VocabField(Enum):
    PC = "pc"
    PAGE = "page"


@dataclass
class Vocab:
    vocab_field: VocabField
    forward: Dict[int, int] = field(default_factory=dict)
    reverse: List[Optional[int]] = field(default_factory=lambda: [None, None])
    pad_token_id: int = PAD_ID
    oov_token_id: int = OOV_ID

    @property
    def size(self) -> int:
        return len(self.reverse)

    def lookup(self, value: int) -> int:
        return self.forward.get(value, self.oov_token_id)

    def lookup_many(self, values: Iterable[int]) -> List[int]:
        return [self.forward.get(v, self.oov_token_id) for v in values]

    def to_dict(self) -> Dict[str, Any]:
        return {"field": self.vocab_field.value, "values": self.reverse[2:]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Vocab":
        return cls.from_values(VocabField(data["field"]), data["values"])

    @classmethod
    def from_values(cls, vocab_field: VocabField, values: Sequence[int]) -> "Vocab":
        vocab = cls(vocab_field=vocab_field)
        for value in values:
            if value not in vocab.forward:
                vocab.forward[value] = len(vocab.reverse)
                vocab.reverse.append(value)
        return vocab


@dataclass
class FeatureVocabs:
    pc: Vocab
    page: Vocab

    def to_dict(self) -> Dict[str, Any]:
        return {"pc": self.pc.to_dict(), "page": self.page.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FeatureVocabs":
        return cls(pc=Vocab.from_dict(data["pc"]), page=Vocab.from_dict(data["page"]))


def build_vocab(
    events: Sequence[CacheEvent],
    vocab_field: VocabField,
    geometry: BlockGeometry = BlockGeometry(),
    min_count: int = 1,
) -> Vocab:
    """
    Build a vocabulary from the demand events of the training split.

    Args:
        events: Training-split event log (prefetch fills are skipped)
        vocab_field: Which value to tokenize
        geometry: Needed to derive pages from blocks
        min_count: Values seen fewer times map to OOV

    Raises:
        ConfigError: No demand events to build from
    """
    if vocab_field is VocabField.PC:
        values = [e.pc for e in events if e.is_demand]
    else:
        values = [page_and_offset(e.block, geometry)[0] for e in events if e.is_demand]
    if not values:
        raise ConfigError(f"cannot build {vocab_field.value} vocab from an empty event list")
    counts = Counter(values)
    vocab = Vocab.from_values(vocab_field, [v for v in values if counts[v] >= min_count])
    logger.debug(
        f"Built {vocab_field.value} vocab: {vocab.size} ids from {len(counts)} distinct values"
    )
    return vocab
