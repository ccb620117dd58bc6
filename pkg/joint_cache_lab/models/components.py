"""
Shared building blocks: model dimensions, batches, encoders and heads.
"""

import json
from dataclasses import asdict, dataclass
from typing import Dict, List, Sequence

import numpy as np

from joint_cache_lab.errors import AlignmentError
from joint_cache_lab.features import CONTEXT_DIM, PrefetchSample, ReplacementSample
from joint_cache_lab.nnkit import (
    Node,
    ParamStore,
    Tape,
    concat,
    dense,
    embedding,
    init_lstm,
    last_step,
    lstm_param_names,
    lstm_stack,
    tanh,
)

LSTM_LAYERS = 2


@dataclass(frozen=True)
class ModelDims:
    pc_vocab: int
    page_vocab: int
    blocks_per_page: int = 64
    context_dim: int = CONTEXT_DIM
    embed_dim: int = 32
    hidden_dim: int = 64
    shared_dim: int = 32
    projection_dim: int = 32
    history_length: int = 16

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelDims":
        return cls(**json.loads(text))


# ==============================================================================
# Batches
# ==============================================================================


@dataclass
class ReplacementBatch:
    pc_history: np.ndarray
    context: np.ndarray
    labels: np.ndarray
    event_index: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class PrefetchBatch:
    pc_history: np.ndarray
    page_history: np.ndarray
    offset_history: np.ndarray
    target_page: np.ndarray
    target_offset: np.ndarray
    has_target: np.ndarray
    event_index: np.ndarray

    def __len__(self) -> int:
        return len(self.event_index)


def collate_replacement(samples: Sequence[ReplacementSample]) -> ReplacementBatch:
    return ReplacementBatch(
        pc_history=np.stack([s.pc_history for s in samples]).astype(np.int64),
        context=np.stack([s.context for s in samples]).astype(np.float64),
        labels=np.array([s.label for s in samples], dtype=np.float64),
        event_index=np.array([s.event_index for s in samples], dtype=np.int64),
    )


def collate_prefetch(samples: Sequence[PrefetchSample]) -> PrefetchBatch:
    return PrefetchBatch(
        pc_history=np.stack([s.pc_history for s in samples]).astype(np.int64),
        page_history=np.stack([s.page_history for s in samples]).astype(np.int64),
        offset_history=np.stack([s.offset_history for s in samples]).astype(np.int64),
        target_page=np.array([s.target_page for s in samples], dtype=np.int64),
        target_offset=np.array([s.target_offset for s in samples], dtype=np.int64),
        has_target=np.array([s.has_target for s in samples], dtype=bool),
        event_index=np.array([s.event_index for s in samples], dtype=np.int64),
    )


def check_aligned(rbatch: ReplacementBatch, pbatch: PrefetchBatch) -> None:
    if len(rbatch) != len(pbatch) or np.any(rbatch.event_index != pbatch.event_index):
        raise AlignmentError("replacement and prefetch views do not cover the same events")


# ==============================================================================
# Parameter initialisation
# ==============================================================================


def init_embedding(store: ParamStore, name: str, rows: int, dim: int, rng: np.random.Generator) -> None:
    store.add(name, rng.normal(0.0, 0.1, size=(rows, dim)))


def init_dense(
    store: ParamStore, prefix: str, fan_in: int, fan_out: int, rng: np.random.Generator,
    scale: float = 0.0,
) -> None:
    """Uniform(+-scale) weights (default 1/sqrt(fan_in)) and zero bias."""
    limit = scale or 1.0 / np.sqrt(fan_in)
    store.add(f"{prefix}.w", rng.uniform(-limit, limit, size=(fan_in, fan_out)))
    store.add(f"{prefix}.b", np.zeros(fan_out))


def dense_names(prefix: str) -> List[str]:
    return [f"{prefix}.w", f"{prefix}.b"]


def apply_dense(tape: Tape, store: ParamStore, prefix: str, x: Node) -> Node:
    return dense(tape, x, tape.param(store, f"{prefix}.w"), tape.param(store, f"{prefix}.b"))


# ==============================================================================
# Encoders
# ==============================================================================


class CacheEncoder:
    """PC-history embedding -> 2-layer LSTM, joined with a tanh context projection."""

    def __init__(self, dims: ModelDims, prefix: str):
        self.dims = dims
        self.prefix = prefix

    @property
    def out_dim(self) -> int:
        return self.dims.hidden_dim + self.dims.embed_dim

    def init(self, store: ParamStore, rng: np.random.Generator) -> None:
        d = self.dims
        init_embedding(store, f"{self.prefix}.pc_embed", d.pc_vocab, d.embed_dim, rng)
        init_dense(store, f"{self.prefix}.ctx", d.context_dim, d.embed_dim, rng, scale=0.1)
        init_lstm(store, f"{self.prefix}.lstm", d.embed_dim, d.hidden_dim, rng, LSTM_LAYERS)

    def names(self) -> List[str]:
        names = [f"{self.prefix}.pc_embed"] + dense_names(f"{self.prefix}.ctx")
        for layer in range(LSTM_LAYERS):
            names.extend(lstm_param_names(f"{self.prefix}.lstm", layer))
        return names

    def __call__(self, tape: Tape, store: ParamStore, batch: ReplacementBatch) -> Node:
        steps = embedding(tape, tape.param(store, f"{self.prefix}.pc_embed"), batch.pc_history)
        sequence = lstm_stack(tape, store, f"{self.prefix}.lstm", steps, LSTM_LAYERS)
        context = tape.constant(batch.context.astype(store.dtype))
        projected = tanh(tape, apply_dense(tape, store, f"{self.prefix}.ctx", context))
        return concat(tape, [last_step(tape, sequence), projected])


class PrefetchEncoder:
    """PC, page and offset embeddings per step -> 2-layer LSTM; final hidden state."""

    def __init__(self, dims: ModelDims, prefix: str):
        self.dims = dims
        self.prefix = prefix

    @property
    def out_dim(self) -> int:
        return self.dims.hidden_dim

    def init(self, store: ParamStore, rng: np.random.Generator) -> None:
        d = self.dims
        init_embedding(store, f"{self.prefix}.pc_embed", d.pc_vocab, d.embed_dim, rng)
        init_embedding(store, f"{self.prefix}.page_embed", d.page_vocab, d.embed_dim, rng)
        init_embedding(store, f"{self.prefix}.offset_embed", d.blocks_per_page + 1, d.embed_dim, rng)
        init_lstm(store, f"{self.prefix}.lstm", 3 * d.embed_dim, d.hidden_dim, rng, LSTM_LAYERS)

    def names(self) -> List[str]:
        names = [f"{self.prefix}.{t}_embed" for t in ("pc", "page", "offset")]
        for layer in range(LSTM_LAYERS):
            names.extend(lstm_param_names(f"{self.prefix}.lstm", layer))
        return names

    def __call__(self, tape: Tape, store: ParamStore, batch: PrefetchBatch) -> Node:
        steps = concat(tape, [
            embedding(tape, tape.param(store, f"{self.prefix}.pc_embed"), batch.pc_history),
            embedding(tape, tape.param(store, f"{self.prefix}.page_embed"), batch.page_history),
            embedding(tape, tape.param(store, f"{self.prefix}.offset_embed"), batch.offset_history),
        ])
        sequence = lstm_stack(tape, store, f"{self.prefix}.lstm", steps, LSTM_LAYERS)
        return last_step(tape, sequence)


# ==============================================================================
# Heads
# ==============================================================================


class ReplacementHead:
    """Dense -> one logit; sigmoid gives P(cache-friendly)."""

    def __init__(self, prefix: str, in_dim: int):
        self.prefix = prefix
        self.in_dim = in_dim

    def init(self, store: ParamStore, rng: np.random.Generator) -> None:
        init_dense(store, self.prefix, self.in_dim, 1, rng)

    def names(self) -> List[str]:
        return dense_names(self.prefix)

    @property
    def bias_name(self) -> str:
        return f"{self.prefix}.b"

    def __call__(self, tape: Tape, store: ParamStore, x: Node) -> Node:
        return apply_dense(tape, store, self.prefix, x)


class PrefetchHeads:
    """Page logits over the page vocabulary and offset logits over blocks_per_page."""

    def __init__(self, prefix: str, in_dim: int, dims: ModelDims):
        self.prefix = prefix
        self.in_dim = in_dim
        self.dims = dims

    def init(self, store: ParamStore, rng: np.random.Generator) -> None:
        init_dense(store, f"{self.prefix}.page", self.in_dim, self.dims.page_vocab, rng)
        init_dense(store, f"{self.prefix}.offset", self.in_dim, self.dims.blocks_per_page, rng)

    def names(self) -> List[str]:
        return dense_names(f"{self.prefix}.page") + dense_names(f"{self.prefix}.offset")

    def __call__(self, tape: Tape, store: ParamStore, x: Node):
        return (
            apply_dense(tape, store, f"{self.prefix}.page", x),
            apply_dense(tape, store, f"{self.prefix}.offset", x),
        )


def zero_params(store: ParamStore, names: Sequence[str]) -> None:
    for name in names:
        store.params[name].fill(0.0)


def grad_norms(store: ParamStore, names: Sequence[str]) -> Dict[str, float]:
    return {name: float(np.abs(store.grads[name]).sum()) for name in names}
