"""
Losses, as plain functions on arrays and as differentiable tape ops.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from joint_cache_lab.errors import BoundsError, ConfigError, NumericDomainError, ShapeError
from joint_cache_lab.nnkit.layers import sigmoid
from joint_cache_lab.nnkit.tape import Node, Tape

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.1
    similarity: str = "cosine"

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.similarity != "cosine":
            raise ConfigError(f"unsupported similarity {self.similarity!r}")


# ==============================================================================
# Array functions
# ==============================================================================


def bce_loss(p: float, y: int) -> float:
    """Binary cross-entropy with p clamped to [1e-7, 1-1e-7]."""
    p = min(max(float(p), PROB_CLAMP), 1.0 - PROB_CLAMP)
    return float(-(y * np.log(p) + (1 - y) * np.log(1.0 - p)))


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax_xent(logits: np.ndarray, target: int) -> float:
    """-log softmax(logits)[target]."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= target < logits.shape[-1]:
        raise BoundsError(f"target {target} outside {logits.shape[-1]} classes")
    return float(-log_softmax(logits)[target])


def _unit(vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(vectors, axis=-1)
    if np.any(norms == 0):
        raise NumericDomainError("cosine similarity of a zero-norm vector")
    return vectors / norms[..., None], norms


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ua, _ = _unit(np.asarray(a, dtype=np.float64))
    ub, _ = _unit(np.asarray(b, dtype=np.float64))
    return np.sum(ua * ub, axis=-1)


def contrastive_loss(
    anchor: np.ndarray,
    positive: np.ndarray,
    negatives: Sequence[np.ndarray],
    cfg: ContrastiveConfig = ContrastiveConfig(),
) -> float:
    """InfoNCE with cosine similarity and temperature cfg.temperature."""
    if len(negatives) == 0:
        raise ShapeError("contrastive loss needs at least one negative")
    candidates = np.stack([positive] + list(negatives)).astype(np.float64)
    sims = cosine_similarity(np.broadcast_to(anchor, candidates.shape), candidates)
    return float(-log_softmax(sims / cfg.temperature)[0])


# ==============================================================================
# Tape ops
# ==============================================================================


def sigmoid_bce(tape: Tape, logits: Node, labels: np.ndarray, pos_weight: float = 1.0) -> Node:
    """Mean BCE over a batch of logits (N,) or (N, 1); positives weighted by pos_weight."""
    z = logits.value.reshape(-1)
    y = np.asarray(labels, dtype=z.dtype).reshape(-1)
    if z.shape != y.shape:
        raise ShapeError(f"{z.shape[0]} logits for {y.shape[0]} labels")
    p = sigmoid(z)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    w = np.where(y > 0.5, pos_weight, 1.0).astype(z.dtype)
    loss = -(w * y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    out = Node(np.array(loss.mean(), dtype=z.dtype))

    def back(grad: np.ndarray) -> None:
        dz = (w * y * (p - 1.0) + (1.0 - y) * p) / len(z)
        logits.accumulate((grad * dz).reshape(logits.shape))

    return tape.record(out, back)


def softmax_xent_op(
    tape: Tape, logits: Node, targets: np.ndarray, mask: Optional[np.ndarray] = None
) -> Node:
    """Mean cross-entropy over rows where mask is true."""
    n, classes = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    active = np.flatnonzero(mask)
    if active.size and (targets[active].min() < 0 or targets[active].max() >= classes):
        raise BoundsError(f"target outside {classes} classes")
    count = max(active.size, 1)
    logp = log_softmax(logits.value)
    value = -logp[active, targets[active]].sum() / count
    out = Node(np.array(value, dtype=logits.value.dtype))

    def back(grad: np.ndarray) -> None:
        d = np.zeros_like(logits.value)
        d[active] = np.exp(logp[active])
        d[active, targets[active]] -= 1.0
        logits.accumulate(grad * d / count)

    return tape.record(out, back)


def info_nce(tape: Tape, anchors: Node, positives: Node, negatives: Node, temperature: float) -> Node:
    """
    Mean InfoNCE loss with cosine similarity.

    Shapes: anchors (N, d), positives (N, d), negatives (N, k, d).
    """
    if negatives.value.ndim != 3 or negatives.shape[1] < 1:
        raise ShapeError(f"negatives must be (N, k>=1, d), got {negatives.shape}")
    ua, na = _unit(anchors.value)
    up, np_ = _unit(positives.value)
    un, nn = _unit(negatives.value)
    cos_pos = np.sum(ua * up, axis=-1)
    cos_neg = np.einsum("nd,nkd->nk", ua, un)
    scores = np.concatenate([cos_pos[:, None], cos_neg], axis=1) / temperature
    logp = log_softmax(scores)
    n = scores.shape[0]
    out = Node(np.array(-logp[:, 0].mean(), dtype=anchors.value.dtype))

    def back(grad: np.ndarray) -> None:
        dscores = np.exp(logp)
        dscores[:, 0] -= 1.0
        dscores *= grad / (n * temperature)
        dpos = dscores[:, 0]
        dneg = dscores[:, 1:]
        da = dpos[:, None] * (up - cos_pos[:, None] * ua)
        da += np.einsum("nk,nkd->nd", dneg, un - cos_neg[:, :, None] * ua[:, None, :])
        anchors.accumulate(da / na[:, None])
        positives.accumulate(dpos[:, None] * (ua - cos_pos[:, None] * up) / np_[:, None])
        negatives.accumulate(
            dneg[:, :, None] * (ua[:, None, :] - cos_neg[:, :, None] * un) / nn[:, :, None]
        )

    return tape.record(out, back)


def weighted_sum(tape: Tape, terms: Sequence[Tuple[Node, float]]) -> Node:
    """Scalar sum of weight * loss."""
    dtype = terms[0][0].value.dtype
    out = Node(np.array(sum(w * float(node.value) for node, w in terms), dtype=dtype))

    def back(grad: np.ndarray) -> None:
        for node, w in terms:
            node.accumulate(grad * w)

    return tape.record(out, back)
