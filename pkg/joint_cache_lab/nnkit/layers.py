"""
Differentiable layer ops: embedding, dense, tanh, concat and a stacked LSTM.

The LSTM packs its four gates into one projection per layer, in the order
input, forget, output, candidate:

    z = x @ Wx + h_prev @ Wh + b
    i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
    c = f * c_prev + i * g;  h = o * tanh(c)
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from joint_cache_lab.errors import BoundsError, ShapeError
from joint_cache_lab.nnkit.params import ParamStore
from joint_cache_lab.nnkit.tape import Node, Tape


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    ex = np.exp(x[~positive])
    out[~positive] = ex / (1.0 + ex)
    return out


# ==============================================================================
# Elementary ops
# ==============================================================================


def embedding(tape: Tape, table: Node, ids: np.ndarray) -> Node:
    """Row lookup; output shape ids.shape + (D,)."""
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.value.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = int(ids.max()) if ids.max() >= vocab else int(ids.min())
        raise BoundsError(f"token id {bad} outside embedding table of size {vocab}")
    out = Node(table.value[ids])

    def back(grad: np.ndarray) -> None:
        dtable = np.zeros_like(table.value)
        np.add.at(dtable, ids.reshape(-1), grad.reshape(-1, table.value.shape[1]))
        table.accumulate(dtable)

    return tape.record(out, back)


def dense(tape: Tape, x: Node, weight: Node, bias: Node) -> Node:
    """x @ W + b over the last axis."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"dense input dim {x.shape[-1]} != weight rows {weight.shape[0]}")
    out = Node(x.value @ weight.value + bias.value)

    def back(grad: np.ndarray) -> None:
        flat_x = x.value.reshape(-1, weight.shape[0])
        flat_g = grad.reshape(-1, weight.shape[1])
        weight.accumulate(flat_x.T @ flat_g)
        bias.accumulate(flat_g.sum(axis=0))
        x.accumulate(grad @ weight.value.T)

    return tape.record(out, back)


def tanh(tape: Tape, x: Node) -> Node:
    out = Node(np.tanh(x.value))

    def back(grad: np.ndarray) -> None:
        x.accumulate(grad * (1.0 - out.value * out.value))

    return tape.record(out, back)


def concat(tape: Tape, nodes: Sequence[Node], axis: int = -1) -> Node:
    """Concatenate; the backward pass splits the gradient by coordinate range."""
    out = Node(np.concatenate([n.value for n in nodes], axis=axis))
    bounds = np.cumsum([n.shape[axis] for n in nodes])[:-1]

    def back(grad: np.ndarray) -> None:
        for node, part in zip(nodes, np.split(grad, bounds, axis=axis)):
            node.accumulate(part)

    return tape.record(out, back)


def reshape(tape: Tape, x: Node, shape: Tuple[int, ...]) -> Node:
    out = Node(x.value.reshape(shape))

    def back(grad: np.ndarray) -> None:
        x.accumulate(grad.reshape(x.shape))

    return tape.record(out, back)


def last_step(tape: Tape, sequence: Node) -> Node:
    """(N, T, H) -> (N, H) at t = T-1; zeros for an empty sequence."""
    n, steps, hidden = sequence.shape
    if steps == 0:
        return tape.constant(np.zeros((n, hidden), dtype=sequence.value.dtype))
    out = Node(sequence.value[:, -1, :].copy())

    def back(grad: np.ndarray) -> None:
        full = np.zeros_like(sequence.value)
        full[:, -1, :] = grad
        sequence.accumulate(full)

    return tape.record(out, back)


# ==============================================================================
# LSTM
# ==============================================================================


def lstm_step_forward(x, prev_h, prev_c, wx, wh, b):
    hidden = prev_h.shape[1]
    z = x @ wx + prev_h @ wh + b
    i = sigmoid(z[:, :hidden])
    f = sigmoid(z[:, hidden:2 * hidden])
    o = sigmoid(z[:, 2 * hidden:3 * hidden])
    g = np.tanh(z[:, 3 * hidden:])
    next_c = f * prev_c + i * g
    tanh_c = np.tanh(next_c)
    next_h = o * tanh_c
    cache = (x, prev_h, prev_c, i, f, o, g, tanh_c)
    return next_h, next_c, cache


def lstm_step_backward(dnext_h, dnext_c, cache, wx, wh):
    x, prev_h, prev_c, i, f, o, g, tanh_c = cache
    do = dnext_h * tanh_c
    dc = dnext_c + dnext_h * o * (1.0 - tanh_c * tanh_c)
    di = dc * g
    df = dc * prev_c
    dg = dc * i
    dprev_c = dc * f
    dz = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o), dg * (1.0 - g * g)], axis=1
    )
    dx = dz @ wx.T
    dprev_h = dz @ wh.T
    dwx = x.T @ dz
    dwh = prev_h.T @ dz
    db = dz.sum(axis=0)
    return dx, dprev_h, dprev_c, dwx, dwh, db


def lstm_layer(tape: Tape, x: Node, wx: Node, wh: Node, b: Node) -> Node:
    """One LSTM layer over (N, T, D) with zero initial state; returns (N, T, H)."""
    if x.value.ndim != 3:
        raise ShapeError(f"lstm input must be (N, T, D), got {x.shape}")
    n, steps, dim = x.shape
    hidden = wh.shape[0]
    if wx.shape != (dim, 4 * hidden) or wh.shape != (hidden, 4 * hidden) or b.shape != (4 * hidden,):
        raise ShapeError(
            f"lstm weights {wx.shape}, {wh.shape}, {b.shape} do not fit input dim {dim}"
        )
    dtype = x.value.dtype
    h = np.zeros((n, hidden), dtype=dtype)
    c = np.zeros((n, hidden), dtype=dtype)
    hs = np.zeros((n, steps, hidden), dtype=dtype)
    caches = []
    for t in range(steps):
        h, c, cache = lstm_step_forward(x.value[:, t, :], h, c, wx.value, wh.value, b.value)
        hs[:, t, :] = h
        caches.append(cache)
    out = Node(hs)

    def back(grad: np.ndarray) -> None:
        dx = np.zeros_like(x.value)
        dwx = np.zeros_like(wx.value)
        dwh = np.zeros_like(wh.value)
        db = np.zeros_like(b.value)
        dh_next = np.zeros((n, hidden), dtype=grad.dtype)
        dc_next = np.zeros((n, hidden), dtype=grad.dtype)
        for t in range(steps - 1, -1, -1):
            dx_t, dh_next, dc_next, dwx_t, dwh_t, db_t = lstm_step_backward(
                grad[:, t, :] + dh_next, dc_next, caches[t], wx.value, wh.value
            )
            dx[:, t, :] = dx_t
            dwx += dwx_t
            dwh += dwh_t
            db += db_t
        x.accumulate(dx)
        wx.accumulate(dwx)
        wh.accumulate(dwh)
        b.accumulate(db)

    return tape.record(out, back)


def lstm_param_names(prefix: str, layer: int) -> Tuple[str, str, str]:
    return f"{prefix}.l{layer}.wx", f"{prefix}.l{layer}.wh", f"{prefix}.l{layer}.b"


def init_lstm(
    store: ParamStore,
    prefix: str,
    input_dim: int,
    hidden: int,
    rng: np.random.Generator,
    layers: int = 2,
) -> None:
    """Uniform(+-1/sqrt(H)) weights, zero biases except forget gate = 1."""
    scale = 1.0 / np.sqrt(hidden)
    dim = input_dim
    for layer in range(layers):
        wx, wh, b = lstm_param_names(prefix, layer)
        store.add(wx, rng.uniform(-scale, scale, size=(dim, 4 * hidden)))
        store.add(wh, rng.uniform(-scale, scale, size=(hidden, 4 * hidden)))
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0
        store.add(b, bias)
        dim = hidden


def lstm_stack(tape: Tape, store: ParamStore, prefix: str, x: Node, layers: int = 2) -> Node:
    """Stacked LSTM; layer l+1 consumes layer l's hidden sequence."""
    out = x
    for layer in range(layers):
        wx, wh, b = (tape.param(store, name) for name in lstm_param_names(prefix, layer))
        out = lstm_layer(tape, out, wx, wh, b)
    return out


@dataclass
class LstmLayerParams:
    """Packed (Wx, Wh, b) per layer; gate order i, f, o, g."""

    layers: List[Tuple[np.ndarray, np.ndarray, np.ndarray]]

    @property
    def hidden_size(self) -> int:
        return self.layers[0][1].shape[0]

    @classmethod
    def zeros(cls, input_dim: int, hidden: int, layers: int = 2, dtype=np.float64) -> "LstmLayerParams":
        stack = []
        dim = input_dim
        for _ in range(layers):
            stack.append((
                np.zeros((dim, 4 * hidden), dtype=dtype),
                np.zeros((hidden, 4 * hidden), dtype=dtype),
                np.zeros(4 * hidden, dtype=dtype),
            ))
            dim = hidden
        return cls(stack)


def lstm_forward(params: LstmLayerParams, inputs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run the stacked LSTM on a (T, D) or (N, T, D) sequence.

    Returns:
        (final hidden state, all top-layer hidden states); an empty sequence
        yields a zero final state
    """
    batched = inputs.ndim == 3
    x = inputs if batched else inputs[None, ...]
    tape = Tape()
    out = tape.constant(x)
    for wx, wh, b in params.layers:
        out = lstm_layer(tape, out, tape.constant(wx), tape.constant(wh), tape.constant(b))
    final = last_step(tape, out).value
    if batched:
        return final, out.value
    return final[0], out.value[0]


def embedding_forward(table: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Row lookup on a plain array: output[t] = table[ids[t]]."""
    tape = Tape()
    return embedding(tape, tape.constant(table), ids).value
