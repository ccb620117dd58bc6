"""
Reverse-mode differentiation over a recorded sequence of ops.

Each op computes its output eagerly and records a closure that pushes the
output gradient into its inputs. `backward` replays the closures in
reverse and adds parameter gradients into their ParamStore.
"""

from typing import Callable, Dict, List, Tuple

import numpy as np

from joint_cache_lab.errors import ShapeError
from joint_cache_lab.nnkit.params import ParamStore


class Node:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.value.dtype, copy=True)
        else:
            self.grad += grad


class Tape:
    def __init__(self):
        self._ops: List[Tuple[Node, Callable[[np.ndarray], None]]] = []
        self._params: Dict[Tuple[int, str], Tuple[Node, ParamStore, str]] = {}

    def param(self, store: ParamStore, name: str) -> Node:
        """Leaf node bound to a stored parameter; reused within one tape."""
        key = (id(store), name)
        if key not in self._params:
            self._params[key] = (Node(store[name]), store, name)
        return self._params[key][0]

    def constant(self, value: np.ndarray) -> Node:
        return Node(np.asarray(value))

    def record(self, out: Node, backward_fn: Callable[[np.ndarray], None]) -> Node:
        self._ops.append((out, backward_fn))
        return out

    def __len__(self) -> int:
        return len(self._ops)


def backward(tape: Tape, loss: Node, zero_grad: bool = True) -> None:
    """
    Populate parameter gradients for a scalar loss.

    Parameters bound on the tape but off the loss path end with gradient 0.
    With zero_grad=False gradients add onto existing buffers.
    """
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    stores = {id(store): store for _, store, _ in tape._params.values()}
    if zero_grad:
        for store in stores.values():
            store.zero_grad()
    loss.grad = np.ones_like(loss.value)
    for out, fn in reversed(tape._ops):
        if out.grad is not None:
            fn(out.grad)
    for node, store, name in tape._params.values():
        if node.grad is not None:
            store.grads[name] += node.grad
