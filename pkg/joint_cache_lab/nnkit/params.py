"""
Named parameter storage with gradient and Adam moment buffers.
"""

from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from joint_cache_lab.errors import ShapeError


class ParamStore:
    """
    Ordered map of parameter name -> array, with one gradient buffer per
    parameter and optional Adam state.

    Example:
        store = ParamStore()
        store.add("head.w", np.zeros((4, 1)))
        store.zero_grad()
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self.grads: Dict[str, np.ndarray] = {}
        self.adam_m: Dict[str, np.ndarray] = {}
        self.adam_v: Dict[str, np.ndarray] = {}
        self.steps: Dict[str, int] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        array = np.array(value, dtype=self.dtype)
        self.params[name] = array
        self.grads[name] = np.zeros_like(array)
        return array

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        current = self.params[name]
        if np.shape(value) != current.shape:
            raise ShapeError(f"{name}: expected shape {current.shape}, got {np.shape(value)}")
        current[...] = value

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def names(self, prefix: str = "") -> List[str]:
        return [n for n in self.params if n.startswith(prefix)]

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.params.items())

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self) -> None:
        for grad in self.grads.values():
            grad.fill(0.0)

    def astype(self, dtype) -> "ParamStore":
        """Deep copy converted to `dtype` (moments and step counts included)."""
        other = ParamStore(dtype)
        for name, value in self.params.items():
            other.add(name, value)
        other.adam_m = {k: v.astype(dtype) for k, v in self.adam_m.items()}
        other.adam_v = {k: v.astype(dtype) for k, v in self.adam_v.items()}
        other.steps = dict(self.steps)
        return other

    def copy(self) -> "ParamStore":
        return self.astype(self.dtype)

    def subset(self, prefix: str, strip: bool = False) -> "ParamStore":
        """Copy of the parameters whose names start with `prefix`."""
        other = ParamStore(self.dtype)
        for name in self.names(prefix):
            key = name[len(prefix):] if strip else name
            other.add(key, self.params[name])
            if name in self.adam_m:
                other.adam_m[key] = self.adam_m[name].copy()
                other.adam_v[key] = self.adam_v[name].copy()
                other.steps[key] = self.steps[name]
        return other

    def snapshot(self, names: Optional[List[str]] = None) -> Dict[str, bytes]:
        """Raw bytes of the selected parameters, for exact comparisons."""
        return {n: self.params[n].tobytes() for n in (names or list(self.params))}
