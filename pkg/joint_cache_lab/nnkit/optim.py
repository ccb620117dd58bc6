"""
Adam with bias correction; moments and step counts live in the ParamStore.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, Optional

import numpy as np

from joint_cache_lab.nnkit.params import ParamStore


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(
    params: ParamStore,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    t: Optional[int] = None,
    names: Optional[Iterable[str]] = None,
    lr_scales: Optional[Dict[str, float]] = None,
) -> None:
    """
    Update parameters in place from their gradient buffers.

    Args:
        params: Store holding values, gradients and moments
        lr, beta1, beta2, eps: Adam hyperparameters
        t: Step number for bias correction; defaults to each parameter's own
            counter (incremented here), so frozen parameters keep their count
        names: Parameters to update (default: all)
        lr_scales: Optional per-parameter learning-rate multipliers
    """
    for name in names if names is not None else list(params.params):
        value = params.params[name]
        grad = params.grads[name]
        if name not in params.adam_m:
            params.adam_m[name] = np.zeros_like(value)
            params.adam_v[name] = np.zeros_like(value)
            params.steps[name] = 0
        step = params.steps[name] + 1 if t is None else t
        params.steps[name] = step
        m = params.adam_m[name]
        v = params.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1 ** step)
        v_hat = v / (1.0 - beta2 ** step)
        scale = lr * (lr_scales.get(name, 1.0) if lr_scales else 1.0)
        value -= (scale * m_hat / (np.sqrt(v_hat) + eps)).astype(value.dtype)


def adam_step_with(params: ParamStore, config: AdamConfig, **kwargs) -> None:
    adam_step(params, config.lr, config.beta1, config.beta2, config.eps, **kwargs)
