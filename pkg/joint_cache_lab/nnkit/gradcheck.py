"""
Central-difference gradient verification.

Numeric gradients use the fourth-order central stencil
(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h, whose error on float64
losses stays near 1e-11, so coordinates with gradients around 1e-6 can
still be checked at a 1e-4 relative tolerance.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, Optional

import numpy as np

from joint_cache_lab.nnkit.params import ParamStore
from joint_cache_lab.nnkit.tape import Node, Tape, backward

logger = logging.getLogger(__name__)

ForwardFn = Callable[[Tape, ParamStore, Any], Node]

# Gradients below this are compared in absolute terms.
DEFAULT_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    max_rel_error: float = 0.0
    worst: str = ""
    per_param: Dict[str, float] = field(default_factory=dict)
    coordinates: int = 0


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def numeric_derivative(loss_at: Callable[[], float], flat: np.ndarray, index: int, eps: float) -> float:
    original = flat[index]
    values = []
    for offset in (2.0, 1.0, -1.0, -2.0):
        flat[index] = original + offset * eps
        values.append(loss_at())
    flat[index] = original
    plus2, plus1, minus1, minus2 = values
    return (-plus2 + 8.0 * plus1 - 8.0 * minus1 + minus2) / (12.0 * eps)


def grad_check_report(
    forward_fn: ForwardFn,
    params: ParamStore,
    inputs: Any,
    eps: float = 1e-4,
    coords_per_param: int = 50,
    seed: int = 0,
    names: Optional[Iterable[str]] = None,
    floor: float = DEFAULT_FLOOR,
) -> GradCheckReport:
    """
    Compare analytic gradients with central differences.

    Parameters with more than `coords_per_param` entries are checked on a
    seeded random subset of coordinates. Run on a float64 store.

    Args:
        eps: Stencil step
        floor: Denominator floor of the per-coordinate relative error
    """
    if params.dtype != np.float64:
        logger.warning(f"grad_check on {params.dtype} parameters; results will be noisy")
    tape = Tape()
    loss = forward_fn(tape, params, inputs)
    backward(tape, loss)
    analytic = {name: grad.copy() for name, grad in params.grads.items()}

    def loss_at() -> float:
        return float(forward_fn(Tape(), params, inputs).value)

    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    for name in names if names is not None else list(params.params):
        flat = params.params[name].reshape(-1)
        if flat.size > coords_per_param:
            coords = rng.choice(flat.size, size=coords_per_param, replace=False)
        else:
            coords = np.arange(flat.size)
        expected = analytic[name].reshape(-1)
        worst = 0.0
        for index in coords:
            numeric = numeric_derivative(loss_at, flat, int(index), eps)
            worst = max(worst, relative_error(float(expected[index]), numeric, floor))
        report.per_param[name] = worst
        report.coordinates += len(coords)
        if worst >= report.max_rel_error:
            report.max_rel_error, report.worst = worst, name
    logger.debug(
        f"grad_check: max rel error {report.max_rel_error:.3e} at {report.worst} "
        f"over {report.coordinates} coordinates"
    )
    return report


def grad_check(
    forward_fn: ForwardFn,
    params: ParamStore,
    inputs: Any,
    eps: float = 1e-4,
    coords_per_param: int = 50,
    seed: int = 0,
) -> float:
    """Maximum relative error over all checked coordinates."""
    return grad_check_report(forward_fn, params, inputs, eps, coords_per_param, seed).max_rel_error
