"""
Central-difference gradient checking for tracked scalar functions.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .backward import grad
from .tape import no_grad
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class GradCheckResult:
    """Outcome of one gradient check."""

    max_relative_error: float
    worst_input: int = -1
    worst_coordinate: Tuple[int, ...] = ()
    checked: int = 0
    kinks: int = 0
    failure: Optional[str] = None

    def passed(self, tolerance: float) -> bool:
        return self.failure is None and self.max_relative_error < tolerance

    def __float__(self) -> float:
        return float(self.max_relative_error)


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _coordinates(size: int, max_coords: Optional[int], rng: np.random.Generator) -> np.ndarray:
    if max_coords is None or max_coords >= size:
        return np.arange(size)
    return np.sort(rng.choice(size, size=max_coords, replace=False))


def _evaluate(f: Callable[..., Tensor], args: List[Tensor]) -> float:
    with no_grad():
        return f(*args).item()


def _one_sided_error(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    i: int,
    base: np.ndarray,
    coord: Tuple[int, ...],
    analytic: float,
    step: float,
    floor: float,
) -> float:
    args = list(inputs)
    args[i] = Tensor(base)
    center = _evaluate(f, args)
    best = np.inf
    for sign in (1.0, -1.0):
        shifted = base.copy()
        shifted[coord] += sign * step
        args[i] = Tensor(shifted)
        numeric = sign * (_evaluate(f, args) - center) / step
        best = min(best, relative_error(analytic, numeric, floor))
    return best


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    epsilon: float = 1e-4,
    max_coords: Optional[int] = None,
    seed: int = 0,
    floor: float = 1e-8,
    kink_tolerance: Optional[float] = None,
) -> GradCheckResult:
    """
    Compare backward() against central differences coordinate by coordinate.

    Args:
        f: Function of the inputs returning a scalar tracked tensor
        inputs: Leaf tensors with requires_grad=True
        epsilon: Finite-difference step
        max_coords: Per-input cap on checked coordinates (sampled with `seed`)
        seed: Seed for coordinate sampling
        floor: Lower bound on the relative-error denominator
        kink_tolerance: When set, a coordinate whose central difference misses
            this tolerance is re-checked with one-sided differences of step
            epsilon / 100; a match on either side counts as a relu kink
            straddled by the central stencil and is tallied in `kinks`

    Returns:
        GradCheckResult with the maximum relative error
        |a - n| / max(|a|, |n|, floor) and the coordinate where it occurred
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    for i, t in enumerate(inputs):
        if not (t.is_leaf and t.requires_grad):
            raise ValueError(f"input {i} must be a leaf tensor with requires_grad=True")
        if not np.all(np.isfinite(t.data)):
            raise ValueError(f"input {i} contains non-finite values")

    loss = f(*inputs)
    if not np.isfinite(loss.item()):
        return GradCheckResult(np.inf, failure="non-finite loss at the unperturbed inputs")
    analytic = [g.data for g in grad(loss, inputs)]

    rng = np.random.default_rng(seed)
    result = GradCheckResult(0.0)
    for i, t in enumerate(inputs):
        base = np.array(t.data, dtype=t.dtype)
        for flat in _coordinates(t.size, max_coords, rng):
            coord = tuple(int(c) for c in np.unravel_index(flat, t.shape))
            values = []
            for step in (epsilon, -epsilon):
                shifted = base.copy()
                shifted[coord] += step
                args = list(inputs)
                args[i] = Tensor(shifted)
                values.append(_evaluate(f, args))
            a = float(analytic[i][coord])
            if not (np.isfinite(values[0]) and np.isfinite(values[1]) and np.isfinite(a)):
                result.failure = f"non-finite value at input {i} coordinate {coord}"
                result.max_relative_error = np.inf
                result.worst_input, result.worst_coordinate = i, coord
                return result
            numeric = (values[0] - values[1]) / (2.0 * epsilon)
            err = relative_error(a, numeric, floor)
            if kink_tolerance is not None and err >= kink_tolerance:
                one_sided = _one_sided_error(f, inputs, i, base, coord, a, epsilon * 1e-2, floor)
                if one_sided < kink_tolerance:
                    result.kinks += 1
                    err = one_sided
            result.checked += 1
            if err > result.max_relative_error:
                result.max_relative_error = err
                result.worst_input, result.worst_coordinate = i, coord
    logger.debug(
        "grad_check: %d coordinates, max relative error %.3e at input %d %s",
        result.checked,
        result.max_relative_error,
        result.worst_input,
        result.worst_coordinate,
    )
    return result
