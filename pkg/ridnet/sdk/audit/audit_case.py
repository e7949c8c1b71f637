from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import GradCheckResult, Tensor, grad_check
from ..autodiff.tensor import tsum
from ..model.parameters import make_rng
from ..models.canonical_types import AuditScope

AuditTarget = Tuple[Callable[..., Tensor], List[Tensor]]


@dataclass
class AuditResult:
    scope: AuditScope
    name: str
    check: GradCheckResult
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.check.passed(self.tolerance)


class AuditCase(ABC):
    """
    Abstract base class for gradient audits.

    A case builds a scalar function and the leaf tensors it depends on;
    run() compares backward() with central differences in float64.
    """

    scope: AuditScope = AuditScope.OPS
    name: str = ""
    tolerance: float = 1e-5
    max_coords: Optional[int] = None

    def __init__(self, seed: int = 0, epsilon: float = 1e-4):
        self.seed = seed
        self.epsilon = epsilon
        self.rng = make_rng(seed)

    def leaf(self, values, name: Optional[str] = None) -> Tensor:
        return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True, name=name)

    def away_from_zero(self, shape: Sequence[int], margin: float = 0.1, scale: float = 1.0) -> np.ndarray:
        """Uniform values in +-[margin, margin + scale], clear of relu kinks at zero."""
        x = self.rng.uniform(-scale, scale, size=tuple(shape))
        return np.sign(x) * (np.abs(x) + margin) + (x == 0) * margin

    def weighted_sum(self, out: Tensor) -> Tensor:
        """Reduce an output to a scalar with fixed random weights so every output entry matters."""
        weights = make_rng(self.seed + 7919).normal(size=out.shape)
        return tsum(out * Tensor(weights, dtype=out.dtype))

    @abstractmethod
    def build(self) -> AuditTarget:
        """
        Return (f, inputs): f(*inputs) is a scalar tracked tensor.
        """
        raise NotImplementedError

    def run(self) -> AuditResult:
        f, inputs = self.build()
        check = grad_check(
            f,
            inputs,
            epsilon=self.epsilon,
            max_coords=self.max_coords,
            seed=self.seed,
            floor=1e-6,
            kink_tolerance=self.tolerance,
        )
        return AuditResult(scope=self.scope, name=self.name or type(self).__name__, check=check, tolerance=self.tolerance)
