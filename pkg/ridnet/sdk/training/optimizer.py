"""
Adam with exponential learning-rate decay and projection of the fusion
scalars onto [0, 1].
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np

from ..autodiff import Tensor
from ..errors import ShapeError
from ..model.parameters import ParameterSet

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First/second moments and per-parameter update counts."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    steps: Dict[str, int] = field(default_factory=dict)


def decayed_lr(lr0: float, gamma: float, interval: int, step: int) -> float:
    """lr0 * gamma ** floor(step / interval)."""
    if interval <= 0:
        raise ValueError(f"decay interval must be positive, got {interval}")
    return lr0 * gamma ** (step // interval)


def adam_step(
    params: ParameterSet,
    grads: Mapping[str, Tensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    project: Optional[Iterable[str]] = None,
) -> Tuple[ParameterSet, AdamState]:
    """
    One bias-corrected Adam update.

    Parameters whose gradient is identically zero are left untouched along
    with their moments. Names in `project` (default: the fusion scalars) are
    clipped to [0, 1] afterwards.

    Returns:
        (updated parameters, updated state); the inputs are not modified
    """
    m, v, steps = dict(state.m), dict(state.v), dict(state.steps)
    updates: Dict[str, np.ndarray] = {}
    for name, param in params.items():
        g_t = grads.get(name)
        if g_t is None:
            continue
        g = np.asarray(g_t.data if isinstance(g_t, Tensor) else g_t, dtype=np.float64)
        if g.shape != param.shape:
            raise ShapeError(f"gradient for '{name}' has shape {g.shape}, parameter has {param.shape}")
        if name in m and m[name].shape != param.shape:
            raise ShapeError(f"optimizer state for '{name}' has shape {m[name].shape}, parameter has {param.shape}")
        if not np.any(g):
            continue
        t = steps.get(name, 0) + 1
        m_new = beta1 * m.get(name, np.zeros_like(g)) + (1.0 - beta1) * g
        v_new = beta2 * v.get(name, np.zeros_like(g)) + (1.0 - beta2) * g * g
        m_hat = m_new / (1.0 - beta1**t)
        v_hat = v_new / (1.0 - beta2**t)
        updates[name] = param.data.astype(np.float64) - lr * m_hat / (np.sqrt(v_hat) + eps)
        m[name], v[name], steps[name] = m_new, v_new, t
    for name in params.alpha_names() if project is None else project:
        if name in updates:
            updates[name] = np.clip(updates[name], 0.0, 1.0)
    return params.replace(updates), AdamState(m=m, v=v, steps=steps)


class Adam:
    """Stateful wrapper: owns AdamState and the decay schedule for one parameter group."""

    def __init__(
        self,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        gamma: float = 1.0,
        interval: int = 1,
    ):
        self.lr0 = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.gamma, self.interval = gamma, interval
        self.state = AdamState()
        self.step_count = 0

    @property
    def lr(self) -> float:
        return decayed_lr(self.lr0, self.gamma, self.interval, self.step_count)

    def step(self, params: ParameterSet, grads: Mapping[str, Tensor]) -> ParameterSet:
        updated, self.state = adam_step(params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)
        self.step_count += 1
        return updated
