"""
Define-by-run tape bookkeeping.

Every differentiable primitive that consumes a tracked tensor records a
TapeNode. Nodes reference their inputs, so the tape for one forward pass is
the DAG reachable from its outputs; it is rebuilt on every pass and dropped
with the tensors that own it.
"""

import itertools
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, Optional, Tuple

_grad_enabled: ContextVar[bool] = ContextVar("ridnet_grad_enabled", default=True)
_sequence = itertools.count()


@dataclass(eq=False)
class TapeNode:
    """One recorded operation: its inputs and the rule mapping output grads to input grads."""

    op: str
    inputs: Tuple[Any, ...]
    vjp: Callable[[Any], Tuple[Optional[Any], ...]]
    saved: Dict[str, Any] = field(default_factory=dict)
    seq: int = field(default_factory=lambda: next(_sequence))

    def __repr__(self) -> str:
        return f"TapeNode(op={self.op}, seq={self.seq}, inputs={len(self.inputs)})"


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the block."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


@contextmanager
def enable_grad() -> Iterator[None]:
    """Re-enable tape recording inside the block (used for higher-order grads)."""
    token = _grad_enabled.set(True)
    try:
        yield
    finally:
        _grad_enabled.reset(token)
