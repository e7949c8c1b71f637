"""
Dense tensors and the primitive differentiable operation set.

Backward rules are written with the same primitives they differentiate, so
running a backward pass with recording enabled yields a differentiable
gradient (needed by the critic's gradient penalty).
"""

from functools import reduce
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ShapeError
from .tape import TapeNode, is_grad_enabled

DEFAULT_DTYPE = np.float64

Scalar = Union[int, float]
VJP = Callable[["Tensor"], Tuple[Optional["Tensor"], ...]]


class Tensor:
    """
    Immutable dense array with optional differentiation tracking.

    Row-major, channels-first. The underlying ndarray is marked read-only.
    """

    __array_ufunc__ = None  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.array(data, dtype=dtype, copy=True)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        arr.setflags(write=False)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.node: Optional[TapeNode] = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        out.data = arr
        out.requires_grad = False
        out.node = None
        out.name = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # arithmetic
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: Scalar):
        return power(self, exponent)

    def __getitem__(self, key):
        return take(self, key)

    # reductions and views
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def sqrt(self) -> "Tensor":
        return sqrt(self)


def as_tensor(value, like: Optional[Tensor] = None) -> Tensor:
    """Wrap constants as untracked tensors, matching the dtype of `like`."""
    if isinstance(value, Tensor):
        return value
    if like is not None:
        return Tensor._wrap(np.asarray(value, dtype=like.dtype))
    arr = np.asarray(value)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(DEFAULT_DTYPE)
    return Tensor._wrap(arr)


def attach_op(out: Tensor, inputs: Sequence[Tensor], op: str, vjp: VJP, **saved) -> Tensor:
    """
    Record `out` as the result of `op` applied to `inputs`.

    Recording only happens when grad mode is on and some input is tracked.
    The vjp receives the output gradient and returns one gradient (or None)
    per input.
    """
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = TapeNode(op=op, inputs=tuple(inputs), vjp=vjp, saved=saved)
    return out


def _operands(a, b) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def add(a, b) -> Tensor:
    a, b = _operands(a, b)
    out = Tensor._wrap(a.data + b.data)

    def vjp(g):
        return (
            sum_to(g, a.shape) if a.requires_grad else None,
            sum_to(g, b.shape) if b.requires_grad else None,
        )

    return attach_op(out, (a, b), "add", vjp)


def sub(a, b) -> Tensor:
    a, b = _operands(a, b)
    out = Tensor._wrap(a.data - b.data)

    def vjp(g):
        return (
            sum_to(g, a.shape) if a.requires_grad else None,
            sum_to(neg(g), b.shape) if b.requires_grad else None,
        )

    return attach_op(out, (a, b), "sub", vjp)


def mul(a, b) -> Tensor:
    a, b = _operands(a, b)
    out = Tensor._wrap(a.data * b.data)

    def vjp(g):
        return (
            sum_to(mul(g, b), a.shape) if a.requires_grad else None,
            sum_to(mul(g, a), b.shape) if b.requires_grad else None,
        )

    return attach_op(out, (a, b), "mul", vjp)


def div(a, b) -> Tensor:
    a, b = _operands(a, b)
    out = Tensor._wrap(a.data / b.data)

    def vjp(g):
        return (
            sum_to(div(g, b), a.shape) if a.requires_grad else None,
            sum_to(neg(div(mul(g, out), b)), b.shape) if b.requires_grad else None,
        )

    return attach_op(out, (a, b), "div", vjp)


def neg(a: Tensor) -> Tensor:
    out = Tensor._wrap(-a.data)
    return attach_op(out, (a,), "neg", lambda g: (neg(g),))


def power(a: Tensor, exponent: Scalar) -> Tensor:
    exponent = float(exponent)
    out = Tensor._wrap(a.data ** exponent)

    def vjp(g):
        if exponent == 1.0:
            return (g,)
        return (mul(g, mul(power(a, exponent - 1.0), exponent)),)

    return attach_op(out, (a,), "pow", vjp, exponent=exponent)


def exp(a: Tensor) -> Tensor:
    out = Tensor._wrap(np.exp(a.data))
    return attach_op(out, (a,), "exp", lambda g: (mul(g, out),))


def log(a: Tensor) -> Tensor:
    out = Tensor._wrap(np.log(a.data))
    return attach_op(out, (a,), "log", lambda g: (div(g, a),))


def sqrt(a: Tensor) -> Tensor:
    out = Tensor._wrap(np.sqrt(a.data))
    return attach_op(out, (a,), "sqrt", lambda g: (div(g, mul(out, 2.0)),))


def clamp(a: Tensor, lower: float, upper: float) -> Tensor:
    """
    Clip to [lower, upper]; the gradient passes where lower <= a <= upper.

    Bounds are inclusive so a parameter sitting exactly on a bound still
    receives gradient.
    """
    out = Tensor._wrap(np.clip(a.data, lower, upper))
    mask = as_tensor(((a.data >= lower) & (a.data <= upper)).astype(a.dtype))
    return attach_op(out, (a,), "clamp", lambda g: (mul(g, mask),))


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor._wrap(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)))
    if axis is None:
        kept_shape = (1,) * a.ndim
    else:
        axes = {ax % a.ndim for ax in ((axis,) if isinstance(axis, int) else axis)}
        kept_shape = tuple(1 if i in axes else extent for i, extent in enumerate(a.shape))

    def vjp(g):
        return (broadcast_to(reshape(g, kept_shape), a.shape),)

    return attach_op(out, (a,), "sum", vjp, axis=axis)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return div(tsum(a, axis=axis, keepdims=keepdims), float(count))


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if a.shape == shape:
        return a
    out = Tensor._wrap(np.array(np.broadcast_to(a.data, shape)))
    return attach_op(out, (a,), "broadcast_to", lambda g: (sum_to(g, a.shape),))


def sum_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Sum a broadcast result back down to `shape` (the adjoint of broadcast_to)."""
    shape = tuple(shape)
    if a.shape == shape:
        return a
    lead = a.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, extent in enumerate(shape) if extent == 1 and a.shape[i + lead] != 1
    )
    out = Tensor._wrap(a.data.sum(axis=axes, keepdims=True).reshape(shape))
    return attach_op(out, (a,), "sum_to", lambda g: (broadcast_to(g, a.shape),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    out = Tensor._wrap(a.data.reshape(shape))
    return attach_op(out, (a,), "reshape", lambda g: (reshape(g, a.shape),))


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    out = Tensor._wrap(np.transpose(a.data, axes))
    return attach_op(out, (a,), "transpose", lambda g: (transpose(g, inverse),))


def gather(a: Tensor, index: np.ndarray) -> Tensor:
    """Pick elements of the flattened tensor: out = a.ravel()[index]."""
    index = np.asarray(index, dtype=np.int64)
    out = Tensor._wrap(a.data.reshape(-1)[index])
    return attach_op(out, (a,), "gather", lambda g: (scatter_add(g, index, a.shape),))


def scatter_add(g: Tensor, index: np.ndarray, shape: Sequence[int]) -> Tensor:
    """Accumulate g into a zero tensor of `shape` at flat positions `index` (adjoint of gather)."""
    shape = tuple(shape)
    size = int(np.prod(shape)) if shape else 1
    summed = np.bincount(index.reshape(-1), weights=g.data.reshape(-1), minlength=size)
    out = Tensor._wrap(summed.astype(g.dtype).reshape(shape))
    return attach_op(out, (g,), "scatter_add", lambda gbar: (gather(gbar, index),))


def take(a: Tensor, key) -> Tensor:
    """numpy-style indexing expressed as a gather."""
    index = np.arange(a.size, dtype=np.int64).reshape(a.shape)[key]
    return gather(a, index)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    axis = axis % tensors[0].ndim
    out = Tensor._wrap(np.concatenate([t.data for t in tensors], axis=axis))
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def vjp(g):
        grads = []
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if not t.requires_grad:
                grads.append(None)
                continue
            key = [slice(None)] * g.ndim
            key[axis] = slice(int(lo), int(hi))
            grads.append(take(g, tuple(key)))
        return tuple(grads)

    return attach_op(out, tensors, "concat", vjp, axis=axis)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        shape.insert(axis % (t.ndim + 1), 1)
        expanded.append(reshape(t, shape))
    return concat(expanded, axis=axis)


def einsum(spec: str, a: Tensor, b: Tensor) -> Tensor:
    """
    Two-operand einsum.

    Every index of an operand must appear in the other operand or in the
    output, and no index may repeat within one operand, so both adjoints are
    einsums of the same form.
    """
    a, b = _operands(a, b)
    inputs, out_spec = spec.replace(" ", "").split("->")
    a_spec, b_spec = inputs.split(",")
    for own, other in ((a_spec, b_spec), (b_spec, a_spec)):
        if len(set(own)) != len(own):
            raise ShapeError(f"einsum '{spec}': repeated index within an operand")
        missing = set(own) - set(other) - set(out_spec)
        if missing:
            raise ShapeError(f"einsum '{spec}': indices {sorted(missing)} are summed out of one operand only")
    try:
        data = np.einsum(spec, a.data, b.data, optimize=True)
    except ValueError as e:
        raise ShapeError(f"einsum '{spec}' on shapes {a.shape} and {b.shape}: {e}") from e
    out = Tensor._wrap(np.asarray(data))

    def vjp(g):
        return (
            einsum(f"{out_spec},{b_spec}->{a_spec}", g, b) if a.requires_grad else None,
            einsum(f"{out_spec},{a_spec}->{b_spec}", g, a) if b.requires_grad else None,
        )

    return attach_op(out, (a, b), "einsum", vjp, spec=spec)


def zeros(shape: Sequence[int], dtype=DEFAULT_DTYPE) -> Tensor:
    return Tensor._wrap(np.zeros(tuple(shape), dtype=dtype))


def ones_like(t: Tensor) -> Tensor:
    return Tensor._wrap(np.ones(t.shape, dtype=t.dtype))


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Sum tensors left to right (fixed reduction order)."""
    return reduce(add, tensors)
