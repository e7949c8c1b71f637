"""
Composite differentiable operations used by the model: convolutions,
activations, softmax and pooling.

Convolutions are expressed as a gather (im2col with the padding folded into
the index map) followed by an einsum, so they inherit exact and
higher-order gradients from those two primitives.
"""

from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np

from ..errors import ShapeError
from ..models.canonical_types import ActivationKind, Padding
from .tensor import Tensor, as_tensor, concat, einsum, exp, gather, mul, reshape, sub, tsum, zeros, div


def pad_index(n: int, pad: int, mode: Padding) -> np.ndarray:
    """
    Source index for each position of a padded axis; -1 marks a zero sample.

    Reflect mirrors without repeating the edge sample:
    ... 2, 1 | 0, 1, 2, ... | n-2, n-3 ...
    """
    positions = np.arange(-pad, n + pad)
    if mode == Padding.REFLECT:
        if pad > n - 1:
            raise ShapeError(f"reflect padding of {pad} needs an extent of at least {pad + 1}, got {n}")
        index = np.abs(positions)
        index = np.where(index > n - 1, 2 * (n - 1) - index, index)
        return index
    return np.where((positions < 0) | (positions >= n), -1, positions)


def _axis_windows(n: int, k: int, stride: int, mode: Padding) -> np.ndarray:
    pad = 0 if mode == Padding.NONE else k // 2
    padded = pad_index(n, pad, mode)
    out = (n + 2 * pad - k) // stride + 1
    if out < 1:
        raise ShapeError(f"kernel extent {k} does not fit an axis of {n} without padding")
    starts = np.arange(out) * stride
    return padded[starts[None, :] + np.arange(k)[:, None]]  # [k, out]


@lru_cache(maxsize=128)
def _conv_index(in_shape: Tuple[int, ...], kernel: Tuple[int, ...], stride: int, mode: Padding) -> np.ndarray:
    """
    Flat gather index [C, *kernel, *out] into the input followed by one zero
    sentinel at position C * prod(spatial).
    """
    channels, spatial = in_shape[0], in_shape[1:]
    windows = [_axis_windows(n, k, stride, mode) for n, k in zip(spatial, kernel)]
    ndim = len(spatial)
    # broadcast each axis' [k, out] table into [*kernel, *out]
    flat = np.zeros([1] * (2 * ndim), dtype=np.int64)
    invalid = np.zeros([1] * (2 * ndim), dtype=bool)
    stride_elems = int(np.prod(spatial))
    for axis, table in enumerate(windows):
        shape = [1] * (2 * ndim)
        shape[axis] = table.shape[0]
        shape[ndim + axis] = table.shape[1]
        table = table.reshape(shape)
        step = int(np.prod(spatial[axis + 1:])) if axis + 1 < ndim else 1
        flat = flat + np.where(table < 0, 0, table) * step
        invalid = invalid | (table < 0)
    sentinel = channels * stride_elems
    channel_offsets = (np.arange(channels) * stride_elems).reshape([channels] + [1] * (2 * ndim))
    index = np.where(invalid[None], sentinel, flat[None] + channel_offsets)
    index.setflags(write=False)
    return index


def _check_kernel(x: Tensor, kernel: Tensor, bias: Optional[Tensor], ndim: int, op: str) -> None:
    if x.ndim != ndim + 1:
        raise ShapeError(f"{op} expects input [C_in, {ndim} spatial axes], got shape {x.shape}")
    if kernel.ndim != ndim + 2:
        raise ShapeError(f"{op} expects kernel [C_out, C_in, {ndim} extents], got shape {kernel.shape}")
    if kernel.shape[1] != x.shape[0]:
        raise ShapeError(
            f"{op}: kernel expects {kernel.shape[1]} input channels but input has {x.shape[0]} "
            f"(input {x.shape}, kernel {kernel.shape})"
        )
    if any(k % 2 == 0 for k in kernel.shape[2:]):
        raise ShapeError(f"{op}: kernel extents must be odd, got {kernel.shape[2:]}")
    if bias is not None and bias.shape != (kernel.shape[0],):
        raise ShapeError(f"{op}: bias shape {bias.shape} does not match {kernel.shape[0]} output channels")


def _convolve(x: Tensor, kernel: Tensor, bias: Optional[Tensor], padding, stride: int, ndim: int, op: str) -> Tensor:
    _check_kernel(x, kernel, bias, ndim, op)
    mode = Padding(padding)
    if mode == Padding.REFLECT:
        for n, k in zip(x.shape[1:], kernel.shape[2:]):
            if n < k:
                raise ShapeError(f"{op}: reflect padding needs extents >= kernel, got {x.shape[1:]} vs {kernel.shape[2:]}")
    index = _conv_index(tuple(x.shape), tuple(kernel.shape[2:]), stride, mode)
    flat = reshape(x, (-1,))
    if mode == Padding.ZERO:
        flat = concat([flat, zeros((1,), dtype=x.dtype)])
    cols = gather(flat, index)
    letters = "zyx"[-ndim:]
    taps = "ijk"[:ndim]
    spec = f"oc{taps},c{taps}{letters}->o{letters}"
    out = einsum(spec, kernel, cols)
    if bias is not None:
        out = out + reshape(bias, (-1,) + (1,) * ndim)
    return out


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, padding: Union[Padding, str] = Padding.REFLECT, stride: int = 1) -> Tensor:
    """2D cross-correlation: [C_in,H,W] * [C_out,C_in,kh,kw] -> [C_out,H',W']."""
    return _convolve(x, kernel, bias, padding, stride, 2, "conv2d")


def conv3d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, padding: Union[Padding, str] = Padding.REFLECT) -> Tensor:
    """3D cross-correlation: [C_in,D,H,W] * [C_out,C_in,kd,kh,kw] -> [C_out,D',H',W']; stride 1."""
    return _convolve(x, kernel, bias, padding, 1, 3, "conv3d")


def activate(x: Tensor, kind: Union[ActivationKind, str] = ActivationKind.RELU, slope: float = 0.2) -> Tensor:
    """Elementwise relu or leaky_relu(slope); gradient uses a constant mask."""
    kind = ActivationKind(kind)
    if kind == ActivationKind.RELU:
        slope = 0.0
    elif not 0.0 <= slope < 1.0:
        raise ValueError(f"leaky_relu slope must be in [0, 1), got {slope}")
    mask = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return mul(x, as_tensor(mask))


def relu(x: Tensor) -> Tensor:
    return activate(x, ActivationKind.RELU)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    return activate(x, ActivationKind.LEAKY_RELU, slope)


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax along `axis` with max-subtraction.

    `mask` (same shape as x) removes entries from the normalization; masked
    entries get weight 0.
    """
    data = x.data if mask is None else np.where(mask, x.data, -np.inf)
    shift = np.max(data, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0).astype(x.dtype)
    e = exp(sub(x, as_tensor(shift)))
    if mask is not None:
        e = mul(e, as_tensor(mask.astype(x.dtype)))
    return div(e, tsum(e, axis=axis, keepdims=True))


def avg_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping average pooling of [C,H,W]; trailing rows/cols that do not fill a window are dropped."""
    c, h, w = x.shape
    ho, wo = h // size, w // size
    if ho == 0 or wo == 0:
        raise ShapeError(f"avg_pool2d window {size} larger than input {x.shape}")
    if (ho * size, wo * size) != (h, w):
        x = x[:, : ho * size, : wo * size]
    return reshape(x, (c, ho, size, wo, size)).mean(axis=(2, 4))


def mse(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mse shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    return (d * d).mean()
