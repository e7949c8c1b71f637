"""
Gradient audits of the individual differentiable operations.
"""

import numpy as np

from ..autodiff import Tensor, activate, avg_pool2d, conv2d, conv3d, enable_grad, grad, mse, softmax
from ..autodiff.tensor import clamp, concat, einsum, gather, reshape, stack, transpose, tsum
from ..models.canonical_types import ActivationKind, AuditScope, Padding
from .audit_case import AuditCase, AuditTarget


class _OpCase(AuditCase):
    scope = AuditScope.OPS
    tolerance = 1e-5


class ArithmeticAudit(_OpCase):
    name = "add_sub_mul_div"

    def build(self) -> AuditTarget:
        a = self.leaf(self.rng.normal(size=(3, 4)))
        b = self.leaf(self.rng.normal(size=(4,)))
        c = self.leaf(self.rng.uniform(0.5, 2.0, size=(3, 1)))
        return (lambda a, b, c: self.weighted_sum((a + b) * a / c - b * 0.5)), [a, b, c]


class ElementaryAudit(_OpCase):
    name = "exp_log_sqrt_pow"

    def build(self) -> AuditTarget:
        x = self.leaf(self.rng.uniform(0.5, 2.0, size=(5,)))
        return (lambda x: self.weighted_sum(x.exp() + x.log() + x.sqrt() + x**3 - (-x))), [x]


class ClampAudit(_OpCase):
    name = "clamp"

    def build(self) -> AuditTarget:
        x = self.leaf(self.away_from_zero((6,), margin=0.05, scale=0.3) + np.array([0, 0, 0, 1.0, -1.0, 0]))
        return (lambda x: self.weighted_sum(clamp(x, -0.5, 0.5))), [x]


class ReductionAudit(_OpCase):
    name = "sum_mean"

    def build(self) -> AuditTarget:
        x = self.leaf(self.rng.normal(size=(2, 3, 4)))

        def f(x):
            return self.weighted_sum(x.sum(axis=1)) + self.weighted_sum(x.mean(axis=(0, 2), keepdims=True)) + x.mean()

        return f, [x]


class ViewAudit(_OpCase):
    name = "reshape_transpose_index"

    def build(self) -> AuditTarget:
        x = self.leaf(self.rng.normal(size=(2, 3, 4)))
        return (lambda x: self.weighted_sum(transpose(reshape(x, (6, 4)), (1, 0))[1:3, ::2])), [x]


class GatherAudit(_OpCase):
    name = "gather_repeated"

    def build(self) -> AuditTarget:
        x = self.leaf(self.rng.normal(size=(3, 3)))
        index = np.array([[0, 4, 4], [8, 0, 2]])
        return (lambda x: self.weighted_sum(gather(x, index))), [x]


class ConcatAudit(_OpCase):
    name = "concat_stack"

    def build(self) -> AuditTarget:
        a = self.leaf(self.rng.normal(size=(2, 3)))
        b = self.leaf(self.rng.normal(size=(1, 3)))
        return (lambda a, b: self.weighted_sum(concat([a, b, a], axis=0)) + self.weighted_sum(stack([a[0], b[0]], axis=1))), [a, b]


class EinsumAudit(_OpCase):
    name = "einsum"

    def build(self) -> AuditTarget:
        a = self.leaf(self.rng.normal(size=(3, 4, 2)))
        b = self.leaf(self.rng.normal(size=(4, 5)))
        return (lambda a, b: self.weighted_sum(einsum("ijk,jl->ilk", a, b))), [a, b]


class Conv2dReflectAudit(_OpCase):
    name = "conv2d_reflect"

    def build(self) -> AuditTarget:
        x = self.leaf(self.rng.normal(size=(2, 5, 6)))
        k = self.leaf(self.rng.normal(size=(3, 2, 3, 3)))
        b = self.leaf(self.rng.normal(size=(3,)))
        return (lambda x, k, b: self.weighted_sum(conv2d(x, k, b, Padding.REFLECT))), [x, k, b]


class Conv2dStridedZeroAudit(_OpCase):
    name = "conv2d_zero_stride2"

    def build(self) -> AuditTarget:
        x = self.leaf(self.rng.normal(size=(2, 7, 6)))
        k = self.leaf(self.rng.normal(size=(3, 2, 3, 3)))
        b = self.leaf(self.rng.normal(size=(3,)))
        return (lambda x, k, b: self.weighted_sum(conv2d(x, k, b, Padding.ZERO, stride=2))), [x, k, b]


class Conv3dAudit(_OpCase):
    name = "conv3d_reflect"

    def build(self) -> AuditTarget:
        x = self.leaf(self.rng.normal(size=(2, 3, 4, 4)))
        k = self.leaf(self.rng.normal(size=(2, 2, 3, 3, 3)))
        b = self.leaf(self.rng.normal(size=(2,)))
        return (lambda x, k, b: self.weighted_sum(conv3d(x, k, b, Padding.REFLECT))), [x, k, b]


class ActivationAudit(_OpCase):
    name = "relu_leaky_relu"

    def build(self) -> AuditTarget:
        x = self.leaf(self.away_from_zero((4, 5)))

        def f(x):
            return self.weighted_sum(activate(x, ActivationKind.RELU)) + self.weighted_sum(
                activate(x, ActivationKind.LEAKY_RELU, 0.2) * 2.0
            )

        return f, [x]


class SoftmaxAudit(_OpCase):
    name = "masked_softmax"

    def build(self) -> AuditTarget:
        x = self.leaf(self.rng.normal(size=(4, 5)) * 3.0)
        mask = np.ones((4, 5), dtype=bool)
        mask[1, 3:] = False
        mask[3, 0] = False
        return (lambda x: self.weighted_sum(softmax(x, axis=-1, mask=mask))), [x]


class PoolingAudit(_OpCase):
    name = "avg_pool2d"

    def build(self) -> AuditTarget:
        x = self.leaf(self.rng.normal(size=(2, 5, 4)))
        return (lambda x: self.weighted_sum(avg_pool2d(x, 2))), [x]


class MseAudit(_OpCase):
    name = "mse"

    def build(self) -> AuditTarget:
        a = self.leaf(self.rng.normal(size=(4, 4)))
        b = self.leaf(self.rng.normal(size=(4, 4)))
        return (lambda a, b: mse(a, b)), [a, b]


class SecondOrderAudit(_OpCase):
    """Differentiates through a recorded backward pass (create_graph)."""

    name = "second_order"

    def build(self) -> AuditTarget:
        x = self.rng.normal(size=(3,))
        w = self.leaf(self.rng.normal(size=(3,)))

        def f(w):
            with enable_grad():
                inner = Tensor(x, requires_grad=True)
                (g,) = grad(tsum((inner * w).exp()), [inner], create_graph=True)
                return tsum(g * g)

        return f, [w]
