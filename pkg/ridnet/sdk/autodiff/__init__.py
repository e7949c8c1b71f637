from .backward import GradMap, backward, grad, grad_norm, tape_graph
from .gradcheck import GradCheckResult, grad_check
from .ops import activate, avg_pool2d, conv2d, conv3d, leaky_relu, mse, relu, softmax
from .tape import TapeNode, enable_grad, is_grad_enabled, no_grad
from .tensor import Tensor, as_tensor, clamp, concat, einsum, gather, stack, zeros

__all__ = [
    "GradCheckResult",
    "GradMap",
    "TapeNode",
    "Tensor",
    "activate",
    "as_tensor",
    "avg_pool2d",
    "backward",
    "clamp",
    "concat",
    "conv2d",
    "conv3d",
    "einsum",
    "enable_grad",
    "gather",
    "grad",
    "grad_check",
    "grad_norm",
    "is_grad_enabled",
    "leaky_relu",
    "mse",
    "no_grad",
    "relu",
    "softmax",
    "stack",
    "zeros",
]
