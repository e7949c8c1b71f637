"""
Auxiliary networks of adversarial training: the critic D and the fixed
perceptual feature extractor phi.
"""

from typing import Dict, Sequence, Tuple

import numpy as np

from ..autodiff import Tensor, activate, avg_pool2d, conv2d
from ..autodiff.tensor import reshape
from ..errors import ShapeError
from ..model.parameters import ParameterSet, he_normal, make_rng
from ..models.canonical_types import ActivationKind, Padding

CRITIC_CHANNELS = (8, 16, 32, 64)
CRITIC_SLOPE = 0.2
PHI_CHANNELS = (8, 16, 16)


def _as_image(image) -> Tensor:
    if not isinstance(image, Tensor):
        image = Tensor(image)
    if image.ndim == 2:
        return reshape(image, (1,) + image.shape)
    if image.ndim == 3 and image.shape[0] == 1:
        return image
    raise ShapeError(f"expected a single-channel image [H,W] or [1,H,W], got {image.shape}")


def critic_shapes(channels: Sequence[int] = CRITIC_CHANNELS) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    c_in = 1
    for i, c_out in enumerate(channels):
        shapes[f"critic.conv{i}.weight"] = (c_out, c_in, 3, 3)
        shapes[f"critic.conv{i}.bias"] = (c_out,)
        c_in = c_out
    shapes["critic.linear.weight"] = (c_in,)
    shapes["critic.linear.bias"] = (1,)
    return shapes


def init_critic_parameters(seed: int, dtype=np.float64, channels: Sequence[int] = CRITIC_CHANNELS) -> ParameterSet:
    rng = make_rng(seed)
    arrays = {}
    for name, shape in critic_shapes(channels).items():
        if ".conv" in name and name.endswith(".weight"):
            arrays[name] = he_normal(rng, shape)
        elif name == "critic.linear.weight":
            arrays[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
        else:
            arrays[name] = np.zeros(shape)
    return ParameterSet.from_arrays(arrays, dtype=dtype)


class Discriminator:
    """
    Critic: stride-2 3x3 convolutions with leaky relu, spatial mean pooling
    and a linear map to one real per image.
    """

    def __init__(self, params: ParameterSet):
        self.params = params
        self.depth = sum(1 for name in params if name.endswith(".weight") and ".conv" in name)

    @classmethod
    def initialize(cls, seed: int, dtype=np.float64) -> "Discriminator":
        return cls(init_critic_parameters(seed, dtype))

    def frozen(self) -> "Discriminator":
        """Same weights as untracked constants (generator steps do not need critic grads)."""
        return _FrozenDiscriminator(self.params)

    def _weight(self, name: str) -> Tensor:
        return self.params[name]

    def __call__(self, image) -> Tensor:
        x = _as_image(image)
        if x.dtype != self.params.dtype and not x.requires_grad:
            x = Tensor(x.data, dtype=self.params.dtype)
        for i in range(self.depth):
            w, b = self._weight(f"critic.conv{i}.weight"), self._weight(f"critic.conv{i}.bias")
            x = activate(conv2d(x, w, b, Padding.ZERO, stride=2), ActivationKind.LEAKY_RELU, CRITIC_SLOPE)
        pooled = x.mean(axis=(1, 2))
        score = (pooled * self._weight("critic.linear.weight")).sum() + self._weight("critic.linear.bias")
        return reshape(score, ())


class _FrozenDiscriminator(Discriminator):
    def __init__(self, params: ParameterSet):
        super().__init__(params)
        self._constants = {name: t.detach() for name, t in params.items()}

    def _weight(self, name: str) -> Tensor:
        return self._constants[name]


class FeatureExtractor:
    """
    Fixed convolutional feature extractor phi generated from a seed.

    Three 3x3 convolutions (1 -> 8 -> 16 -> 16) with relu and 2x average
    pooling between them. Weights never require gradients.
    """

    def __init__(self, seed: int = 1234, channels: Sequence[int] = PHI_CHANNELS, dtype=np.float64):
        self.seed = seed
        self.channels = tuple(channels)
        rng = make_rng(seed)
        self.layers = []
        c_in = 1
        for c_out in self.channels:
            weight = Tensor(he_normal(rng, (c_out, c_in, 3, 3)), dtype=dtype)
            bias = Tensor(np.zeros(c_out), dtype=dtype)
            self.layers.append((weight, bias))
            c_in = c_out

    @property
    def dtype(self):
        return self.layers[0][0].dtype

    def describe(self) -> Dict[str, object]:
        return {"kind": "seeded-conv", "seed": self.seed, "channels": list(self.channels)}

    def __call__(self, image) -> Tensor:
        return perceptual_features(image, self)


def perceptual_features(image, phi: FeatureExtractor) -> Tensor:
    """phi(image): deterministic feature map, differentiable in the image only."""
    x = _as_image(image)
    for i, (weight, bias) in enumerate(phi.layers):
        if i > 0:
            x = avg_pool2d(x, 2)
        x = activate(conv2d(x, weight, bias, Padding.ZERO), ActivationKind.RELU)
    return x
