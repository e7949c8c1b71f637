"""
Generator and critic objectives.

Batch losses are means of per-sample terms, so the trainer can evaluate
samples independently and reduce them in a fixed order.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Sequence

import numpy as np

from ..autodiff import Tensor, grad, mse
from ..autodiff.tensor import add_n, tsum
from ..errors import ShapeError
from ..models.canonical_types import LossMode
from .networks import FeatureExtractor, perceptual_features

Critic = Callable[[Tensor], Tensor]
Generator = Callable[[Tensor], Tensor]

# keeps sqrt differentiable when the critic gradient vanishes
NORM_EPS = 1e-24


@dataclass
class SampleTerms:
    """Per-sample loss (already scaled for its batch) and logged components."""

    loss: Tensor
    parts: Dict[str, float] = field(default_factory=dict)


def perceptual_distance(output: Tensor, target, phi: FeatureExtractor) -> Tensor:
    """||phi(output) - phi(target)||^2 summed over all features."""
    diff = perceptual_features(output, phi) - perceptual_features(target, phi)
    return tsum(diff * diff)


def generator_sample_terms(
    low_stack,
    target,
    generator: Generator,
    critic: Critic,
    phi: FeatureExtractor,
    lam: float,
    mode: LossMode = LossMode.GAN_PERCEPTUAL,
    batch_size: int = 1,
) -> SampleTerms:
    """One sample's share of generator_loss (divided by `batch_size`)."""
    target = target if isinstance(target, Tensor) else Tensor(target)
    output = generator(low_stack)
    if output.shape != target.shape:
        raise ShapeError(f"generator output {output.shape} does not match target {target.shape}")
    pixel_mse = mse(output, target)
    parts = {"mse": pixel_mse.item()}
    if LossMode(mode) == LossMode.MSE_ONLY:
        loss = pixel_mse
        parts["perceptual"] = perceptual_distance(output.detach(), target, phi).item()
        parts["adversarial_G"] = 0.0
    else:
        adversarial = -critic(output)
        perceptual = perceptual_distance(output, target, phi)
        loss = adversarial + lam * perceptual
        parts["perceptual"] = perceptual.item()
        parts["adversarial_G"] = adversarial.item()
    return SampleTerms(loss=loss / float(batch_size), parts=parts)


def generator_loss(
    batch_inputs: Sequence,
    batch_targets: Sequence,
    generator: Generator,
    critic: Critic,
    phi: FeatureExtractor,
    lam: float,
    mode: LossMode = LossMode.GAN_PERCEPTUAL,
) -> Tensor:
    """
    -mean(D(G(X))) + lam * mean(||phi(G(X)) - phi(y)||^2); mean((G(X) - y)^2)
    in mse_only mode.
    """
    n = len(batch_inputs)
    if n == 0 or n != len(batch_targets):
        raise ShapeError(f"batch needs matching non-empty inputs and targets, got {n} and {len(batch_targets)}")
    terms = [
        generator_sample_terms(x, y, generator, critic, phi, lam, mode, batch_size=n)
        for x, y in zip(batch_inputs, batch_targets)
    ]
    return add_n([t.loss for t in terms])


def input_gradient_norm(critic: Critic, point, create_graph: bool = True) -> Tensor:
    """||grad_x D(x)||_2 at `point`; with create_graph the norm is differentiable in the critic."""
    x_hat = Tensor(point.data if isinstance(point, Tensor) else point, requires_grad=True)
    (g,) = grad(critic(x_hat), [x_hat], create_graph=create_graph)
    return (tsum(g * g) + NORM_EPS).sqrt()


def critic_sample_terms(
    real,
    fake,
    u: float,
    critic: Critic,
    lambda_gp: float,
    batch_size: int = 1,
) -> SampleTerms:
    """One sample's share of discriminator_loss (divided by `batch_size`)."""
    real = real if isinstance(real, Tensor) else Tensor(real)
    fake = fake if isinstance(fake, Tensor) else Tensor(fake)
    if real.shape != fake.shape:
        raise ShapeError(f"real {real.shape} and fake {fake.shape} samples differ in shape")
    d_real = critic(real.detach())
    d_fake = critic(fake.detach())
    x_hat = u * real.data + (1.0 - u) * fake.data
    norm = input_gradient_norm(critic, x_hat.astype(real.dtype))
    penalty = (norm - 1.0) ** 2
    loss = d_fake - d_real + lambda_gp * penalty
    parts = {"critic_loss": loss.item(), "gp": penalty.item(), "wasserstein": (d_real - d_fake).item()}
    return SampleTerms(loss=loss / float(batch_size), parts=parts)


def discriminator_loss(
    real_batch: Sequence,
    fake_batch: Sequence,
    critic: Critic,
    lambda_gp: float,
    rng: np.random.Generator,
) -> Tensor:
    """
    mean(D(fake)) - mean(D(real)) + lambda_gp * mean((||grad D(x_hat)|| - 1)^2)
    with x_hat = u * real + (1 - u) * fake and u ~ U(0, 1) per sample.
    """
    n = len(real_batch)
    if n == 0 or n != len(fake_batch):
        raise ShapeError(f"real and fake batches must be non-empty and equal in size, got {n} and {len(fake_batch)}")
    draws = rng.uniform(0.0, 1.0, size=n)
    terms = [
        critic_sample_terms(r, f, float(u), critic, lambda_gp, batch_size=n)
        for r, f, u in zip(real_batch, fake_batch, draws)
    ]
    return add_n([t.loss for t in terms])
