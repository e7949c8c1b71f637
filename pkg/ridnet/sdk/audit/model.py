"""
End-to-end gradient audits: the full generator on an 8x8 toy stack, the
generator objective and the critic objective with its gradient penalty.
"""

from ..autodiff import Tensor, enable_grad
from ..graph import TopologyCache
from ..model import GeneratorParams, generator_forward
from ..models.canonical_types import ActivationKind, AuditScope, LossMode, ThetaMode
from ..training.losses import critic_sample_terms, generator_sample_terms
from ..training.networks import Discriminator, FeatureExtractor, init_critic_parameters
from .audit_case import AuditCase, AuditTarget
from .blocks import TOY_SIZE, audit_parameters, rebind, toy_model_config


class _ModelCase(AuditCase):
    scope = AuditScope.MODEL
    tolerance = 1e-4
    max_coords = 16

    def toy_stack(self):
        return self.leaf(self.rng.uniform(0.0, 1.0, size=(3, TOY_SIZE, TOY_SIZE)))


class GeneratorAudit(_ModelCase):
    name = "generator_full_theta"
    theta_mode = ThetaMode.FULL
    activation = ActivationKind.RELU
    blocks = 1

    def build(self) -> AuditTarget:
        config = toy_model_config(self.theta_mode, self.activation, self.blocks, seed=self.seed)
        params = audit_parameters(config, self.seed)
        names = list(params)
        topology = TopologyCache()

        def f(x, *tensors):
            view = GeneratorParams.from_parameters(rebind(names, tensors), config)
            return self.weighted_sum(generator_forward(x, view, config, topology))

        return f, [self.toy_stack()] + list(params.values())


class StackedDiagonalGeneratorAudit(GeneratorAudit):
    name = "generator_two_blocks_diagonal_leaky"
    theta_mode = ThetaMode.DIAGONAL
    activation = ActivationKind.LEAKY_RELU
    blocks = 2


class GeneratorLossAudit(_ModelCase):
    name = "generator_loss_gan_perceptual"
    max_coords = 8

    def build(self) -> AuditTarget:
        config = toy_model_config(seed=self.seed)
        params = audit_parameters(config, self.seed)
        names = list(params)
        topology = TopologyCache()
        critic = Discriminator.initialize(self.seed + 1).frozen()
        phi = FeatureExtractor(seed=self.seed + 2)
        low = Tensor(self.rng.uniform(0.0, 1.0, size=(3, TOY_SIZE, TOY_SIZE)))
        target = self.rng.uniform(0.0, 1.0, size=(TOY_SIZE, TOY_SIZE))

        def f(*tensors):
            view = GeneratorParams.from_parameters(rebind(names, tensors), config)
            terms = generator_sample_terms(
                low,
                target,
                lambda x: generator_forward(x, view, config, topology),
                critic,
                phi,
                0.1,
                LossMode.GAN_PERCEPTUAL,
            )
            return terms.loss

        return f, list(params.values())


class CriticPenaltyAudit(_ModelCase):
    """Second-order: the penalty differentiates the critic's input gradient."""

    name = "critic_loss_gradient_penalty"
    max_coords = 8

    def build(self) -> AuditTarget:
        params = init_critic_parameters(self.seed + 1)
        names = list(params)
        real = self.rng.uniform(0.0, 1.0, size=(TOY_SIZE, TOY_SIZE))
        fake = self.rng.uniform(0.0, 1.0, size=(TOY_SIZE, TOY_SIZE))

        def f(*tensors):
            with enable_grad():
                critic = Discriminator(rebind(names, tensors))
                return critic_sample_terms(real, fake, 0.37, critic, 10.0).loss

        return f, list(params.values())
