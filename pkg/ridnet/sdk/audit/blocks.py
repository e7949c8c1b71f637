"""
Gradient audits of the graph branches, the fusion and one RIDnet block.

Topologies are frozen before differencing so perturbations never swap
neighbours.
"""

from typing import Dict, List

import numpy as np

from ..autodiff import Tensor
from ..graph import EccParams, TopologyCache, build_depth_edges, build_plane_edges, depth_gcn_forward, edge_terms, plane_gcn_forward
from ..model import ParameterSet, RIDnetBlockParams, fuse, init_generator_parameters, ridnet_forward
from ..model.ridnet import effective_alpha
from ..models.canonical_types import ActivationKind, AuditScope, ThetaMode
from ..models.config import GraphConfig, ModelConfig
from .audit_case import AuditCase, AuditTarget

TOY_SIZE = 8


def toy_model_config(
    theta_mode: ThetaMode = ThetaMode.FULL,
    activation: ActivationKind = ActivationKind.RELU,
    blocks: int = 1,
    seed: int = 0,
) -> ModelConfig:
    """4 channels, K=4 in a 5x5 window: small enough for exhaustive differencing."""
    return ModelConfig(
        blocks=blocks,
        channels=4,
        embed_hidden=4,
        tail_hidden=4,
        activation=activation,
        init_seed=seed,
        graph=GraphConfig(window=5, k_neighbors=4, theta_mode=theta_mode, edge_hidden=4),
    )


def audit_parameters(config: ModelConfig, seed: int) -> ParameterSet:
    """float64 generator parameters with alpha_raw moved off the clamp bounds."""
    params = init_generator_parameters(config, dtype=np.float64, seed=seed)
    return params.replace({name: np.full((1,), 0.5) for name in params.alpha_names()})


def rebind(names: List[str], tensors) -> ParameterSet:
    return ParameterSet(dict(zip(names, tensors)))


class _BlockCase(AuditCase):
    scope = AuditScope.BLOCKS
    tolerance = 1e-5

    def ecc_leaves(self, channels: int, mode: ThetaMode) -> Dict[str, Tensor]:
        values = EccParams.initial_values(channels, 4, mode, rng=self.rng, scale=0.3)
        return {name: self.leaf(v) for name, v in values.items()}


class EdgeWeightAudit(_BlockCase):
    name = "edge_distance_softmax"

    def build(self) -> AuditTarget:
        config = GraphConfig(window=5, k_neighbors=4)
        features = self.rng.normal(size=(3, TOY_SIZE, TOY_SIZE))
        edges = build_plane_edges(features, config)
        x = self.leaf(features.reshape(3, -1))

        def f(x):
            _, distances, weights = edge_terms(x, x, edges)
            return self.weighted_sum(weights) + self.weighted_sum(distances * 0.1)

        return f, [x]


class PlaneGraphAudit(_BlockCase):
    name = "plane_gcn_full"

    def build(self) -> AuditTarget:
        config = GraphConfig(window=5, k_neighbors=4, theta_mode=ThetaMode.FULL, edge_hidden=4)
        features = self.rng.normal(size=(4, TOY_SIZE, TOY_SIZE))
        edges = build_plane_edges(features, config)
        ecc = self.ecc_leaves(4, ThetaMode.FULL)
        names = list(ecc)

        def f(x, *tensors):
            params = EccParams(mode=ThetaMode.FULL, **dict(zip(names, tensors)))
            return self.weighted_sum(plane_gcn_forward(x, config, params, edges=edges))

        return f, [self.leaf(features)] + list(ecc.values())


class DepthGraphAudit(_BlockCase):
    name = "depth_gcn_diagonal"

    def build(self) -> AuditTarget:
        config = GraphConfig(window=5, k_neighbors=4, depth_radius=1, theta_mode=ThetaMode.DIAGONAL, edge_hidden=4)
        stack = self.rng.normal(size=(3, 4, TOY_SIZE, TOY_SIZE))
        edges = build_depth_edges(stack[1], np.stack([stack[0], stack[2]]), config)
        ecc = self.ecc_leaves(4, ThetaMode.DIAGONAL)
        names = list(ecc)

        def f(x, *tensors):
            params = EccParams(mode=ThetaMode.DIAGONAL, **dict(zip(names, tensors)))
            return self.weighted_sum(depth_gcn_forward(x, config, params, edges=edges))

        return f, [self.leaf(stack)] + list(ecc.values())


class FusionAudit(_BlockCase):
    name = "fusion_alpha"

    def build(self) -> AuditTarget:
        shape = (2, 3, 3)
        parts = [self.leaf(self.rng.normal(size=shape)) for _ in range(3)]
        alpha = self.leaf([0.3])

        def f(p_nl, p_l, p_c, alpha_raw):
            return self.weighted_sum(fuse(p_nl, p_l, p_c, effective_alpha(alpha_raw)))

        return f, parts + [alpha]


class RIDnetBlockAudit(_BlockCase):
    name = "ridnet_block"
    tolerance = 1e-4
    max_coords = 32

    def build(self) -> AuditTarget:
        config = toy_model_config(seed=self.seed)
        params = audit_parameters(config, self.seed)
        names = list(params.scoped("block0"))
        topology = TopologyCache()
        stack = self.leaf(self.rng.uniform(0.0, 1.0, size=(3, TOY_SIZE, TOY_SIZE)))

        def f(x, *tensors):
            block = RIDnetBlockParams.from_parameters(rebind(names, tensors), 0, config)
            return self.weighted_sum(ridnet_forward(x, block, config, topology))

        return f, [stack] + [params[name] for name in names]
