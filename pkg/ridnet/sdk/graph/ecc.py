"""
Edge-conditioned aggregation.

The edge network F maps each scalar edge label a_ij to a per-edge linear map
Theta_ij (a full C x C matrix or its diagonal) and the center feature becomes

    s_i = (1 / n_i) * sum_j Theta(a_ij) v_j + b

where n_i counts the valid neighbours of i.
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np

from ..autodiff import Tensor, as_tensor, einsum, leaky_relu, softmax
from ..autodiff.tensor import gather, reshape, tsum
from ..errors import GraphConstructionError, ShapeError
from ..models.canonical_types import ThetaMode
from .edges import EdgeSet

EDGE_NET_SLOPE = 0.2
PARAM_NAMES = ("w1", "b1", "w2", "b2", "bias")


@dataclass
class EccParams:
    """Edge network F (1 -> hidden -> C*C or C) and the output bias b."""

    w1: Tensor  # [hidden]
    b1: Tensor  # [hidden]
    w2: Tensor  # [hidden, C*C] or [hidden, C]
    b2: Tensor  # [C*C] or [C]
    bias: Tensor  # [C]
    mode: ThetaMode = ThetaMode.FULL

    def __post_init__(self):
        self.mode = ThetaMode(self.mode)
        c = self.channels
        width = c * c if self.mode == ThetaMode.FULL else c
        hidden = self.w1.shape[0]
        expected = {"w1": (hidden,), "b1": (hidden,), "w2": (hidden, width), "b2": (width,), "bias": (c,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(
                    f"edge network '{name}' has shape {getattr(self, name).shape}, expected {shape} "
                    f"for {c} channels in {self.mode.value} mode"
                )

    @property
    def channels(self) -> int:
        return self.bias.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def tensors(self) -> Dict[str, Tensor]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @classmethod
    def from_mapping(cls, params: Mapping[str, Tensor], prefix: str, mode: ThetaMode) -> "EccParams":
        return cls(mode=mode, **{name: params[f"{prefix}.{name}"] for name in PARAM_NAMES})

    @staticmethod
    def initial_values(
        channels: int, hidden: int, mode: ThetaMode, rng: Optional[np.random.Generator] = None, scale: float = 0.01
    ) -> Dict[str, np.ndarray]:
        """
        Starting values: F outputs the identity map (plus small noise when an
        rng is given), so an untrained branch averages its neighbours.
        """
        mode = ThetaMode(mode)
        identity = np.eye(channels).reshape(-1) if mode == ThetaMode.FULL else np.ones(channels)
        width = identity.size
        values = {
            "w1": np.zeros(hidden),
            "b1": np.zeros(hidden),
            "w2": np.zeros((hidden, width)),
            "b2": identity,
            "bias": np.zeros(channels),
        }
        if rng is not None:
            values["w1"] = rng.normal(0.0, 1.0, hidden)
            values["b1"] = rng.normal(0.0, 0.1, hidden)
            values["w2"] = rng.normal(0.0, scale, (hidden, width))
        return values

    @classmethod
    def identity(cls, channels: int, hidden: int = 16, mode: ThetaMode = ThetaMode.FULL, dtype=np.float64) -> "EccParams":
        values = cls.initial_values(channels, hidden, mode)
        return cls(mode=mode, **{k: Tensor(v, dtype=dtype) for k, v in values.items()})


def edge_network(weights: Tensor, params: EccParams) -> Tensor:
    """Hidden activations of F for every edge label: [P, N] -> [P, N, hidden]."""
    p, n = weights.shape
    pre = reshape(weights, (p, n, 1)) * reshape(params.w1, (1, 1, -1)) + reshape(params.b1, (1, 1, -1))
    return leaky_relu(pre, EDGE_NET_SLOPE)


def theta(weights: Tensor, params: EccParams) -> Tensor:
    """Per-edge Theta: [P, N, C, C] in full mode, [P, N, C] in diagonal mode."""
    hidden = edge_network(weights, params)
    out = einsum("pnh,hq->pnq", hidden, params.w2) + params.b2
    if params.mode == ThetaMode.FULL:
        c = params.channels
        return reshape(out, weights.shape + (c, c))
    return out


def ecc_aggregate(neighbor_features: Tensor, weights: Tensor, mask: np.ndarray, params: EccParams) -> Tensor:
    """
    Edge-conditioned aggregation for a batch of center pixels.

    Args:
        neighbor_features: v_j for every edge, [C, P, N]
        weights: a_ij edge labels, [P, N]
        mask: valid-edge mask, [P, N]; invalid edges contribute nothing
        params: Edge network and output bias

    Returns:
        s, [C, P]
    """
    c, p, n = neighbor_features.shape
    if c != params.channels:
        raise ShapeError(f"edge network produces {params.channels}-channel maps but features have {c} channels")
    if weights.shape != (p, n) or np.shape(mask) != (p, n):
        raise ShapeError(f"edge labels {weights.shape} / mask {np.shape(mask)} do not match {(p, n)} edges")
    mask = np.asarray(mask, dtype=bool)
    counts = np.maximum(mask.sum(axis=1), 1).astype(neighbor_features.dtype)
    vj = neighbor_features * as_tensor(mask.astype(neighbor_features.dtype))

    # Theta(a) = sum_h hidden_h * W_h + B, applied without materializing Theta per edge
    hidden = edge_network(weights, params)
    hv = einsum("pnh,cpn->hcp", hidden, vj)
    summed = tsum(vj, axis=2)
    if params.mode == ThetaMode.FULL:
        w = reshape(params.w2, (params.hidden, c, c))
        out = einsum("hoc,hcp->op", w, hv) + einsum("oc,cp->op", reshape(params.b2, (c, c)), summed)
    else:
        out = einsum("hc,hcp->cp", params.w2, hv) + reshape(params.b2, (c, 1)) * summed
    return out / as_tensor(counts[None, :], like=out) + reshape(params.bias, (c, 1))


def edge_terms(center: Tensor, source: Tensor, edges: EdgeSet):
    """
    Differentiable neighbour features, distances and weights of an EdgeSet.

    Args:
        center: center features [C, P]
        source: features the neighbour indices point into, [C, S]

    Returns:
        (v_j [C, P, N], e_ij [P, N], a_ij [P, N])
    """
    c, p = center.shape
    if edges.num_pixels != p:
        raise ShapeError(f"edge set covers {edges.num_pixels} pixels but the map has {p}")
    if not edges.mask.any(axis=1).all():
        raise GraphConstructionError("every pixel needs at least one valid neighbour")
    s = source.shape[1]
    index = np.arange(c)[:, None, None] * s + edges.neighbors[None]
    vj = gather(reshape(source, (-1,)), index)
    diff = vj - reshape(center, (c, p, 1))
    distances = tsum(diff * diff, axis=0) / float(np.sqrt(c))
    weights = softmax(-distances, axis=-1, mask=edges.mask)
    return vj, distances, weights
