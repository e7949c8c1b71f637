"""
The RIDnet block and the stacked generator.

Feature stacks are laid out [D, C, H, W] (slice first). Each block embeds
the stack with 3D convolutions, computes three views of the center slice
(non-local plane graph, local 3x3 convolution, cross-slice depth graph),
fuses them and writes the result back in place of the center slice.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..autodiff import Tensor, activate, clamp, concat, conv2d, conv3d, no_grad
from ..autodiff.tensor import reshape, transpose
from ..errors import ShapeError
from ..graph import EccParams, TopologyCache, build_depth_edges, build_plane_edges, depth_gcn_forward, plane_gcn_forward, split_stack
from ..models.canonical_types import Padding
from ..models.config import ModelConfig
from .parameters import ALPHA_SUFFIX, ParameterSet, init_generator_parameters

logger = logging.getLogger(__name__)

Conv = Tuple[Tensor, Tensor]


@dataclass
class RIDnetBlockParams:
    embed: List[Conv]
    local: Conv
    plane: EccParams
    depth: EccParams
    alpha_raw: Tensor
    name: str = "block0"

    @classmethod
    def from_parameters(cls, params: ParameterSet, index: int, config: ModelConfig) -> "RIDnetBlockParams":
        prefix = f"block{index}"
        embed = [(params[f"{prefix}.embed1.weight"], params[f"{prefix}.embed1.bias"])]
        if f"{prefix}.embed2.weight" in params:
            embed.append((params[f"{prefix}.embed2.weight"], params[f"{prefix}.embed2.bias"]))
        mode = config.graph.theta_mode
        return cls(
            embed=embed,
            local=(params[f"{prefix}.local.weight"], params[f"{prefix}.local.bias"]),
            plane=EccParams.from_mapping(params, f"{prefix}.plane", mode),
            depth=EccParams.from_mapping(params, f"{prefix}.depth", mode),
            alpha_raw=params[f"{prefix}{ALPHA_SUFFIX}"],
            name=prefix,
        )


@dataclass
class GeneratorParams:
    blocks: List[RIDnetBlockParams]
    tail: List[Conv]

    @classmethod
    def from_parameters(cls, params: ParameterSet, config: ModelConfig) -> "GeneratorParams":
        blocks = [RIDnetBlockParams.from_parameters(params, b, config) for b in range(config.blocks)]
        tail = [(params["tail1.weight"], params["tail1.bias"]), (params["tail2.weight"], params["tail2.bias"])]
        return cls(blocks=blocks, tail=tail)


def _to_stack(volume: Tensor) -> Tensor:
    # [C, D, H, W] -> [D, C, H, W]
    return transpose(volume, (1, 0, 2, 3))


def embed(stack: Tensor, block: RIDnetBlockParams, config: ModelConfig) -> Tensor:
    """
    3D-convolutional embedding of a raw [3,H,W] stack or a [3,C,H,W] feature
    stack into [3, channels, H, W]; reflect padding keeps D, H and W.
    """
    if stack.ndim == 3:
        volume = reshape(stack, (1,) + stack.shape)
    elif stack.ndim == 4:
        volume = transpose(stack, (1, 0, 2, 3))
    else:
        raise ShapeError(f"embedding expects [D,H,W] or [D,C,H,W], got {stack.shape}")
    if stack.shape[0] != config.slices:
        raise ShapeError(f"embedding expects {config.slices} slices, got {stack.shape[0]}")
    for weight, bias in block.embed:
        volume = activate(conv3d(volume, weight, bias, Padding.REFLECT), config.activation, config.leaky_slope)
    return _to_stack(volume)


def local_branch(center_map: Tensor, block: RIDnetBlockParams) -> Tensor:
    """p_L: 3x3 reflect-padded convolution of the center features."""
    weight, bias = block.local
    return conv2d(center_map, weight, bias, Padding.REFLECT)


def effective_alpha(alpha_raw: Tensor) -> Tensor:
    return clamp(alpha_raw, 0.0, 1.0)


def fuse(p_nl: Tensor, p_l: Tensor, p_c: Tensor, alpha) -> Tensor:
    """x'' = alpha * (p_NL + p_L) / 2 + (1 - alpha) * p_C."""
    if not (p_nl.shape == p_l.shape == p_c.shape):
        raise ShapeError(f"fusion inputs differ in shape: {p_nl.shape}, {p_l.shape}, {p_c.shape}")
    if not isinstance(alpha, Tensor):
        alpha = float(alpha)
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * ((p_nl + p_l) * 0.5) + (1.0 - alpha) * p_c


def replace_center(stack: Tensor, center: Tensor) -> Tensor:
    """Stack with its middle slice swapped for `center`; other slices pass through."""
    middle = stack.shape[0] // 2
    return concat([stack[:middle], reshape(center, (1,) + center.shape), stack[middle + 1 :]], axis=0)


def ridnet_forward(
    stack: Tensor,
    block: RIDnetBlockParams,
    config: ModelConfig,
    topology: Optional[TopologyCache] = None,
) -> Tensor:
    """
    One RIDnet block.

    Args:
        stack: Raw [3,H,W] slices (first block) or a [3,C,H,W] feature stack
        block: This block's parameters
        config: Model configuration
        topology: When given, graph topologies are built once per block and reused

    Returns:
        Embedded [3,C,H,W] stack whose center slice is the fused x''
    """
    embedded = embed(stack, block, config)
    center, others = split_stack(embedded)
    plane_edges = depth_edges = None
    if topology is not None:
        shape = center.shape[1:]
        plane_edges = topology.get((block.name, "plane", shape), lambda: build_plane_edges(center, config.graph))
        depth_edges = topology.get((block.name, "depth", shape), lambda: build_depth_edges(center, others, config.graph))
    p_nl = plane_gcn_forward(center, config.graph, block.plane, edges=plane_edges)
    p_l = local_branch(center, block)
    p_c = depth_gcn_forward(embedded, config.graph, block.depth, edges=depth_edges)
    fused = fuse(p_nl, p_l, p_c, effective_alpha(block.alpha_raw))
    return replace_center(embedded, fused)


def generator_forward(
    raw_stack: Tensor,
    params: GeneratorParams,
    config: ModelConfig,
    topology: Optional[TopologyCache] = None,
    clamp_output: bool = False,
) -> Tensor:
    """
    Full generator: stacked blocks, tail convolutions (C -> tail_hidden -> 1),
    then the center depth slice [H, W].
    """
    if raw_stack.ndim != 3 or raw_stack.shape[0] != config.slices:
        raise ShapeError(f"generator expects a [{config.slices},H,W] stack, got {raw_stack.shape}")
    features = raw_stack
    for block in params.blocks:
        features = ridnet_forward(features, block, config, topology)
    volume = transpose(features, (1, 0, 2, 3))
    (w1, b1), (w2, b2) = params.tail
    volume = activate(conv3d(volume, w1, b1, Padding.REFLECT), config.activation, config.leaky_slope)
    volume = conv3d(volume, w2, b2, Padding.REFLECT)
    middle = volume.shape[1] // 2
    out = reshape(volume[0, middle], volume.shape[2:])
    if clamp_output:
        out = clamp(out, 0.0, 1.0)
    return out


def receptive_radius(config: ModelConfig) -> int:
    """In-plane pixel radius that can influence one output pixel."""
    reach = max(config.graph.window // 2, config.graph.depth_radius, 1)
    radius = 0
    for b in range(config.blocks):
        radius += (2 if b == 0 else 1) + reach
    return radius + 2


def tile_origins(extent: int, tile: int) -> List[int]:
    if tile >= extent:
        return [0]
    origins = list(range(0, extent - tile, tile))
    origins.append(extent - tile)
    return origins


def reflect_slice_index(index: int, count: int) -> int:
    if count == 1:
        return 0
    period = 2 * (count - 1)
    index = abs(index) % period
    return period - index if index >= count else index


class RIDnetGenerator:
    """
    Generator bound to its configuration and parameters.

    Calling the generator runs a tracked forward pass (for training);
    denoise() and denoise_volume() run untracked inference with outputs
    clamped to [0, 1].
    """

    def __init__(self, config: ModelConfig, params: Optional[ParameterSet] = None, dtype=np.float64):
        self.config = config
        self.params = params if params is not None else init_generator_parameters(config, dtype=dtype)
        self._view = GeneratorParams.from_parameters(self.params, config)

    @property
    def dtype(self):
        return self.params.dtype

    def with_parameters(self, params: ParameterSet) -> "RIDnetGenerator":
        return RIDnetGenerator(self.config, params)

    def __call__(self, raw_stack, topology: Optional[TopologyCache] = None, clamp_output: bool = False) -> Tensor:
        if not isinstance(raw_stack, Tensor):
            raw_stack = Tensor(raw_stack, dtype=self.dtype)
        return generator_forward(raw_stack, self._view, self.config, topology, clamp_output)

    def denoise(self, raw_stack: np.ndarray, tile: Optional[int] = None, halo: Optional[int] = None) -> np.ndarray:
        """
        Untracked inference on one [3,H,W] stack.

        With `tile`, the slice is processed in tile x tile pieces read with a
        halo margin and stitched; otherwise the whole slice is one graph.
        """
        raw_stack = np.asarray(raw_stack, dtype=self.dtype)
        with no_grad():
            if tile is None:
                return self(raw_stack, clamp_output=True).data
            halo = receptive_radius(self.config) if halo is None else halo
            _, h, w = raw_stack.shape
            out = np.empty((h, w), dtype=self.dtype)
            for y0 in tile_origins(h, tile):
                for x0 in tile_origins(w, tile):
                    ys, xs = max(y0 - halo, 0), max(x0 - halo, 0)
                    ye, xe = min(y0 + tile + halo, h), min(x0 + tile + halo, w)
                    piece = self(raw_stack[:, ys:ye, xs:xe], clamp_output=True).data
                    ty, tx = min(tile, h - y0), min(tile, w - x0)
                    out[y0 : y0 + ty, x0 : x0 + tx] = piece[y0 - ys : y0 - ys + ty, x0 - xs : x0 - xs + tx]
            logger.debug("denoised %dx%d slice in %dx%d tiles with halo %d", h, w, tile, tile, halo)
            return out

    def denoise_volume(self, normalized: np.ndarray, tile: Optional[int] = None) -> np.ndarray:
        """Denoise every slice of a normalized [D,H,W] volume; edge slices borrow mirrored neighbours."""
        depth = normalized.shape[0]
        out = np.empty(normalized.shape, dtype=self.dtype)
        for i in range(depth):
            index = [reflect_slice_index(i + k, depth) for k in (-1, 0, 1)]
            out[i] = self.denoise(normalized[index], tile=tile)
        return out
