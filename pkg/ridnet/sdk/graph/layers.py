"""
Plane (non-local, within the center slice) and depth (context, across
slices) graph convolutions.
"""

import logging
from typing import Optional, Tuple, Union

import numpy as np

from ..autodiff import Tensor, concat
from ..autodiff.tensor import reshape, transpose
from ..errors import GraphConstructionError, ShapeError
from ..models.config import GraphConfig
from .ecc import EccParams, ecc_aggregate, edge_terms
from .edges import EdgeSet, build_depth_edges, build_plane_edges

logger = logging.getLogger(__name__)

GraphOutput = Union[Tensor, Tuple[Tensor, EdgeSet]]


def plane_gcn_forward(
    center_map: Tensor,
    config: GraphConfig,
    params: EccParams,
    edges: Optional[EdgeSet] = None,
    return_edges: bool = False,
) -> GraphOutput:
    """
    Non-local aggregation p_NL over the plane graph of `center_map`.

    Args:
        center_map: Features of the slice being denoised, [C, H, W]
        config: Window extent and K
        params: Edge network of this branch
        edges: Precomputed topology to reuse instead of running KNN
        return_edges: Also return the EdgeSet with this pass's e_ij / a_ij

    Returns:
        p_NL [C, H, W], optionally with the EdgeSet
    """
    if center_map.ndim != 3:
        raise ShapeError(f"plane graph convolution expects [C,H,W], got {center_map.shape}")
    c, h, w = center_map.shape
    if edges is None:
        edges = build_plane_edges(center_map, config)
    elif edges.shape != (h, w):
        raise ShapeError(f"edge set built for {edges.shape} reused on a {(h, w)} map")
    flat = reshape(center_map, (c, h * w))
    vj, distances, weights = edge_terms(flat, flat, edges)
    out = reshape(ecc_aggregate(vj, weights, edges.mask, params), (c, h, w))
    if return_edges:
        return out, edges.with_values(distances.data, weights.data)
    return out


def split_stack(stack: Tensor) -> Tuple[Tensor, Tensor]:
    """Center slice [C,H,W] and the remaining slices [M-1,C,H,W] of a [M,C,H,W] stack."""
    m = stack.shape[0]
    middle = m // 2
    center = reshape(stack[middle : middle + 1], stack.shape[1:])
    others = concat([stack[:middle], stack[middle + 1 :]], axis=0)
    return center, others


def depth_gcn_forward(
    stack: Tensor,
    config: GraphConfig,
    params: EccParams,
    edges: Optional[EdgeSet] = None,
    return_edges: bool = False,
) -> GraphOutput:
    """
    Context aggregation p_C: the center slice of a [M,C,H,W] stack gathers
    from M-1 vertices of the other slices.
    """
    if stack.ndim != 4:
        raise ShapeError(f"depth graph convolution expects [M,C,H,W], got {stack.shape}")
    m, c, h, w = stack.shape
    if m < 2:
        raise GraphConstructionError(f"depth graph needs at least 2 slices, got {m}")
    if m != config.depth_vertices:
        raise ShapeError(f"stack has {m} slices but the depth graph is configured for M={config.depth_vertices}")
    center, others = split_stack(stack)
    if edges is None:
        edges = build_depth_edges(center, others, config)
    elif edges.shape != (h, w):
        raise ShapeError(f"edge set built for {edges.shape} reused on a {(h, w)} map")
    source = reshape(transpose(others, (1, 0, 2, 3)), (c, (m - 1) * h * w))
    vj, distances, weights = edge_terms(reshape(center, (c, h * w)), source, edges)
    out = reshape(ecc_aggregate(vj, weights, edges.mask, params), (c, h, w))
    if return_edges:
        return out, edges.with_values(distances.data, weights.data)
    return out
