"""
Similarity-graph construction over feature maps.

A plane graph connects every pixel of a [C,H,W] map to its K-1 nearest
candidates (in feature space) inside a d x d window, skipping the pixel itself
and its 8 direct neighbours. A depth graph connects every pixel of the center
slice to the nearest vertices of the other slices of a stack. Both produce an
EdgeSet; the selection itself is not differentiated.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Hashable, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ..errors import GraphConstructionError, ShapeError
from ..models.config import GraphConfig

logger = logging.getLogger(__name__)

# pixels per chunk when scoring candidates; bounds the [C, chunk, candidates] buffer
SELECT_CHUNK = 4096


@dataclass
class EdgeSet:
    """
    Per-pixel neighbour lists of a similarity graph.

    Rows are center pixels in row-major order. `neighbors` holds flat source
    indices (into the same map for plane graphs, into the stacked other
    slices for depth graphs). Slots with mask False are padding left by a
    deficit of candidates and carry zero weight.
    """

    neighbors: np.ndarray  # [P, N] int64
    mask: np.ndarray  # [P, N] bool
    distances: np.ndarray  # [P, N] e_ij; inf on padding
    weights: np.ndarray  # [P, N] a_ij; 0 on padding
    shape: Tuple[int, int]
    deficit: np.ndarray = field(default=None)  # [P] missing neighbours per pixel

    def __post_init__(self):
        if self.deficit is None:
            self.deficit = self.neighbors.shape[1] - self.mask.sum(axis=1)

    @property
    def num_pixels(self) -> int:
        return int(self.neighbors.shape[0])

    @property
    def num_neighbors(self) -> int:
        return int(self.neighbors.shape[1])

    @property
    def total_deficit(self) -> int:
        return int(self.deficit.sum())

    def row(self, pixel: int) -> np.ndarray:
        """Valid neighbour indices of one center pixel."""
        return self.neighbors[pixel][self.mask[pixel]]

    def weight_sums(self) -> np.ndarray:
        return np.where(self.mask, self.weights, 0.0).sum(axis=1)

    def with_values(self, distances: np.ndarray, weights: np.ndarray) -> "EdgeSet":
        """Same topology, new e_ij / a_ij (e.g. after a forward pass on other features)."""
        return replace(self, distances=np.asarray(distances), weights=np.asarray(weights))

    def to_networkx(self) -> nx.DiGraph:
        """
        Export as a DiGraph with edges neighbour -> center carrying
        `distance` and `weight` attributes.
        """
        graph = nx.DiGraph(shape=self.shape)
        graph.add_nodes_from(range(self.num_pixels))
        rows, slots = np.nonzero(self.mask)
        graph.add_edges_from(
            (int(self.neighbors[i, k]), int(i), {"distance": float(self.distances[i, k]), "weight": float(self.weights[i, k])})
            for i, k in zip(rows, slots)
        )
        return graph


def feature_distance(v_i, v_j) -> float:
    """e_ij = ||v_i - v_j||^2 / sqrt(C)."""
    v_i = np.asarray(getattr(v_i, "data", v_i), dtype=np.float64).reshape(-1)
    v_j = np.asarray(getattr(v_j, "data", v_j), dtype=np.float64).reshape(-1)
    if v_i.shape != v_j.shape or v_i.size == 0:
        raise ShapeError(f"feature vectors must have equal non-zero length, got {v_i.size} and {v_j.size}")
    diff = v_i - v_j
    return float(np.sum(diff * diff) / np.sqrt(v_i.size))


def edge_weights(distances: Sequence[float]) -> np.ndarray:
    """a_ij = exp(-e_ij) / sum_k exp(-e_ik), evaluated with max-subtraction."""
    e = np.asarray(distances, dtype=np.float64)
    if e.size == 0:
        raise GraphConstructionError("edge_weights needs at least one distance")
    if not np.all(np.isfinite(e)) or np.any(e < 0):
        raise GraphConstructionError("distances must be finite and non-negative")
    z = -e
    z = np.exp(z - z.max())
    return z / z.sum()


def plane_offsets(window: int) -> np.ndarray:
    """(dy, dx) of the d x d window minus the center and its 8 adjacent pixels."""
    r = window // 2
    return np.array(
        [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if max(abs(dy), abs(dx)) > 1],
        dtype=np.int64,
    )


def depth_offsets(radius: int) -> np.ndarray:
    r = int(radius)
    return np.array([(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)], dtype=np.int64)


def _candidates(shape: Tuple[int, int], offsets: np.ndarray, layers: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Candidate flat source indices [P, layers * len(offsets)] and their in-bounds mask."""
    h, w = shape
    plane = h * w
    ys, xs = np.divmod(np.arange(plane), w)
    ny = ys[:, None] + offsets[None, :, 0]
    nx_ = xs[:, None] + offsets[None, :, 1]
    valid = (ny >= 0) & (ny < h) & (nx_ >= 0) & (nx_ < w)
    flat = np.where(valid, ny * w + nx_, 0)
    index = np.concatenate([flat + layer * plane for layer in range(layers)], axis=1)
    return index, np.tile(valid, (1, layers))


def _select(center: np.ndarray, source: np.ndarray, index: np.ndarray, valid: np.ndarray, count: int, shape) -> EdgeSet:
    """Keep the `count` smallest-distance candidates per pixel, ties to the smaller source index."""
    channels, pixels = center.shape
    scale = np.sqrt(channels)
    neighbors = np.zeros((pixels, count), dtype=np.int64)
    distances = np.full((pixels, count), np.inf)
    for lo in range(0, pixels, SELECT_CHUNK):
        hi = min(lo + SELECT_CHUNK, pixels)
        idx = index[lo:hi]
        diff = source[:, idx] - center[:, lo:hi, None]
        e = (diff * diff).sum(axis=0) / scale
        e = np.where(valid[lo:hi], e, np.inf)
        order = np.lexsort((idx, e), axis=-1)[:, :count]
        neighbors[lo:hi] = np.take_along_axis(idx, order, axis=1)
        distances[lo:hi] = np.take_along_axis(e, order, axis=1)
    mask = np.isfinite(distances)
    neighbors = np.where(mask, neighbors, 0)
    if not mask.any(axis=1).all():
        raise GraphConstructionError(f"some pixels of a {shape} map have no graph candidates")
    z = np.where(mask, -distances, -np.inf)
    z = np.exp(z - z.max(axis=1, keepdims=True))
    weights = z / z.sum(axis=1, keepdims=True)
    edges = EdgeSet(neighbors=neighbors, mask=mask, distances=distances, weights=weights, shape=tuple(shape))
    if edges.total_deficit:
        logger.debug("graph on %s: %d neighbour slots left empty by border clipping", shape, edges.total_deficit)
    return edges


def _as_array(feature_map) -> np.ndarray:
    return np.asarray(getattr(feature_map, "data", feature_map), dtype=np.float64)


def build_plane_edges(feature_map, config: GraphConfig) -> EdgeSet:
    """Plane graph of a [C,H,W] map: K-1 nearest window candidates per pixel."""
    data = _as_array(feature_map)
    if data.ndim != 3:
        raise ShapeError(f"plane graph expects a [C,H,W] map, got shape {data.shape}")
    c, h, w = data.shape
    flat = data.reshape(c, h * w)
    index, valid = _candidates((h, w), plane_offsets(config.window))
    return _select(flat, flat, index, valid, config.k_neighbors - 1, (h, w))


def build_depth_edges(center_map, other_slices, config: GraphConfig) -> EdgeSet:
    """
    Depth graph: each center pixel picks M-1 vertices among the other slices,
    searched co-located (radius 0) or inside a (2r+1)^2 window.
    """
    center = _as_array(center_map)
    others = _as_array(other_slices)
    if others.ndim != 4 or others.shape[1:] != center.shape:
        raise ShapeError(f"depth graph expects [M-1,C,H,W] neighbours of a {center.shape} map, got {others.shape}")
    layers, c, h, w = others.shape
    source = others.transpose(1, 0, 2, 3).reshape(c, layers * h * w)
    index, valid = _candidates((h, w), depth_offsets(config.depth_radius), layers)
    return _select(center.reshape(c, h * w), source, index, valid, config.depth_vertices - 1, (h, w))


def knn_neighbors(feature_map, center: Tuple[int, int], config: GraphConfig) -> Tuple[np.ndarray, int]:
    """
    Neighbours of one pixel of a [C,H,W] map.

    Returns:
        (flat indices of the selected neighbours in selection order, deficit)
    """
    data = _as_array(feature_map)
    c, h, w = data.shape
    row, col = center
    if not (0 <= row < h and 0 <= col < w):
        raise GraphConstructionError(f"center {center} lies outside a {h}x{w} map")
    offsets = plane_offsets(config.window)
    ny, nx_ = row + offsets[:, 0], col + offsets[:, 1]
    keep = (ny >= 0) & (ny < h) & (nx_ >= 0) & (nx_ < w)
    index = (ny * w + nx_)[keep][None, :]
    flat = data.reshape(c, h * w)
    pixel = row * w + col
    edges = _select(flat[:, [pixel]], flat, index, np.ones_like(index, dtype=bool), config.k_neighbors - 1, (1, 1))
    return edges.row(0), int(edges.deficit[0])


class TopologyCache:
    """
    Build-once store of graph topologies.

    While a cache is passed to the model, each (block, branch, shape) key keeps
    the neighbour lists from its first build; weights are still recomputed
    from the current features. Finite-difference audits rely on this so that
    perturbations never swap neighbours.
    """

    def __init__(self):
        self._store: Dict[Hashable, EdgeSet] = {}

    def get(self, key: Hashable, build: Callable[[], EdgeSet]) -> EdgeSet:
        if key not in self._store:
            self._store[key] = build()
        return self._store[key]

    def peek(self, key: Hashable) -> Optional[EdgeSet]:
        return self._store.get(key)

    def clear(self) -> None:
        self._store.clear()

    def __len__(self) -> int:
        return len(self._store)
