from .ecc import EccParams, ecc_aggregate, edge_network, edge_terms, theta
from .edges import (
    EdgeSet,
    TopologyCache,
    build_depth_edges,
    build_plane_edges,
    edge_weights,
    feature_distance,
    knn_neighbors,
    plane_offsets,
)
from .layers import depth_gcn_forward, plane_gcn_forward, split_stack

__all__ = [
    "EccParams",
    "EdgeSet",
    "TopologyCache",
    "build_depth_edges",
    "build_plane_edges",
    "depth_gcn_forward",
    "ecc_aggregate",
    "edge_network",
    "edge_terms",
    "edge_weights",
    "feature_distance",
    "knn_neighbors",
    "plane_gcn_forward",
    "plane_offsets",
    "split_stack",
    "theta",
]
