"""
Reverse-mode gradient computation over the recorded tape.
"""

import logging
from typing import Dict, List, Mapping, Optional, Sequence

import networkx as nx
import numpy as np

from ..errors import ShapeError
from .tape import TapeNode, enable_grad, no_grad
from .tensor import Tensor, add, ones_like, zeros

logger = logging.getLogger(__name__)

GradMap = Dict[str, Tensor]


def tape_graph(root: Tensor) -> nx.DiGraph:
    """
    Collect the tape reachable from `root` as a DiGraph (edges point from
    producer node to consumer node).
    """
    graph = nx.DiGraph()
    if root.node is None:
        return graph
    graph.add_node(root.node)
    stack = [root.node]
    while stack:
        node = stack.pop()
        for inp in node.inputs:
            parent = inp.node
            if parent is None or not inp.requires_grad:
                continue
            is_new = parent not in graph
            graph.add_edge(parent, node)
            if is_new:
                stack.append(parent)
    return graph


def _schedule(graph: nx.DiGraph) -> List[TapeNode]:
    # reverse topological order; ties go to the most recently created node
    return list(nx.lexicographical_topological_sort(graph.reverse(copy=False), key=lambda n: -n.seq))


def _accumulate(current: Optional[Tensor], update: Tensor) -> Tensor:
    return update if current is None else add(current, update)


def _run_backward(loss: Tensor, create_graph: bool) -> Dict[int, Tensor]:
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    leaf_grads: Dict[int, Tensor] = {}
    if not loss.requires_grad:
        return leaf_grads
    seed = ones_like(loss)
    if loss.node is None:
        leaf_grads[id(loss)] = seed
        return leaf_grads

    order = _schedule(tape_graph(loss))
    logger.debug("backward over %d tape nodes (create_graph=%s)", len(order), create_graph)
    mode = enable_grad() if create_graph else no_grad()
    with mode:
        node_grads: Dict[TapeNode, Tensor] = {loss.node: seed}
        for node in order:
            g = node_grads.pop(node, None)
            if g is None:
                continue
            for inp, grad_in in zip(node.inputs, node.vjp(g)):
                if grad_in is None or not inp.requires_grad:
                    continue
                if grad_in.shape != inp.shape:
                    raise ShapeError(
                        f"backward rule of '{node.op}' produced shape {grad_in.shape} "
                        f"for an input of shape {inp.shape}"
                    )
                if inp.node is not None:
                    node_grads[inp.node] = _accumulate(node_grads.get(inp.node), grad_in)
                else:
                    leaf_grads[id(inp)] = _accumulate(leaf_grads.get(id(inp)), grad_in)
    return leaf_grads


def grad(loss: Tensor, inputs: Sequence[Tensor], create_graph: bool = False) -> List[Tensor]:
    """
    Gradients of a scalar `loss` with respect to leaf tensors.

    Args:
        loss: Scalar tensor produced by tracked operations
        inputs: Leaf tensors (requires_grad=True, not produced by an op)
        create_graph: Record the backward pass so the result is differentiable

    Returns:
        One gradient per input; inputs the loss does not reach get zeros
    """
    for t in inputs:
        if not t.is_leaf:
            raise ValueError("grad() targets must be leaf tensors")
    leaf_grads = _run_backward(loss, create_graph)
    return [leaf_grads.get(id(t), zeros(t.shape, dtype=t.dtype)) for t in inputs]


def backward(loss: Tensor, params: Optional[Mapping[str, Tensor]] = None, create_graph: bool = False) -> GradMap:
    """
    Compute dloss/dparam for every named parameter.

    Args:
        loss: Scalar tensor produced by tracked operations
        params: Name -> leaf tensor mapping; when omitted, every named leaf
            reachable from the loss is reported
        create_graph: Record the backward pass for higher-order gradients

    Returns:
        GradMap with one entry per parameter; unreachable parameters map to zeros
    """
    leaf_grads = _run_backward(loss, create_graph)
    if params is None:
        params = _named_leaves(loss)
    grads: GradMap = {}
    for name, param in params.items():
        g = leaf_grads.get(id(param))
        grads[name] = g if g is not None else zeros(param.shape, dtype=param.dtype)
    return grads


def _named_leaves(loss: Tensor) -> Dict[str, Tensor]:
    found: Dict[str, Tensor] = {}
    if loss.node is None:
        if loss.name:
            found[loss.name] = loss
        return found
    for node in sorted(tape_graph(loss).nodes, key=lambda n: n.seq):
        for inp in node.inputs:
            if inp.is_leaf and inp.requires_grad and inp.name:
                found.setdefault(inp.name, inp)
    return found


def grad_norm(grads: Mapping[str, Tensor]) -> float:
    """Global L2 norm of a GradMap, accumulated in float64."""
    return float(np.sqrt(sum(float(np.sum(g.data.astype(np.float64) ** 2)) for g in grads.values())))
