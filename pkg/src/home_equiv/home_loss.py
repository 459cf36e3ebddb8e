"""Equivariance objectives over the neighbor graph.

The main loss sums, over time steps, views, and neighboring views, the
squared Frobenius norm of (own representation, transposed) minus (the
neighbor's transposed representation mapped through the neighbor-to-view
homography). Ordered pairs are both counted; the sum is raw (no
normalization by time steps, views, or channels).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GraphInvariantViolation, InconsistentShapes, NegativeAlpha
from .geometry import Homography, compose, invert
from .tensor import Graph
from .vn import feature_to_planes, planes_to_feature

INVERSE_CONSISTENCY_TOL = 1e-8


@dataclass
class NeighborGraph:
    """Views, adjacency sets, and per-edge homographies.

    h maps (j, i) to the homography taking view j coordinates to view i
    coordinates; both directions of every edge are stored.
    """

    n_views: int
    neighbors: list
    h: dict

    def validate(self) -> None:
        if len(self.neighbors) != self.n_views:
            raise GraphInvariantViolation(
                f"{len(self.neighbors)} neighbor sets for {self.n_views} views")
        eye = np.eye(3)
        for i in range(self.n_views):
            for j in self.neighbors[i]:
                if j == i:
                    raise GraphInvariantViolation(f"self edge at view {i}")
                if not (0 <= j < self.n_views):
                    raise GraphInvariantViolation(f"neighbor {j} out of range")
                if i not in self.neighbors[j]:
                    raise GraphInvariantViolation(f"asymmetric edge ({i}, {j})")
                if (i, j) not in self.h or (j, i) not in self.h:
                    raise GraphInvariantViolation(f"missing homography for edge ({i}, {j})")
                round_trip = compose(self.h[(i, j)], self.h[(j, i)]).m
                if np.max(np.abs(round_trip - eye)) > INVERSE_CONSISTENCY_TOL:
                    raise GraphInvariantViolation(
                        f"edge ({i}, {j}) homographies are not mutual inverses")


def build_chain_graph(homographies) -> NeighborGraph:
    """Linear chain over len(homographies)+1 views.

    homographies[k] maps view k coordinates to view k+1 coordinates;
    reverse edges are filled with the inverse. Non-adjacent pairs get no
    edge: their correspondence is implied by composition along the chain.
    """
    n = len(homographies) + 1
    neighbors = [set() for _ in range(n)]
    h = {}
    for k, hom in enumerate(homographies):
        neighbors[k].add(k + 1)
        neighbors[k + 1].add(k)
        h[(k, k + 1)] = hom
        h[(k + 1, k)] = invert(hom)
    graph = NeighborGraph(n, neighbors, h)
    graph.validate()
    return graph


def home_loss_graph(g: Graph, plane_nodes, graph: NeighborGraph, n: int) -> int:
    """Tape version of the loss; plane_nodes[i] is a (rows, 3n) node.

    Rows act as the time dimension: the Frobenius sum runs over all rows,
    so a (T, 3n) stack per view yields the full double sum over t and
    ordered neighbor pairs. Returns the scalar loss node.
    """
    slices = []
    for node in plane_nodes:
        slices.append(tuple(g.slice_cols(node, c * n, (c + 1) * n) for c in range(3)))

    total = None
    for i in range(graph.n_views):
        for j in sorted(graph.neighbors[i]):
            hm = graph.h[(j, i)].m
            for r in range(3):
                combo = g.add(g.add(g.scale(slices[j][0], hm[r, 0]),
                                    g.scale(slices[j][1], hm[r, 1])),
                              g.scale(slices[j][2], hm[r, 2]))
                term = g.frobenius_sq(g.sub(slices[i][r], combo))
                total = term if total is None else g.add(total, term)
    if total is None:
        total = g.leaf(np.zeros(()))
    return total


def home_loss(reps, graph: NeighborGraph):
    """Loss and gradients for explicit per-view representations.

    reps[t][i] is the (n, 3) representation of view i at time t. Returns
    (loss value, gradients) with gradients[t][i] shaped like reps[t][i].
    """
    graph.validate()
    if not reps or any(len(frame) != graph.n_views for frame in reps):
        raise InconsistentShapes("every time step must carry every view")
    n = np.asarray(reps[0][0]).shape[0]
    for frame in reps:
        for v in frame:
            v = np.asarray(v)
            if v.shape != (n, 3):
                raise InconsistentShapes(f"expected ({n}, 3) representations, got {v.shape}")

    g = Graph()
    leaves = []
    for i in range(graph.n_views):
        stack = np.vstack([feature_to_planes(reps[t][i]) for t in range(len(reps))])
        leaves.append(g.leaf(stack))
    loss = home_loss_graph(g, leaves, graph, n)
    grads = g.backward(loss, wrt=leaves)
    per_view = [grads[leaf] for leaf in leaves]
    out = [[planes_to_feature(per_view[i][t]) for i in range(graph.n_views)]
           for t in range(len(reps))]
    return float(g.value(loss)), out


def total_loss(clf: float, fr: float, alpha: float) -> float:
    """Joint objective: classification loss plus alpha times the equivariance loss."""
    if alpha < 0:
        raise NegativeAlpha(f"alpha must be nonnegative, got {alpha}")
    return clf + alpha * fr
