"""Leader-rooted directed communication graphs.

Node 0 is always the leader. An edge ``(parent, child)`` means the child
receives the parent's state, so it sets ``adjacency[child, parent] = 1``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidEdge, InvalidNode, NotZPattern

M_MATRIX_TOL = 1e-9


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DirectedGraph:
    node_count: int
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(repr=False, compare=False)

    @property
    def follower_count(self) -> int:
        return self.node_count - 1

    def in_neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]


@dataclass(frozen=True)
class LaplacianPartition:
    full_laplacian: np.ndarray
    l1: np.ndarray
    l2: np.ndarray


def build_graph(node_count, edges) -> DirectedGraph:
    """Build a 0/1 directed graph from ``(parent, child)`` pairs.

    A third element is accepted only if it equals 1; other weights are
    rejected since adjacency entries are restricted to {0, 1}.
    """
    node_count = int(node_count)
    if node_count < 2:
        raise InvalidNode(f"need at least 2 nodes (leader + follower), got {node_count}")
    adj = np.zeros((node_count, node_count))
    clean = []
    for edge in edges:
        edge = tuple(edge)
        if len(edge) == 3:
            if edge[2] != 1:
                raise InvalidEdge(f"edge {edge}: weights other than 1 are not supported")
            edge = edge[:2]
        if len(edge) != 2:
            raise InvalidEdge(f"edge {edge} is not a (parent, child) pair")
        parent, child = edge
        for v in (parent, child):
            if isinstance(v, bool) or int(v) != v or not 0 <= v < node_count:
                raise InvalidNode(f"node index {v!r} outside [0, {node_count - 1}]")
        parent, child = int(parent), int(child)
        if parent == child:
            raise InvalidEdge(f"self-loop on node {parent}")
        if child == 0:
            raise InvalidEdge(f"edge {edge}: the leader (node 0) has no in-neighbors")
        adj[child, parent] = 1.0
        clean.append((parent, child))
    return DirectedGraph(node_count, tuple(sorted(set(clean))), _frozen(adj))


def laplacian(g: DirectedGraph) -> LaplacianPartition:
    adj = g.adjacency
    lap = np.diag(adj.sum(axis=1)) - adj
    return LaplacianPartition(_frozen(lap), _frozen(lap[1:, 1:]), _frozen(lap[1:, :1]))


def has_leader_spanning_tree(g: DirectedGraph) -> bool:
    """True iff every follower is reachable from node 0 along directed edges."""
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        # children of v are the nodes whose adjacency row lists v
        for child in np.flatnonzero(g.adjacency[:, v]):
            child = int(child)
            if child not in seen:
                seen.add(child)
                queue.append(child)
    return len(seen) == g.node_count


def is_nonsingular_m_matrix(l1, tol: float = M_MATRIX_TOL) -> bool:
    l1 = np.atleast_2d(np.asarray(l1, dtype=float))
    if l1.shape[0] != l1.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {l1.shape}")
    off = l1 - np.diag(np.diag(l1))
    if np.any(off > 0):
        raise NotZPattern("positive off-diagonal entry")
    return bool(np.min(np.linalg.eigvals(l1).real) > tol)


def default_graph() -> DirectedGraph:
    """Seven-node leader-rooted topology used by the built-in scenarios."""
    edges = [(k, k + 1) for k in range(6)] + [(1, 4), (3, 6)]
    return build_graph(7, edges)
