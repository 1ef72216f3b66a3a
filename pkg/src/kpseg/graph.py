"""Region adjacency graph over superpixels and shortest-path distance transforms."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

EDGE_EPSILON = 1e-3  # keeps zero-gradient boundaries traversable at small positive cost
FLOYD_WARSHALL_CAP = 2000


class CapacityError(ValueError):
    """The graph is too large for an all-pairs computation."""


@dataclass
class Rag:
    """Undirected region adjacency graph with positive edge weights.

    ``edges`` holds one (u, v, weight) triple per unordered pair with u < v;
    ``adjacency`` lists (neighbor, weight) per node in edge order.
    """

    node_count: int
    edges: list[tuple[int, int, float]]
    adjacency: list[list[tuple[int, float]]] = field(init=False, repr=False)

    def __post_init__(self):
        if self.node_count < 0:
            raise ValueError("node_count must be non-negative")
        adjacency: list[list[tuple[int, float]]] = [[] for _ in range(self.node_count)]
        seen = set()
        for u, v, weight in self.edges:
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise ValueError(f"edge ({u}, {v}) references an unknown node")
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            if u > v:
                u, v = v, u
            if (u, v) in seen:
                raise ValueError(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
            if not weight > 0:
                raise ValueError(f"edge ({u}, {v}) has non-positive weight {weight}")
            adjacency[u].append((v, weight))
            adjacency[v].append((u, weight))
        self.adjacency = adjacency


def build_rag(labels: np.ndarray, gradients: np.ndarray, epsilon: float = EDGE_EPSILON) -> Rag:
    """Build the 4-adjacency RAG of a superpixel labeling.

    The weight of edge (u, v) is epsilon plus the mean, over all 4-adjacent
    pixel pairs (p, q) straddling the u/v boundary, of
    (gradient(p) + gradient(q)) / 2.  A boundary across a constant image thus
    costs exactly epsilon, and one across a unit step costs epsilon plus the
    step's Sobel magnitude.
    """
    labels = np.asarray(labels)
    gradients = np.asarray(gradients, dtype=np.float64)
    if labels.shape != gradients.shape:
        raise ValueError(f"labeling {labels.shape} and gradients {gradients.shape} disagree")
    if labels.ndim != 2:
        raise ValueError("labeling must be 2-D")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if labels.size == 0:
        return Rag(node_count=0, edges=[])
    if labels.min() < 0:
        raise ValueError("labels must be non-negative")
    node_count = int(labels.max()) + 1

    pair_u = []
    pair_v = []
    pair_g = []
    for a, b, ga, gb in (
        (labels[:, :-1], labels[:, 1:], gradients[:, :-1], gradients[:, 1:]),
        (labels[:-1, :], labels[1:, :], gradients[:-1, :], gradients[1:, :]),
    ):
        cross = a != b
        if cross.any():
            u = a[cross]
            v = b[cross]
            pair_u.append(np.minimum(u, v))
            pair_v.append(np.maximum(u, v))
            pair_g.append((ga[cross] + gb[cross]) * 0.5)

    if not pair_u:
        return Rag(node_count=node_count, edges=[])

    u = np.concatenate(pair_u).astype(np.int64)
    v = np.concatenate(pair_v).astype(np.int64)
    g = np.concatenate(pair_g)
    key = u * node_count + v
    uniq, inverse = np.unique(key, return_inverse=True)
    sums = np.bincount(inverse, weights=g)
    counts = np.bincount(inverse)
    weights = epsilon + sums / counts
    edges = [
        (int(k // node_count), int(k % node_count), float(wt))
        for k, wt in zip(uniq, weights)
    ]
    return Rag(node_count=node_count, edges=edges)


def floyd_warshall(rag: Rag, node_cap: int = FLOYD_WARSHALL_CAP) -> np.ndarray:
    """All-pairs shortest path matrix; infinities mark disconnected pairs.

    Refuses graphs above ``node_cap`` nodes (the matrix and the triple loop
    grow cubically); use seeded_distance for a handful of sources instead.
    """
    n = rag.node_count
    if n > node_cap:
        raise CapacityError(
            f"graph has {n} nodes, above the all-pairs cap of {node_cap}; "
            "use seeded_distance for large graphs"
        )
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for u, v, w in rag.edges:
        dist[u, v] = dist[v, u] = w
    for k in range(n):
        np.minimum(dist, dist[:, k, None] + dist[None, k, :], out=dist)
    return dist


def seeded_distance(rag: Rag, seeds) -> np.ndarray:
    """Multi-source shortest-path distances from a seed set.

    Best-first expansion with ties popped in node-id order.  Agrees with the
    minimum over seed rows of floyd_warshall up to float summation order.
    """
    seed_list = sorted({int(s) for s in seeds})
    if not seed_list:
        raise ValueError("seed set must be non-empty")
    if seed_list[0] < 0 or seed_list[-1] >= rag.node_count:
        raise ValueError(f"seed out of range for a {rag.node_count}-node graph")
    dist = np.full(rag.node_count, np.inf)
    done = np.zeros(rag.node_count, dtype=bool)
    heap: list[tuple[float, int]] = [(0.0, s) for s in seed_list]
    for s in seed_list:
        dist[s] = 0.0
    adjacency = rag.adjacency
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in adjacency[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist
