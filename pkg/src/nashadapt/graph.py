"""Weighted digraphs, their Laplacian and the spectral data the generator gain needs.

Edge convention used throughout the package: ``adjacency[i, j] > 0`` means
agent ``i`` *receives* information from agent ``j`` (``j`` is an in-neighbor
of ``i``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BALANCE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Digraph:
    adjacency: np.ndarray

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"adjacency must be a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("adjacency has non-finite weights")
        if np.any(a < 0):
            raise ValueError("adjacency weights must be nonnegative")
        if np.any(np.diag(a) != 0):
            raise ValueError("self-loops are not allowed (nonzero diagonal)")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def from_edges(cls, n_nodes, edges, undirected=False):
        """Build from ``(receiver, sender[, weight])`` triples, 0-based."""
        a = np.zeros((n_nodes, n_nodes))
        for edge in edges:
            i, j = int(edge[0]), int(edge[1])
            w = float(edge[2]) if len(edge) > 2 else 1.0
            a[i, j] = w
            if undirected:
                a[j, i] = w
        return cls(a)

    def in_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def out_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=0)

    def in_neighbors(self, i):
        return np.flatnonzero(self.adjacency[i] > 0)

    def edges(self):
        """``(receiver, sender, weight)`` triples of all positive-weight edges."""
        rows, cols = np.nonzero(self.adjacency > 0)
        return [(int(i), int(j), float(self.adjacency[i, j])) for i, j in zip(rows, cols)]


@dataclass(frozen=True)
class GraphCertificate:
    weight_balanced: bool
    strongly_connected: bool
    lambda2: float
    lambdaN: float

    @property
    def ok(self) -> bool:
        return self.weight_balanced and self.strongly_connected


def laplacian(g: Digraph) -> np.ndarray:
    """In-degree Laplacian ``D_in - A``; rows sum to zero."""
    a = g.adjacency
    return np.diag(a.sum(axis=1)) - a


def _reachable_from(adj_out, start):
    seen = {start}
    stack = [start]
    while stack:
        node = stack.pop()
        for nxt in adj_out[node]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def is_strongly_connected(g: Digraph) -> bool:
    n = g.n_nodes
    if n == 1:
        return True
    # a[i, j] > 0: information flows j -> i
    forward = [list(np.flatnonzero(g.adjacency[:, j] > 0)) for j in range(n)]
    backward = [list(np.flatnonzero(g.adjacency[i, :] > 0)) for i in range(n)]
    return len(_reachable_from(forward, 0)) == n and len(_reachable_from(backward, 0)) == n


def certify(g: Digraph) -> GraphCertificate:
    lap = laplacian(g)
    balanced = bool(np.all(np.abs(g.in_degree() - g.out_degree()) <= BALANCE_TOL))
    eig = np.linalg.eigvalsh(0.5 * (lap + lap.T))
    n = g.n_nodes
    lam2 = float(eig[1]) if n > 1 else 0.0
    lamN = float(eig[-1])
    # clip round-off below zero; Sym(L) of a balanced graph is PSD
    return GraphCertificate(
        weight_balanced=balanced,
        strongly_connected=is_strongly_connected(g),
        lambda2=max(lam2, 0.0),
        lambdaN=max(lamN, 0.0),
    )


# -- presets -----------------------------------------------------------------

def cycle(n: int, weight: float = 1.0) -> Digraph:
    """Directed ring where agent ``i`` receives from agent ``i+1`` (mod n)."""
    if n < 2:
        raise ValueError("a cycle needs at least 2 nodes")
    a = np.zeros((n, n))
    for i in range(n):
        a[i, (i + 1) % n] = weight
    return Digraph(a)


# 1-based node pairs as drawn in the example figures
SENSOR_EDGES = ((1, 5), (5, 3), (3, 2), (5, 4), (3, 4))
VANDERPOL_RING = ((1, 2), (2, 3), (3, 4), (4, 1))  # (sender, receiver)
VANDERPOL_CHORDS = ((1, 3), (2, 4))


def sensor_graph() -> Digraph:
    """Undirected 5-node graph of the mobile-robot example."""
    return Digraph.from_edges(5, [(i - 1, j - 1) for i, j in SENSOR_EDGES], undirected=True)


def vanderpol_graph() -> Digraph:
    """4-node directed ring with two undirected chords."""
    a = np.zeros((4, 4))
    for sender, receiver in VANDERPOL_RING:
        a[receiver - 1, sender - 1] = 1.0
    for i, j in VANDERPOL_CHORDS:
        a[i - 1, j - 1] = a[j - 1, i - 1] = 1.0
    return Digraph(a)


PRESETS = {
    "cycle": cycle,
    "undirected-path-with-chords": sensor_graph,
    "sensor": sensor_graph,
    "ring-with-chords": vanderpol_graph,
    "vanderpol": vanderpol_graph,
}
