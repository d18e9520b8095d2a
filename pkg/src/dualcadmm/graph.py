"""
Undirected communication graphs.

Random streams: every randomized routine in this package takes a seed and
derives independent generators with ``numpy.random.SeedSequence(seed).spawn``.
Child 0 drives the graph, child 1 drives problem data (see :func:`streams`).
Generators are ``PCG64`` through ``numpy.random.default_rng``, so experiments
replay exactly across platforms and worker counts.
"""

from __future__ import annotations

from collections import deque
from functools import cached_property

import numpy as np

GRAPH_STREAM = 0
DATA_STREAM = 1


class GraphError(ValueError):
    pass


def streams(seed: int):
    """Return ``(graph_rng, data_rng)`` for an experiment seed."""
    g, d = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(g), np.random.default_rng(d)


class Graph:
    """Connected undirected graph without self-loops or duplicate edges.

    Parameters
    ----------
    n_nodes : int
        Number of nodes, labelled ``0 .. n_nodes - 1``.
    edges : iterable of pairs
        Unordered node pairs.
    require_connected : bool
        Reject disconnected graphs (the default).  Only tests build
        disconnected graphs on purpose.
    """

    def __init__(self, n_nodes, edges, require_connected=True):
        self.n_nodes = int(n_nodes)
        if self.n_nodes < 1:
            raise GraphError("graph needs at least one node")
        seen = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop on node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise GraphError(f"edge ({i}, {j}) references a node outside 0..{self.n_nodes - 1}")
            e = (min(i, j), max(i, j))
            if e in seen:
                raise GraphError(f"duplicate edge {e}")
            seen.add(e)
        self.edges = frozenset(seen)
        if require_connected and not is_connected(self):
            raise GraphError(
                "communication graph is not connected: every agent must be "
                "reachable from every other through undirected edges"
            )

    @cached_property
    def _adjacency(self):
        adj = [[] for _ in range(self.n_nodes)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return tuple(tuple(sorted(a)) for a in adj)

    def neighbors(self, i):
        self._check(i)
        return list(self._adjacency[i])

    def degree(self, i):
        self._check(i)
        return len(self._adjacency[i])

    def _check(self, i):
        if not 0 <= i < self.n_nodes:
            raise GraphError(f"node {i} out of range 0..{self.n_nodes - 1}")

    @property
    def n_edges(self):
        return len(self.edges)

    def sorted_edges(self):
        return sorted(self.edges)

    def to_dict(self):
        return {"n": self.n_nodes, "edges": [list(e) for e in self.sorted_edges()]}

    @classmethod
    def from_dict(cls, data):
        return cls(data["n"], [tuple(e) for e in data.get("edges", [])])

    def __eq__(self, other):
        return isinstance(other, Graph) and (self.n_nodes, self.edges) == (other.n_nodes, other.edges)

    def __hash__(self):
        return hash((self.n_nodes, self.edges))

    def __repr__(self):
        return f"Graph(n_nodes={self.n_nodes}, edges={self.sorted_edges()})"


def neighbors(g: Graph, i: int) -> list:
    return g.neighbors(i)


def degree(g: Graph, i: int) -> int:
    return g.degree(i)


def is_connected(g: Graph) -> bool:
    adj = [[] for _ in range(g.n_nodes)]
    for i, j in g.edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    queue = deque([0])
    while queue:
        for j in adj[queue.popleft()]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == g.n_nodes


def small_world(n: int, m_edges: int, rng_seed=None, rng=None) -> Graph:
    """Random cycle over a permutation of the nodes plus uniform extra edges.

    The first ``n`` edges form a Hamiltonian cycle over a uniformly random
    node order; the remaining ``m_edges - n`` edges are drawn uniformly
    without replacement from the pairs not yet present (rejection sampling).
    Pass either an integer seed, which is routed through the graph stream of
    :func:`streams`, or a ready ``numpy.random.Generator``.
    """
    if n < 3:
        raise GraphError("small-world graph needs at least 3 nodes")
    if not n <= m_edges <= n * (n - 1) // 2:
        raise GraphError(f"edge count {m_edges} infeasible for {n} nodes (need {n}..{n * (n - 1) // 2})")
    if rng is None:
        rng = streams(0 if rng_seed is None else rng_seed)[GRAPH_STREAM]
    order = rng.permutation(n)
    edges = set()
    for k in range(n):
        i, j = int(order[k]), int(order[(k + 1) % n])
        edges.add((min(i, j), max(i, j)))
    while len(edges) < m_edges:
        i, j = (int(v) for v in rng.integers(0, n, size=2))
        if i == j:
            continue
        e = (min(i, j), max(i, j))
        if e not in edges:
            edges.add(e)
    return Graph(n, edges)


def path_graph(n):
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n):
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n):
    return Graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def star_graph(leaves):
    return Graph(leaves + 1, [(0, j) for j in range(1, leaves + 1)])
