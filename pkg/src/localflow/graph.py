"""Directed graphs, incidence/adjacency matrices, distances, balls and subgraphs.

Vertices and edges are identified by their position (``0..n-1`` and
``0..m-1``); optional labels are kept only for I/O.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from localflow._backend import kernels


class GraphError(ValueError):
    """Invalid graph structure (self-loop, multi-edge, disconnected, ...)."""


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """Simple directed graph whose undirected version is connected.

    Parameters
    ----------
    n_vertices : int
    tails, heads : sequences of int
        Edge ``e`` is ``(tails[e], heads[e])``.
    vertex_labels, edge_labels : optional sequences
        Ids used by the JSON format; default to positions.
    """

    n_vertices: int
    tails: np.ndarray
    heads: np.ndarray
    vertex_labels: tuple = None
    edge_labels: tuple = None
    _dist_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        tails = np.asarray(self.tails, dtype=np.int64).copy()
        heads = np.asarray(self.heads, dtype=np.int64).copy()
        tails.flags.writeable = False
        heads.flags.writeable = False
        object.__setattr__(self, "tails", tails)
        object.__setattr__(self, "heads", heads)
        n = int(self.n_vertices)
        object.__setattr__(self, "n_vertices", n)
        if n < 1:
            raise GraphError("graph needs at least one vertex")
        if tails.shape != heads.shape or tails.ndim != 1:
            raise GraphError("tails and heads must be 1-d and of equal length")
        if len(tails) and (tails.min() < 0 or heads.min() < 0
                           or tails.max() >= n or heads.max() >= n):
            raise GraphError("edge endpoint out of range")
        if np.any(tails == heads):
            raise GraphError("self-loops are not allowed")
        pairs = set()
        for u, v in zip(tails.tolist(), heads.tolist()):
            key = (min(u, v), max(u, v))
            if key in pairs:
                raise GraphError(f"multiple edges between {u} and {v}")
            pairs.add(key)
        if self.vertex_labels is None:
            object.__setattr__(self, "vertex_labels", tuple(range(n)))
        elif len(self.vertex_labels) != n:
            raise GraphError("vertex_labels has wrong length")
        else:
            object.__setattr__(self, "vertex_labels", tuple(self.vertex_labels))
        if self.edge_labels is None:
            object.__setattr__(self, "edge_labels", tuple(range(len(tails))))
        elif len(self.edge_labels) != len(tails):
            raise GraphError("edge_labels has wrong length")
        else:
            object.__setattr__(self, "edge_labels", tuple(self.edge_labels))
        if (self.distances_from([0]) < 0).any():
            raise GraphError("the undirected graph is not connected")

    @classmethod
    def from_edges(cls, n_vertices, edges, **kw):
        edges = list(edges)
        tails = [e[0] for e in edges]
        heads = [e[1] for e in edges]
        return cls(n_vertices, np.array(tails, dtype=np.int64),
                   np.array(heads, dtype=np.int64), **kw)

    @property
    def n_edges(self) -> int:
        return len(self.tails)

    @property
    def edges(self):
        return list(zip(self.tails.tolist(), self.heads.tolist()))

    @cached_property
    def _csr(self):
        n = self.n_vertices
        src = np.concatenate([self.tails, self.heads])
        dst = np.concatenate([self.heads, self.tails])
        eid = np.concatenate([np.arange(self.n_edges)] * 2)
        order = np.lexsort((dst, src))
        src, dst, eid = src[order], dst[order], eid[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        indptr = np.cumsum(indptr)
        return indptr, dst.astype(np.int64), eid.astype(np.int64)

    def neighbors(self, v) -> np.ndarray:
        indptr, indices, _ = self._csr
        return indices[indptr[v]:indptr[v + 1]]

    def incident_edges(self, v) -> np.ndarray:
        indptr, _, eid = self._csr
        return eid[indptr[v]:indptr[v + 1]]

    @cached_property
    def degrees(self) -> np.ndarray:
        indptr = self._csr[0]
        return np.diff(indptr)

    def distances_from(self, sources) -> np.ndarray:
        """BFS distances in the undirected graph from a set of sources."""
        key = tuple(sorted(set(int(s) for s in sources)))
        if len(key) == 1 and key in self._dist_cache:
            return self._dist_cache[key]
        indptr, indices, _ = self._csr
        dist = kernels.bfs_distances(indptr, indices, np.array(key, dtype=np.int64))
        dist = np.asarray(dist, dtype=np.int64)
        dist.flags.writeable = False
        if len(key) == 1:
            self._dist_cache[key] = dist
        return dist

    def index_of(self, label) -> int:
        try:
            return self.vertex_labels.index(label)
        except ValueError:
            raise KeyError(f"unknown vertex {label!r}") from None

    def whole(self) -> "Subgraph":
        return Subgraph(self, tuple(range(self.n_vertices)), tuple(range(self.n_edges)))


def incidence_matrix(g: DirectedGraph) -> np.ndarray:
    """Vertex-by-edge matrix: +1 where the edge leaves, -1 where it enters."""
    A = np.zeros((g.n_vertices, g.n_edges))
    cols = np.arange(g.n_edges)
    A[g.tails, cols] = 1.0
    A[g.heads, cols] = -1.0
    return A


def adjacency_matrix(g: DirectedGraph) -> np.ndarray:
    B = np.zeros((g.n_vertices, g.n_vertices))
    B[g.tails, g.heads] = 1.0
    B[g.heads, g.tails] = 1.0
    return B


def second_magnitude(eigs_desc) -> float:
    """max(|second largest|, |smallest|) of a descending eigenvalue list."""
    if len(eigs_desc) < 2:
        return 0.0
    return float(max(abs(eigs_desc[1]), abs(eigs_desc[-1])))


def adjacency_spectrum(g: DirectedGraph):
    """Eigenvalues of the undirected adjacency matrix (descending) and mu."""
    eigs = np.linalg.eigvalsh(adjacency_matrix(g))[::-1]
    return eigs, second_magnitude(eigs)


@dataclass(frozen=True)
class Subgraph:
    """Vertex subset plus an edge subset with both endpoints inside it."""

    parent: DirectedGraph
    vertices: tuple
    edges: tuple

    def __post_init__(self):
        g = self.parent
        vs = tuple(sorted(set(int(v) for v in self.vertices)))
        es = tuple(sorted(set(int(e) for e in self.edges)))
        object.__setattr__(self, "vertices", vs)
        object.__setattr__(self, "edges", es)
        if not vs:
            raise GraphError("subgraph needs at least one vertex")
        if vs[0] < 0 or vs[-1] >= g.n_vertices:
            raise GraphError("subgraph vertex out of range")
        if es and (es[0] < 0 or es[-1] >= g.n_edges):
            raise GraphError("subgraph edge out of range")
        inside = np.zeros(g.n_vertices, dtype=bool)
        inside[list(vs)] = True
        e = np.array(es, dtype=np.int64)
        if len(e) and not (inside[g.tails[e]].all() and inside[g.heads[e]].all()):
            raise GraphError("subgraph edge with an endpoint outside the vertex set")
        if not self._connected():
            raise GraphError("subgraph is not connected")

    def _connected(self) -> bool:
        local = {v: i for i, v in enumerate(self.vertices)}
        parent = list(range(len(local)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        g = self.parent
        for e in self.edges:
            a, b = find(local[int(g.tails[e])]), find(local[int(g.heads[e])])
            parent[a] = b
        return len({find(i) for i in range(len(local))}) == 1

    @property
    def vertex_array(self) -> np.ndarray:
        return np.array(self.vertices, dtype=np.int64)

    @property
    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=np.int64)

    @property
    def vertex_complement(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.parent.n_vertices), self.vertex_array)

    @property
    def edge_complement(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.parent.n_edges), self.edge_array)

    @property
    def is_whole(self) -> bool:
        return (len(self.vertices) == self.parent.n_vertices
                and len(self.edges) == self.parent.n_edges)

    def as_graph(self) -> DirectedGraph:
        """The subgraph re-indexed as a standalone graph."""
        local = {v: i for i, v in enumerate(self.vertices)}
        g = self.parent
        e = self.edge_array
        tails = [local[int(t)] for t in g.tails[e]]
        heads = [local[int(h)] for h in g.heads[e]]
        return DirectedGraph(
            len(self.vertices), np.array(tails, dtype=np.int64),
            np.array(heads, dtype=np.int64),
            vertex_labels=tuple(g.vertex_labels[v] for v in self.vertices),
            edge_labels=tuple(g.edge_labels[i] for i in self.edges),
        )


def induced_subgraph(g: DirectedGraph, vertices) -> Subgraph:
    inside = np.zeros(g.n_vertices, dtype=bool)
    inside[np.asarray(list(vertices), dtype=np.int64)] = True
    edges = np.flatnonzero(inside[g.tails] & inside[g.heads])
    return Subgraph(g, tuple(np.flatnonzero(inside).tolist()), tuple(edges.tolist()))


def ball(g: DirectedGraph, center: int, r: int) -> Subgraph:
    """Induced subgraph on the vertices within distance ``r`` of ``center``."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    dist = g.distances_from([center])
    return induced_subgraph(g, np.flatnonzero(dist <= r))


def random_connected_subgraph(g: DirectedGraph, rng: np.random.Generator, size=None,
                              induced=True) -> Subgraph:
    """Connected subgraph grown from a random vertex by random frontier expansion.

    With ``induced=False`` the edge set is a random spanning tree of the chosen
    vertices plus each remaining induced edge with probability 1/2.
    """
    n = g.n_vertices
    size = int(rng.integers(1, n + 1)) if size is None else int(size)
    if not 1 <= size <= n:
        raise ValueError("size must lie in [1, n_vertices]")
    start = int(rng.integers(n))
    chosen, tree = [start], []
    inside = np.zeros(n, dtype=bool)
    inside[start] = True
    frontier = [(e, start) for e in g.incident_edges(start)]
    while len(chosen) < size:
        frontier = [(e, v) for e, v in frontier
                    if not inside[g.tails[e]] or not inside[g.heads[e]]]
        e, v = frontier.pop(int(rng.integers(len(frontier))))
        w = int(g.heads[e]) if g.tails[e] == v else int(g.tails[e])
        inside[w] = True
        chosen.append(w)
        tree.append(int(e))
        frontier.extend((f, w) for f in g.incident_edges(w))
    sub = induced_subgraph(g, chosen)
    if induced:
        return sub
    extra = [e for e in sub.edges if e not in set(tree) and rng.random() < 0.5]
    return Subgraph(g, sub.vertices, tuple(sorted(tree + extra)))


def inner_boundary(sub: Subgraph) -> set:
    """Vertices of ``sub`` with at least one neighbor outside it."""
    g = sub.parent
    inside = np.zeros(g.n_vertices, dtype=bool)
    inside[sub.vertex_array] = True
    return {v for v in sub.vertices if not inside[g.neighbors(v)].all()}


def set_distance(g: DirectedGraph, U, Z) -> int:
    """Shortest-path distance between two nonempty vertex sets."""
    U, Z = list(U), list(Z)
    if not U or not Z:
        raise ValueError("vertex sets must be nonempty")
    dist = g.distances_from(Z)
    return int(dist[np.asarray(U, dtype=np.int64)].min())


# -- generators -----------------------------------------------------------

def path_graph(n: int) -> DirectedGraph:
    return DirectedGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> DirectedGraph:
    if n < 3:
        raise GraphError("a cycle needs at least 3 vertices")
    return DirectedGraph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def grid_graph(rows: int, cols: int | None = None) -> DirectedGraph:
    """2-D grid, edges oriented left-to-right and top-to-bottom."""
    cols = rows if cols is None else cols
    edges = []
    for i in range(rows):
        for j in range(cols):
            v = i * cols + j
            if j + 1 < cols:
                edges.append((v, v + 1))
            if i + 1 < rows:
                edges.append((v, v + cols))
    return DirectedGraph.from_edges(rows * cols, edges)


def complete_graph(n: int) -> DirectedGraph:
    return DirectedGraph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def random_regular_graph(n: int, k: int, seed=None, max_tries: int = 1000) -> DirectedGraph:
    """Random simple connected k-regular graph from the pairing model.

    Pairings that produce a self-loop, a repeated pair or a disconnected graph
    are rejected and redrawn.  Edges are oriented from the smaller to the
    larger vertex id.
    """
    if (n * k) % 2:
        raise GraphError(f"k*n must be even (k={k}, n={n})")
    if not 0 < k < n:
        raise GraphError("need 0 < k < n")
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n), k)
    for _ in range(max_tries):
        perm = rng.permutation(stubs)
        a, b = perm[0::2], perm[1::2]
        if np.any(a == b):
            continue
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        if len(set(zip(lo.tolist(), hi.tolist()))) != len(lo):
            continue
        order = np.lexsort((hi, lo))
        try:
            return DirectedGraph(n, lo[order], hi[order])
        except GraphError:
            continue
    raise GraphError(f"no simple connected {k}-regular graph after {max_tries} tries")
