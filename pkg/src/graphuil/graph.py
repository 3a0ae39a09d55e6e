"""Undirected graph model, edge-list I/O, degree statistics and the
normalized propagation operator used by the global aggregator."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


class EdgeListParseError(ValueError):
    def __init__(self, path, lineno: int, line: str):
        super().__init__(f"{path}:{lineno}: expected two node tokens, got {line!r}")
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable simple undirected graph on nodes ``0..n-1``.

    ``edges`` is an ``(m, 2)`` int array of unique pairs with ``i < j``, sorted
    lexicographically. ``labels`` optionally maps dense ids back to the
    external string ids they were loaded from.
    """

    n: int
    edges: np.ndarray
    labels: tuple[str, ...] | None = None
    dropped_self_loops: int = field(default=0, compare=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            if e.min() < 0 or e.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loops are not allowed")
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0) if len(e) else e
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)
        if self.labels is not None and len(self.labels) != self.n:
            raise ValueError("labels length must equal n")

    @classmethod
    def from_edges(cls, n: int, edges, labels=None) -> "Graph":
        return cls(n, np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                                 dtype=np.int64).reshape(-1, 2), labels)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.edges}

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency in CSR form; neighbor lists via ``indptr``."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i))
        a = sp.csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(self.n, self.n))
        a.sort_indices()
        return a

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n).astype(np.int64)

    def neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    @cached_property
    def directed_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Both orientations of every edge, sorted by source node."""
        a = self.adjacency.tocoo()
        order = np.lexsort((a.col, a.row))
        return a.row[order].astype(np.int64), a.col[order].astype(np.int64)

    @cached_property
    def propagation(self) -> sp.csr_matrix:
        return propagation_matrix(self)

    def permute(self, perm) -> "Graph":
        """Relabel node ``v`` as ``perm[v]``."""
        perm = np.asarray(perm, dtype=np.int64)
        labels = None
        if self.labels is not None:
            inv = np.empty_like(perm)
            inv[perm] = np.arange(self.n)
            labels = tuple(self.labels[k] for k in inv)
        return Graph(self.n, perm[self.edges], labels)

    def subgraph(self, nodes) -> "Graph":
        """Induced subgraph on ``nodes``; node ``nodes[k]`` becomes ``k``."""
        nodes = np.asarray(nodes, dtype=np.int64)
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[nodes] = np.arange(len(nodes))
        e = remap[self.edges]
        e = e[(e >= 0).all(axis=1)]
        labels = None if self.labels is None else tuple(self.labels[k] for k in nodes)
        return Graph(len(nodes), e, labels)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.edges, other.edges)

    def __hash__(self):
        return hash((self.n, self.edges.tobytes()))

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.num_edges})"


@dataclass(frozen=True)
class GraphStats:
    nodes: int
    edges: int
    avg_degree: float
    sparsity: float
    sparsity_undefined: bool = False

    def to_dict(self) -> dict:
        return {"nodes": self.nodes, "edges": self.edges,
                "avg_degree": self.avg_degree, "sparsity": self.sparsity}


def load_edge_list(path) -> Graph:
    """Read a whitespace-separated edge list.

    Tokens are relabeled to ``0..n-1`` in order of first occurrence; ``#``
    lines and blank lines are skipped. Self-loops are dropped and counted in
    ``Graph.dropped_self_loops``.
    """
    index: dict[str, int] = {}
    pairs = []
    loops = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if len(toks) != 2:
                raise EdgeListParseError(path, lineno, line)
            ids = [index.setdefault(t, len(index)) for t in toks]
            if ids[0] == ids[1]:
                loops += 1
                continue
            pairs.append(ids)
    if loops:
        log.warning("%s: dropped %d self-loop line(s)", path, loops)
    g = Graph(len(index), np.asarray(pairs, dtype=np.int64).reshape(-1, 2), tuple(index))
    object.__setattr__(g, "dropped_self_loops", loops)
    return g


def save_edge_list(g: Graph, path, use_labels: bool = False) -> None:
    """Write one ``i j`` line per edge. Isolated nodes are not representable
    in this format, so a ``# nodes N`` header records the node count."""
    names = g.labels if (use_labels and g.labels is not None) else None
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes {g.n}\n")
        for i, j in g.edges:
            if names is None:
                fh.write(f"{i} {j}\n")
            else:
                fh.write(f"{names[i]} {names[j]}\n")


def read_node_count_header(path) -> int | None:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().split()
    if len(first) == 3 and first[:2] == ["#", "nodes"]:
        return int(first[2])
    return None


def load_indexed_edge_list(path) -> Graph:
    """Load a file written by :func:`save_edge_list` keeping the integer ids
    as-is (no first-occurrence relabeling), so isolated nodes survive."""
    n = read_node_count_header(path)
    g = load_edge_list(path)
    if n is None:
        return g
    ids = np.array([int(t) for t in g.labels], dtype=np.int64)
    return Graph(n, ids[g.edges] if g.num_edges else g.edges)


def prune_low_degree(g: Graph, min_degree: int) -> Graph:
    """Drop every node whose degree in ``g`` is below ``min_degree``.

    One pass over the original degrees; survivors may end up below the
    threshold after their neighbors are removed.
    """
    if min_degree < 0:
        raise ValueError("min_degree must be >= 0")
    keep = np.flatnonzero(g.degrees >= min_degree)
    if len(keep) == g.n:
        return g
    return g.subgraph(keep)


def propagation_matrix(g: Graph) -> sp.csr_matrix:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree matrix of ``A + I``."""
    if g.n == 0:
        raise ValueError("graph is empty")
    a = g.adjacency + sp.identity(g.n, format="csr")
    dinv = 1.0 / np.sqrt(np.asarray(a.sum(axis=1)).ravel())
    p = sp.csr_matrix(sp.diags(dinv) @ a @ sp.diags(dinv))
    p.sort_indices()
    return p


def graph_stats(g: Graph) -> GraphStats:
    m = g.num_edges
    avg = 2.0 * m / g.n if g.n else 0.0
    if g.n < 2:
        return GraphStats(g.n, m, avg, 0.0, sparsity_undefined=True)
    return GraphStats(g.n, m, avg, 2.0 * m / (g.n * (g.n - 1)))
