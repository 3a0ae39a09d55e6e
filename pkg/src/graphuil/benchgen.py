"""Synthetic two-network benchmarks with ground-truth anchor links.

A base graph is sampled, then two partially overlapping views are cut from
it, structurally perturbed by edge rewiring and independently relabeled.
Anchors are the shared base nodes, recorded under both labelings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np

from .graph import Graph, load_indexed_edge_list, save_edge_list

GENERATOR_VERSION = "1"
MODELS = ("ba", "ws", "sbm")
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class BenchSpec:
    model: str = "ba"
    n: int = 500
    m: int = 4                      # BA attachments per new node
    k: int = 4                      # WS ring degree
    p_rewire: float = 0.1           # WS rewiring probability
    blocks: int = 2                 # SBM
    p_in: float = 0.1
    p_out: float = 0.01
    overlap: float = 0.6
    edge_noise: float = 0.1
    splits: tuple[float, float, float] = (0.6, 0.1, 0.3)
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown base model {self.model!r}")
        if not 0 < self.overlap <= 1:
            raise ValueError("overlap must be in (0, 1]")
        if not 0 <= self.edge_noise < 1:
            raise ValueError("edge_noise must be in [0, 1)")
        if len(self.splits) != 3 or min(self.splits) < 0 or abs(sum(self.splits) - 1) > 1e-9:
            raise ValueError("split fractions must be three non-negative numbers summing to 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.model == "ba" and not 1 <= self.m < self.n:
            raise ValueError("BA needs 1 <= m < n")
        if self.model == "ws" and (self.k < 2 or self.k % 2 or self.k >= self.n
                                   or not 0 <= self.p_rewire <= 1):
            raise ValueError("WS needs even 2 <= k < n and p_rewire in [0, 1]")
        if self.model == "sbm" and (self.blocks < 1 or not 0 <= self.p_out <= 1
                                    or not 0 <= self.p_in <= 1):
            raise ValueError("SBM needs blocks >= 1 and probabilities in [0, 1]")
        object.__setattr__(self, "splits", tuple(float(s) for s in self.splits))

    def to_dict(self):
        d = asdict(self)
        d["splits"] = list(self.splits)
        return d


@dataclass(frozen=True)
class AnchorLinkSet:
    """Identity pairs ``(node in g1, node in g2)`` with a split tag each."""

    pairs: np.ndarray
    split: tuple[str, ...]

    def __post_init__(self):
        p = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "pairs", p)
        if len(self.split) != len(p):
            raise ValueError("one split tag per pair")
        if len(set(p[:, 0].tolist())) != len(p) or len(set(p[:, 1].tolist())) != len(p):
            raise ValueError("each node may appear in at most one anchor pair")
        if set(self.split) - set(SPLITS):
            raise ValueError(f"split tags must be in {SPLITS}")

    def __len__(self):
        return len(self.pairs)

    def get(self, split: str) -> np.ndarray:
        return self.pairs[np.asarray(self.split) == split].reshape(-1, 2)


@dataclass(frozen=True)
class BenchInstance:
    g1: Graph
    g2: Graph
    anchors: AnchorLinkSet
    provenance: dict = field(default_factory=dict)


def _ba(n, m, rng) -> np.ndarray:
    # seed: clique on m+1 nodes; then each node attaches to m distinct
    # existing nodes chosen proportionally to degree.
    # edge count = m(m+1)/2 + m(n-m-1)
    s = min(m + 1, n)
    edges = [(i, j) for i in range(s) for j in range(i + 1, s)]
    targets_pool = [v for e in edges for v in e]
    for v in range(s, n):
        chosen: set[int] = set()
        while len(chosen) < m:
            chosen.add(targets_pool[rng.integers(len(targets_pool))])
        for u in sorted(chosen):
            edges.append((u, v))
            targets_pool += [u, v]
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


def _ws(n, k, p, rng) -> np.ndarray:
    ring = {tuple(sorted((i, (i + d) % n))) for i in range(n) for d in range(1, k // 2 + 1)}
    edges = set(ring)
    for i in range(n):
        for d in range(1, k // 2 + 1):
            e = tuple(sorted((i, (i + d) % n)))
            if e not in edges or rng.random() >= p:
                continue
            for _ in range(n):
                w = int(rng.integers(n))
                f = tuple(sorted((i, w)))
                if w != i and f not in edges:
                    edges.remove(e)
                    edges.add(f)
                    break
    return np.asarray(sorted(edges), dtype=np.int64).reshape(-1, 2)


def _sbm(n, blocks, p_in, p_out, rng) -> np.ndarray:
    block = np.arange(n) * blocks // n
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(block[iu] == block[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    return np.stack([iu[keep], ju[keep]], axis=1)


def generate_base_graph(spec: BenchSpec) -> Graph:
    rng = np.random.default_rng([spec.seed, 0])
    if spec.model == "ba":
        e = _ba(spec.n, spec.m, rng)
    elif spec.model == "ws":
        e = _ws(spec.n, spec.k, spec.p_rewire, rng)
    else:
        e = _sbm(spec.n, spec.blocks, spec.p_in, spec.p_out, rng)
    return Graph(spec.n, e)


def rewire(g: Graph, fraction: float, rng) -> Graph:
    """Move ``round(fraction * |E|)`` edges to uniformly random non-edges
    (never back onto a removed edge); the edge count is unchanged."""
    k = int(round(fraction * g.num_edges))
    max_edges = g.n * (g.n - 1) // 2
    if k == 0:
        return g
    if g.num_edges + k > max_edges:
        raise ValueError("graph too dense to rewire")
    drop = rng.choice(g.num_edges, size=k, replace=False)
    keep = np.delete(g.edges, drop, axis=0)
    taken = {(int(i), int(j)) for i, j in g.edges}
    new = []
    while len(new) < k:
        i, j = sorted(rng.integers(g.n, size=2).tolist())
        if i == j or (i, j) in taken:
            continue
        taken.add((i, j))
        new.append((i, j))
    return Graph(g.n, np.concatenate([keep, np.asarray(new, dtype=np.int64)]))


def derive_views(base: Graph, spec: BenchSpec) -> BenchInstance:
    n = base.n
    n_shared = int(np.floor(spec.overlap * n + 1e-9))
    if n_shared < 10:
        raise ValueError(f"only {n_shared} shared nodes; need at least 10 anchors")
    rng = np.random.default_rng([spec.seed, 1])
    order = rng.permutation(n)
    shared = order[:n_shared]
    rest = order[n_shared:]
    half = (len(rest) + 1) // 2
    own = (rest[:half], rest[half:])

    views, perms = [], []
    for k in range(2):
        nodes = np.concatenate([shared, own[k]])       # view-local id = position here
        view = base.subgraph(nodes)
        view = rewire(view, spec.edge_noise, rng)
        perm = rng.permutation(view.n)
        views.append(view.permute(perm))
        perms.append(perm)
    pos = np.arange(n_shared)
    pairs = np.stack([perms[0][pos], perms[1][pos]], axis=1)

    counts = [int(round(f * n_shared)) for f in spec.splits[:2]]
    tags = np.array(["test"] * n_shared, dtype=object)
    shuffled = rng.permutation(n_shared)
    tags[shuffled[:counts[0]]] = "train"
    tags[shuffled[counts[0]:counts[0] + counts[1]]] = "val"
    order = np.argsort(pairs[:, 0], kind="stable")
    anchors = AnchorLinkSet(pairs[order], tuple(tags[order]))
    prov = {"spec": spec.to_dict(), "generator_version": GENERATOR_VERSION,
            "base_nodes": n, "base_edges": base.num_edges}
    return BenchInstance(views[0], views[1], anchors, prov)


def generate(spec: BenchSpec) -> BenchInstance:
    return derive_views(generate_base_graph(spec), spec)


# -- on-disk layout ----------------------------------------------------------------

def save_instance(inst: BenchInstance, out_dir) -> list[Path]:
    """Write ``g1.edges``, ``g2.edges``, ``anchors.tsv`` and ``spec.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_edge_list(inst.g1, out / "g1.edges")
    save_edge_list(inst.g2, out / "g2.edges")
    with open(out / "anchors.tsv", "w", encoding="utf-8") as fh:
        fh.write("id1\tid2\tsplit\n")
        for (a, b), s in zip(inst.anchors.pairs, inst.anchors.split):
            fh.write(f"{a}\t{b}\t{s}\n")
    (out / "spec.json").write_text(json.dumps(inst.provenance, indent=2, sort_keys=True) + "\n")
    return [out / f for f in ("g1.edges", "g2.edges", "anchors.tsv", "spec.json")]


def load_instance(in_dir) -> BenchInstance:
    d = Path(in_dir)
    for f in ("g1.edges", "g2.edges", "anchors.tsv"):
        if not (d / f).exists():
            raise FileNotFoundError(d / f)
    g1 = load_indexed_edge_list(d / "g1.edges")
    g2 = load_indexed_edge_list(d / "g2.edges")
    pairs, tags = [], []
    with open(d / "anchors.tsv", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("id1"):
            raise ValueError(f"{d / 'anchors.tsv'}: missing header")
        for line in fh:
            if line.strip():
                a, b, s = line.split()
                pairs.append((int(a), int(b)))
                tags.append(s)
    prov = json.loads((d / "spec.json").read_text()) if (d / "spec.json").exists() else {}
    return BenchInstance(g1, g2, AnchorLinkSet(np.asarray(pairs, dtype=np.int64), tuple(tags)), prov)
