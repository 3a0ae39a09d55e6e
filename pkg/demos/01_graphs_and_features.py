"""
Graphs and initial node features
================================

Build a small social graph, look at its statistics, prune weakly connected
accounts and compute the three kinds of starting features the encoder can use.
"""

import numpy as np

from graphuil.benchgen import BenchSpec, generate_base_graph
from graphuil.features import FeatureInitSpec, init_features
from graphuil.graph import Graph, graph_stats, prune_low_degree

# a hand-made graph: a triangle with a tail
g = Graph(5, np.array([[0, 1], [1, 2], [0, 2], [2, 3], [3, 4]]))
print("toy graph:", graph_stats(g).to_dict())
print("neighbours of node 2:", g.neighbors(2))

# the symmetric propagation operator used by the global aggregator
print("propagation matrix:\n", np.round(g.propagation.toarray(), 3))

# a preferential-attachment network is closer to a real social graph
base = generate_base_graph(BenchSpec(model="ba", n=300, m=3, seed=0))
print("BA graph:", graph_stats(base).to_dict())

# drop accounts with fewer than 4 connections; ids are re-packed
core = prune_low_degree(base, 4)
print("after pruning degree < 4:", graph_stats(core).to_dict())

# starting features: random, spectral, and skip-gram over uniform walks
for method in ("random", "spectral", "walk_skipgram"):
    x = init_features(core, FeatureInitSpec(method=method, dim=16, seed=1))
    print(f"{method:>14}: shape {x.shape}, mean row norm {np.linalg.norm(x, axis=1).mean():.3f}")

# walk features place linked accounts closer than random pairs
x = init_features(core, FeatureInitSpec(method="walk_skipgram", dim=16, seed=1))
x /= np.linalg.norm(x, axis=1, keepdims=True)
src, dst = core.directed_edges
rng = np.random.default_rng(0)
rand = rng.integers(0, core.n, size=(len(src), 2))
print("cosine, linked pairs :", np.mean(np.sum(x[src] * x[dst], 1)).round(3))
print("cosine, random pairs :", np.mean(np.sum(x[rand[:, 0]] * x[rand[:, 1]], 1)).round(3))
