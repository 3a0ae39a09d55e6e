"""Edge decoder, negative sampling, the three loss terms and the
cross-network MLP mapper."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .graph import Graph
from .msa import glorot
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor


def _finish(out: Tensor, *inputs):
    return out if any(isinstance(x, Tensor) for x in inputs) else out.value


_OPEN_UNIT = (np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


def _edge_probs(xt: Tensor, pairs) -> Tensor:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    logits = ad.row_dot(ad.take(xt, pairs[:, 0]), ad.take(xt, pairs[:, 1]))
    return ad.sigmoid(logits)


def decode_edges(x, pairs):
    """``sigmoid(x_i . x_j)`` for every pair ``(i, j)``.

    For plain arrays the result is kept strictly inside (0, 1): a float64
    sigmoid rounds to exactly 0 or 1 once ``|logit|`` passes about 37, so
    those values are moved to the nearest representable interior number.
    Tensor inputs are left unclamped, which keeps the reconstruction loss
    differentiable and lets it reach exactly zero on saturated embeddings.
    """
    if isinstance(x, Tensor):
        return _edge_probs(x, pairs)
    return np.clip(_edge_probs(ad.tensor(x), pairs).value, *_OPEN_UNIT)


@dataclass(frozen=True)
class NegSampleMask:
    """Pairs entering the reconstruction loss: every edge (target 1) and
    sampled non-edges (target 0)."""

    positives: np.ndarray
    negatives: np.ndarray
    seed: object = None
    imbalanced: bool = False

    @property
    def pairs(self) -> np.ndarray:
        return np.concatenate([self.positives, self.negatives]).reshape(-1, 2)

    @property
    def targets(self) -> np.ndarray:
        return np.r_[np.ones(len(self.positives)), np.zeros(len(self.negatives))]


def negative_sample(g: Graph, seed) -> NegSampleMask:
    """All edges plus an equal number of distinct non-edges.

    Non-edge ``{i, j}`` is drawn with probability proportional to
    ``(deg_i * deg_j) ** 0.75`` (degrees floored at 1 so isolated nodes stay
    reachable), without replacement. If fewer non-edges exist than edges,
    all of them are taken and ``imbalanced`` is set.
    """
    if g.num_edges == 0:
        raise ValueError("negative sampling needs at least one edge")
    rng = np.random.default_rng(seed)
    m, n = g.num_edges, g.n
    n_non = n * (n - 1) // 2 - m
    if n_non <= m:
        return NegSampleMask(g.edges, _all_non_edges(g), seed, imbalanced=n_non < m)
    w = np.maximum(g.degrees, 1).astype(np.float64) ** 0.75
    if n_non <= 4 * m:
        cand = _all_non_edges(g)
        p = w[cand[:, 0]] * w[cand[:, 1]]
        pick = rng.choice(len(cand), size=m, replace=False, p=p / p.sum())
        return NegSampleMask(g.edges, cand[np.sort(pick)], seed)
    cdf = np.cumsum(w / w.sum())
    cdf[-1] = 1.0
    edge_keys = set((g.edges[:, 0] * n + g.edges[:, 1]).tolist())
    chosen: dict[int, None] = {}
    while len(chosen) < m:
        need = m - len(chosen)
        draw = np.searchsorted(cdf, rng.random((2 * need + 8, 2)), side="right")
        lo, hi = draw.min(axis=1), draw.max(axis=1)
        for a, b in zip(lo.tolist(), hi.tolist()):
            key = a * n + b
            if a == b or key in edge_keys or key in chosen:
                continue
            chosen[key] = None
            if len(chosen) == m:
                break
    keys = np.fromiter(chosen, dtype=np.int64, count=m)
    return NegSampleMask(g.edges, np.stack([keys // n, keys % n], axis=1), seed)


def _all_non_edges(g: Graph) -> np.ndarray:
    iu = np.triu_indices(g.n, k=1)
    dense = g.adjacency.toarray()
    keep = dense[iu] == 0
    return np.stack([iu[0][keep], iu[1][keep]], axis=1).astype(np.int64)


def global_loss(x, mask: NegSampleMask):
    """Squared reconstruction error summed over the masked pairs."""
    yhat = _edge_probs(ad.tensor(x), mask.pairs)
    return _finish(ad.masked_sq_error(yhat, mask.targets), x)


def local_loss(g: Graph, x):
    """``sum_i 1/|N_i| sum_{j in N_i} ||x_i - x_j||^2``; isolated nodes add 0."""
    xt = ad.tensor(x)
    if g.num_edges == 0:
        return _finish(ad.mul(ad.sum(xt), 0.0), x)
    src, dst = g.directed_edges
    w = np.sqrt(1.0 / g.degrees[src])[:, None]
    diff = ad.sub(ad.take(xt, src), ad.take(xt, dst))
    return _finish(ad.sq_norm(ad.mul(diff, w)), x)


# -- mapper ---------------------------------------------------------------------

MAPPER_PREFIX = "map."


def init_mapper(rng, dims=(128, 128, 128, 128), prefix: str = MAPPER_PREFIX) -> dict[str, np.ndarray]:
    """ReLU MLP ``dims[0] -> ... -> dims[-1]`` with a linear last layer."""
    params = {}
    for k, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        params[f"{prefix}w{k}"] = glorot(rng, a, b)
        params[f"{prefix}b{k}"] = np.zeros((1, b))
    return params


def mapper_forward(x, theta: dict, prefix: str = MAPPER_PREFIX):
    """Apply the mapper to a vector or to each row of a matrix."""
    n_layers = sum(1 for k in theta if k.startswith(prefix + "w"))
    single = not isinstance(x, Tensor) and np.ndim(x) == 1
    h = ad.tensor(np.atleast_2d(x) if single else x)
    for k in range(n_layers):
        h = ad.add(ad.matmul(h, theta[f"{prefix}w{k}"]), theta[f"{prefix}b{k}"])
        if k < n_layers - 1:
            h = ad.relu(h)
    out = _finish(h, x, *theta.values())
    return out[0] if single and not isinstance(out, Tensor) else out


def match_loss(anchors, x1, x2, theta: dict, prefix: str = MAPPER_PREFIX):
    """``sum ||f(x1_i) - x2_k||^2`` over anchor pairs ``(i, k)``."""
    anchors = np.asarray(anchors, dtype=np.int64).reshape(-1, 2)
    mapped = mapper_forward(ad.take(ad.tensor(x1), anchors[:, 0]), theta, prefix)
    out = ad.sq_norm(ad.sub(mapped, ad.take(ad.tensor(x2), anchors[:, 1])))
    return _finish(out, x1, x2, *theta.values())


# -- combination ----------------------------------------------------------------

@dataclass(frozen=True)
class LossBreakdown:
    global_sn1: float
    global_sn2: float
    local_sn1: float
    local_sn2: float
    match: float
    total: float
    alpha: float
    beta: float

    def to_dict(self):
        return asdict(self)


def combine_losses(parts: dict, alpha: float, beta: float):
    """Weighted total ``alpha*(global) + beta*(local) + match`` of Tensors or floats."""
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    glob = ad.add(parts["global_sn1"], parts["global_sn2"])
    loc = ad.add(parts["local_sn1"], parts["local_sn2"])
    return ad.add(ad.add(ad.mul(glob, alpha), ad.mul(loc, beta)), parts["match"])


def total_loss(parts: dict, alpha: float, beta: float) -> LossBreakdown:
    vals = {k: float(v.value if isinstance(v, Tensor) else v) for k, v in parts.items()}
    total = float(combine_losses(vals, alpha, beta).value)
    return LossBreakdown(vals["global_sn1"], vals["global_sn2"], vals["local_sn1"],
                         vals["local_sn2"], vals["match"], total, alpha, beta)
