"""Initial node features: uniform random-walk skip-gram (DeepWalk style),
spectral, Gaussian random, or loaded from a file."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sp

from .graph import Graph

METHODS = ("walk_skipgram", "spectral", "random", "file")


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class FeatureInitSpec:
    method: str = "walk_skipgram"
    dim: int = 64
    walks_per_node: int = 10
    walk_length: int = 40
    window: int = 5
    negatives: int = 5
    epochs: int = 2
    seed: int = 0
    path: str | None = None
    id_column: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown feature method {self.method!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.method == "walk_skipgram" and min(
                self.walks_per_node, self.walk_length, self.window, self.negatives, self.epochs) < 1:
            raise ValueError("walk parameters must be positive")

    def to_dict(self):
        return asdict(self)


def init_features(g: Graph, spec: FeatureInitSpec) -> np.ndarray:
    """Return the ``(g.n, spec.dim)`` initial feature matrix."""
    if g.n == 0:
        raise ValueError("graph is empty")
    if spec.method == "random":
        rng = np.random.default_rng(spec.seed)
        return rng.normal(0.0, 1.0 / np.sqrt(spec.dim), size=(g.n, spec.dim))
    if spec.method == "spectral":
        return spectral_features(g, spec.dim)
    if spec.method == "file":
        x = load_features(spec.path, id_column=spec.id_column, labels=g.labels)
        if x.shape != (g.n, spec.dim):
            raise ValueError(f"feature file has shape {x.shape}, expected {(g.n, spec.dim)}")
        return x
    return skipgram_features(g, spec)


# -- spectral ----------------------------------------------------------------------

def spectral_features(g: Graph, dim: int, tol: float = 1e-8, max_iter: int = 1000) -> np.ndarray:
    """Leading eigenvectors of the propagation matrix.

    Block power iteration on ``P + I`` (so eigenvalues are positive and the
    ordering is by algebraic value) with Rayleigh-Ritz extraction after every
    sweep; the block carries a few extra vectors to speed up the trailing
    ones. Each column's largest-magnitude entry is made positive.
    """
    if dim >= g.n:
        raise ValueError("dim must be smaller than the node count")
    p = g.propagation + sp.identity(g.n, format="csr")
    k = min(g.n, dim + max(4, dim // 4))
    rng = np.random.default_rng(12345)
    q, _ = np.linalg.qr(rng.standard_normal((g.n, k)))
    res = np.inf
    for _ in range(max_iter):
        z = p @ q
        h = q.T @ z
        w, s = np.linalg.eigh((h + h.T) / 2)
        order = np.argsort(-w)
        w, s = w[order], s[:, order]
        ritz = q @ s
        pr = z @ s
        res = np.linalg.norm(pr[:, :dim] - ritz[:, :dim] * w[:dim], axis=0).max()
        if res < tol:
            break
        q, _ = np.linalg.qr(pr)
    else:
        raise ConvergenceError("spectral features did not converge", res)
    v = ritz[:, :dim]
    v, _ = np.linalg.qr(v)  # restore exact orthonormality
    big = np.argmax(np.abs(v), axis=0)
    v *= np.sign(v[big, np.arange(dim)])
    return v


# -- random-walk skip-gram --------------------------------------------------------

def random_walks(g: Graph, walks_per_node: int, walk_length: int, rng) -> np.ndarray:
    """Uniform random walks, one row per walk; ``-1`` pads walks that hit
    an isolated node."""
    a = g.adjacency
    deg = g.degrees
    walks = np.full((walks_per_node * g.n, walk_length), -1, dtype=np.int64)
    for r in range(walks_per_node):
        cur = rng.permutation(g.n)
        block = walks[r * g.n:(r + 1) * g.n]
        block[:, 0] = cur
        alive = deg[cur] > 0
        for t in range(1, walk_length):
            idx = np.flatnonzero(alive)
            if not len(idx):
                break
            c = block[idx, t - 1]
            off = (rng.random(len(idx)) * deg[c]).astype(np.int64)
            block[idx, t] = a.indices[a.indptr[c] + off]
    return walks


def _context_pairs(walks: np.ndarray, window: int, rng) -> tuple[np.ndarray, np.ndarray]:
    # word2vec-style shrunk window: each position draws its effective span
    n_w, length = walks.shape
    span = rng.integers(1, window + 1, size=walks.shape)
    centers, contexts = [], []
    for off in range(1, window + 1):
        if off >= length:
            break
        a, b = walks[:, :-off], walks[:, off:]
        ok = (a >= 0) & (b >= 0)
        fwd = ok & (span[:, :-off] >= off)
        bwd = ok & (span[:, off:] >= off)
        centers += [a[fwd], b[bwd]]
        contexts += [b[fwd], a[bwd]]
    return np.concatenate(centers), np.concatenate(contexts)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def skipgram_features(g: Graph, spec: FeatureInitSpec, batch: int | None = None,
                      lr0: float = 0.025) -> np.ndarray:
    """Skip-gram with negative sampling over uniform random walks.

    Noise distribution is degree**0.75. Minibatch SGD with a linearly
    decaying step size. A row touched several times within one batch gets
    the mean of its updates, so small graphs do not take oversized steps.
    """
    if batch is None:
        batch = int(np.clip(g.n // 2, 16, 1024))
    rng = np.random.default_rng(spec.seed)
    d = spec.dim
    w_in = (rng.random((g.n, d)) - 0.5) / d
    w_out = np.zeros((g.n, d))
    if g.num_edges == 0:
        return w_in
    noise = g.degrees.astype(np.float64) ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())
    noise_cdf[-1] = 1.0

    walks = random_walks(g, spec.walks_per_node, spec.walk_length, rng)
    centers, contexts = _context_pairs(walks, spec.window, rng)
    total = spec.epochs * len(centers)
    done = 0
    for _ in range(spec.epochs):
        order = rng.permutation(len(centers))
        for lo in range(0, len(order), batch):
            sel = order[lo:lo + batch]
            u, c = centers[sel], contexts[sel]
            b = len(sel)
            neg = np.searchsorted(noise_cdf, rng.random((b, spec.negatives)), side="right")
            targets = np.concatenate([c[:, None], neg], axis=1)  # (b, 1+k)
            labels = np.zeros(targets.shape)
            labels[:, 0] = 1.0
            lr = lr0 * max(1e-4, 1.0 - done / total)
            vu = w_in[u]
            vt = w_out[targets]
            score = np.einsum("bd,bkd->bk", vu, vt)
            gcoef = (labels - _sigmoid(score)) * lr
            d_in = np.einsum("bk,bkd->bd", gcoef, vt)
            d_out = gcoef[:, :, None] * vu[:, None, :]
            w_in += _scatter_rows(u, d_in, g.n)
            w_out += _scatter_rows(targets.ravel(), d_out.reshape(-1, d), g.n)
            done += b
    return w_in


def _scatter_rows(idx, rows, n):
    # per-row mean of the updates addressed to it
    counts = np.bincount(idx, minlength=n).astype(np.float64)
    w = 1.0 / counts[idx]
    m = sp.csr_matrix((w, (idx, np.arange(len(idx)))), shape=(n, len(idx)))
    return m @ rows


# -- feature files ----------------------------------------------------------------

def save_features(x: np.ndarray, path, ids=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{x.shape[0]} {x.shape[1]}\n")
        for k, row in enumerate(x):
            vals = " ".join(repr(float(v)) for v in row)
            fh.write(f"{ids[k]} {vals}\n" if ids is not None else vals + "\n")


def load_features(path, id_column: bool = False, labels=None) -> np.ndarray:
    """Read a ``N dim`` headed feature file. With ``id_column`` each row starts
    with an external node id, matched against ``labels`` when given."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: header must be 'N dim'")
        n, d = int(header[0]), int(header[1])
        rows, ids = [], []
        for line in fh:
            toks = line.split()
            if not toks:
                continue
            if id_column:
                ids.append(toks[0])
                toks = toks[1:]
            if len(toks) != d:
                raise ValueError(f"{path}: row {len(rows) + 1} has {len(toks)} values, expected {d}")
            rows.append([float(t) for t in toks])
    if len(rows) != n:
        raise ValueError(f"{path}: header says {n} rows, found {len(rows)}")
    x = np.asarray(rows, dtype=np.float64).reshape(n, d)
    if id_column and labels is not None:
        pos = {lab: k for k, lab in enumerate(labels)}
        out = np.empty((len(labels), d))
        seen = np.zeros(len(labels), dtype=bool)
        for row, i in zip(x, ids):
            if i not in pos:
                raise ValueError(f"{path}: unknown node id {i!r}")
            out[pos[i]] = row
            seen[pos[i]] = True
        if not seen.all():
            raise ValueError(f"{path}: missing rows for some nodes")
        return out
    return x
