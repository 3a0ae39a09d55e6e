"""Multi-stage aggregation (MSA) encoder.

Each layer mixes two 1-hop aggregators of the node features ``X``:

* global (GTA): the symmetric-normalized propagation ``P X W_gta``;
* local (LTA): learned attention ``A' X W_lta`` where
  ``phi_ij = relu(g . [W_att^T x_i ; W_att^T x_j])`` is softmax-normalized
  over each node's neighborhood.

and outputs ``relu(P X W_gta + A' X W_lta)``. The encoder stacks layers and
feeds every layer output through a learned skip projection.

All functions take numpy arrays or :class:`~graphuil.numerics.Tensor`
objects. Given only arrays they return arrays; given any Tensor they
return a Tensor connected to the autodiff graph.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np
import scipy.sparse as sp

from .graph import Graph
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor


def _any_tensor(*xs):
    return any(isinstance(x, Tensor) for x in xs)


def _finish(out: Tensor, *inputs):
    return out if _any_tensor(*inputs) else out.value


@dataclass(frozen=True)
class EncoderConfig:
    in_dim: int = 64
    layer_dims: tuple[int, ...] = (128, 128, 128)
    att_dim: int = 128
    out_dim: int = 128
    combine: str = "concat"          # "concat" (jumping knowledge) or "sum"
    attention_self: bool = True
    lambda_combine: float = 1.0

    def __post_init__(self):
        if self.combine not in ("concat", "sum"):
            raise ValueError(f"unknown combine mode {self.combine!r}")
        if self.combine == "sum" and len(set(self.layer_dims)) != 1:
            raise ValueError("sum combination needs equal layer widths")
        object.__setattr__(self, "layer_dims", tuple(self.layer_dims))

    def to_dict(self):
        return asdict(self)


def glorot(rng, fan_in, fan_out, shape=None):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape or (fan_in, fan_out))


def init_encoder(cfg: EncoderConfig, rng, prefix: str = "") -> dict[str, np.ndarray]:
    """Parameter blocks for one encoder, named ``{prefix}l{k}.{w_gta,w_lta,w_att,g_att}``
    plus ``{prefix}skip``."""
    params = {}
    c = cfg.in_dim
    for k, c_out in enumerate(cfg.layer_dims):
        params[f"{prefix}l{k}.w_gta"] = glorot(rng, c, c_out)
        params[f"{prefix}l{k}.w_lta"] = glorot(rng, c, c_out)
        params[f"{prefix}l{k}.w_att"] = glorot(rng, c, cfg.att_dim)
        params[f"{prefix}l{k}.g_att"] = glorot(rng, 2 * cfg.att_dim, 1)
        c = c_out
    skip_in = sum(cfg.layer_dims) if cfg.combine == "concat" else cfg.layer_dims[-1]
    params[f"{prefix}skip"] = glorot(rng, skip_in, cfg.out_dim)
    return params


def lta_param_names(cfg: EncoderConfig, prefix: str = "") -> list[str]:
    return [f"{prefix}l{k}.{w}" for k in range(len(cfg.layer_dims))
            for w in ("w_lta", "w_att", "g_att")]


def gta_param_names(cfg: EncoderConfig, prefix: str = "") -> list[str]:
    return [f"{prefix}l{k}.w_gta" for k in range(len(cfg.layer_dims))]


def attention_support(g: Graph, self_loops: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Row/column index arrays of the attention support, sorted by row."""
    return _support(g, self_loops)


def _support(g: Graph, self_loops: bool):
    key = "_att_support_self" if self_loops else "_att_support"
    cached = g.__dict__.get(key)
    if cached is not None:
        return cached
    rows, cols = g.directed_edges
    if self_loops:
        ids = np.arange(g.n)
        rows, cols = np.r_[rows, ids], np.r_[cols, ids]
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
    g.__dict__[key] = (rows, cols)
    return rows, cols


def gta_agg(p: sp.spmatrix, x, w_gta):
    """Pre-activation global aggregation ``P @ X @ W_gta``."""
    out = ad.spmm(p, ad.matmul(x, w_gta))
    return _finish(out, x, w_gta)


def _edge_attention(g: Graph, x, w_att, g_att, self_loops: bool) -> Tensor:
    rows, cols = _support(g, self_loops)
    h = ad.matmul(x, w_att)
    f = w_att.shape[1] if not isinstance(w_att, Tensor) else w_att.value.shape[1]
    g_src = ad.take(g_att, slice(0, f))
    g_dst = ad.take(g_att, slice(f, 2 * f))
    s = ad.reshape(ad.matmul(h, g_src), (-1,))
    t = ad.reshape(ad.matmul(h, g_dst), (-1,))
    phi = ad.relu(ad.add(ad.take(s, rows), ad.take(t, cols)))
    return ad.row_softmax(phi, rows, g.n)


def attention_weights(g: Graph, x, w_att, g_att, self_loops: bool = True):
    """Row-stochastic attention matrix over each node's neighborhood.

    With array inputs returns an ``(n, n)`` CSR matrix; with Tensor inputs
    returns the per-entry weights aligned with :func:`attention_support`.
    """
    a = _edge_attention(g, x, w_att, np.reshape(g_att, (-1, 1)) if not isinstance(g_att, Tensor)
                        else g_att, self_loops)
    if _any_tensor(x, w_att, g_att):
        return a
    rows, cols = _support(g, self_loops)
    return sp.csr_matrix((a.value, (rows, cols)), shape=(g.n, g.n))


def lta_agg(a_att, x, w_lta, g: Graph | None = None, self_loops: bool = True):
    """Pre-activation local aggregation ``A' @ X @ W_lta``.

    ``a_att`` is either a sparse matrix or, in the differentiable path, the
    edge-weight Tensor from :func:`attention_weights` together with ``g``.
    """
    if isinstance(a_att, Tensor):
        rows, cols = _support(g, self_loops)
        out = ad.edge_aggregate(a_att, rows, cols, ad.matmul(x, w_lta), g.n)
        return out
    out = ad.spmm(sp.csr_matrix(a_att), ad.matmul(x, w_lta))
    return _finish(out, x, w_lta)


def msa_layer(g: Graph, x, layer: dict, cfg: EncoderConfig | None = None,
              use_gta: bool = True, use_lta: bool = True):
    """``relu(P X W_gta + lambda * A' X W_lta)`` for one layer.

    ``layer`` maps ``w_gta, w_lta, w_att, g_att`` to arrays or Tensors.
    Disabling a path drops its term entirely.
    """
    cfg = cfg or EncoderConfig()
    terms = []
    if use_gta:
        terms.append(ad.spmm(g.propagation, ad.matmul(x, layer["w_gta"])))
    if use_lta:
        att = _edge_attention(g, x, layer["w_att"], layer["g_att"], cfg.attention_self)
        loc = lta_agg(att, x, layer["w_lta"], g, cfg.attention_self)
        if cfg.lambda_combine != 1.0:
            loc = ad.mul(loc, cfg.lambda_combine)
        terms.append(loc)
    if not terms:
        raise ValueError("at least one aggregation path must be enabled")
    pre = terms[0] if len(terms) == 1 else ad.add(terms[0], terms[1])
    return _finish(ad.relu(pre), x, *layer.values())


def encode(g: Graph, x0, params: dict, cfg: EncoderConfig | None = None, prefix: str = "",
           use_gta: bool = True, use_lta: bool = True):
    """Run the stacked MSA layers and the skip projection; returns ``(n, out_dim)``."""
    cfg = cfg or EncoderConfig()
    shape = x0.value.shape if isinstance(x0, Tensor) else np.shape(x0)
    if shape != (g.n, cfg.in_dim):
        raise ValueError(f"features have shape {shape}, expected {(g.n, cfg.in_dim)}")
    h = x0
    outs = []
    for k in range(len(cfg.layer_dims)):
        layer = {w: params[f"{prefix}l{k}.{w}"] for w in ("w_gta", "w_lta", "w_att", "g_att")}
        h = msa_layer(g, ad.tensor(h), layer, cfg, use_gta, use_lta)
        outs.append(h)
    if cfg.combine == "concat":
        z = ad.concat_cols(outs)
    else:
        z = outs[0]
        for o in outs[1:]:
            z = ad.add(z, o)
    out = ad.matmul(z, params[f"{prefix}skip"])
    return _finish(out, x0, *params.values())
