"""Joint semi-supervised training of both encoders and the mapper."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FeatureInitSpec, init_features
from .graph import Graph
from .msa import EncoderConfig, encode, gta_param_names, init_encoder, lta_param_names
from .numerics import AdamState, ParamSet, adam_step, value_and_grad
from .numerics import params as param_io
from .numerics.autodiff import Tensor
from .objectives import (LossBreakdown, combine_losses, global_loss, init_mapper, local_loss,
                         mapper_forward, match_loss, negative_sample, total_loss)

log = logging.getLogger(__name__)

ABLATIONS = ("full", "no_local", "no_global", "no_reconstruction", "gta_only", "lta_only")
PREFIXES = ("sn1.", "sn2.")


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, term: str):
        super().__init__(f"loss term {term!r} became non-finite at epoch {epoch}")
        self.epoch = epoch
        self.term = term


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 10.0
    beta: float = 1.0
    epochs: int = 1000
    lr: float = 0.001
    seed: int = 0
    patience: int = 100
    ablation: str = "full"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    features: FeatureInitSpec = field(default_factory=FeatureInitSpec)
    mapper_dims: tuple[int, ...] = (128, 128, 128, 128)

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        if self.ablation in ("no_global", "no_reconstruction") and self.alpha != 0:
            raise ValueError(f"ablation {self.ablation} requires alpha == 0")
        if self.ablation in ("no_local", "no_reconstruction") and self.beta != 0:
            raise ValueError(f"ablation {self.ablation} requires beta == 0")
        object.__setattr__(self, "mapper_dims", tuple(self.mapper_dims))
        d = self.encoder.out_dim
        if len(self.mapper_dims) < 2 or self.mapper_dims[0] != d or self.mapper_dims[-1] != d:
            raise ValueError(f"mapper_dims must start and end at the embedding width {d}")
        if self.features.method != "file" and self.features.dim != self.encoder.in_dim:
            raise ValueError(f"feature dim {self.features.dim} does not match encoder "
                             f"in_dim {self.encoder.in_dim}")

    @property
    def use_gta(self) -> bool:
        return self.ablation != "lta_only"

    @property
    def use_lta(self) -> bool:
        return self.ablation != "gta_only"

    def feature_spec(self, net: int) -> FeatureInitSpec:
        """Per-network feature spec; the seed is derived from the master seed."""
        return dataclasses.replace(self.features, seed=self.seed * 1000 + 17 * net + self.features.seed)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["mapper_dims"] = list(self.mapper_dims)
        d["encoder"]["layer_dims"] = list(self.encoder.layer_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d.get("encoder", {}))
        d["features"] = FeatureInitSpec(**d.get("features", {}))
        return cls(**d)


def make_ablation(cfg: TrainConfig, kind: str) -> TrainConfig:
    """Config for an ablation named after the component it removes."""
    if kind == "full":
        return cfg
    if kind == "no_local":
        return dataclasses.replace(cfg, beta=0.0, ablation=kind)
    if kind == "no_global":
        return dataclasses.replace(cfg, alpha=0.0, ablation=kind)
    if kind == "no_reconstruction":
        return dataclasses.replace(cfg, alpha=0.0, beta=0.0, ablation=kind)
    if kind in ("gta_only", "lta_only"):
        return dataclasses.replace(cfg, ablation=kind)
    raise ValueError(f"unknown ablation {kind!r}; expected one of {ABLATIONS}")


def frozen_params(cfg: TrainConfig) -> set[str]:
    names: list[str] = []
    for p in PREFIXES:
        if not cfg.use_lta:
            names += lta_param_names(cfg.encoder, p)
        if not cfg.use_gta:
            names += gta_param_names(cfg.encoder, p)
    return set(names)


def init_params(cfg: TrainConfig) -> ParamSet:
    rng = np.random.default_rng([cfg.seed, 1])
    params = ParamSet()
    for p in PREFIXES:
        params.update(init_encoder(cfg.encoder, rng, p))
    params.update(init_mapper(rng, cfg.mapper_dims))
    for name in frozen_params(cfg):
        params[name] = np.zeros_like(params[name])
    return params


@dataclass
class TrainedModel:
    params: ParamSet
    emb1: np.ndarray
    emb2: np.ndarray
    history: list[dict]
    config: TrainConfig
    best_epoch: int

    @property
    def mapped1(self) -> np.ndarray:
        return mapper_forward(self.emb1, self.params)

    def checksum(self) -> str:
        ps = self.params.copy()
        ps["emb1"], ps["emb2"] = self.emb1, self.emb2
        return ps.checksum()


@dataclass
class TrainState:
    """Everything needed to continue a run bit-for-bit."""

    params: ParamSet
    adam: AdamState
    epoch: int = 0
    best_val: float = np.inf
    best_epoch: int = -1
    best_params: ParamSet | None = None
    since_best: int = 0
    history: list[dict] = field(default_factory=list)
    done: bool = False


class Problem:
    """Fixed inputs of one training run: graphs, features and anchor splits."""

    def __init__(self, g1: Graph, g2: Graph, anchors_train, anchors_val, cfg: TrainConfig,
                 features=None):
        self.g1, self.g2, self.cfg = g1, g2, cfg
        self.train = np.asarray(anchors_train, dtype=np.int64).reshape(-1, 2)
        self.val = np.asarray(anchors_val, dtype=np.int64).reshape(-1, 2)
        if not len(self.train):
            raise ValueError("training anchors must be non-empty")
        for a, g, side in ((self.train, g1, 0), (self.train, g2, 1),
                           (self.val, g1, 0), (self.val, g2, 1)):
            if len(a) and (a[:, side].min() < 0 or a[:, side].max() >= g.n):
                raise ValueError("anchor references a node outside its graph")
        if features is None:
            features = (init_features(g1, cfg.feature_spec(1)), init_features(g2, cfg.feature_spec(2)))
        self.x1, self.x2 = features

    def embed(self, params):
        cfg = self.cfg
        kw = dict(cfg=cfg.encoder, use_gta=cfg.use_gta, use_lta=cfg.use_lta)
        z1 = encode(self.g1, self.x1, params, prefix="sn1.", **kw)
        z2 = encode(self.g2, self.x2, params, prefix="sn2.", **kw)
        return z1, z2

    def loss(self, params, epoch: int):
        """Scalar Tensor objective plus the per-term values and embeddings."""
        cfg = self.cfg
        z1, z2 = self.embed(params)
        masks = (negative_sample(self.g1, [cfg.seed, 2, 1, epoch]),
                 negative_sample(self.g2, [cfg.seed, 2, 2, epoch]))
        parts = {}
        for k, (z, g, mask) in enumerate(((z1, self.g1, masks[0]), (z2, self.g2, masks[1])), 1):
            # zero-weighted terms are still reported but kept off the tape
            zg = z if cfg.alpha > 0 else z.value
            zl = z if cfg.beta > 0 else z.value
            parts[f"global_sn{k}"] = global_loss(zg, mask)
            parts[f"local_sn{k}"] = local_loss(g, zl)
        parts["match"] = match_loss(self.train, z1, z2, params)
        return combine_losses(parts, cfg.alpha, cfg.beta), parts, z1, z2

    def val_match(self, z1: np.ndarray, z2: np.ndarray, params) -> float:
        anchors = self.val if len(self.val) else self.train
        plain = {k: (v.value if isinstance(v, Tensor) else v) for k, v in params.items()}
        return float(match_loss(anchors, z1, z2, plain))

    def val_ratio(self, z1: np.ndarray, z2: np.ndarray, params) -> float:
        """Mean squared distance of true validation pairs over that of the
        mismatched ones. Unlike the raw match loss it does not reward
        shrinking every embedding, so it is the early-stopping criterion.
        Falls back to the raw loss with fewer than two validation anchors."""
        if len(self.val) < 2:
            return self.val_match(z1, z2, params)
        plain = {k: (v.value if isinstance(v, Tensor) else v) for k, v in params.items()}
        mapped = mapper_forward(z1[self.val[:, 0]], plain)
        target = z2[self.val[:, 1]]
        d = ((mapped[:, None, :] - target[None, :, :]) ** 2).sum(-1)
        off = ~np.eye(len(d), dtype=bool)
        denom = d[off].mean()
        return float(np.diag(d).mean() / denom) if denom > 0 else 1.0


def start_state(cfg: TrainConfig) -> TrainState:
    params = init_params(cfg)
    return TrainState(params=params, adam=AdamState.for_params(params, lr=cfg.lr))


def run_epochs(problem: Problem, state: TrainState, until: int | None = None) -> TrainState:
    """Advance ``state`` until ``until`` epochs (default: the config's), early
    stop or divergence."""
    cfg = problem.cfg
    frozen = frozen_params(cfg)
    wrt = set(state.params) - frozen
    stop_at = cfg.epochs if until is None else min(until, cfg.epochs)
    while not state.done and state.epoch < stop_at:
        e = state.epoch
        captured = {}

        def fn(p):
            out, parts, z1, z2 = problem.loss(p, e)
            captured.update(parts=parts, z1=z1, z2=z2, p=p)
            return out

        _, grads, _ = value_and_grad(fn, state.params, wrt=wrt)
        bd = total_loss(captured["parts"], cfg.alpha, cfg.beta)
        z1 = captured["z1"].value
        z2 = captured["z2"].value
        val_raw = problem.val_match(z1, z2, state.params)
        val = problem.val_ratio(z1, z2, state.params)
        record = {"epoch": e, **bd.to_dict(), "val_match": val_raw, "val_ratio": val}
        for term, v in record.items():
            if not np.isfinite(v):
                raise TrainingDiverged(e, term)
        state.history.append(record)
        if val < state.best_val:
            state.best_val, state.best_epoch = val, e
            state.best_params = state.params.copy()
            state.since_best = 0
        else:
            state.since_best += 1
        adam_step(state.params, grads, state.adam, frozen)
        state.epoch += 1
        if state.since_best >= cfg.patience:
            log.info("early stop at epoch %d (best %d)", e, state.best_epoch)
            state.done = True
    if state.epoch >= cfg.epochs:
        state.done = True
    return state


def finish(problem: Problem, state: TrainState) -> TrainedModel:
    params = state.best_params if state.best_params is not None else state.params
    z1, z2 = problem.embed(params)
    return TrainedModel(params.copy(), np.asarray(z1), np.asarray(z2), list(state.history),
                        problem.cfg, state.best_epoch)


def train(g1: Graph, g2: Graph, anchors_train, anchors_val, cfg: TrainConfig,
          features=None) -> TrainedModel:
    """Full-batch Adam on the weighted loss; returns the snapshot with the
    lowest validation distance ratio (see :meth:`Problem.val_ratio`)."""
    problem = Problem(g1, g2, anchors_train, anchors_val, cfg, features)
    state = run_epochs(problem, start_state(cfg))
    return finish(problem, state)


# -- checkpoints -------------------------------------------------------------------

STATE_BLOCKS = "state.bin"
STATE_META = "state.json"


def save_state(state: TrainState, out_dir, features=None) -> None:
    """Write everything :func:`load_state` needs to resume bit-for-bit.

    Array data goes to one parameter container with prefixed block names
    (``p/``, ``m/``, ``v/``, ``best/``, ``feat/``); scalars to JSON.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    blocks = ParamSet()
    for k, v in state.params.items():
        blocks["p/" + k] = v
        blocks["m/" + k] = state.adam.m[k]
        blocks["v/" + k] = state.adam.v[k]
    if state.best_params is not None:
        for k, v in state.best_params.items():
            blocks["best/" + k] = v
    if features is not None:
        blocks["feat/x1"], blocks["feat/x2"] = features
    param_io.save(blocks, out / STATE_BLOCKS)
    meta = {"epoch": state.epoch, "t": state.adam.t, "best_val": _json_float(state.best_val),
            "best_epoch": state.best_epoch, "since_best": state.since_best, "done": state.done,
            "adam": {"lr": state.adam.lr, "beta1": state.adam.beta1, "beta2": state.adam.beta2,
                     "eps": state.adam.eps},
            "history": state.history}
    (out / STATE_META).write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_state(in_dir) -> tuple[TrainState, tuple[np.ndarray, np.ndarray] | None]:
    d = Path(in_dir)
    blocks = param_io.load(d / STATE_BLOCKS)
    meta = json.loads((d / STATE_META).read_text())
    params, best = ParamSet(), ParamSet()
    adam = AdamState(t=meta["t"], **meta["adam"])
    for k, v in blocks.items():
        kind, name = k.split("/", 1)
        if kind == "p":
            params[name] = v
        elif kind == "m":
            adam.m[name] = v
        elif kind == "v":
            adam.v[name] = v
        elif kind == "best":
            best[name] = v
    feats = (blocks["feat/x1"], blocks["feat/x2"]) if "feat/x1" in blocks else None
    state = TrainState(params=params, adam=adam, epoch=meta["epoch"],
                       best_val=float(meta["best_val"]), best_epoch=meta["best_epoch"],
                       best_params=best or None, since_best=meta["since_best"],
                       history=meta["history"], done=meta["done"])
    return state, feats


def _json_float(x: float):
    return x if np.isfinite(x) else "inf"
