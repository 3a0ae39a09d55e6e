"""Command-line interface: ``graphuil {gen,train,eval,ablate,grid,rerun}``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path


from . import __version__
from .benchgen import BenchSpec, generate, load_instance, save_instance
from .evaluation import EvalMetrics, repeat_eval, welch_t_test
from .features import FeatureInitSpec, init_features
from .msa import EncoderConfig
from .numerics import ParamSet
from .numerics import params as param_io
from .training import (ABLATIONS, Problem, TrainConfig, TrainedModel, TrainingDiverged, finish,
                       load_state, make_ablation, run_epochs, save_state, start_state)

log = logging.getLogger("graphuil")

MANIFEST_SCHEMA = 1
GRID_VALUES = (0.01, 0.1, 1.0, 10.0, 100.0)

CONFIG_HELP = """\
configuration file (--config): one ``key = value`` per line, keys are long
flag names with or without dashes (e.g. ``alpha = 10`` or ``feature-dim = 64``),
``#`` starts a comment. Precedence: command-line flags > config file > defaults.
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- argument groups ---------------------------------------------------------------

def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--log-level", default="WARNING")


def _add_train_flags(p):
    d = TrainConfig()
    f = d.features
    g = p.add_argument_group("model and training")
    g.add_argument("--alpha", type=float, default=d.alpha)
    g.add_argument("--beta", type=float, default=d.beta)
    g.add_argument("--epochs", type=int, default=d.epochs)
    g.add_argument("--lr", type=float, default=d.lr)
    g.add_argument("--patience", type=int, default=d.patience)
    g.add_argument("--layer-dims", default=",".join(map(str, d.encoder.layer_dims)),
                   help="comma-separated MSA layer widths")
    g.add_argument("--att-dim", type=int, default=d.encoder.att_dim)
    g.add_argument("--out-dim", type=int, default=d.encoder.out_dim)
    g.add_argument("--attention-self", default="on" if d.encoder.attention_self else "off",
                   choices=("on", "off"), help="let each node attend to itself (default on)")
    g.add_argument("--mapper-hidden", default=",".join(map(str, d.mapper_dims[1:-1])),
                   help="comma-separated hidden widths of the mapper")
    g.add_argument("--feature-method", default=f.method, choices=("walk_skipgram", "spectral", "random"))
    g.add_argument("--feature-dim", type=int, default=f.dim)
    g.add_argument("--walks-per-node", type=int, default=f.walks_per_node)
    g.add_argument("--walk-length", type=int, default=f.walk_length)
    g.add_argument("--window", type=int, default=f.window)
    g.add_argument("--negatives", type=int, default=f.negatives)
    g.add_argument("--feature-epochs", type=int, default=f.epochs)


def _add_eval_flags(p):
    p.add_argument("--repeats", type=int, default=10)


def _ints(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None
    if any(v < 1 for v in vals):
        raise UsageError(f"widths must be positive, got {text!r}")
    return vals


def train_config(a, ablation: str = "full") -> TrainConfig:
    layers = _ints(a.layer_dims)
    if not layers:
        raise UsageError("--layer-dims must list at least one width")
    enc = EncoderConfig(in_dim=a.feature_dim, layer_dims=layers, att_dim=a.att_dim, out_dim=a.out_dim,
                        attention_self=a.attention_self == "on")
    feats = FeatureInitSpec(method=a.feature_method, dim=a.feature_dim, walks_per_node=a.walks_per_node,
                            walk_length=a.walk_length, window=a.window, negatives=a.negatives,
                            epochs=a.feature_epochs)
    mapper = (a.out_dim, *_ints(a.mapper_hidden), a.out_dim)
    base = TrainConfig(alpha=a.alpha, beta=a.beta, epochs=a.epochs, lr=a.lr, seed=a.seed,
                       patience=a.patience, encoder=enc, features=feats, mapper_dims=mapper)
    return make_ablation(base, ablation)


# -- config file --------------------------------------------------------------------

def read_config_file(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.lstrip("-").replace("-", "_")] = v
    return out


def _apply_config(sub: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    a = sub.parse_args(argv)
    if not a.config:
        return a
    try:
        cfg = read_config_file(a.config)
    except OSError as e:
        raise UsageError(f"cannot read config file: {e}") from None
    known = {act.dest: act for act in sub._actions}
    for k in cfg:
        if k not in known or k in ("help", "config"):
            raise UsageError(f"unknown config key {k!r}")
    # convert through each action's type so config values behave like flags
    defaults = {}
    for k, v in cfg.items():
        act = known[k]
        try:
            defaults[k] = act.type(v) if act.type else v
        except ValueError:
            raise UsageError(f"bad value for {k!r}: {v!r}") from None
        if act.choices and defaults[k] not in act.choices:
            raise UsageError(f"bad value for {k!r}: {v!r}")
    sub.set_defaults(**defaults)
    return sub.parse_args(argv)


# -- manifest and output helpers --------------------------------------------------------

def _resolved(a) -> dict:
    return {k: v for k, v in sorted(vars(a).items()) if k not in ("func", "log_level")}


def write_manifest(out_dir: Path, command: str, a, argv, inputs, outputs, started: float) -> Path:
    m = {"schema": MANIFEST_SCHEMA, "command": command, "argv": list(argv),
         "config": _resolved(a), "seed": a.seed, "inputs": inputs,
         "outputs": sorted(str(o) for o in outputs), "tool_version": __version__,
         "duration_s": round(time.time() - started, 3)}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
    return path


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return path


def write_history(path: Path, history: list[dict]) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


# -- model checkpoints -------------------------------------------------------------------

def save_model(model: TrainedModel, out_dir: Path) -> list[Path]:
    blocks = model.params.copy()
    blocks["emb/1"], blocks["emb/2"] = model.emb1, model.emb2
    param_io.save(blocks, out_dir / "params.bin")
    meta = {"schema": MANIFEST_SCHEMA, "config": model.config.to_dict(), "best_epoch": model.best_epoch,
            "checksum": model.checksum()}
    write_json(out_dir / "train.json", meta)
    return [out_dir / "params.bin", out_dir / "train.json"]


def load_model(ckpt_dir) -> TrainedModel:
    d = Path(ckpt_dir)
    for f in ("params.bin", "train.json"):
        if not (d / f).exists():
            raise FileNotFoundError(d / f)
    blocks = param_io.load(d / "params.bin")
    meta = json.loads((d / "train.json").read_text())
    emb1, emb2 = blocks.pop("emb/1"), blocks.pop("emb/2")
    return TrainedModel(ParamSet(blocks), emb1, emb2, [], TrainConfig.from_dict(meta["config"]),
                        meta["best_epoch"])


# -- workers ----------------------------------------------------------------------------

def _run_variant(job):
    """Train and evaluate one configuration; safe to run in a worker process."""
    inst_dir, cfg, feats, repeats, seed, out_dir = job
    inst = load_instance(inst_dir)
    a = inst.anchors
    problem = Problem(inst.g1, inst.g2, a.get("train"), a.get("val"), cfg, feats)
    model = finish(problem, run_epochs(problem, start_state(cfg)))
    metrics = repeat_eval(model, a.get("train"), a.get("test"), repeats, seed=seed)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_history(out / "history.jsonl", model.history)
        write_json(out / "metrics.json", {"schema": MANIFEST_SCHEMA, **metrics.to_dict(),
                                          "best_epoch": model.best_epoch,
                                          "checksum": model.checksum()})
    return metrics.to_dict()


def _map(jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [_run_variant(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_variant, jobs))


def _shared_features(inst, cfg: TrainConfig):
    return init_features(inst.g1, cfg.feature_spec(1)), init_features(inst.g2, cfg.feature_spec(2))


def _metrics_from_dict(d) -> EvalMetrics:
    return EvalMetrics(d["accuracy_mean"], d["accuracy_std"], d["f1_mean"], d["f1_std"],
                       d["micro_f1_mean"], d["repeats"])


# -- commands ----------------------------------------------------------------------------

def cmd_gen(a, argv) -> int:
    try:
        spec = BenchSpec(model=a.model, n=a.n, m=a.m, k=a.k, p_rewire=a.p_rewire, blocks=a.blocks,
                         p_in=a.p_in, p_out=a.p_out, overlap=a.overlap, edge_noise=a.noise,
                         splits=tuple(a.splits), seed=a.seed)
    except ValueError as e:
        raise UsageError(str(e)) from None
    inst = generate(spec)
    # spec.json doubles as the manifest; it carries no timing so reruns are byte-identical
    inst.provenance.update({"command": "gen", "argv": list(argv), "tool_version": __version__,
                            "manifest_schema": MANIFEST_SCHEMA})
    files = save_instance(inst, a.out)
    log.info("wrote %s", ", ".join(map(str, files)))
    return 0


def cmd_train(a, argv) -> int:
    started = time.time()
    cfg = train_config(a, a.ablation)
    inst = load_instance(a.instance)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    anchors = inst.anchors
    feats = None
    state = None
    if a.resume:
        if not (out / "state.bin").exists():
            raise FileNotFoundError(out / "state.bin")
        saved = json.loads((out / "train.json").read_text())["config"] if (out / "train.json").exists() else None
        if saved is not None and TrainConfig.from_dict(saved) != cfg:
            raise ValueError("--resume with a configuration different from the checkpoint's")
        state, feats = load_state(out)
    problem = Problem(inst.g1, inst.g2, anchors.get("train"), anchors.get("val"), cfg, feats)
    feats = (problem.x1, problem.x2)
    if state is None:
        state = start_state(cfg)
    write_json(out / "train.json", {"schema": MANIFEST_SCHEMA, "config": cfg.to_dict(),
                                    "best_epoch": None, "checksum": None})
    step = a.checkpoint_every if a.checkpoint_every > 0 else cfg.epochs
    try:
        while not state.done:
            state = run_epochs(problem, state, state.epoch + step)
            save_state(state, out, feats)
    except TrainingDiverged:
        write_history(out / "history.jsonl", state.history)
        raise
    model = finish(problem, state)
    outputs = save_model(model, out) + [write_history(out / "history.jsonl", model.history),
                                        out / "state.bin", out / "state.json"]
    write_manifest(out, "train", a, argv, {"instance": str(a.instance)}, outputs, started)
    return 0


def cmd_eval(a, argv) -> int:
    started = time.time()
    model = load_model(a.checkpoint)
    inst = load_instance(a.instance)
    if model.emb1.shape[0] != inst.g1.n or model.emb2.shape[0] != inst.g2.n:
        raise ValueError(f"checkpoint embeds {model.emb1.shape[0]}/{model.emb2.shape[0]} nodes but the "
                         f"instance has {inst.g1.n}/{inst.g2.n}")
    anchors = inst.anchors
    m = repeat_eval(model, anchors.get("train"), anchors.get("test"), a.repeats, seed=a.seed)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    files = [write_json(out / "metrics.json", {"schema": MANIFEST_SCHEMA, **m.to_dict()}),
             write_csv(out / "metrics.csv", ["accuracy_mean", "accuracy_std", "f1_mean", "f1_std",
                                             "micro_f1_mean"],
                       [[m.accuracy_mean, m.accuracy_std, m.f1_mean, m.f1_std, m.micro_f1_mean]])]
    write_manifest(out, "eval", a, argv, {"checkpoint": str(a.checkpoint), "instance": str(a.instance)},
                   files, started)
    print(json.dumps({k: v for k, v in m.to_dict().items() if k != "repeats"}, sort_keys=True))
    return 0


def cmd_ablate(a, argv) -> int:
    started = time.time()
    base = train_config(a)
    inst = load_instance(a.instance)
    feats = _shared_features(inst, base)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = list(ABLATIONS)
    jobs = [(a.instance, make_ablation(base, v), feats, a.repeats, a.seed, out / "runs" / v)
            for v in variants]
    results = dict(zip(variants, (_metrics_from_dict(r) for r in _map(jobs, a.workers))))
    full = results["full"]
    rows = []
    for v in variants:
        m = results[v]
        tt = welch_t_test(full.accuracies, m.accuracies)
        cfg = make_ablation(base, v)
        rows.append([v, cfg.alpha, cfg.beta, m.accuracy_mean, m.accuracy_std, m.f1_mean, m.f1_std,
                     tt.t, tt.df, tt.p])
    files = [write_csv(out / "ablation.csv",
                       ["variant", "alpha", "beta", "accuracy_mean", "accuracy_std", "f1_mean",
                        "f1_std", "t_vs_full", "df_vs_full", "p_vs_full"], rows)]
    files += [out / "runs" / v / f for v in variants for f in ("history.jsonl", "metrics.json")]
    write_manifest(out, "ablate", a, argv, {"instance": str(a.instance)}, files, started)
    return 0


def cmd_grid(a, argv) -> int:
    started = time.time()
    base = train_config(a)
    inst = load_instance(a.instance)
    feats = _shared_features(inst, base)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(al, be) for al in GRID_VALUES for be in GRID_VALUES]
    jobs = [(a.instance, dataclasses.replace(base, alpha=al, beta=be), feats, a.repeats, a.seed,
             out / "runs" / f"alpha={al!r}_beta={be!r}") for al, be in cells]
    results = _map(jobs, a.workers)
    rows = [[al, be, r["accuracy_mean"], r["accuracy_std"], r["f1_mean"], r["f1_std"]]
            for (al, be), r in zip(cells, results)]
    files = [write_csv(out / "grid.csv",
                       ["alpha", "beta", "accuracy_mean", "accuracy_std", "f1_mean", "f1_std"], rows)]
    write_manifest(out, "grid", a, argv, {"instance": str(a.instance)}, files, started)
    op = next(r for r in rows if r[0] == 10.0 and r[1] == 1.0)
    print(f"alpha=10 beta=1 accuracy_mean={op[2]:.4f}")
    return 0


def cmd_rerun(a, argv) -> int:
    m = json.loads(Path(a.manifest).read_text())
    if m.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"unsupported manifest schema {m.get('schema')!r}")
    replay = list(m["argv"])
    if a.out:
        if "--out" not in replay:
            raise ValueError("manifest has no --out to override")
        replay[replay.index("--out") + 1] = a.out
    return main(replay)


# -- parser --------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphuil", description="Cross-network user identity linkage with "
                "multi-stage graph aggregation.", epilog=CONFIG_HELP,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"graphuil {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic two-network benchmark")
    _add_common(g)
    g.add_argument("--model", default="ba", choices=("ba", "ws", "sbm"))
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--m", type=int, default=4, help="BA attachments per node")
    g.add_argument("--k", type=int, default=4, help="WS ring degree")
    g.add_argument("--p-rewire", type=float, default=0.1)
    g.add_argument("--blocks", type=int, default=2)
    g.add_argument("--p-in", type=float, default=0.1)
    g.add_argument("--p-out", type=float, default=0.01)
    g.add_argument("--overlap", type=float, default=0.6)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--splits", type=float, nargs=3, default=[0.6, 0.1, 0.3],
                   metavar=("TRAIN", "VAL", "TEST"))
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model on an instance", epilog=CONFIG_HELP)
    _add_common(t)
    t.add_argument("instance")
    _add_train_flags(t)
    t.add_argument("--ablation", default="full", choices=ABLATIONS)
    t.add_argument("--checkpoint-every", type=int, default=50,
                   help="epochs between resumable checkpoints (0: only at the end)")
    t.add_argument("--resume", action="store_true", help="continue from the state in --out")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a trained checkpoint")
    _add_common(e)
    e.add_argument("checkpoint")
    e.add_argument("instance")
    _add_eval_flags(e)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    for name, func, what in (("ablate", cmd_ablate, "train and compare the six variants"),
                             ("grid", cmd_grid, "sweep alpha and beta over 0.01..100")):
        s = sub.add_parser(name, help=what, epilog=CONFIG_HELP)
        _add_common(s)
        s.add_argument("instance")
        _add_train_flags(s)
        _add_eval_flags(s)
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--out", required=True)
        s.set_defaults(func=func)

    r = sub.add_parser("rerun", help="replay a command from its manifest.json")
    r.add_argument("manifest")
    r.add_argument("--out", help="write to this directory instead")
    r.set_defaults(func=cmd_rerun, seed=0, config=None, log_level="WARNING")
    return p


def _subparser(parser, name):
    for act in parser._actions:
        if isinstance(act, argparse._SubParsersAction):
            return act.choices[name]
    raise KeyError(name)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if a.config:
            command = a.command
            a = _apply_config(_subparser(parser, command), argv[argv.index(command) + 1:])
            a.command = command
        logging.basicConfig(level=getattr(logging, str(a.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        return a.func(a, argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:          # --help / --version
        return int(e.code or 0)
    except TrainingDiverged as e:
        print(f"graphuil: training diverged: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"graphuil: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
