"""Linkage classification protocol: balanced true/false pair datasets from
held-out anchors, a logistic classifier on pair features built from
``f(x1_i)`` and ``x2_j``, repeated scoring, and Welch's t-test for comparing
configurations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .numerics import AdamState, adam_step, value_and_grad
from .numerics import autodiff as ad


@dataclass(frozen=True)
class PairDataset:
    x: np.ndarray
    y: np.ndarray
    split: str = ""
    balanced: bool = True

    def __len__(self):
        return len(self.y)


def sample_false_pairs(anchors: np.ndarray, count: int, rng, exclude=None) -> np.ndarray:
    """``count`` distinct mismatched pairs whose endpoints both come from
    ``anchors`` (one from each side) and which are not true anchor pairs."""
    anchors = np.asarray(anchors, dtype=np.int64).reshape(-1, 2)
    k = len(anchors)
    if k * (k - 1) < count:
        raise ValueError(f"{k} anchors admit only {k * (k - 1)} false pairs, need {count}")
    true = {(int(a), int(b)) for a, b in (anchors if exclude is None else exclude)}
    true |= {(int(a), int(b)) for a, b in anchors}
    chosen: dict[tuple[int, int], None] = {}
    while len(chosen) < count:
        i, j = rng.integers(k, size=2)
        pair = (int(anchors[i, 0]), int(anchors[j, 1]))
        if pair in true or pair in chosen:
            continue
        chosen[pair] = None
    return np.asarray(list(chosen), dtype=np.int64)


def build_pair_dataset(anchors, model, neg_seed, split: str = "",
                       all_anchors=None) -> PairDataset:
    """One positive per anchor plus as many sampled false pairs.

    Feature vector of pair ``(i, j)`` is ``mapper(emb1[i]) ++ emb2[j]``.
    Only the given anchors are read; ``all_anchors`` (optional) is used
    purely to reject false pairs that are true links elsewhere.
    """
    anchors = np.asarray(anchors, dtype=np.int64).reshape(-1, 2)
    if not len(anchors):
        raise ValueError("anchor split is empty")
    rng = np.random.default_rng(neg_seed)
    neg = sample_false_pairs(anchors, len(anchors), rng, exclude=all_anchors)
    mapped, emb2 = _pair_sources(model)
    pairs = np.concatenate([anchors, neg])
    x = np.concatenate([mapped[pairs[:, 0]], emb2[pairs[:, 1]]], axis=1)
    y = np.r_[np.ones(len(anchors)), np.zeros(len(neg))]
    return PairDataset(x, y, split)


def _pair_sources(model):
    if isinstance(model, tuple):
        return model
    return model.mapped1, model.emb2


# -- classifier ------------------------------------------------------------------

def pair_interaction(x: np.ndarray) -> np.ndarray:
    """``[u * v ; (u - v)**2]`` from rows ``[u ; v]``; same width as the input."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[1] // 2
    u, v = x[:, :d], x[:, d:]
    return np.concatenate([u * v, (u - v) ** 2], axis=1)


INPUTS = {"concat": lambda x: np.asarray(x, dtype=np.float64), "interaction": pair_interaction}


@dataclass
class Classifier:
    params: dict
    mean: np.ndarray
    scale: np.ndarray
    inputs: str = "interaction"

    def logits(self, x):
        h = ad.tensor((INPUTS[self.inputs](x) - self.mean) / self.scale)
        return _forward(h, self.params).value

    def predict_proba(self, x) -> np.ndarray:
        return special.expit(self.logits(x))

    def predict(self, x) -> np.ndarray:
        return (self.predict_proba(x) >= 0.5).astype(np.int64)


def _forward(h, p):
    if "w_h" in p:
        h = ad.relu(ad.add(ad.matmul(h, p["w_h"]), p["b_h"]))
    return ad.reshape(ad.add(ad.matmul(h, p["w"]), p["b"]), (-1,))


def train_classifier(pairs: PairDataset, seed, hidden: int = 0, epochs: int = 200,
                     lr: float = 0.01, init: str = "glorot", standardize: bool = False,
                     inputs: str = "interaction") -> Classifier:
    """Logistic-output network trained full-batch with Adam on cross-entropy.

    ``hidden=0`` is a single logistic unit; ``hidden>0`` inserts one ReLU
    layer of that width. ``inputs`` picks what the unit sees: the raw
    ``[u ; v]`` concatenation or its :func:`pair_interaction` transform.
    ``standardize`` rescales inputs with training-set statistics; it is off
    by default because the interaction features are already on a common
    scale and rescaling amplifies noisy low-variance dimensions.
    """
    x = INPUTS[inputs](pairs.x)
    y = np.asarray(pairs.y, dtype=np.float64)
    d = x.shape[1]
    if standardize:
        mean, scale = x.mean(axis=0), x.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
    else:
        mean, scale = np.zeros(d), np.ones(d)
    xs = (x - mean) / scale
    rng = np.random.default_rng(seed)
    zero = init == "zeros"

    def w(a, b):
        return np.zeros((a, b)) if zero else rng.uniform(-1, 1, (a, b)) * np.sqrt(6.0 / (a + b))

    params = {}
    if hidden:
        params["w_h"], params["b_h"] = w(d, hidden), np.zeros((1, hidden))
        d = hidden
    params["w"], params["b"] = w(d, 1), np.zeros((1, 1))
    state = AdamState.for_params(params, lr=lr)
    xt = ad.tensor(xs)

    def loss(p):
        z = _forward(xt, p)
        # mean binary cross-entropy with logits
        return ad.mean(ad.sub(ad.softplus(z), ad.mul(z, y)))

    for _ in range(epochs):
        _, g, _ = value_and_grad(loss, params)
        adam_step(params, g, state)
    return Classifier(params, mean, scale, inputs)


# -- metrics ---------------------------------------------------------------------

@dataclass(frozen=True)
class Scores:
    accuracy: float
    f1: float
    micro_f1: float
    tp: int
    fp: int
    fn: int
    tn: int


def confusion_scores(y_true, y_pred) -> Scores:
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    tp = int(np.sum(y_true & y_pred))
    tn = int(np.sum(~y_true & ~y_pred))
    fp = int(np.sum(~y_true & y_pred))
    fn = int(np.sum(y_true & ~y_pred))
    total = tp + tn + fp + fn
    acc = (tp + tn) / total
    f1 = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 1.0
    # micro-F1 pools both classes' counts; for single-label binary data it equals accuracy
    micro = (tp + tn) / total
    return Scores(acc, f1, micro, tp, fp, fn, tn)


def evaluate(classifier: Classifier, test_pairs: PairDataset) -> Scores:
    if not len(test_pairs):
        raise ValueError("no test pairs")
    return confusion_scores(test_pairs.y, classifier.predict(test_pairs.x))


@dataclass
class EvalMetrics:
    accuracy_mean: float
    accuracy_std: float
    f1_mean: float
    f1_std: float
    micro_f1_mean: float
    repeats: list[dict] = field(default_factory=list)

    @property
    def accuracies(self) -> list[float]:
        return [r["accuracy"] for r in self.repeats]

    @property
    def f1s(self) -> list[float]:
        return [r["f1"] for r in self.repeats]

    def to_dict(self):
        return {"accuracy_mean": self.accuracy_mean, "accuracy_std": self.accuracy_std,
                "f1_mean": self.f1_mean, "f1_std": self.f1_std,
                "micro_f1_mean": self.micro_f1_mean, "repeats": self.repeats}


def repeat_eval(model, train_anchors, test_anchors, n_repeats: int = 10, seed: int = 0,
                **classifier_kw) -> EvalMetrics:
    """Re-sample false pairs and re-train the classifier ``n_repeats`` times.

    The classifier is fit on pairs built from ``train_anchors`` and scored on
    pairs built from ``test_anchors`` only.
    """
    runs = []
    for r in range(n_repeats):
        tr = build_pair_dataset(train_anchors, model, [seed, r, 0], "train")
        te = build_pair_dataset(test_anchors, model, [seed, r, 1], "test")
        clf = train_classifier(tr, [seed, r, 2], **classifier_kw)
        s = evaluate(clf, te)
        runs.append({"repeat": r, "accuracy": s.accuracy, "f1": s.f1, "micro_f1": s.micro_f1})
    acc = np.array([r["accuracy"] for r in runs])
    f1 = np.array([r["f1"] for r in runs])
    micro = np.array([r["micro_f1"] for r in runs])
    return EvalMetrics(float(acc.mean()), float(acc.std()), float(f1.mean()), float(f1.std()),
                       float(micro.mean()), runs)


# -- Welch's t-test ----------------------------------------------------------------

@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p: float
    degenerate: bool = False


def welch_t_test(a, b) -> TTestResult:
    """Two-sided unequal-variance t-test.

    The p-value is ``I_{df/(df+t^2)}(df/2, 1/2)``, the regularized
    incomplete beta form of the Student-t tail.
    """
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two observations")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return TTestResult(0.0, float(len(a) + len(b) - 2), 1.0, degenerate=True)
        return TTestResult(float(np.copysign(np.inf, diff)), float(len(a) + len(b) - 2), 0.0,
                           degenerate=True)
    t = diff / np.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(float(t), float(df), min(1.0, max(0.0, p)))
