"""
Scoring identity links
======================

A trained model yields mapped embeddings for the first network and plain
embeddings for the second. Held-out anchors become positive pairs, mismatched
anchors become negatives, and a logistic unit decides which is which.
"""

import numpy as np

from graphuil.evaluation import build_pair_dataset, evaluate, repeat_eval, train_classifier, welch_t_test

# stand-in embeddings: the mapper output lands near the true counterpart
rng = np.random.default_rng(0)
n, d = 200, 16
emb2 = rng.normal(size=(n, d))
good = emb2 + 0.3 * rng.normal(size=(n, d))
poor = emb2 + 1.5 * rng.normal(size=(n, d))
anchors = np.stack([np.arange(n), np.arange(n)], 1)
train, test = anchors[:120], anchors[120:]

# one positive per anchor plus as many mismatched pairs
ds = build_pair_dataset(train, (good, emb2), neg_seed=1, split="train")
print(f"{len(ds)} training pairs, {int(ds.y.sum())} positive, feature width {ds.x.shape[1]}")

# A linear unit on the raw concatenation can only score a.u + b.v, which ranks
# accounts, not pairs. The interaction form [u*v ; (u-v)^2] lets it compare them.
te = build_pair_dataset(test, (good, emb2), neg_seed=2, split="test")
for inputs in ("concat", "interaction"):
    clf = train_classifier(ds, seed=3, inputs=inputs)
    print(f"{inputs:>12} input: test accuracy {evaluate(clf, te).accuracy:.3f}")

# ten repeats re-sample the negatives and re-fit the classifier
m_good = repeat_eval((good, emb2), train, test, n_repeats=10, seed=0)
m_poor = repeat_eval((poor, emb2), train, test, n_repeats=10, seed=0)
print(f"close mapping: accuracy {m_good.accuracy_mean:.3f} +- {m_good.accuracy_std:.3f}, "
      f"F1 {m_good.f1_mean:.3f}")
print(f"loose mapping: accuracy {m_poor.accuracy_mean:.3f} +- {m_poor.accuracy_std:.3f}, "
      f"F1 {m_poor.f1_mean:.3f}")

# is the gap more than repeat-to-repeat noise?
r = welch_t_test(m_good.accuracies, m_poor.accuracies)
print(f"Welch t = {r.t:.2f}, df = {r.df:.1f}, p = {r.p:.2e}")
