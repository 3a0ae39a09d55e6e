import numpy as np
import pytest
from scipy import stats

from graphuil.evaluation import (PairDataset, build_pair_dataset, confusion_scores, evaluate,
                                 pair_interaction, repeat_eval, train_classifier, welch_t_test)


def toy_model(n=40, d=6, seed=0):
    rng = np.random.default_rng(seed)
    emb2 = rng.normal(size=(n, d))
    mapped = emb2 + 0.05 * rng.normal(size=(n, d))
    return mapped, emb2


class TestPairDataset:
    def test_balanced_sizes(self):
        anchors = np.stack([np.arange(10), np.arange(10)], 1)
        ds = build_pair_dataset(anchors, toy_model(), 0)
        assert ds.x.shape == (20, 12)
        assert ds.y.sum() == 10

    def test_seeded(self):
        anchors = np.stack([np.arange(10), np.arange(10)], 1)
        a = build_pair_dataset(anchors, toy_model(), 3)
        b = build_pair_dataset(anchors, toy_model(), 3)
        assert np.array_equal(a.x, b.x)

    def test_false_pairs_are_not_anchors(self):
        anchors = np.stack([np.arange(10), (np.arange(10) + 3) % 10], 1)
        m, e = toy_model()
        ds = build_pair_dataset(anchors, (m, e), 1)
        neg = ds.x[ds.y == 0]
        true = {(i, j) for i, j in anchors.tolist()}
        for row in neg:
            i = int(np.flatnonzero((m == row[:6]).all(1))[0])
            j = int(np.flatnonzero((e == row[6:]).all(1))[0])
            assert (i, j) not in true

    def test_too_few_anchors(self):
        with pytest.raises(ValueError):
            build_pair_dataset(np.array([[0, 0]]), toy_model(), 0)


class TestClassifier:
    def test_separable(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(40, 4))
        y = (x[:, 0] > 0).astype(float)
        x[:, 0] += np.where(y == 1, 2.0, -2.0)
        ds = PairDataset(x, y)
        clf = train_classifier(ds, 0, inputs="concat", epochs=300, lr=0.05)
        assert evaluate(clf, ds).accuracy == 1.0

    def test_zero_init_zero_inputs(self):
        ds = PairDataset(np.zeros((10, 4)), np.r_[np.ones(5), np.zeros(5)])
        clf = train_classifier(ds, 0, init="zeros", epochs=0, inputs="concat")
        np.testing.assert_array_equal(clf.predict_proba(ds.x), 0.5)
        assert confusion_scores(ds.y, clf.predict_proba(ds.x) > 0.5).accuracy == 0.5

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        ds = PairDataset(rng.normal(size=(20, 6)), np.r_[np.ones(10), np.zeros(10)])
        a = train_classifier(ds, [1, 2]).params["w"]
        b = train_classifier(ds, [1, 2]).params["w"]
        assert np.array_equal(a, b)

    def test_single_logistic_unit(self):
        ds = PairDataset(np.ones((4, 256)), np.array([1.0, 0, 1, 0]))
        clf = train_classifier(ds, 0, epochs=1)
        assert clf.params["w"].shape == (256, 1) and set(clf.params) == {"w", "b"}

    def test_interaction_features(self):
        x = np.array([[1.0, 2.0, 3.0, 0.0]])
        np.testing.assert_array_equal(pair_interaction(x), [[3.0, 0.0, 4.0, 4.0]])


class TestScores:
    def test_hand_counts(self):
        y = [1, 1, 1, 1, 0, 0, 0, 0]
        p = [1, 1, 1, 0, 1, 0, 0, 0]
        s = confusion_scores(y, p)
        assert (s.tp, s.fp, s.fn, s.tn) == (3, 1, 1, 3)
        assert s.accuracy == 0.75 and s.f1 == 0.75

    def test_perfect(self):
        s = confusion_scores([1, 0, 1], [1, 0, 1])
        assert s.accuracy == 1.0 and s.f1 == 1.0

    def test_all_positive(self):
        s = confusion_scores([1, 1, 0, 0], [1, 1, 1, 1])
        assert s.accuracy == 0.5 and s.f1 == pytest.approx(2 / 3)

    def test_micro_f1_equals_accuracy(self):
        rng = np.random.default_rng(0)
        y, p = rng.integers(0, 2, 50), rng.integers(0, 2, 50)
        s = confusion_scores(y, p)
        assert s.micro_f1 == s.accuracy


class TestRepeatEval:
    def test_single_repeat_has_zero_std(self):
        anchors = np.stack([np.arange(40), np.arange(40)], 1)
        ev = repeat_eval(toy_model(), anchors[:25], anchors[25:], n_repeats=1)
        assert ev.accuracy_std == 0.0 and len(ev.repeats) == 1

    def test_near_perfect_model(self):
        anchors = np.stack([np.arange(40), np.arange(40)], 1)
        ev = repeat_eval(toy_model(), anchors[:25], anchors[25:], n_repeats=3)
        assert ev.accuracy_mean > 0.9

    def test_deterministic(self):
        anchors = np.stack([np.arange(40), np.arange(40)], 1)
        a = repeat_eval(toy_model(), anchors[:25], anchors[25:], n_repeats=2, seed=5)
        b = repeat_eval(toy_model(), anchors[:25], anchors[25:], n_repeats=2, seed=5)
        assert a.to_dict() == b.to_dict()


class TestWelch:
    def test_hand_example(self):
        r = welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        assert r.t == pytest.approx(-1.0, abs=1e-12)
        assert r.df == pytest.approx(8.0, abs=1e-12)
        assert r.p == pytest.approx(0.3466, abs=1e-3)

    def test_identical(self):
        r = welch_t_test([0.7, 0.8, 0.75], [0.7, 0.8, 0.75])
        assert (r.t, r.p) == (0.0, 1.0)

    def test_constant_equal(self):
        r = welch_t_test([1, 1, 1], [1, 1])
        assert (r.t, r.p, r.degenerate) == (0.0, 1.0, True)

    def test_constant_different(self):
        r = welch_t_test([1, 1, 1], [2, 2])
        assert r.p == 0.0 and r.degenerate and r.t < 0

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_reference(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(0, 1, rng.integers(2, 15))
        b = rng.normal(0.5, 2, rng.integers(2, 15))
        ours = welch_t_test(a, b)
        ref = stats.ttest_ind(a, b, equal_var=False)
        assert ours.t == pytest.approx(ref.statistic, rel=1e-10)
        assert ours.p == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-14)

    def test_too_small(self):
        with pytest.raises(ValueError):
            welch_t_test([1.0], [1.0, 2.0])
