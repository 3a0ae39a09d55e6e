import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from graphuil.numerics import AdamState, ParamSet, adam_step, finite_diff_check, grad
from graphuil.numerics import autodiff as ad
from graphuil.numerics import params as pio


class TestGrad:
    def test_square(self):
        g = grad(lambda p: ad.sq_norm(p["w"]), {"w": np.array(3.0)})
        assert g["w"] == pytest.approx(6.0)

    def test_sigmoid_at_zero(self):
        g = grad(lambda p: ad.sum(ad.sigmoid(p["s"])), {"s": np.array([0.0])})
        assert g["s"][0] == pytest.approx(0.25, abs=1e-15)

    def test_constant_block_has_zero_gradient(self):
        params = {"a": np.ones((2, 2)), "b": np.ones(3)}
        g = grad(lambda p: ad.sq_norm(p["a"]), params)
        assert np.array_equal(g["b"], np.zeros(3))

    def test_numpy_ufunc_on_tensor_raises(self):
        with pytest.raises(TypeError):
            grad(lambda p: np.exp(p["w"]), {"w": np.ones(2)})

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ad.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_reused_node_accumulates(self):
        # f = (x*x) + x, df/dx = 2x + 1
        g = grad(lambda p: ad.sum(ad.add(ad.mul(p["x"], p["x"]), p["x"])), {"x": np.array([2.0])})
        assert g["x"][0] == pytest.approx(5.0)


class TestPrimitives:
    def test_sigmoid_zero(self):
        assert ad.sigmoid(np.array(0.0)).value == 0.5

    def test_sigmoid_extremes_stay_in_open_interval(self):
        s = ad.sigmoid(np.array([-700.0, -30.0, 30.0])).value
        assert np.all(s >= 0) and np.all(s <= 1) and np.all(np.isfinite(s))

    def test_row_softmax_equal_logits(self):
        s = ad.row_softmax(np.zeros(3), np.zeros(3, dtype=int), 1).value
        np.testing.assert_allclose(s, [1 / 3] * 3, atol=1e-15)

    def test_row_softmax_one_zero(self):
        s = ad.row_softmax(np.array([1.0, 0.0]), np.array([0, 0]), 1).value
        e = math.e
        np.testing.assert_allclose(s, [e / (e + 1), 1 / (e + 1)], atol=1e-12)
        np.testing.assert_allclose(s, [0.7311, 0.2689], atol=1e-4)

    def test_dense_row_softmax_support(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(5, 5)) * 50
        mask = rng.random((5, 5)) < 0.5
        mask[:, 0] = True
        s = ad.dense_row_softmax(z, mask).value
        assert np.all(s[~mask] == 0)
        np.testing.assert_allclose(s.sum(1), 1, atol=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_relu_sigmoid_ranges(self, seed):
        x = np.random.default_rng(seed).normal(size=(6, 6)) * 10
        assert np.all(ad.relu(x).value >= 0)
        s = ad.sigmoid(x).value
        assert np.all((s > 0) & (s < 1))

    def test_concat_cols(self):
        out = ad.concat_cols([np.ones((2, 1)), np.zeros((2, 2))]).value
        assert out.shape == (2, 3)
        with pytest.raises(ValueError):
            ad.concat_cols([np.ones((2, 1)), np.ones((3, 1))])

    def test_masked_sq_error(self):
        v = ad.masked_sq_error(np.array([0.5, 0.0]), np.array([1.0, 1.0]), np.array([1, 0])).value
        assert v == pytest.approx(0.25)


def _random_case(seed):
    rng = np.random.default_rng(seed)
    n, c, k = rng.integers(2, 17, size=3)
    rows = np.sort(rng.integers(0, n, size=3 * n))
    cols = rng.integers(0, n, size=3 * n)
    m = sp.csr_matrix(rng.random((n, n)) * (rng.random((n, n)) < 0.3))
    params = {"x": rng.normal(size=(n, c)), "w": rng.normal(size=(c, k)),
              "b": rng.normal(size=(1, k)), "e": rng.normal(size=3 * n)}

    def loss(p):
        h = ad.relu(ad.add(ad.matmul(p["x"], p["w"]), p["b"]))
        h = ad.spmm(m, h)
        att = ad.row_softmax(p["e"], rows, n)
        agg = ad.edge_aggregate(att, rows, cols, h, n)
        s = ad.sigmoid(ad.concat_cols([agg, h]))
        y = ad.row_dot(ad.take(s, rows), ad.take(s, cols))
        # kept O(1) so central-difference rounding stays below the tolerance
        return ad.add(ad.add(ad.mean(ad.mul(y, y)), ad.mean(ad.softplus(agg))), ad.mean(ad.mul(h, h)))

    return loss, params


@pytest.mark.parametrize("seed", range(50))
def test_all_primitives_match_finite_differences(seed):
    loss, params = _random_case(seed)
    report = finite_diff_check(loss, params, eps=1e-5)
    assert report.max_error < 1e-5, str(report)


class TestFiniteDiff:
    def test_quadratic(self):
        rep = finite_diff_check(lambda p: ad.sq_norm(p["w"]), {"w": np.array([3.0])}, eps=1e-5)
        assert rep.max_error < 1e-9

    def test_constant(self):
        rep = finite_diff_check(lambda p: ad.mul(ad.sum(p["w"]), 0.0), {"w": np.ones(4)})
        assert rep.max_error == 0.0

    def test_detects_wrong_gradient(self):
        def bad_relu(a):
            a = ad.tensor(a)
            return ad.Tensor(np.maximum(a.value, 0), (a,), lambda g: (g,))  # wrong on negatives

        rep = finite_diff_check(lambda p: ad.sum(bad_relu(p["w"])), {"w": np.array([-1.0, 1.0])})
        assert rep.max_error > 0.5

    def test_subsampling(self):
        rep = finite_diff_check(lambda p: ad.sq_norm(p["w"]), {"w": np.ones(500)}, max_coords=10)
        assert rep.coords_checked["w"] == 32

    @pytest.mark.skipif(np.finfo(np.longdouble).eps >= np.finfo(np.float64).eps,
                        reason="no extended precision on this platform")
    def test_extended_precision_lowers_rounding_floor(self):
        # a tiny slope riding on a large loss value
        def fn(p):
            return ad.add(ad.mul(ad.sum(p["w"]), 1e-8), 300.0)

        w = {"w": np.array([0.3])}
        double = finite_diff_check(fn, w).max_error
        extended = finite_diff_check(fn, w, precision="extended").max_error
        assert double > 1e-3 and extended < double / 100

    def test_extended_keeps_dtype(self):
        seen = []

        def fn(p):
            seen.append(p["w"].value.dtype)
            z = ad.row_softmax(p["w"], np.array([0, 0, 1]), 2)
            return ad.sq_norm(z)

        finite_diff_check(fn, {"w": np.array([0.1, 0.5, -0.2])}, precision="extended")
        assert seen[0] == np.float64 and set(seen[1:]) == {np.dtype(np.longdouble)}

    def test_unknown_precision(self):
        with pytest.raises(ValueError):
            finite_diff_check(lambda p: ad.sq_norm(p["w"]), {"w": np.ones(1)}, precision="quad")

    def test_eps_must_be_positive(self):
        with pytest.raises(ValueError):
            finite_diff_check(lambda p: ad.sq_norm(p["w"]), {"w": np.ones(1)}, eps=0)


class TestAdam:
    def test_zero_gradient(self):
        p = {"w": np.array([1.0, -2.0])}
        st_ = AdamState.for_params(p)
        adam_step(p, {"w": np.zeros(2)}, st_)
        np.testing.assert_array_equal(p["w"], [1.0, -2.0])
        assert st_.t == 1

    @pytest.mark.parametrize("g", [0.3, -5.0, 1e-3])
    def test_first_step_magnitude(self, g):
        # hand evaluation of the recurrence at t=1:
        # m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
        p = {"w": np.array([0.0])}
        adam_step(p, {"w": np.array([g])}, AdamState.for_params(p, lr=0.01))
        expected = -0.01 * g / (abs(g) + 1e-8)
        assert p["w"][0] == pytest.approx(expected, rel=1e-12)
        assert p["w"][0] == pytest.approx(-0.01 * np.sign(g), rel=1e-5)

    def test_lr_zero_is_identity(self):
        rng = np.random.default_rng(0)
        p = {"w": rng.normal(size=(3, 3))}
        before = p["w"].copy()
        st_ = AdamState.for_params(p, lr=0.0)
        for _ in range(5):
            adam_step(p, {"w": rng.normal(size=(3, 3))}, st_)
        np.testing.assert_array_equal(p["w"], before)

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(7)
            p = {"w": rng.normal(size=4)}
            st_ = AdamState.for_params(p)
            for _ in range(20):
                adam_step(p, grad(lambda q: ad.sq_norm(ad.sub(q["w"], 1.0)), p), st_)
            return p["w"]

        assert run().tobytes() == run().tobytes()

    def test_shape_mismatch(self):
        p = {"w": np.zeros(2)}
        with pytest.raises(ValueError):
            adam_step(p, {"w": np.zeros(3)}, AdamState.for_params(p))

    def test_frozen_blocks_untouched(self):
        p = {"a": np.zeros(2), "b": np.zeros(2)}
        adam_step(p, {"a": np.ones(2), "b": np.ones(2)}, AdamState.for_params(p), frozen={"b"})
        assert np.all(p["a"] < 0) and np.all(p["b"] == 0)


class TestParamSet:
    def test_round_trip(self, tmp_path):
        ps = ParamSet({"a": np.arange(6.0).reshape(2, 3), "b.c": np.array([1.5]), "s": np.array(2.0)})
        pio.save(ps, tmp_path / "p.bin")
        back = pio.load(tmp_path / "p.bin")
        assert list(back) == list(ps)
        for k in ps:
            assert back[k].shape == ps[k].shape
            np.testing.assert_array_equal(back[k], ps[k])

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            pio.loads(b"NOTMAGIC" + b"\0" * 8)

    def test_shape_fixed(self):
        ps = ParamSet({"a": np.zeros(2)})
        with pytest.raises(ValueError):
            ps["a"] = np.zeros(3)

    def test_bytes_deterministic(self):
        ps = ParamSet({"a": np.arange(3.0)})
        assert pio.dumps(ps) == pio.dumps(ps.copy())
