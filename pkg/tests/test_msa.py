import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphuil.graph import Graph
from graphuil.msa import (EncoderConfig, attention_weights, encode, gta_agg, init_encoder,
                          lta_agg, msa_layer)

SMALL = EncoderConfig(in_dim=4, layer_dims=(8, 8, 8), att_dim=8, out_dim=8)
EDGE = Graph(2, np.array([[0, 1]]))
P_EDGE = np.full((2, 2), 0.5)


def random_graph(n, p, seed):
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    return Graph(n, np.stack([iu[0][keep], iu[1][keep]], 1))


def layer_params(cfg, seed, k=0):
    p = init_encoder(cfg, np.random.default_rng(seed))
    return {w: p[f"l{k}.{w}"] for w in ("w_gta", "w_lta", "w_att", "g_att")}


class TestGTA:
    def test_identity_features(self):
        out = gta_agg(EDGE.propagation, np.eye(2), np.eye(2))
        np.testing.assert_allclose(out, P_EDGE, atol=1e-15)

    def test_zero_weights(self):
        out = gta_agg(EDGE.propagation, np.ones((2, 3)), np.zeros((3, 4)))
        assert np.array_equal(out, np.zeros((2, 4)))

    def test_edgeless_is_identity(self):
        g = Graph(3, np.empty((0, 2)))
        x = np.arange(6.0).reshape(3, 2)
        np.testing.assert_array_equal(gta_agg(g.propagation, x, np.eye(2)), x)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            gta_agg(EDGE.propagation, np.ones((2, 3)), np.ones((2, 2)))


class TestAttention:
    def test_identical_features_uniform(self):
        g = random_graph(15, 0.3, 0)
        lp = layer_params(SMALL, 0)
        a = attention_weights(g, np.ones((15, 4)), lp["w_att"], lp["g_att"]).toarray()
        support = (g.adjacency.toarray() + np.eye(15)) > 0
        expected = support / support.sum(1, keepdims=True)
        np.testing.assert_allclose(a, expected, atol=1e-15)

    def test_isolated_node_attends_to_itself(self):
        g = Graph(3, np.array([[0, 1]]))
        lp = layer_params(SMALL, 1)
        a = attention_weights(g, np.random.default_rng(0).normal(size=(3, 4)),
                              lp["w_att"], lp["g_att"]).toarray()
        np.testing.assert_array_equal(a[2], [0, 0, 1])

    def test_contrived_logits(self):
        # s = 0 everywhere, t = (1, 0): phi_00 = 1, phi_01 = 0
        x = np.array([[1.0], [0.0]])
        a = attention_weights(EDGE, x, np.array([[1.0]]), np.array([0.0, 1.0])).toarray()
        np.testing.assert_allclose(a[0], [0.7311, 0.2689], atol=1e-4)

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_rows_stochastic_on_support(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 60))
        g = random_graph(n, float(rng.uniform(0, 0.3)), seed)
        lp = layer_params(SMALL, seed)
        a = attention_weights(g, rng.normal(size=(n, 4)) * 5, lp["w_att"], lp["g_att"]).toarray()
        support = (g.adjacency.toarray() + np.eye(n)) > 0
        assert np.all(a[~support] == 0)
        np.testing.assert_allclose(a.sum(1), 1, atol=1e-12)


class TestLTA:
    def test_identity_attention(self):
        x = np.arange(6.0).reshape(3, 2)
        np.testing.assert_array_equal(lta_agg(np.eye(3), x, np.eye(2)), x)

    def test_zero_weights(self):
        assert np.array_equal(lta_agg(np.full((2, 2), 0.5), np.ones((2, 2)), np.zeros((2, 3))),
                              np.zeros((2, 3)))

    def test_uniform_rows(self):
        out = lta_agg(np.full((2, 2), 0.5), np.array([[2.0, 0.0], [0.0, 2.0]]), np.eye(2))
        np.testing.assert_allclose(out, np.ones((2, 2)), atol=1e-15)


class TestLayer:
    def test_zero_weights(self):
        lp = {k: np.zeros_like(v) for k, v in layer_params(SMALL, 0).items()}
        out = msa_layer(EDGE, np.ones((2, 4)), lp, SMALL)
        assert np.array_equal(out, np.zeros((2, 8)))

    def test_gta_only_is_relu_of_gta(self):
        g = random_graph(12, 0.3, 2)
        x = np.random.default_rng(1).normal(size=(12, 4))
        lp = layer_params(SMALL, 2)
        out = msa_layer(g, x, lp, SMALL, use_lta=False)
        np.testing.assert_array_equal(out, np.maximum(gta_agg(g.propagation, x, lp["w_gta"]), 0))

    def test_two_node_identity_weights(self):
        # P X = 1 and uniform A' X = 1 -> relu(1 + 1) = 2 everywhere
        cfg = EncoderConfig(in_dim=2, layer_dims=(2,), att_dim=2, out_dim=2)
        lp = {"w_gta": np.eye(2), "w_lta": np.eye(2), "w_att": np.eye(2), "g_att": np.zeros((4, 1))}
        out = msa_layer(EDGE, np.array([[2.0, 0.0], [0.0, 2.0]]), lp, cfg)
        np.testing.assert_allclose(out, np.full((2, 2), 2.0), atol=1e-15)

    def test_both_paths_disabled(self):
        with pytest.raises(ValueError):
            msa_layer(EDGE, np.ones((2, 4)), layer_params(SMALL, 0), SMALL, False, False)


class TestEncode:
    @pytest.mark.parametrize("n", [1, 5, 33])
    def test_default_output_width(self, n):
        cfg = EncoderConfig()
        g = random_graph(n, 0.3, n)
        p = init_encoder(cfg, np.random.default_rng(0))
        z = encode(g, np.random.default_rng(1).normal(size=(n, 64)), p, cfg)
        assert z.shape == (n, 128)

    def test_default_skip_shape(self):
        p = init_encoder(EncoderConfig(), np.random.default_rng(0))
        assert p["skip"].shape == (384, 128)
        assert p["l0.w_gta"].shape == (64, 128)

    def test_zero_weights(self):
        p = {k: np.zeros_like(v) for k, v in init_encoder(SMALL, np.random.default_rng(0)).items()}
        z = encode(EDGE, np.ones((2, 4)), p, SMALL)
        assert np.array_equal(z, np.zeros((2, 8)))

    def test_pure(self):
        g = random_graph(20, 0.2, 0)
        p = init_encoder(SMALL, np.random.default_rng(0))
        x = np.random.default_rng(1).normal(size=(20, 4))
        assert np.array_equal(encode(g, x, p, SMALL), encode(g, x, p, SMALL))

    def test_feature_shape_checked(self):
        p = init_encoder(SMALL, np.random.default_rng(0))
        with pytest.raises(ValueError):
            encode(EDGE, np.ones((2, 5)), p, SMALL)

    def test_sum_combination(self):
        cfg = EncoderConfig(in_dim=4, layer_dims=(8, 8), att_dim=4, out_dim=3, combine="sum")
        p = init_encoder(cfg, np.random.default_rng(0))
        assert p["skip"].shape == (8, 3)
        assert encode(EDGE, np.ones((2, 4)), p, cfg).shape == (2, 3)

    @pytest.mark.parametrize("seed", range(5))
    def test_permutation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(20, 0.2, seed)
        x = rng.normal(size=(20, 4))
        p = init_encoder(SMALL, rng)
        perm = rng.permutation(20)
        z = encode(g, x, p, SMALL)
        xp = np.empty_like(x)
        xp[perm] = x
        zp = encode(g.permute(perm), xp, p, SMALL)
        np.testing.assert_allclose(zp[perm], z, atol=1e-10)
