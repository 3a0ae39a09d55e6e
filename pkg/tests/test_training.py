import dataclasses

import numpy as np
import pytest

from graphuil.benchgen import BenchSpec, generate
from graphuil.features import FeatureInitSpec
from graphuil.msa import EncoderConfig
from graphuil.training import (ABLATIONS, Problem, TrainConfig, TrainingDiverged, finish,
                               frozen_params, init_params, make_ablation, run_epochs,
                               start_state, train)

SMALL = TrainConfig(
    epochs=30, patience=1000,
    encoder=EncoderConfig(in_dim=8, layer_dims=(8, 8, 8), att_dim=8, out_dim=8),
    features=FeatureInitSpec(method="random", dim=8),
    mapper_dims=(8, 8, 8, 8),
)


@pytest.fixture(scope="module")
def inst():
    return generate(BenchSpec(n=40, m=3, overlap=0.8, edge_noise=0.05, seed=1))


def run(inst, cfg):
    a = inst.anchors
    return train(inst.g1, inst.g2, a.get("train"), a.get("val"), cfg)


class TestConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.alpha, c.beta) == (10.0, 1.0)
        assert c.encoder.layer_dims == (128, 128, 128) and c.encoder.in_dim == 64

    def test_round_trip(self):
        c = dataclasses.replace(SMALL, alpha=0.1, seed=4)
        assert TrainConfig.from_dict(c.to_dict()) == c

    def test_ablation_weights_checked(self):
        with pytest.raises(ValueError):
            TrainConfig(ablation="no_reconstruction")

    def test_mapper_width_must_match_embedding(self):
        with pytest.raises(ValueError):
            dataclasses.replace(SMALL, mapper_dims=(16, 16))

    def test_feature_width_must_match_encoder(self):
        with pytest.raises(ValueError):
            dataclasses.replace(SMALL, features=FeatureInitSpec(method="random", dim=4))

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            TrainConfig(alpha=-1)


class TestAblation:
    def test_full_unchanged(self):
        assert make_ablation(SMALL, "full") is SMALL

    def test_no_local_zeroes_beta(self):
        c = make_ablation(SMALL, "no_local")
        assert (c.alpha, c.beta) == (SMALL.alpha, 0.0)

    def test_no_global_zeroes_alpha(self):
        c = make_ablation(SMALL, "no_global")
        assert (c.alpha, c.beta) == (0.0, SMALL.beta)

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_ablation(SMALL, "no_mapper")

    def test_gta_only_freezes_attention_path(self, inst):
        c = make_ablation(SMALL, "gta_only")
        frozen = frozen_params(c)
        assert frozen and all(k.split(".")[-1] in ("w_lta", "w_att", "g_att") for k in frozen)
        m = run(inst, dataclasses.replace(c, epochs=5))
        for k in frozen:
            assert not m.params[k].any()

    def test_lta_only_freezes_global_path(self):
        frozen = frozen_params(make_ablation(SMALL, "lta_only"))
        assert frozen == {f"{p}l{k}.w_gta" for p in ("sn1.", "sn2.") for k in range(3)}

    def test_no_reconstruction_total_is_match(self, inst):
        m = run(inst, dataclasses.replace(make_ablation(SMALL, "no_reconstruction"), epochs=5))
        for h in m.history:
            assert h["total"] == h["match"]

    @pytest.mark.parametrize("kind", ABLATIONS)
    def test_every_ablation_trains(self, inst, kind):
        m = run(inst, dataclasses.replace(make_ablation(SMALL, kind), epochs=3))
        assert m.emb1.shape == (inst.g1.n, 8) and np.all(np.isfinite(m.emb1))


class TestTraining:
    def test_deterministic(self, inst):
        assert run(inst, SMALL).checksum() == run(inst, SMALL).checksum()

    def test_seed_changes_result(self, inst):
        assert run(inst, SMALL).checksum() != run(inst, dataclasses.replace(SMALL, seed=1)).checksum()

    def test_resume_is_bitwise(self, inst):
        a = inst.anchors
        full = run(inst, SMALL)
        pr = Problem(inst.g1, inst.g2, a.get("train"), a.get("val"), SMALL)
        st = run_epochs(pr, start_state(SMALL), 12)
        assert st.epoch == 12 and not st.done
        st = run_epochs(pr, st)
        assert finish(pr, st).checksum() == full.checksum()

    def test_history_fields(self, inst):
        h = run(inst, dataclasses.replace(SMALL, epochs=2)).history
        assert [r["epoch"] for r in h] == [0, 1]
        assert {"global_sn1", "local_sn2", "match", "total", "val_match", "val_ratio"} <= set(h[0])

    def test_early_stopping_restores_best(self, inst):
        m = run(inst, dataclasses.replace(SMALL, epochs=200, patience=3))
        ratios = [h["val_ratio"] for h in m.history]
        assert len(m.history) < 200
        assert m.best_epoch == int(np.argmin(ratios))
        assert len(m.history) == m.best_epoch + 4

    def test_empty_training_anchors(self, inst):
        with pytest.raises(ValueError):
            train(inst.g1, inst.g2, np.empty((0, 2)), inst.anchors.get("val"), SMALL)

    def test_anchor_out_of_range(self, inst):
        with pytest.raises(ValueError):
            train(inst.g1, inst.g2, np.array([[inst.g1.n, 0]]), np.empty((0, 2)), SMALL)

    def test_divergence_reports_epoch_and_term(self, inst):
        a = inst.anchors
        pr = Problem(inst.g1, inst.g2, a.get("train"), a.get("val"), SMALL)
        st = start_state(SMALL)
        st.params["map.w0"] = np.full_like(st.params["map.w0"], np.nan)
        with pytest.raises(TrainingDiverged) as exc:
            run_epochs(pr, st)
        assert exc.value.epoch == 0 and exc.value.term

    def test_frozen_blocks_initialised_to_zero(self):
        p = init_params(make_ablation(SMALL, "lta_only"))
        assert not p["sn1.l0.w_gta"].any() and p["sn1.l0.w_lta"].any()


def test_identical_graphs_validation_loss_drops():
    inst = generate(BenchSpec(n=50, m=4, overlap=1.0, edge_noise=0.0, seed=0))
    a = inst.anchors
    cfg = TrainConfig(epochs=500, patience=10 ** 9)
    pr = Problem(inst.g1, inst.g2, a.get("train"), a.get("val"), cfg)
    st = run_epochs(pr, start_state(cfg))
    v = [h["val_match"] for h in st.history]
    assert min(v) <= 0.1 * v[0]


def test_state_round_trip_resumes_bitwise(inst, tmp_path):
    from graphuil.training import load_state, save_state

    a = inst.anchors
    full = run(inst, SMALL)
    pr = Problem(inst.g1, inst.g2, a.get("train"), a.get("val"), SMALL)
    st = run_epochs(pr, start_state(SMALL), 9)
    save_state(st, tmp_path, (pr.x1, pr.x2))
    st2, feats = load_state(tmp_path)
    pr2 = Problem(inst.g1, inst.g2, a.get("train"), a.get("val"), SMALL, feats)
    assert finish(pr2, run_epochs(pr2, st2)).checksum() == full.checksum()
