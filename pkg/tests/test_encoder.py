import json
import math

import numpy as np
import pytest

from blindpick.autodiff import Tensor, finite_difference
from blindpick.encoder import (
    EncoderConfig,
    SequenceEncoder,
    identify,
    info_nce_loss,
    load_checkpoint,
    prepare_batch,
    save_checkpoint,
    tap_ordinals,
    triplet_loss,
)
from blindpick.interact import _infer_tap_count, collect_taps
from blindpick.training import TrainConfig, clip_gradients, global_grad_norm, sgd_step, train

TINY_ATTN = EncoderConfig(arch="attention", d_model=8, n_heads=2, n_layers=1, d_embed=4, max_seq_len=8)
TINY_GRU = EncoderConfig(arch="recurrent", d_model=8, n_heads=2, n_layers=1, d_embed=4, max_seq_len=8)


def ring_points(rng, radius, levels, per_level=6, jitter=0.0):
    pts = []
    for lv in range(levels):
        for k in range(per_level):
            a = 2 * math.pi * k / per_level + rng.uniform(0, jitter)
            pts.append((radius * math.cos(a), radius * math.sin(a), float(lv + 1)))
    return pts


class TestInputPipeline:
    def test_tap_ordinals_chunks_z_runs(self):
        zs = [1, 1, 1, 1, 1, 2, 2, 3]
        pts = [(0.0, 0.0, float(z)) for z in zs]
        assert tap_ordinals(pts).tolist() == [0, 0, 0, 1, 1, 2, 2, 3]

    def test_tap_ordinals_match_wire_inference(self):
        from blindpick.world import BodyState, ObjectShape, Pose, Scene, Slice
        from blindpick.geometry import regular_ngon

        shape = ObjectShape("c", [Slice(0.0, 8.0, (regular_ngon(16, 5.0),))])
        scene = Scene([BodyState(shape, Pose(30.0, 30.0, 0.0))], static_mode=True)
        seq = collect_taps(scene, (30.0, 30.0))
        ords = tap_ordinals(seq.points)
        assert ords[-1] + 1 == _infer_tap_count(seq.points)
        assert np.all(np.diff(ords) >= 0)

    def test_prepare_batch_padding_and_subsampling(self):
        rng = np.random.default_rng(0)
        short = ring_points(rng, 5.0, 1)
        long = ring_points(rng, 5.0, 4)
        feats, ords, mask = prepare_batch([short, long], TINY_ATTN)
        assert feats.shape == (2, 8, 3) and mask.shape == (2, 8)
        assert mask[0].sum() == 6 and mask[1].sum() == 8
        assert np.all(feats[0, 6:] == 0.0)
        assert ords.max() < TINY_ATTN.max_seq_len
        assert np.allclose(feats[0, 0], np.array(short[0]) / 10.0)

    def test_prepare_batch_rejects_empty(self):
        with pytest.raises(ValueError):
            prepare_batch([], TINY_ATTN)
        with pytest.raises(ValueError):
            prepare_batch([[]], TINY_ATTN)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EncoderConfig(arch="conv")
        with pytest.raises(ValueError):
            EncoderConfig(d_model=10, n_heads=4)
        with pytest.raises(ValueError):
            EncoderConfig(temperature=0.0)


class TestForward:
    @pytest.mark.parametrize("cfg", [TINY_ATTN, TINY_GRU], ids=["attention", "recurrent"])
    def test_unit_norm_and_shape(self, cfg):
        rng = np.random.default_rng(1)
        model = SequenceEncoder(cfg, seed=3)
        emb = model.embed([ring_points(rng, 4.0, 2), ring_points(rng, 7.0, 3)])
        assert emb.shape == (2, cfg.d_embed)
        assert np.allclose((emb.data**2).sum(axis=1), 1.0, atol=1e-9)

    @pytest.mark.parametrize("cfg", [TINY_ATTN, TINY_GRU], ids=["attention", "recurrent"])
    def test_padding_does_not_change_embedding(self, cfg):
        rng = np.random.default_rng(2)
        model = SequenceEncoder(cfg, seed=3)
        short = ring_points(rng, 4.0, 1)
        long = ring_points(rng, 6.0, 4)
        alone = model.embed([short]).data[0]
        padded = model.embed([short, long]).data[0]
        assert np.allclose(alone, padded, atol=1e-9)

    @pytest.mark.parametrize("cfg", [TINY_ATTN, TINY_GRU], ids=["attention", "recurrent"])
    def test_distinct_shapes_embed_apart(self, cfg):
        rng = np.random.default_rng(3)
        model = SequenceEncoder(cfg, seed=5)
        emb = model.embed([ring_points(rng, 3.0, 1), ring_points(rng, 7.5, 4)])
        assert float(emb.data[0] @ emb.data[1]) < 0.999

    def test_deterministic_init_and_forward(self):
        rng = np.random.default_rng(4)
        pts = ring_points(rng, 5.0, 2)
        a = SequenceEncoder(TINY_ATTN, seed=9).embed([pts]).data
        b = SequenceEncoder(TINY_ATTN, seed=9).embed([pts]).data
        assert np.array_equal(a, b)

    def test_near_duplicate_sequences_embed_close(self):
        rng = np.random.default_rng(5)
        model = SequenceEncoder(TINY_ATTN, seed=3)
        pts = ring_points(rng, 5.0, 2)
        bumped = [(x + 1e-4, y - 1e-4, z) for x, y, z in pts]
        emb = model.embed([pts, bumped]).data
        assert float(emb[0] @ emb[1]) > 0.9999


class TestLosses:
    def test_info_nce_uniform_logits(self):
        b = 8
        row = np.ones(4) / 2.0
        za = Tensor(np.tile(row, (b, 1)))
        zb = Tensor(np.tile(row, (b, 1)))
        loss = info_nce_loss(za, zb, temperature=0.1)
        assert loss.item() == pytest.approx(math.log(2 * b - 1), abs=1e-9)

    def test_info_nce_aligned_pairs_near_zero(self):
        eye = np.eye(6, 4)
        eye[4:] = np.eye(6, 4)[:2] * -1.0
        za = Tensor(eye)
        zb = Tensor(eye)
        assert info_nce_loss(za, zb, temperature=0.1).item() < 0.01

    def test_info_nce_needs_two_pairs(self):
        z = Tensor(np.ones((1, 4)))
        with pytest.raises(ValueError):
            info_nce_loss(z, z, 0.1)

    def test_triplet_frozen_values(self):
        a = Tensor(np.array([[1.0, 0.0]]))
        b = Tensor(np.array([[0.0, 1.0]]))
        neg_a = Tensor(np.array([[-1.0, 0.0]]))
        # perfectly aligned positive, opposed negative: hinge inactive
        assert triplet_loss(a, a, neg_a, margin=0.2).item() == pytest.approx(0.0, abs=1e-9)
        # anchor = positive = negative: loss equals the margin
        assert triplet_loss(a, a, a, margin=0.2).item() == pytest.approx(0.2, abs=1e-9)
        # orthogonal positive, identical negative: margin - 0 + 1
        assert triplet_loss(a, b, a, margin=0.2).item() == pytest.approx(1.2, abs=1e-9)


class TestGradients:
    @pytest.mark.parametrize(
        "cfg,seed", [(TINY_ATTN, 11), (TINY_GRU, 7)], ids=["attention", "recurrent"]
    )
    def test_finite_difference_matches_backprop(self, cfg, seed, monkeypatch):
        rng = np.random.default_rng(6)
        model = SequenceEncoder(cfg, seed=seed)
        assert model.num_params() <= 2000
        pairs = [
            (ring_points(rng, 3.0, 1, per_level=4), ring_points(rng, 3.2, 1, per_level=4)),
            (ring_points(rng, 7.0, 1, per_level=4), ring_points(rng, 6.8, 1, per_level=4)),
        ]

        def forward():
            za = model.embed([a for a, _ in pairs])
            zb = model.embed([b for _, b in pairs])
            return info_nce_loss(za, zb, temperature=0.5)

        # central differences at h=1e-4 are only valid if no relu sits within
        # reach of its kink; record pre-activations to assert that clearance
        preacts = []
        orig_relu = Tensor.relu

        def spy_relu(self):
            preacts.append(float(np.abs(self.data).min(initial=np.inf)))
            return orig_relu(self)

        monkeypatch.setattr(Tensor, "relu", spy_relu)
        model.zero_grad()
        forward().backward()
        monkeypatch.undo()
        if preacts:
            assert min(preacts) > 1e-3
        tensors = list(model.params.values())
        numeric = finite_difference(lambda: forward().item(), tensors, h=1e-4)
        for (name, t), num in zip(model.params.items(), numeric):
            scale = max(1.0, float(np.abs(num).max(initial=0.0)))
            err = float(np.abs(t.grad - num).max(initial=0.0)) / scale
            assert err < 1e-4, "gradient mismatch in %s: %.2e" % (name, err)


class TestIdentify:
    def test_picks_self(self):
        rng = np.random.default_rng(8)
        refs = rng.normal(size=(5, 4))
        assert identify(refs[3], refs) == 3

    def test_scale_invariant(self):
        rng = np.random.default_rng(9)
        q = rng.normal(size=4)
        refs = rng.normal(size=(6, 4))
        assert identify(q, refs) == identify(3.0 * q, refs * 0.25)


class TestCheckpoint:
    def test_round_trip_preserves_embeddings(self, tmp_path):
        rng = np.random.default_rng(10)
        model = SequenceEncoder(TINY_ATTN, seed=4)
        pts = ring_points(rng, 5.0, 2)
        sgd_like = model.params["head_w"]
        sgd_like.data = sgd_like.data + 0.01  # drift from init so load must restore data
        path = tmp_path / "enc.json"
        save_checkpoint(model, path, extra={"note": "t"})
        clone = load_checkpoint(path)
        assert np.array_equal(model.embed([pts]).data, clone.embed([pts]).data)

    def test_rejects_bad_format_and_shape(self, tmp_path):
        model = SequenceEncoder(TINY_ATTN, seed=4)
        path = tmp_path / "enc.json"
        save_checkpoint(model, path)
        record = json.loads(path.read_text())
        record["format"] = "other"
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(record))
        with pytest.raises(ValueError):
            load_checkpoint(bad)
        record = json.loads(path.read_text())
        record["params"]["head_w"]["shape"] = [2, 2]
        bad.write_text(json.dumps(record))
        with pytest.raises(ValueError):
            load_checkpoint(bad)
        record = json.loads(path.read_text())
        del record["params"]["head_w"]
        bad.write_text(json.dumps(record))
        with pytest.raises(ValueError):
            load_checkpoint(bad)


def cluster_pairs(rng, n_per=6):
    pairs = []
    for radius, levels in ((3.0, 1), (7.0, 3)):
        for _ in range(n_per):
            a = ring_points(rng, radius + rng.uniform(-0.2, 0.2), levels, jitter=0.3)
            b = ring_points(rng, radius + rng.uniform(-0.2, 0.2), levels, jitter=0.3)
            pairs.append((a, b))
    return pairs


class TestTraining:
    def test_loss_decreases_and_history_shape(self):
        rng = np.random.default_rng(11)
        pairs = cluster_pairs(rng)
        model = SequenceEncoder(TINY_ATTN, seed=1)
        cfg = TrainConfig(epochs=12, batch_pairs=4, lr=0.005, seed=0)
        hist = train(model, pairs, cfg)
        assert len(hist["epoch_loss"]) == 12
        assert hist["steps"] == 12 * 3
        assert hist["epoch_loss"][-1] < hist["epoch_loss"][0] - 0.2

    def test_matched_budget_across_losses(self):
        rng = np.random.default_rng(12)
        pairs = cluster_pairs(rng, n_per=3)
        a = train(SequenceEncoder(TINY_ATTN, seed=1), pairs, TrainConfig(epochs=2, batch_pairs=4, loss="info_nce"))
        b = train(SequenceEncoder(TINY_ATTN, seed=1), pairs, TrainConfig(epochs=2, batch_pairs=4, loss="triplet"))
        assert a["steps"] == b["steps"]

    def test_deterministic_given_seeds(self):
        rng = np.random.default_rng(13)
        pairs = cluster_pairs(rng, n_per=3)
        cfg = TrainConfig(epochs=2, batch_pairs=4, lr=0.05, seed=2)
        m1 = SequenceEncoder(TINY_ATTN, seed=1)
        train(m1, pairs, cfg)
        m2 = SequenceEncoder(TINY_ATTN, seed=1)
        train(m2, pairs, cfg)
        for name in m1.params:
            assert np.array_equal(m1.params[name].data, m2.params[name].data)

    def test_divergence_aborts(self):
        rng = np.random.default_rng(14)
        pairs = cluster_pairs(rng, n_per=2)
        model = SequenceEncoder(TINY_ATTN, seed=1)
        model.params["lift_w"].data[:] = np.nan
        with pytest.raises(RuntimeError):
            train(model, pairs, TrainConfig(epochs=1, batch_pairs=4))

    def test_single_pair_rejected(self):
        model = SequenceEncoder(TINY_ATTN, seed=1)
        with pytest.raises(ValueError):
            train(model, [([(0.0, 0.0, 1.0)], [(0.0, 0.0, 1.0)])], TrainConfig())

    def test_clip_and_step_primitives(self):
        t = Tensor(np.zeros(3), requires_grad=True)
        t.grad = np.array([3.0, 4.0, 0.0])
        params = {"t": t}
        assert global_grad_norm(params) == pytest.approx(5.0)
        norm = clip_gradients(params, 2.5)
        assert norm == pytest.approx(5.0)
        assert np.allclose(t.grad, [1.5, 2.0, 0.0])
        sgd_step(params, lr=1.0)
        assert np.allclose(t.data, [-1.5, -2.0, 0.0])
