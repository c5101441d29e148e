import math

import numpy as np
import pytest

from feedsynth.autograd import Tensor, backward, sum_all
from feedsynth.model import (
    ModelConfig,
    build_fusion,
    causal_mask,
    create_parameters,
    decode,
    encode_text,
    fuse_multimodal,
    generate_greedy,
    multi_head_attention,
    position_wise_ffn,
    scaled_dot_attention,
    visual_attend,
    visual_context,
)
from feedsynth.optim import ParameterStore
from feedsynth.regions import BoundingBox, RegionFeatureSet
from feedsynth.text import BOS_ID, PAD_ID


def region_set(seed=0, n=3, dim=6):
    rng = np.random.default_rng(seed)
    feats = rng.normal(0, 1, (n, dim)).astype(np.float32)
    boxes = [BoundingBox(j, j, j + 10, j + 8) for j in range(n)]
    return RegionFeatureSet("img", boxes, feats)


class TestModelConfig:
    def test_head_divisibility(self):
        with pytest.raises(ValueError, match="divisible"):
            ModelConfig(d_model=100, n_heads=8).validate()

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            ModelConfig.from_dict({"d_model": 16, "whatever": 1})

    def test_roundtrip(self):
        cfg = ModelConfig(d_model=16, n_heads=2, vocab_size=12, d_visual=4)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_bad_ablation(self):
        with pytest.raises(ValueError, match="ablation"):
            ModelConfig(ablation="TXV").validate()


class TestScaledDotAttention:
    def test_single_key_returns_value(self):
        q = Tensor(np.random.default_rng(0).normal(0, 1, (4, 3)))
        k = Tensor(np.ones((1, 3)))
        v = Tensor(np.array([[7.0, 8.0]]))
        out = scaled_dot_attention(q, k, v)
        assert np.allclose(out.array, np.tile([7.0, 8.0], (4, 1)), atol=1e-6)

    def test_uniform_scores_average_values(self):
        q = Tensor(np.zeros((2, 3)))
        k = Tensor(np.random.default_rng(1).normal(0, 1, (5, 3)))
        v = Tensor(np.random.default_rng(2).normal(0, 1, (5, 4)))
        out = scaled_dot_attention(q, k, v)
        assert np.allclose(out.array, np.tile(v.array.mean(axis=0), (2, 1)), atol=1e-6)

    def test_sharp_query_selects_key(self):
        # orthonormal keys, query = one key scaled large -> that key's value
        k = Tensor(np.eye(3))
        v = Tensor(np.diag([1.0, 2.0, 3.0]))
        q = Tensor((np.eye(3)[1] * 60.0)[None, :])
        out = scaled_dot_attention(q, k, v)
        assert np.allclose(out.array, v.array[1][None, :], atol=1e-4)

    def test_weights_masked_and_normalized(self):
        rng = np.random.default_rng(3)
        q = Tensor(rng.normal(0, 1, (4, 5)))
        k = Tensor(rng.normal(0, 1, (6, 5)))
        v = Tensor(rng.normal(0, 1, (6, 2)))
        mask = np.array([True, True, False, True, False, True])
        _, weights = scaled_dot_attention(q, k, v, mask, return_weights=True)
        assert (weights[:, ~mask] == 0.0).all()
        assert np.allclose(weights.sum(axis=1), 1.0, atol=1e-5)

    def test_fully_masked_errors(self):
        q = Tensor(np.zeros((1, 2)))
        kv = Tensor(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            scaled_dot_attention(q, kv, kv, np.zeros(2, dtype=bool))


class TestMultiHeadAttention:
    def _store_with_identity(self, d):
        store = ParameterStore(np.float64)
        eye = np.eye(d)
        zeros = np.zeros(d)
        for name in ("wq", "wk", "wv", "wo"):
            store.add(f"attn.{name}", eye)
        for name in ("bq", "bk", "bv", "bo"):
            store.add(f"attn.{name}", zeros)
        return store

    def test_single_head_identity_projections_reduce(self):
        rng = np.random.default_rng(4)
        x_q = Tensor(rng.normal(0, 1, (3, 4)))
        x_kv = Tensor(rng.normal(0, 1, (5, 4)))
        store = self._store_with_identity(4)
        got = multi_head_attention(x_q, x_kv, x_kv, store, "attn", n_heads=1)
        want = scaled_dot_attention(x_q, x_kv, x_kv)
        assert np.allclose(got.array, want.array, atol=1e-12)

    def test_output_shape(self):
        rng = np.random.default_rng(5)
        cfg = ModelConfig(d_model=8, n_heads=4, vocab_size=10, d_visual=4)
        store = create_parameters(cfg, seed=0)
        x = Tensor(rng.normal(0, 1, (6, 8)).astype(np.float32))
        out = multi_head_attention(x, x, x, store, "enc.0.attn", n_heads=4)
        assert out.shape == (6, 8)

    def test_head_weights_stacked(self):
        rng = np.random.default_rng(6)
        cfg = ModelConfig(d_model=8, n_heads=2, vocab_size=10, d_visual=4)
        store = create_parameters(cfg, seed=0)
        x = Tensor(rng.normal(0, 1, (5, 8)).astype(np.float32))
        _, weights = multi_head_attention(x, x, x, store, "enc.0.attn", n_heads=2,
                                          return_weights=True)
        assert weights.shape == (2, 5, 5)
        assert np.allclose(weights.sum(axis=2), 1.0, atol=1e-5)


class TestPositionWiseFfn:
    def test_zero_weights_give_bias(self):
        x = Tensor(np.random.default_rng(7).normal(0, 1, (4, 3)))
        w1 = Tensor(np.zeros((3, 6)))
        b1 = Tensor(np.zeros(6))
        w2 = Tensor(np.zeros((6, 3)))
        b2 = Tensor([1.0, 2.0, 3.0], dtype=np.float64)
        out = position_wise_ffn(x, w1, b1, w2, b2)
        assert np.allclose(out.array, np.tile(b2.array, (4, 1)))

    def test_hand_example(self):
        # x = [1, 2]; W1 = [[1, -1], [0, 1]]; b1 = 0 -> pre = [1, 1] -> relu same
        # W2 = [[2, 0], [0, 3]]; b2 = [1, 1] -> out = [3, 4]
        x = Tensor([[1.0, 2.0]], dtype=np.float64)
        w1 = Tensor([[1.0, -1.0], [0.0, 1.0]], dtype=np.float64)
        b1 = Tensor([0.0, 0.0], dtype=np.float64)
        w2 = Tensor([[2.0, 0.0], [0.0, 3.0]], dtype=np.float64)
        b2 = Tensor([1.0, 1.0], dtype=np.float64)
        out = position_wise_ffn(x, w1, b1, w2, b2)
        assert out.array.tolist() == [[3.0, 4.0]]

    def test_output_dim_matches_input(self):
        cfg = ModelConfig(d_model=8, n_heads=2, vocab_size=10, d_visual=4, d_ffn_hidden=32)
        store = create_parameters(cfg, seed=1)
        x = Tensor(np.random.default_rng(8).normal(0, 1, (5, 8)).astype(np.float32))
        out = position_wise_ffn(x, store["enc.0.ffn.fc1.w"], store["enc.0.ffn.fc1.b"],
                                store["enc.0.ffn.fc2.w"], store["enc.0.ffn.fc2.b"])
        assert out.shape == x.shape


class TestEncoder:
    def _cfg_store(self):
        cfg = ModelConfig(d_model=8, n_heads=2, n_layers_enc=2, n_layers_dec=1,
                          d_ffn_hidden=16, d_visual=4, dropout=0.0, vocab_size=12,
                          max_text_len=32, max_gen_len=8, ablation="T")
        return cfg, create_parameters(cfg, seed=2)

    def test_shape_contract(self):
        cfg, store = self._cfg_store()
        enc = encode_text([4, 5, 6, 7, 8], store, cfg)
        assert enc.z_star.shape == (5, 8)
        assert enc.mask.tolist() == [True] * 5

    def test_empty_input_errors(self):
        cfg, store = self._cfg_store()
        with pytest.raises(ValueError):
            encode_text([], store, cfg)

    def test_too_long_errors(self):
        cfg, store = self._cfg_store()
        with pytest.raises(ValueError, match="max_text_len"):
            encode_text([4] * 33, store, cfg)

    def test_pad_tail_does_not_leak(self):
        cfg, store = self._cfg_store()
        a = encode_text([4, 5, 6, PAD_ID, PAD_ID], store, cfg)
        b = encode_text([4, 5, 6, PAD_ID, PAD_ID], store, cfg)
        assert np.array_equal(a.z_star.array, b.z_star.array)
        # replacing pad positions with different pad-marked arrangement
        c = encode_text([4, 5, 6, PAD_ID], store, cfg)
        assert np.allclose(a.z_star.array[:3], c.z_star.array[:3], atol=1e-6)

    def test_deterministic(self):
        cfg, store = self._cfg_store()
        a = encode_text([4, 5, 6], store, cfg)
        b = encode_text([4, 5, 6], store, cfg)
        assert np.array_equal(a.z_star.array, b.z_star.array)


class TestVisualAttend:
    def test_single_region_returns_it(self):
        feats = np.array([[2.0, 5.0]], dtype=np.float32)
        out = visual_attend(feats, np.array([1.0, 0.0]))
        assert np.allclose(out.array, feats, atol=1e-6)

    def test_identical_regions_return_that_vector(self):
        feats = np.tile([1.5, -2.0], (4, 1)).astype(np.float32)
        out = visual_attend(feats, np.array([0.3, 0.7]))
        assert np.allclose(out.array, [[1.5, -2.0]], atol=1e-6)

    def test_hand_softmax_case(self):
        feats = np.array([[2.0, 0.0], [0.0, 0.0]])
        g = np.array([1.0, 0.0])
        out, weights = visual_attend(Tensor(feats), g, return_weights=True)
        e2 = math.exp(2.0)
        assert np.allclose(weights, [[e2 / (e2 + 1), 1 / (e2 + 1)]], atol=1e-9)
        assert np.allclose(out.array, [[2 * e2 / (e2 + 1), 0.0]], atol=1e-6)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            n = rng.integers(1, 9)
            feats = rng.normal(0, 1, (n, 5))
            _, w = visual_attend(Tensor(feats), rng.normal(0, 1, 5), return_weights=True)
            assert np.allclose(w.sum(), 1.0, atol=1e-6)

    def test_region_feature_set_accepted(self):
        rfs = region_set(seed=10)
        out = visual_attend(rfs, np.ones(6, dtype=np.float32))
        assert out.shape == (1, 6)


class TestFusion:
    def test_zero_weights_zero_output(self):
        z = Tensor(np.random.default_rng(11).normal(0, 1, (4, 3)))
        g = Tensor(np.ones((1, 2)))
        out = fuse_multimodal(z, g, Tensor(np.zeros((5, 3))), Tensor(np.zeros(3)))
        assert not out.y_star.array.any()

    def test_identity_on_text_half(self):
        z = Tensor(np.random.default_rng(12).normal(0, 1, (4, 3)))
        g = Tensor(np.ones((1, 2)))
        w = np.zeros((5, 3))
        w[:3, :3] = np.eye(3)
        out = fuse_multimodal(z, g, Tensor(w), Tensor(np.zeros(3)))
        assert np.allclose(out.y_star.array, z.array, atol=1e-6)

    def test_shape_contract(self):
        for m in (1, 3, 7):
            z = Tensor(np.zeros((m, 4)))
            g = Tensor(np.ones((1, 6)))
            out = fuse_multimodal(z, g, Tensor(np.zeros((10, 4))), Tensor(np.zeros(4)))
            assert out.y_star.shape == (m, 4)

    def test_dim_mismatch(self):
        z = Tensor(np.zeros((2, 4)))
        g = Tensor(np.ones((1, 6)))
        with pytest.raises(ValueError, match="fusion weight"):
            fuse_multimodal(z, g, Tensor(np.zeros((9, 4))), Tensor(np.zeros(4)))


class TestVisualContext:
    def _cfg(self, ablation):
        return ModelConfig(d_model=8, n_heads=2, n_layers_enc=1, n_layers_dec=1,
                           d_ffn_hidden=16, d_visual=6, dropout=0.0, vocab_size=12,
                           max_gen_len=6, ablation=ablation)

    def test_text_only_returns_none(self):
        cfg = self._cfg("T")
        store = create_parameters(cfg, seed=0)
        assert visual_context(None, store, cfg) is None

    def test_tv_returns_pooled_global(self):
        cfg = self._cfg("TV")
        store = create_parameters(cfg, seed=0)
        rfs = region_set(seed=13)
        out = visual_context(rfs, store, cfg)
        assert np.allclose(out.array, rfs.features.mean(axis=0, keepdims=True), atol=1e-6)

    def test_tva_matches_pooled_global(self):
        cfg = self._cfg("TVA")
        store = create_parameters(cfg, seed=0)
        rfs = region_set(seed=14)
        out = visual_context(rfs, store, cfg)
        assert np.allclose(out.array, rfs.features.mean(axis=0, keepdims=True), atol=1e-5)

    def test_tvar_uses_box_embedding(self):
        cfg = self._cfg("TVAR")
        store = create_parameters(cfg, seed=0)
        rfs = region_set(seed=15)
        out = visual_context(rfs, store, cfg)
        assert out.shape == (1, 6)
        # zeroing the box embedding must change the context
        store["visual.box.w"].array[:] = 0.0
        store["visual.box.b"].array[:] = 0.0
        out2 = visual_context(rfs, store, cfg)
        assert not np.allclose(out.array, out2.array)

    def test_missing_regions_error(self):
        cfg = self._cfg("TVAR")
        store = create_parameters(cfg, seed=0)
        with pytest.raises(ValueError, match="region features"):
            visual_context(None, store, cfg)


class TestDecoder:
    def _setup(self, ablation="TVAR"):
        cfg = ModelConfig(d_model=8, n_heads=2, n_layers_enc=1, n_layers_dec=2,
                          d_ffn_hidden=16, d_visual=6, dropout=0.0, vocab_size=14,
                          max_text_len=32, max_gen_len=8, ablation=ablation)
        store = create_parameters(cfg, seed=4)
        enc = encode_text([4, 5, 6, 7], store, cfg)
        rfs = region_set(seed=16) if cfg.uses_visual else None
        fus = build_fusion(enc, rfs, store, cfg)
        return cfg, store, enc, fus

    def test_logit_shape(self):
        cfg, store, enc, fus = self._setup()
        logits = decode([BOS_ID, 4, 5], enc, fus, store, cfg)
        assert logits.shape == (3, 14)

    def test_causality(self):
        cfg, store, enc, fus = self._setup()
        base = decode([BOS_ID, 4, 5, 6, 7], enc, fus, store, cfg).array
        altered = decode([BOS_ID, 4, 5, 13, 9], enc, fus, store, cfg).array
        assert np.array_equal(base[:3], altered[:3])

    def test_causal_mask_shape(self):
        m = causal_mask(4)
        assert m.tolist() == [[True, False, False, False],
                              [True, True, False, False],
                              [True, True, True, False],
                              [True, True, True, True]]

    def test_empty_target_errors(self):
        cfg, store, enc, fus = self._setup()
        with pytest.raises(ValueError):
            decode([], enc, fus, store, cfg)

    def test_text_only_runs_without_fusion(self):
        cfg, store, enc, fus = self._setup("T")
        assert fus is None
        logits = decode([BOS_ID, 4], enc, fus, store, cfg)
        assert logits.shape == (2, 14)

    def test_gradients_reach_every_parameter(self):
        cfg, store, enc, fus = self._setup("TVAR")
        # rebuild with fresh graph so every parameter participates
        enc = encode_text([4, 5, 6, 7], store, cfg)
        fus = build_fusion(enc, region_set(seed=16), store, cfg)
        logits = decode([BOS_ID, 4, 5], enc, fus, store, cfg)
        backward(sum_all(logits))
        missing = [name for name in store.names() if store[name].grad is None]
        assert not missing


class TestGenerateGreedy:
    def _setup(self):
        cfg = ModelConfig(d_model=8, n_heads=2, n_layers_enc=1, n_layers_dec=1,
                          d_ffn_hidden=16, d_visual=6, dropout=0.0, vocab_size=14,
                          max_text_len=32, max_gen_len=5, ablation="TVAR")
        return cfg, create_parameters(cfg, seed=6), region_set(seed=17)

    def test_budget_respected(self):
        cfg, store, rfs = self._setup()
        out = generate_greedy([4, 5, 6], rfs, store, cfg)
        assert len(out) <= cfg.max_gen_len

    def test_single_token_budget(self):
        cfg, store, rfs = self._setup()
        cfg.max_gen_len = 1
        out = generate_greedy([4, 5, 6], rfs, store, cfg)
        assert len(out) <= 1

    def test_deterministic(self):
        cfg, store, rfs = self._setup()
        a = generate_greedy([4, 5, 6], rfs, store, cfg)
        b = generate_greedy([4, 5, 6], rfs, store, cfg)
        assert a == b


class TestAblationNesting:
    def test_strict_parameter_nesting(self):
        names = {}
        for ablation in ("T", "TV", "TVA", "TVAR"):
            cfg = ModelConfig(d_model=8, n_heads=2, n_layers_enc=1, n_layers_dec=1,
                              d_ffn_hidden=16, d_visual=6, vocab_size=10, ablation=ablation)
            names[ablation] = set(create_parameters(cfg, seed=0).names())
        assert names["T"] < names["TV"] < names["TVA"] < names["TVAR"]
