import numpy as np
import pytest

from spoofcm.activations import Mode, activation_init, ensemble
from spoofcm.errors import ConfigError, ContractError, DomainError, FormatError
from spoofcm.model import (AttentiveStatsPool, ModelConfig, SEBlock, attentive_stats_pool,
                           build_model, forward, load_checkpoint, save_checkpoint, se_block)
from spoofcm.model.layers import cosine_to
from spoofcm.numerics import Tensor, backward, no_grad, ops

F64 = np.float64

# ResNet-18 layer plan, (C, H, T) with T as a function of L
LAYER_PLAN = [
    ("conv1", lambda L: (16, 18, L)),
    ("stage1", lambda L: (64, 18, L)),
    ("stage2", lambda L: (128, 9, L // 2)),
    ("stage3", lambda L: (256, 5, L // 4)),
    ("stage4", lambda L: (512, 3, L // 8)),
    ("conv_final", lambda L: (256, 1, L // 8)),
    ("pool", lambda L: (512,)),
    ("fc", lambda L: (256,)),
    ("softmax", lambda L: (2,)),
]


def tiny(**kw):
    return ModelConfig.desk_scale(**kw)


class TestLayerPlan:
    @pytest.mark.parametrize("arch", ["resnet18", "se_resnet18"])
    @pytest.mark.parametrize("bn", [True, False])
    def test_layer_shapes(self, arch, bn):
        model = build_model(ModelConfig(arch=arch, use_batchnorm=bn), seed=0)
        for L in (96, 400):
            with no_grad():
                out = forward(model, np.zeros((60, L), np.float32), trace=True)
            got = dict(out.trace)
            assert got["input"] == (1, 60, L)
            for name, shape in LAYER_PLAN:
                assert got[name] == shape(L), (name, L)

    def test_no_bn_means_no_bn_layers(self):
        model = build_model(ModelConfig(use_batchnorm=False))
        assert not any("bn" in name for name, _ in model.named_parameters())
        assert model.named_buffers() == []

    def test_too_short(self):
        model = build_model(tiny())
        with pytest.raises(ContractError):
            forward(model, np.zeros((60, 7), np.float32))

    def test_wrong_rows(self):
        with pytest.raises(ContractError):
            forward(build_model(tiny()), np.zeros((40, 16), np.float32))


class TestConfig:
    def test_se_reduction_must_divide(self):
        with pytest.raises(ConfigError) as e:
            ModelConfig(se_reduction=7)
        assert e.value.field == "model.se_reduction"

    def test_bad_arch(self):
        with pytest.raises(ConfigError):
            ModelConfig(arch="vgg")

    def test_round_trip(self):
        cfg = tiny(activation=ensemble("relu", "arelu"), use_batchnorm=False)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ModelConfig.from_dict({"depth": 50})


class TestAttentivePool:
    def test_constant_frames(self):
        pool = AttentiveStatsPool(3, 4, dtype=F64)
        h = np.array([[1.0], [-2.0], [0.5]]).repeat(6, axis=1)
        out = pool(Tensor(h)).data
        np.testing.assert_allclose(out[:3], [1.0, -2.0, 0.5], rtol=1e-12)
        np.testing.assert_allclose(out[3:], np.sqrt(1e-9), rtol=1e-6)

    def test_single_frame(self):
        pool = AttentiveStatsPool(2, 4, dtype=F64)
        out = pool(Tensor([[3.0], [4.0]])).data
        np.testing.assert_allclose(out, [3.0, 4.0, np.sqrt(1e-9), np.sqrt(1e-9)], rtol=1e-6)

    def test_forced_uniform_weights(self):
        pool = AttentiveStatsPool(1, 4, dtype=F64)
        out = attentive_stats_pool(pool, Tensor([[[0.0, 2.0]]]), weights=Tensor([[0.5, 0.5]]))
        np.testing.assert_allclose(out.data, [[1.0, 1.0]], rtol=1e-12)

    def test_weighted_moments_oracle(self):
        rng = np.random.default_rng(42)
        pool = AttentiveStatsPool(4, 5, rng=rng, dtype=F64)
        h = rng.standard_normal((4, 9))
        e = np.tanh(h.T @ pool.proj.weight.data + pool.proj.bias.data) @ pool.score.weight.data
        a = np.exp(e[:, 0] - e.max())
        a /= a.sum()
        mu = h @ a
        sd = np.sqrt(np.maximum((h ** 2) @ a - mu ** 2, 1e-9))
        np.testing.assert_allclose(pool(Tensor(h)).data, np.concatenate([mu, sd]), rtol=1e-12)

    def test_empty_time(self):
        pool = AttentiveStatsPool(2, 4, dtype=F64)
        with pytest.raises(ContractError):
            pool(Tensor(np.zeros((2, 0))))


class TestSEBlock:
    def test_saturated_gate_is_identity(self):
        se = SEBlock(4, 2, dtype=F64)
        se.fc2.bias.data[:] = 50.0
        x = np.random.default_rng(42).standard_normal((4, 3, 5))
        np.testing.assert_allclose(se(Tensor(x)).data, x, rtol=1e-12)

    def test_zero_input(self):
        se = SEBlock(4, 2, rng=np.random.default_rng(1), dtype=F64)
        np.testing.assert_array_equal(se(Tensor(np.zeros((4, 2, 2)))).data, 0)

    def test_constant_channels_scaled_by_gate(self):
        se = SEBlock(4, 2, rng=np.random.default_rng(1), dtype=F64)
        c = np.array([1.0, -2.0, 3.0, 0.5])
        x = np.ones((1, 4, 3, 3)) * c[None, :, None, None]
        hidden = np.maximum(c @ se.fc1.weight.data + se.fc1.bias.data, 0)
        gate = 1 / (1 + np.exp(-(hidden @ se.fc2.weight.data + se.fc2.bias.data)))
        np.testing.assert_allclose(se_block(se, Tensor(x)).data,
                                   x * gate[None, :, None, None], rtol=1e-12)

    def test_divisibility(self):
        with pytest.raises(ConfigError):
            SEBlock(6, 4)


class TestForward:
    def test_embedding_size(self):
        model = build_model(tiny())
        out = forward(model, np.random.default_rng(0).standard_normal((60, 40)))
        assert out.embedding.shape == (1, 32)

    def test_identical_inputs_identical_scores(self):
        model = build_model(tiny())
        x = np.random.default_rng(0).standard_normal((60, 24)).astype(np.float32)
        a = forward(model, x).cosine_score.data
        b = forward(model, x).cosine_score.data
        assert a.tobytes() == b.tobytes()
        # within one batch, BLAS blocking may round rows differently by an ulp
        pair = forward(model, np.stack([x, x])).cosine_score.data
        np.testing.assert_allclose(pair[0], pair[1], rtol=1e-5)

    def test_cosine_bounds(self):
        rng = np.random.default_rng(3)
        model = build_model(tiny(), seed=3)
        out = forward(model, rng.standard_normal((8, 60, 24)) * 10)
        assert np.all(np.abs(out.cosine_score.data) <= 1.0)
        np.testing.assert_array_equal(out.softmax_logits.data[:, 0], out.cosine_score.data)
        np.testing.assert_array_equal(out.softmax_logits.data[:, 1], -out.cosine_score.data)

    def test_parallel_embedding_cosine_one(self):
        w0 = Tensor(np.array([1.0, 2.0, -2.0]))
        np.testing.assert_allclose(cosine_to(Tensor([[2.0, 4.0, -4.0]]), w0).data, [1.0],
                                   rtol=1e-15)

    def test_zero_embedding(self):
        with pytest.raises(DomainError):
            cosine_to(Tensor([[0.0, 0.0]]), Tensor([1.0, 0.0]))

    def test_rrelu_train_needs_rng(self):
        model = build_model(tiny(activation=activation_init("rrelu")))
        with pytest.raises(ContractError):
            forward(model, np.zeros((2, 60, 16)), Mode.TRAIN)

    def test_interior_policy(self):
        first_last = build_model(tiny(activation=activation_init("prelu")))
        all_sites = build_model(tiny(activation=activation_init("prelu"),
                                     interior_activation_policy="all_sites"))
        n_first_last = sum(".xi" in n or n.endswith("xi") for n, _ in first_last.named_parameters())
        n_all = sum(n.endswith("xi") for n, _ in all_sites.named_parameters())
        assert n_first_last == 1
        assert n_all == 1 + 2 * 8


class TestGradients:
    def test_every_parameter_gets_finite_grad(self):
        model = build_model(tiny(), seed=0, dtype=F64)
        rng = np.random.default_rng(42)
        out = forward(model, rng.standard_normal((4, 60, 16)), Mode.TRAIN)
        grads = backward(ops.sum(out.cosine_score * Tensor([1.0, -1.0, 0.5, 2.0])))
        for name, p in model.named_parameters():
            assert p.id in grads, name
            assert np.all(np.isfinite(grads[p.id])), name

    def test_shared_arelu_gradient_is_sum_of_sites(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((3, 60, 16))
        weights = Tensor([1.0, -0.5, 2.0])

        shared = build_model(tiny(share_first_last=True), seed=5, dtype=F64)
        split = build_model(tiny(share_first_last=False), seed=5, dtype=F64)
        assert shared.first_act is shared.last_act
        g_shared = backward(ops.sum(forward(shared, x, Mode.TRAIN).cosine_score * weights))
        g_split = backward(ops.sum(forward(split, x, Mode.TRAIN).cosine_score * weights))
        for attr in ("alpha", "beta"):
            total = g_split[getattr(split.first_act, attr).id] + g_split[getattr(split.last_act, attr).id]
            np.testing.assert_allclose(g_shared[getattr(shared.first_act, attr).id], total,
                                       rtol=1e-10)

    def test_shared_parameters_counted_once(self):
        shared = build_model(tiny(share_first_last=True))
        split = build_model(tiny(share_first_last=False))
        assert len(split.parameters()) == len(shared.parameters()) + 2


class TestEnsembleIdentity:
    def test_single_member_ensemble_is_bit_identical(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((2, 60, 24)).astype(np.float32)
        a = build_model(tiny(activation=activation_init("relu")), seed=9)
        b = build_model(tiny(activation=ensemble("relu")), seed=9)
        for mode in (Mode.EVAL, Mode.TRAIN):
            oa, ob = forward(a, x, mode), forward(b, x, mode)
            assert oa.embedding.data.tobytes() == ob.embedding.data.tobytes()


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(42)
        model = build_model(tiny(activation=ensemble("arelu", "prelu")), seed=4)
        x = rng.standard_normal((3, 60, 32)).astype(np.float32)
        forward(model, x, Mode.TRAIN)  # moves BN running stats off their init
        save_checkpoint(model, tmp_path / "ck", step=17)
        loaded, manifest = load_checkpoint(tmp_path / "ck")
        assert manifest["step"] == 17
        a = forward(model, x).embedding.data
        b = forward(loaded, x).embedding.data
        assert a.tobytes() == b.tobytes()

    def test_manifest_lists_every_parameter_once(self, tmp_path):
        model = build_model(tiny())
        save_checkpoint(model, tmp_path / "ck")
        _, manifest = load_checkpoint(tmp_path / "ck")
        names = [t["name"] for t in manifest["tensors"]]
        assert len(names) == len(set(names))
        assert {n for n, _ in model.named_parameters()} <= set(names)
        assert all(t["dtype"] == "float32" for t in manifest["tensors"])

    def test_raw_files_are_little_endian_float32(self, tmp_path):
        model = build_model(tiny())
        save_checkpoint(model, tmp_path / "ck")
        raw = np.frombuffer((tmp_path / "ck" / "w0.bin").read_bytes(), "<f4")
        np.testing.assert_array_equal(raw, model.w0.data)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path)
