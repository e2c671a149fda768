import numpy as np
import pytest

from conftest import micro_config
from lpwavenet import engine
from lpwavenet.engine import Tensor
from lpwavenet.errors import ConfigError
from lpwavenet.net import (
    HEAD_MULAW,
    NetConfig,
    WaveNetModel,
    canonical_head,
    causal_dilated_conv,
    desk_config,
    full_config,
    receptive_field,
    xavier_init,
)


class TestConfig:
    def test_full_scale_receptive_field(self):
        assert receptive_field(full_config("wn_lp")) == 3071

    def test_desk_receptive_field(self):
        # 2 cycles of 1..64 plus input conv plus current sample
        assert receptive_field(desk_config()) == 2 + 2 * 127

    def test_out_channels(self):
        assert full_config("wn_e").out_channels == 30  # ten mixtures
        assert desk_config("wn_s").out_channels == 256
        assert desk_config("wn_lp").out_channels == 3

    def test_head_aliases(self):
        assert canonical_head("WN_LP") == "wn_lp"
        assert canonical_head("mulaw") == "wn_s"
        assert canonical_head("excitation") == "wn_e"
        with pytest.raises(ConfigError):
            canonical_head("wn_x")

    def test_weight_norm_default_off_for_mulaw(self):
        assert not desk_config("wn_s").weight_norm
        assert desk_config("wn_lp").weight_norm

    def test_roundtrip_dict(self):
        cfg = micro_config("wn_e")
        assert NetConfig.from_dict(cfg.to_dict()) == cfg


class TestXavier:
    def test_bound(self, rng):
        shape = (20, 30)
        w = xavier_init(shape, rng)
        bound = np.sqrt(6.0 / 50)
        assert np.all(np.abs(w) <= bound)

    def test_deterministic(self):
        a = xavier_init((5, 5), np.random.default_rng(3))
        b = xavier_init((5, 5), np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_variance(self):
        rng = np.random.default_rng(0)
        w = xavier_init((100, 1000), rng)
        target = 2.0 / (100 + 1000)
        assert abs(w.var() / target - 1.0) < 0.2


class TestCausalConv:
    def test_identity_kernel(self, rng):
        x = Tensor(rng.standard_normal((1, 12, 3)))
        w = np.zeros((2, 3, 3))
        w[1] = np.eye(3)
        out = causal_dilated_conv(x, Tensor(w), None, dilation=4)
        np.testing.assert_allclose(out.data, x.data, atol=1e-15)

    def test_impulse_dilation(self):
        x = np.zeros((1, 16, 1))
        x[0, 0, 0] = 1.0
        w = np.ones((2, 1, 1))
        for d in (1, 5):
            out = causal_dilated_conv(Tensor(x), Tensor(w), None, dilation=d)
            nz = np.nonzero(out.data[0, :, 0])[0]
            np.testing.assert_array_equal(nz, [0, d])

    def test_causality(self, rng):
        x = rng.standard_normal((1, 20, 2))
        w = Tensor(rng.standard_normal((2, 2, 2)))
        base = causal_dilated_conv(Tensor(x), w, None, 3).data
        x2 = x.copy()
        x2[0, 10] += 1.0
        pert = causal_dilated_conv(Tensor(x2), w, None, 3).data
        np.testing.assert_array_equal(base[:, :10], pert[:, :10])
        assert np.any(base[:, 10:] != pert[:, 10:])

    def test_channel_mismatch(self, rng):
        with pytest.raises(ConfigError):
            causal_dilated_conv(Tensor(np.zeros((1, 4, 3))),
                                Tensor(np.zeros((2, 2, 2))), None, 1)


def _forward_logits(model, x, cond_frames):
    cond = model.encode(Tensor(cond_frames))
    return model.forward(x if model.cfg.head == HEAD_MULAW else Tensor(x), cond)


class TestModelForward:
    def _setup(self, head="wn_lp", seed=5):
        cfg = micro_config(head)
        model = WaveNetModel(cfg, rng=np.random.default_rng(seed))
        rng = np.random.default_rng(seed + 1)
        frames = rng.standard_normal((1, 6, cfg.feature_dim))
        t = 6 * cfg.hop_samples
        if head == HEAD_MULAW:
            x = rng.integers(0, 256, size=(1, t))
        else:
            x = rng.uniform(-1, 1, (1, t, 1))
        return model, x, frames

    def test_logit_shape(self):
        for head, out in [("wn_lp", 6), ("wn_e", 6), ("wn_s", 256)]:
            model, x, frames = self._setup(head)
            logits = _forward_logits(model, x, frames)
            assert logits.data.shape == (1, x.shape[1], out)

    def test_encoder_length(self):
        model, x, frames = self._setup()
        cond = model.encode(Tensor(frames))
        assert cond.data.shape == (1, 6 * model.cfg.hop_samples,
                                   model.cfg.feature_dim)

    def test_encoder_zero_features_zero_output(self):
        model, _, frames = self._setup()
        for name, p in model.params.items():
            if name.startswith("enc.") and name.endswith(".b"):
                p.data = np.zeros_like(p.data)
        cond = model.encode(Tensor(np.zeros_like(frames)))
        np.testing.assert_allclose(cond.data, 0.0, atol=1e-15)

    def test_block_passthrough_when_zeroed(self):
        # zero filter path -> tanh(0)=0 -> z=0 -> residual out = x, skip = 0
        model, x, frames = self._setup()
        i = 0
        for part in ("filter", "gate", "res", "skip"):
            for suffix in (".w.v", ".w", ".vc.v", ".vc", ".b"):
                name = f"block{i:02d}.{part}{suffix}"
                if name in model.params:
                    model.params[name].data = np.zeros_like(model.params[name].data)
        # zeroing .v would break weight_norm; restore direction, zero gains
        for part in ("filter", "gate", "res", "skip"):
            vname = f"block{i:02d}.{part}.w.v"
            if vname in model.params:
                model.params[vname].data = np.full_like(
                    model.params[vname].data, 0.1)
                model.params[f"block{i:02d}.{part}.w.g"].data = np.zeros_like(
                    model.params[f"block{i:02d}.{part}.w.g"].data)
            cname = f"block{i:02d}.{part}.vc.v"
            if cname in model.params:
                model.params[cname].data = np.full_like(
                    model.params[cname].data, 0.1)
                model.params[f"block{i:02d}.{part}.vc.g"].data = np.zeros_like(
                    model.params[f"block{i:02d}.{part}.vc.g"].data)
        h = model.input_layer(Tensor(np.asarray(x, dtype=np.float64)))
        cond = model.encode(Tensor(frames))
        d = model.cfg.dilations[i]
        f = causal_dilated_conv(h, model.effective("block00.filter.w"),
                                model.params["block00.filter.b"], d)
        f = engine.add(f, engine.matmul(cond, model.effective("block00.filter.vc")))
        g = causal_dilated_conv(h, model.effective("block00.gate.w"),
                                model.params["block00.gate.b"], d)
        g = engine.add(g, engine.matmul(cond, model.effective("block00.gate.vc")))
        z = engine.mul(engine.tanh(f), engine.sigmoid(g))
        np.testing.assert_allclose(z.data, 0.0, atol=1e-15)

    def test_trunk_causality(self):
        model, x, frames = self._setup()
        base = _forward_logits(model, x, frames).data
        x2 = x.copy()
        t0 = 20
        x2[0, t0, 0] += 0.5
        pert = _forward_logits(model, x2, frames).data
        np.testing.assert_array_equal(base[:, :t0], pert[:, :t0])
        assert np.any(base[:, t0:] != pert[:, t0:])

    def test_mulaw_trunk_causality(self):
        model, x, frames = self._setup("wn_s")
        base = _forward_logits(model, x, frames).data
        x2 = x.copy()
        t0 = 17
        x2[0, t0] = (x2[0, t0] + 91) % 256
        pert = _forward_logits(model, x2, frames).data
        np.testing.assert_array_equal(base[:, :t0], pert[:, :t0])

    def test_cond_length_mismatch(self):
        model, x, frames = self._setup()
        cond = model.encode(Tensor(frames[:, :-1]))
        with pytest.raises(ConfigError):
            model.forward(Tensor(x), cond)


class TestFullNetworkGradients:
    @pytest.mark.parametrize("head", ["wn_lp", "wn_s"])
    def test_matches_finite_differences(self, head):
        # small but complete: weight norm on for the MoG head, off for mu-law
        cfg = micro_config(head, mixture_count=2)
        model = WaveNetModel(cfg, rng=np.random.default_rng(8))
        rng = np.random.default_rng(9)
        frames = rng.standard_normal((1, 4, cfg.feature_dim))
        t = 4 * cfg.hop_samples
        if head == "wn_s":
            x = rng.integers(0, 256, size=(1, t))
        else:
            x = rng.uniform(-1, 1, (1, t, 1))
        seed = rng.standard_normal((1, t, cfg.out_channels))

        def loss():
            out = _forward_logits(model, x, frames)
            return float(np.sum(out.data * seed))

        out = _forward_logits(model, x, frames)
        model.zero_grad()
        engine.backward(out, seed)
        eps = 1e-5
        for name, p in model.params.items():
            got = p.grad if p.grad is not None else np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            idxs = np.linspace(0, flat.size - 1, min(6, flat.size)).astype(int)
            for i in idxs:
                orig = flat[i]
                flat[i] = orig + eps
                fp = loss()
                flat[i] = orig - eps
                fm = loss()
                flat[i] = orig
                num = (fp - fm) / (2 * eps)
                denom = max(abs(num), abs(got.reshape(-1)[i]), 1e-6)
                assert abs(got.reshape(-1)[i] - num) / denom < 1e-4, name
