import numpy as np
import pytest

from conftest import micro_config
from lpwavenet.checkpoint import load_checkpoint, save_checkpoint
from lpwavenet.errors import FormatError, NumericError
from lpwavenet.features import NormStats
from lpwavenet.net import WaveNetModel, config_hash
from lpwavenet.optim import Adam, adam_step


class TestAdam:
    def test_zero_gradient_no_change(self):
        p = {"w": np.array([1.0, 2.0])}
        opt = Adam(p, lr=0.1)
        opt.step({"w": np.zeros(2)})
        np.testing.assert_array_equal(p["w"], [1.0, 2.0])

    def test_first_step_magnitude(self):
        p = {"w": np.array([0.0])}
        opt = Adam(p, lr=1e-4)
        opt.step({"w": np.array([0.1])})
        # update = -lr * g / (|g| + eps) -> -lr within 1%
        assert abs(-p["w"][0] - 1e-4) / 1e-4 < 0.01

    def test_deterministic_trajectories(self):
        def run():
            rng = np.random.default_rng(4)
            p = {"w": rng.standard_normal(8)}
            opt = Adam(p, lr=1e-3)
            for _ in range(50):
                opt.step({"w": 0.1 * p["w"] + 0.01})
            return p["w"]

        np.testing.assert_array_equal(run(), run())

    def test_nonfinite_rejected_with_name(self):
        p = {"good": np.zeros(2), "bad": np.zeros(2)}
        opt = Adam(p)
        grads = {"good": np.ones(2), "bad": np.array([1.0, np.inf])}
        with pytest.raises(NumericError) as err:
            opt.step(grads)
        assert "bad" in str(err.value)
        # rejection happens before any parameter moves
        np.testing.assert_array_equal(p["good"], np.zeros(2))

    def test_functional_form_matches_reference(self, rng):
        # reference: textbook two-buffer implementation
        g_seq = [rng.standard_normal(3) for _ in range(10)]
        p1 = {"w": np.ones(3)}
        m = {"w": np.zeros(3)}
        v = {"w": np.zeros(3)}
        for t, g in enumerate(g_seq, start=1):
            adam_step(p1, {"w": g}, (m, v), t, lr=1e-2)
        w = np.ones(3)
        m2 = np.zeros(3)
        v2 = np.zeros(3)
        for t, g in enumerate(g_seq, start=1):
            m2 = 0.9 * m2 + 0.1 * g
            v2 = 0.999 * v2 + 0.001 * g * g
            mhat = m2 / (1 - 0.9**t)
            vhat = v2 / (1 - 0.999**t)
            w -= 1e-2 * mhat / (np.sqrt(vhat) + 1e-8)
        np.testing.assert_allclose(p1["w"], w, atol=1e-12)


class TestCheckpoint:
    def _roundtrip(self, tmp_path, with_opt=True):
        cfg = micro_config("wn_lp")
        model = WaveNetModel(cfg, rng=np.random.default_rng(2))
        opt = Adam(model.params)
        opt.step({k: 0.01 * np.ones_like(p.data) for k, p in model.params.items()})
        stats = NormStats(np.arange(cfg.feature_dim, dtype=float),
                          np.ones(cfg.feature_dim))
        config = {"model": cfg.to_dict(), "train": {"seed": 1}}
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, config, model.state_arrays(),
                        opt.state_arrays() if with_opt else None, 17, stats)
        return model, opt, config, load_checkpoint(path)

    def test_bit_exact_roundtrip(self, tmp_path):
        model, opt, config, ck = self._roundtrip(tmp_path)
        assert ck.step == 17
        assert ck.hash == config_hash(config)
        for name, p in model.params.items():
            np.testing.assert_array_equal(ck.params[name], p.data)
        for name, arr in opt.state_arrays().items():
            np.testing.assert_array_equal(ck.opt_state[name], arr)
        np.testing.assert_array_equal(ck.stats.mean, np.arange(len(ck.stats.mean),
                                                               dtype=float))

    def test_double_roundtrip_identical_bytes(self, tmp_path):
        _, _, config, ck = self._roundtrip(tmp_path)
        p2 = tmp_path / "again.ckpt"
        save_checkpoint(p2, ck.config, ck.params, ck.opt_state, ck.step, ck.stats)
        assert (tmp_path / "m.ckpt").read_bytes() == p2.read_bytes()

    def test_tamper_detected(self, tmp_path):
        self._roundtrip(tmp_path)
        path = tmp_path / "m.ckpt"
        raw = path.read_bytes()
        head, _, payload = raw.partition(b"\n")
        head = head.replace(b'"seed":1', b'"seed":2')
        path.write_bytes(head + b"\n" + payload)
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"\x00\x01\x02 not a checkpoint")
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        self._roundtrip(tmp_path)
        path = tmp_path / "m.ckpt"
        raw = path.read_bytes()
        (tmp_path / "short.ckpt").write_bytes(raw[:-20])
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "short.ckpt")
