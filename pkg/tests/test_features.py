import numpy as np
import pytest

from conftest import sine_buffer
from lpwavenet.audio import AudioBuffer, frame_signal
from lpwavenet.errors import ConfigError, DomainError
from lpwavenet.features import (
    FeatureTrack,
    NormStats,
    compute_norm_stats,
    denormalize,
    extract_f0,
    extract_features,
    load_features,
    lsf_schedule,
    normalize,
    save_features,
)
from lpwavenet.lpc import Lsf, alphas_from_reflection, is_stable, lsf_to_lpc
from test_lpc import yule_walker_solve


class TestF0:
    def test_pure_sine(self):
        buf = sine_buffer(200.0)
        f0, vuv = extract_f0(buf)
        interior = slice(4, len(f0) - 12)
        assert np.all(vuv[interior] == 1.0)
        assert np.max(np.abs(f0[interior] - 200.0)) <= 2.0

    def test_white_noise(self, rng):
        buf = AudioBuffer(np.clip(0.3 * rng.standard_normal(16000), -1, 1), 16000)
        _, vuv = extract_f0(buf)
        assert np.mean(vuv == 0.0) >= 0.90

    def test_silence(self):
        _, vuv = extract_f0(AudioBuffer(np.zeros(8000), 16000))
        assert np.all(vuv == 0.0)

    def test_window_too_short(self):
        with pytest.raises(ConfigError):
            extract_f0(sine_buffer(), win_ms=20.0, fmin=60.0)

    def test_bad_range(self):
        with pytest.raises(ConfigError):
            extract_f0(sine_buffer(), fmin=300.0, fmax=200.0)

    def test_deterministic(self):
        buf = sine_buffer(123.0)
        a = extract_f0(buf)
        b = extract_f0(buf)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


class TestExtractFeatures:
    def test_silence_conventions(self):
        track = extract_features(AudioBuffer(np.zeros(4000), 16000), order=8)
        flat = np.arange(1, 9) * np.pi / 9
        np.testing.assert_allclose(track.lsf, flat[None, :].repeat(track.num_frames, 0))
        np.testing.assert_allclose(track.log_energy, np.log(1e-10))
        assert np.all(track.vuv == 0.0)
        assert np.all(track.log_f0 == np.log(60.0))

    def test_frame_count(self, rng):
        for n in (400, 401, 4000, 4079):
            buf = AudioBuffer(rng.uniform(-0.5, 0.5, n), 16000)
            track = extract_features(buf, order=4)
            assert track.num_frames == -(-n // 80)

    def test_ar_filtered_noise_matches_yule_walker(self, rng):
        # oracle: direct normal-equation solve + shared LSF conversion on
        # the same windowed frames the pipeline uses
        ks = np.array([0.6, -0.4])
        coeffs = alphas_from_reflection(ks)
        n = 16000
        e = 0.1 * rng.standard_normal(n)
        x = np.zeros(n)
        for i in range(n):
            x[i] = e[i]
            for j, a in enumerate(coeffs.alpha, start=1):
                if i >= j:
                    x[i] += a * x[i - j]
        buf = AudioBuffer(np.clip(x, -1, 1), 16000)
        track = extract_features(buf, order=2, win_ms=25.0, hop_ms=5.0)
        frames = frame_signal(buf, 25.0, 5.0, window="hann")
        from lpwavenet.lpc import LpcCoeffs, autocorrelate, lpc_to_lsf

        for t in range(10, 100, 10):
            r = autocorrelate(frames[t], 2)
            r[0] *= 1.0 + 1e-6
            oracle = lpc_to_lsf(LpcCoeffs(2, yule_walker_solve(r, 2))).omega
            np.testing.assert_allclose(track.lsf[t], oracle, atol=1e-2)

    def test_raw_lsf_always_convertible(self, utterance_1s):
        track = extract_features(utterance_1s, order=16)
        for row in track.lsf:
            assert is_stable(lsf_to_lpc(Lsf(row)))


class TestNormalization:
    def _track(self, rng, frames=20, order=4):
        data = rng.standard_normal((frames, order + 3))
        data[:, -1] = (data[:, -1] > 0).astype(float)
        return FeatureTrack(data, hop_ms=5.0, sample_rate=16000, lpc_order=order)

    def test_identity_stats(self, rng):
        track = self._track(rng)
        stats = NormStats(np.zeros(7), np.ones(7))
        out = normalize(track, stats)
        np.testing.assert_array_equal(out.frames, track.frames)

    def test_constant_dim_zeroed(self):
        data = np.ones((10, 7))
        track = FeatureTrack(data, hop_ms=5.0, sample_rate=16000, lpc_order=4)
        stats = compute_norm_stats([track])
        out = normalize(track, stats)
        np.testing.assert_allclose(out.frames[:, :-1], 0.0)

    def test_roundtrip(self, rng):
        track = self._track(rng, frames=50)
        stats = compute_norm_stats([track])
        back = denormalize(normalize(track, stats), stats)
        assert np.max(np.abs(back.frames - track.frames)) <= 1e-9

    def test_vuv_passthrough(self, rng):
        track = self._track(rng)
        stats = NormStats(np.full(7, 5.0), np.full(7, 3.0))
        out = normalize(track, stats)
        np.testing.assert_array_equal(out.vuv, track.vuv)

    def test_dim_mismatch(self, rng):
        track = self._track(rng)
        with pytest.raises(DomainError):
            normalize(track, NormStats(np.zeros(5), np.ones(5)))

    def test_std_floor(self):
        stats = NormStats(np.zeros(3), np.zeros(3))
        assert np.all(stats.std == 1e-6)

    def test_schedule_requires_raw_view(self, rng):
        track = self._track(rng)
        track.frames[:, :4] = np.sort(rng.uniform(0.1, 3.0, (20, 4)), axis=1)
        stats = compute_norm_stats([track])
        lsf_schedule(track)  # raw: fine
        with pytest.raises(DomainError):
            lsf_schedule(normalize(track, stats))


class TestFeatureFiles:
    def test_roundtrip_bit_exact(self, tmp_path, utterance_short):
        track = extract_features(utterance_short, order=8)
        track.stats = compute_norm_stats([track])
        p1 = tmp_path / "a.features.json"
        save_features(track, p1)
        loaded = load_features(p1)
        p2 = tmp_path / "b.features.json"
        save_features(loaded, p2)
        assert (tmp_path / "a.features.f32").read_bytes() == \
               (tmp_path / "b.features.f32").read_bytes()
        assert loaded.num_frames == track.num_frames
        assert loaded.hop_ms == track.hop_ms
        assert loaded.sample_rate == track.sample_rate
        np.testing.assert_allclose(loaded.frames, track.frames, atol=1e-6)
        np.testing.assert_array_equal(loaded.stats.mean, track.stats.mean)

    def test_layout_and_manifest(self, tmp_path, utterance_short):
        import json

        track = extract_features(utterance_short, order=4)
        path = tmp_path / "x.features.json"
        save_features(track, path)
        manifest = json.loads(path.read_text())
        assert manifest["dims"] == 7
        assert manifest["layout"][-3:] == ["log_f0", "log_energy", "vuv"]
        assert manifest["payload"] == "x.features.f32"

    def test_version_check(self, tmp_path, utterance_short):
        import json

        track = extract_features(utterance_short, order=4)
        path = tmp_path / "x.features.json"
        save_features(track, path)
        manifest = json.loads(path.read_text())
        manifest["version"] = 999
        path.write_text(json.dumps(manifest))
        with pytest.raises(DomainError):
            load_features(path)
