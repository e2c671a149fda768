import json

import pytest

from lpwavenet.audio import read_wav, write_wav
from lpwavenet.cli import run
from lpwavenet.features import load_features
from lpwavenet.synthetic import synthetic_utterance


@pytest.fixture(scope="module")
def wav_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("wavs")
    for i, seed in enumerate((61, 62)):
        write_wav(synthetic_utterance(duration_s=0.3, seed=seed),
                  d / f"utt{i}.wav")
    return d


@pytest.fixture(scope="module")
def train_cfg_path(tmp_path_factory):
    d = tmp_path_factory.mktemp("cfg")
    payload = {
        "head": "wn_lp",
        "model": {"dilation_cycle": [1, 2, 4], "repeats": 1,
                  "residual_channels": 6, "skip_channels": 6,
                  "lpc_order": 6, "hop_samples": 80, "mixture_count": 1},
        "train": {"steps": 4, "window_samples": 300, "batch_windows": 1,
                  "seed": 3, "log_interval": 2, "checkpoint_interval": 0},
    }
    path = d / "train.json"
    path.write_text(json.dumps(payload))
    return path


@pytest.fixture(scope="module")
def trained_dir(wav_dir, train_cfg_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = run(["train", "--config", str(train_cfg_path),
                "--data-dir", str(wav_dir), "--out-dir", str(out)])
    assert code == 0
    return out


class TestFeaturesCommand:
    def test_writes_manifests(self, wav_dir, tmp_path):
        code = run(["features", str(wav_dir / "utt0.wav"),
                    str(wav_dir / "utt1.wav"), "--out-dir", str(tmp_path),
                    "--order", "8"])
        assert code == 0
        track = load_features(tmp_path / "utt0.features.json")
        assert track.lpc_order == 8
        assert track.stats is not None  # corpus stats attached

    def test_missing_file(self, tmp_path, capsys):
        code = run(["features", str(tmp_path / "nope.wav"),
                    "--out-dir", str(tmp_path)])
        assert code != 0
        err = capsys.readouterr().err.strip()
        assert err.startswith("lpwavenet: error:") and "\n" not in err


class TestTrainCommand:
    def test_outputs(self, trained_dir):
        assert (trained_dir / "final.ckpt").exists()
        assert (trained_dir / "loss_log.csv").exists()
        assert (trained_dir / "train_config.json").exists()


class TestSynthCommand:
    def test_deterministic_bytes(self, trained_dir, wav_dir, tmp_path):
        outs = []
        for name in ("a.wav", "b.wav"):
            code = run(["synth", "--checkpoint", str(trained_dir / "final.ckpt"),
                        "--wav", str(wav_dir / "utt0.wav"), "--seed", "7",
                        "--out", str(tmp_path / name)])
            assert code == 0
            outs.append((tmp_path / name).read_bytes())
        assert outs[0] == outs[1]
        sidecar = json.loads((tmp_path / "a.wav.json").read_text())
        assert sidecar["seed"] == 7 and "config_hash" in sidecar

    def test_from_feature_file(self, trained_dir, wav_dir, tmp_path):
        code = run(["features", str(wav_dir / "utt0.wav"),
                    "--out-dir", str(tmp_path), "--order", "6"])
        assert code == 0
        code = run(["synth", "--checkpoint", str(trained_dir / "final.ckpt"),
                    "--features", str(tmp_path / "utt0.features.json"),
                    "--seed", "1", "--out", str(tmp_path / "f.wav")])
        assert code == 0
        track = load_features(tmp_path / "utt0.features.json")
        assert len(read_wav(tmp_path / "f.wav")) == track.num_frames * 80

    def test_bad_checkpoint_path(self, tmp_path, capsys):
        code = run(["synth", "--checkpoint", str(tmp_path / "no.ckpt"),
                    "--seed", "1", "--wav", "x.wav",
                    "--out", str(tmp_path / "o.wav")])
        assert code != 0
        assert capsys.readouterr().err.startswith("lpwavenet: error:")


class TestEvalCommand:
    def test_identity_all_zero(self, wav_dir, tmp_path):
        report_path = tmp_path / "r.json"
        code = run(["eval", "--ref", str(wav_dir / "utt0.wav"),
                    "--test", str(wav_dir / "utt0.wav"),
                    "--report", str(report_path)])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["vuv_pct"] == 0.0
        assert report["f0_rmse_hz"] == pytest.approx(0.0, abs=1e-9)
        assert report["lsd_db"] == pytest.approx(0.0, abs=1e-9)
        assert report["flsd_db"] == pytest.approx(0.0, abs=1e-9)
        assert (tmp_path / "r.csv").exists()


class TestCompareCommand:
    def test_table_shape(self, trained_dir, wav_dir, tmp_path):
        table = tmp_path / "table.csv"
        ckpt = str(trained_dir / "final.ckpt")
        code = run(["compare", "--checkpoints", ",".join([ckpt] * 3),
                    "--wav-dir", str(wav_dir), "--report", str(table)])
        assert code == 0
        lines = table.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[1:5] == ["vuv_pct", "f0_rmse_hz", "lsd_db", "flsd_db"]
        assert len(lines) == 4  # three systems -> three rows


class TestUsageErrors:
    def test_unknown_flag(self, capsys):
        assert run(["eval", "--nope"]) == 2
        err = capsys.readouterr().err.strip()
        assert err.startswith("lpwavenet: error:")

    def test_unknown_command(self, capsys):
        assert run(["transmogrify"]) == 2
