"""Command line interface.

Subcommands:

* ``features``  extract feature files from WAVs
* ``train``     run the training loop from a JSON config
* ``synth``     generate a waveform from a checkpoint
* ``eval``      score a synthesized WAV against a reference
* ``compare``   objective comparison table across checkpoints

Every command is reproducible from its arguments plus seed, and the
effective configuration is echoed next to whatever it writes.  Failures
print a single machine-parsable line ``lpwavenet: error: <message>`` on
stderr and exit non-zero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics, synth
from .audio import read_wav, write_wav
from .checkpoint import load_checkpoint
from .errors import LpwError
from .features import (
    compute_norm_stats,
    extract_features,
    load_features,
    save_features,
)
from .train import TrainConfig, model_from_checkpoint, prepare_training_data, train_loop


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"lpwavenet: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpwavenet")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="extract per-frame features from WAV files")
    p.add_argument("wavs", nargs="+")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--order", type=int, default=16)
    p.add_argument("--hop-ms", type=float, default=5.0)
    p.add_argument("--win-ms", type=float, default=25.0)

    p = sub.add_parser("train", help="train a vocoder from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--data-dir", default=None,
                   help="overrides the config's data.dir")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--resume", default=None)

    p = sub.add_parser("synth", help="generate audio from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--features", dest="features")
    g.add_argument("--wav", dest="wav")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sharpen", type=float, default=0.85)
    p.add_argument("--log-scale-cap", type=float, default=-4.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="objective metrics between two WAVs")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--order", type=int, default=16)

    p = sub.add_parser("compare", help="objective comparison across checkpoints")
    p.add_argument("--checkpoints", required=True,
                   help="comma-separated checkpoint paths")
    p.add_argument("--wav-dir", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_features(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tracks = []
    for wav in args.wavs:
        buf = read_wav(wav)
        tracks.append(extract_features(buf, order=args.order,
                                       win_ms=args.win_ms, hop_ms=args.hop_ms))
    stats = compute_norm_stats(tracks)
    for wav, track in zip(args.wavs, tracks):
        track.stats = stats
        dest = out_dir / (Path(wav).stem + ".features.json")
        save_features(track, dest)
        print(f"{wav} -> {dest} ({track.num_frames} frames x {track.dims} dims)")
    return 0


def _cmd_train(args) -> int:
    cfg = TrainConfig.from_json_file(args.config)
    data_dir = args.data_dir or cfg.data_dir
    if data_dir is None:
        raise LpwError("no data directory: pass --data-dir or set data.dir "
                       "in the config")
    cfg.data_dir = str(data_dir)
    wavs = sorted(Path(data_dir).glob("*.wav"))
    if not wavs:
        raise LpwError(f"no .wav files found in {data_dir}")
    data = prepare_training_data([read_wav(w) for w in wavs], cfg)

    def progress(step, loss):
        if step % cfg.log_interval == 0:
            print(f"step {step}/{cfg.steps} loss {loss:.4f}")

    final = train_loop(data, cfg, args.out_dir, resume=args.resume,
                       progress=progress)
    echo = Path(args.out_dir) / "train_config.json"
    echo.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"final checkpoint: {final}")
    return 0


def _cmd_synth(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ck)
    feat_cfg = ck.config.get("features", {})
    if args.wav:
        buf = read_wav(args.wav)
        hop_ms = 1000.0 * model.cfg.hop_samples / model.cfg.sample_rate
        track = extract_features(buf, order=model.cfg.lpc_order,
                                 win_ms=feat_cfg.get("win_ms", 25.0),
                                 hop_ms=hop_ms,
                                 fmin=feat_cfg.get("fmin", 60.0),
                                 fmax=feat_cfg.get("fmax", 400.0))
    else:
        track = load_features(args.features)
    rng = np.random.default_rng(args.seed)
    trace = synth.GenTrace()
    out = synth.generate(model, track, rng=rng, sharpen=args.sharpen,
                         log_scale_cap=args.log_scale_cap, trace=trace)
    summary = write_wav(out, args.out)
    sidecar = {
        "checkpoint": str(args.checkpoint),
        "config_hash": ck.hash,
        "seed": args.seed,
        "sharpen": args.sharpen,
        "log_scale_cap": args.log_scale_cap,
        "samples": len(out),
        "clamped_in_sampler": trace.clamp_count,
        "clamped_at_write": summary.clamped,
    }
    Path(str(args.out) + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.out} ({len(out)} samples)")
    return 0


def _cmd_eval(args) -> int:
    ref = read_wav(args.ref)
    test = read_wav(args.test)
    report = metrics.full_report(ref, test, order=args.order)
    metrics.write_report_json(report, args.report)
    csv_path = Path(args.report).with_suffix(".csv")
    metrics.write_report_csv([(Path(args.test).stem, report)], csv_path,
                             id_field="system")
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def _cmd_compare(args) -> int:
    wavs = sorted(Path(args.wav_dir).glob("*.wav"))
    if not wavs:
        raise LpwError(f"no .wav files found in {args.wav_dir}")
    rows = []
    for ckpt_path in args.checkpoints.split(","):
        ck = load_checkpoint(ckpt_path.strip())
        model = model_from_checkpoint(ck)
        feat_cfg = ck.config.get("features", {})
        reports = []
        for wav in wavs:
            rng = np.random.default_rng(args.seed)
            _, report = synth.copy_synthesis(
                model, read_wav(wav), rng=rng,
                win_ms=feat_cfg.get("win_ms", 25.0),
                fmin=feat_cfg.get("fmin", 60.0),
                fmax=feat_cfg.get("fmax", 400.0))
            reports.append(report)
        rows.append((f"{model.cfg.head}:{Path(ckpt_path).stem}",
                     _average_reports(reports)))
        print(f"{ckpt_path}: done ({len(wavs)} files)")
    metrics.write_report_csv(rows, args.report)
    print(f"wrote {args.report}")
    return 0


def _average_reports(reports) -> metrics.VocoderReport:
    def mean_of(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    return metrics.VocoderReport(
        vuv_pct=float(np.mean([r.vuv_pct for r in reports])),
        f0_rmse_hz=mean_of([r.f0_rmse_hz for r in reports]),
        lsd_db=mean_of([r.lsd_db for r in reports]),
        flsd_db=mean_of([r.flsd_db for r in reports]),
        voiced_frames=int(sum(r.voiced_frames for r in reports)),
        skipped_frames=int(sum(r.skipped_frames for r in reports)),
    )


_COMMANDS = {
    "features": _cmd_features,
    "train": _cmd_train,
    "synth": _cmd_synth,
    "eval": _cmd_eval,
    "compare": _cmd_compare,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (LpwError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"lpwavenet: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(run())
