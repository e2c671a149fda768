"""Teacher-forced training over windowed waveform/feature pairs.

Windows consist of a receptive-field context followed by a fixed target
span; only the target span contributes loss and gradient.  Conditioning
is produced by encoding each utterance's full feature track and slicing
the result per window, so window edges never see upsampling artifacts.
Everything is deterministic given the seed: initialization, the shuffled
window order (a fresh permutation per epoch, derived from seed and epoch
index), and the training path itself, which draws no samples.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import engine, heads
from .audio import mulaw_encode
from .checkpoint import load_checkpoint, save_checkpoint
from .engine import Tensor
from .errors import AlignmentError, ConfigError, NumericError
from .features import (
    FeatureTrack,
    NormStats,
    compute_norm_stats,
    extract_features,
    lsf_schedule,
    normalize,
)
from .lpc import lp_approximation_track
from .net import (
    HEAD_EXCITATION,
    HEAD_MULAW,
    MULAW_SILENT,
    NetConfig,
    PRESETS,
    WaveNetModel,
    canonical_head,
    config_hash,
    receptive_field,
)
from .optim import Adam


@dataclass
class TrainConfig:
    net: NetConfig = field(default_factory=NetConfig)
    steps: int = 2000
    window_samples: int = 1000
    batch_windows: int = 2
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 10.0
    seed: int = 1234
    log_interval: int = 50
    checkpoint_interval: int = 500
    feat_win_ms: float = 25.0
    fmin: float = 60.0
    fmax: float = 400.0
    data_dir: str | None = None

    def to_dict(self) -> dict:
        return {
            "head": self.net.head,
            "data": {"dir": self.data_dir},
            "model": self.net.to_dict(),
            "train": {
                "steps": self.steps,
                "window_samples": self.window_samples,
                "batch_windows": self.batch_windows,
                "learning_rate": self.learning_rate,
                "beta1": self.beta1,
                "beta2": self.beta2,
                "adam_eps": self.adam_eps,
                "grad_clip": self.grad_clip,
                "seed": self.seed,
                "log_interval": self.log_interval,
                "checkpoint_interval": self.checkpoint_interval,
            },
            "features": {
                "win_ms": self.feat_win_ms,
                "fmin": self.fmin,
                "fmax": self.fmax,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        preset = d.get("preset", "desk")
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        head = canonical_head(d.get("head", d.get("model", {}).get("head", "wn_lp")))
        net = PRESETS[preset](head=head, **{
            k: v for k, v in d.get("model", {}).items() if k != "head"
        })
        cfg = cls(net=net)
        tr = d.get("train", {})
        for key, attr in [
            ("steps", "steps"), ("window_samples", "window_samples"),
            ("batch_windows", "batch_windows"), ("learning_rate", "learning_rate"),
            ("beta1", "beta1"), ("beta2", "beta2"), ("adam_eps", "adam_eps"),
            ("grad_clip", "grad_clip"), ("seed", "seed"),
            ("log_interval", "log_interval"),
            ("checkpoint_interval", "checkpoint_interval"),
        ]:
            if key in tr:
                setattr(cfg, attr, tr[key])
        ft = d.get("features", {})
        cfg.feat_win_ms = ft.get("win_ms", cfg.feat_win_ms)
        cfg.fmin = ft.get("fmin", cfg.fmin)
        cfg.fmax = ft.get("fmax", cfg.fmax)
        cfg.data_dir = d.get("data", {}).get("dir")
        return cfg

    @classmethod
    def from_json_file(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class Utterance:
    """Everything training needs from one audio file, precomputed."""

    x: np.ndarray            # waveform [N]
    classes: np.ndarray      # mu-law class per sample [N]
    xhat: np.ndarray         # LP prediction from ground-truth history [N]
    excitation: np.ndarray   # x - xhat [N]
    vuv: np.ndarray          # per-sample voicing flag [N]
    norm_frames: np.ndarray  # normalized conditioning features [F, D]
    track: FeatureTrack      # raw feature track


@dataclass
class TrainingData:
    utterances: list
    stats: NormStats


@dataclass
class TrainWindow:
    utterance: int
    start: int
    span_x: np.ndarray         # [ctx + W + 1] waveform, incl. one-sample lead-in
    span_e: np.ndarray
    span_cls: np.ndarray
    xhat: np.ndarray           # [W] target-span LP prediction
    vuv: np.ndarray            # [W]


def prepare_training_data(bufs, cfg: TrainConfig) -> TrainingData:
    net = cfg.net
    hop_ms = 1000.0 * net.hop_samples / net.sample_rate
    tracks = []
    for buf in bufs:
        if buf.sample_rate != net.sample_rate:
            raise ConfigError(
                f"corpus sample rate {buf.sample_rate} != model {net.sample_rate}"
            )
        tracks.append(extract_features(buf, order=net.lpc_order,
                                       win_ms=cfg.feat_win_ms, hop_ms=hop_ms,
                                       fmin=cfg.fmin, fmax=cfg.fmax))
    stats = compute_norm_stats(tracks)
    utts = []
    for buf, track in zip(bufs, tracks):
        n = len(buf)
        if track.num_frames * net.hop_samples < n:
            raise AlignmentError("features do not cover the waveform")
        sched = lsf_schedule(track)
        xhat = lp_approximation_track(buf.samples, sched)
        utts.append(Utterance(
            x=buf.samples,
            classes=np.asarray(mulaw_encode(buf.samples), dtype=np.int64),
            xhat=xhat,
            excitation=buf.samples - xhat,
            vuv=np.repeat(track.vuv > 0.5, net.hop_samples)[:n].astype(np.float64),
            norm_frames=normalize(track, stats).frames,
            track=track,
        ))
    return TrainingData(utterances=utts, stats=stats)


def _padded_span(arr: np.ndarray, start: int, length: int, fill=0.0) -> np.ndarray:
    out = np.full(length, fill, dtype=arr.dtype)
    lo = max(start, 0)
    hi = min(start + length, len(arr))
    if lo < hi:
        out[lo - start : hi - start] = arr[lo:hi]
    return out


def enumerate_windows(data: TrainingData, cfg: TrainConfig):
    """All (utterance, start) pairs; trailing partial spans are dropped."""
    windows = []
    for u, utt in enumerate(data.utterances):
        for k in range(len(utt.x) // cfg.window_samples):
            windows.append((u, k * cfg.window_samples))
    if not windows:
        raise ConfigError("corpus shorter than one training window")
    return windows


def _window(data: TrainingData, cfg: TrainConfig, u: int, start: int) -> TrainWindow:
    utt = data.utterances[u]
    ctx = receptive_field(cfg.net)
    w = cfg.window_samples
    lead = start - ctx - 1
    return TrainWindow(
        utterance=u,
        start=start,
        span_x=_padded_span(utt.x, lead, ctx + w + 1),
        span_e=_padded_span(utt.excitation, lead, ctx + w + 1),
        span_cls=_padded_span(utt.classes, lead, ctx + w + 1, fill=MULAW_SILENT),
        xhat=utt.xhat[start : start + w],
        vuv=utt.vuv[start : start + w],
    )


def make_batches(data: TrainingData, cfg: TrainConfig, start_step: int = 0):
    """Deterministic stream of TrainWindow batches, one per step.

    The window order is a fresh seeded permutation per epoch, so any
    step's batch can be reconstructed from (seed, step) alone; resuming
    therefore reproduces the exact batch sequence.
    """
    windows = enumerate_windows(data, cfg)
    num = len(windows)
    perm_cache = {}

    def window_at(g: int):
        epoch, pos = divmod(g, num)
        if epoch not in perm_cache:
            perm_cache.clear()  # only the current epoch is ever needed
            rng = np.random.default_rng([cfg.seed, epoch])
            perm_cache[epoch] = rng.permutation(num)
        u, start = windows[perm_cache[epoch][pos]]
        return _window(data, cfg, u, start)

    step = start_step
    while True:
        base = step * cfg.batch_windows
        yield [window_at(base + j) for j in range(cfg.batch_windows)]
        step += 1


def train_step(model: WaveNetModel, batch, data: TrainingData,
               optimizer: Adam, cfg: TrainConfig):
    """Forward, loss over the target span, backward, clipped Adam update.

    Returns (mean loss in nats/sample, pre-clip gradient norm).
    """
    net = cfg.net
    ctx = receptive_field(net)
    w = cfg.window_samples
    dt = net.np_dtype
    head = net.head

    enc_cache = {}
    for win in batch:
        if win.utterance not in enc_cache:
            frames = data.utterances[win.utterance].norm_frames.astype(dt)
            enc_cache[win.utterance] = model.encode(Tensor(frames[None]))
    cond = engine.concat0([
        engine.slice_time_padded(enc_cache[win.utterance], win.start - ctx, ctx + w)
        for win in batch
    ])

    if head == HEAD_MULAW:
        inp = np.stack([win.span_cls[:-1] for win in batch])
        target = np.stack([win.span_cls[ctx + 1 :] for win in batch])
    elif head == HEAD_EXCITATION:
        inp = Tensor(np.stack([win.span_e[:-1] for win in batch])[..., None].astype(dt))
        target = np.stack([win.span_e[ctx + 1 :] for win in batch])
    else:
        inp = Tensor(np.stack([win.span_x[:-1] for win in batch])[..., None].astype(dt))
        target = np.stack([win.span_x[ctx + 1 :] for win in batch])

    logits = model.forward(inp, cond)
    z = np.asarray(logits.data[:, ctx:, :], dtype=np.float64)
    try:
        if head == HEAD_MULAW:
            nll, dz = heads.categorical_loss_and_grad(z, target)
        elif head == HEAD_EXCITATION:
            nll, dz = heads.mog_loss_and_grad(z, target, None, train_clip=True)
        else:
            xhat = np.stack([win.xhat for win in batch])
            nll, dz = heads.mog_loss_and_grad(z, target, xhat, train_clip=True)
        loss = float(np.mean(nll))
        bad_window = None
        if not np.isfinite(loss):
            bad = np.argwhere(~np.isfinite(np.atleast_2d(nll)))
            bad_window = batch[int(bad[0][0]) if len(bad) else 0]
    except NumericError:
        bad = np.argwhere(~np.isfinite(z.reshape(len(batch), -1)))
        bad_window = batch[int(bad[0][0]) if len(bad) else 0]
    if bad_window is not None:
        raise NumericError(
            f"non-finite loss in window (utterance {bad_window.utterance}, "
            f"start {bad_window.start}); step aborted"
        )

    seed = np.zeros(logits.data.shape, dtype=np.float64)
    seed[:, ctx:, :] = dz / (len(batch) * w)
    model.zero_grad()
    engine.backward(logits, seed.astype(logits.data.dtype))

    grads = {}
    sq = 0.0
    for name, p in model.params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        g = np.asarray(g, dtype=np.float64)
        grads[name] = g
        sq += float(np.sum(g * g))
    grad_norm = float(np.sqrt(sq))
    if cfg.grad_clip > 0 and grad_norm > cfg.grad_clip:
        scale = cfg.grad_clip / grad_norm
        for name in grads:
            grads[name] = grads[name] * scale
    optimizer.step(grads)
    return loss, grad_norm


def evaluate_loss(model: WaveNetModel, data: TrainingData,
                  cfg: TrainConfig) -> float:
    """Teacher-forced loss over every window of the corpus, no updates."""
    net = cfg.net
    ctx = receptive_field(net)
    w = cfg.window_samples
    dt = net.np_dtype
    total, count = 0.0, 0
    enc_cache = {}
    for u, start in enumerate_windows(data, cfg):
        win = _window(data, cfg, u, start)
        if u not in enc_cache:
            frames = data.utterances[u].norm_frames.astype(dt)
            enc_cache[u] = model.encode(Tensor(frames[None]))
        cond = engine.slice_time_padded(enc_cache[u], start - ctx, ctx + w)
        if net.head == HEAD_MULAW:
            logits = model.forward(win.span_cls[:-1][None], cond)
            nll, _ = heads.categorical_loss_and_grad(
                np.asarray(logits.data[:, ctx:, :], dtype=np.float64),
                win.span_cls[ctx + 1 :][None])
        elif net.head == HEAD_EXCITATION:
            logits = model.forward(
                Tensor(win.span_e[:-1][None, :, None].astype(dt)), cond)
            nll, _ = heads.mog_loss_and_grad(
                np.asarray(logits.data[:, ctx:, :], dtype=np.float64),
                win.span_e[ctx + 1 :][None], None, train_clip=True)
        else:
            logits = model.forward(
                Tensor(win.span_x[:-1][None, :, None].astype(dt)), cond)
            nll, _ = heads.mog_loss_and_grad(
                np.asarray(logits.data[:, ctx:, :], dtype=np.float64),
                win.span_x[ctx + 1 :][None], win.xhat[None], train_clip=True)
        total += float(np.sum(nll))
        count += nll.size
    return total / count


def _trajectory_id(config_dict: dict) -> str:
    """Config hash over everything that shapes the training trajectory.

    Run-length and logging knobs (steps, intervals) are excluded so a
    checkpoint can be resumed into a longer run of the same experiment.
    """
    d = json.loads(json.dumps(config_dict))
    for key in ("steps", "log_interval", "checkpoint_interval"):
        d.get("train", {}).pop(key, None)
    d.pop("data", None)  # paths do not shape the trajectory, contents do
    return config_hash(d)


def train_loop(data: TrainingData, cfg: TrainConfig, out_dir,
               resume: str | None = None, progress=None) -> Path:
    """Run cfg.steps of training, logging and checkpointing periodically.

    Returns the path of the final checkpoint.  Resuming from a saved
    checkpoint continues the run bit-exactly: the model, optimizer
    moments and batch order all derive from recorded state.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_dict = cfg.to_dict()
    log_path = out_dir / "loss_log.csv"

    start_step = 0
    model = WaveNetModel(cfg.net, rng=np.random.default_rng(cfg.seed),
                         norm_stats=data.stats)
    optimizer = Adam(model.params, lr=cfg.learning_rate, beta1=cfg.beta1,
                     beta2=cfg.beta2, eps=cfg.adam_eps)
    if resume is not None:
        ck = load_checkpoint(resume)
        if _trajectory_id(ck.config) != _trajectory_id(config_dict):
            raise ConfigError(
                "checkpoint was trained with a different config; refusing to resume"
            )
        model.load_state_arrays(ck.params)
        optimizer.load_state_arrays(ck.opt_state, t=ck.step)
        model.norm_stats = ck.stats or data.stats
        start_step = ck.step
    if not log_path.exists() or resume is None:
        log_path.write_text("step,loss,grad_norm,wall_ms\n")

    batches = make_batches(data, cfg, start_step=start_step)
    last_path = out_dir / "final.ckpt"
    with open(log_path, "a", newline="") as log_fh:
        writer = csv.writer(log_fh)
        for step in range(start_step + 1, cfg.steps + 1):
            t0 = time.perf_counter()
            loss, grad_norm = train_step(model, next(batches), data, optimizer, cfg)
            wall_ms = 1000.0 * (time.perf_counter() - t0)
            if step % cfg.log_interval == 0:
                writer.writerow([step, repr(loss), repr(grad_norm),
                                 f"{wall_ms:.1f}"])
                log_fh.flush()
            if progress is not None:
                progress(step, loss)
            if cfg.checkpoint_interval > 0 and step % cfg.checkpoint_interval == 0:
                save_checkpoint(out_dir / f"ckpt_{step:07d}.ckpt", config_dict,
                                model.state_arrays(), optimizer.state_arrays(),
                                step, data.stats)
    save_checkpoint(last_path, config_dict, model.state_arrays(),
                    optimizer.state_arrays(), cfg.steps, data.stats)
    return last_path


def model_from_checkpoint(ck) -> WaveNetModel:
    """Rebuild a model (weights + stats) from a loaded Checkpoint."""
    net = NetConfig.from_dict(ck.config["model"])
    model = WaveNetModel(net, rng=np.random.default_rng(0), norm_stats=ck.stats)
    model.load_state_arrays(ck.params)
    return model
