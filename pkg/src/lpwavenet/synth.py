"""Autoregressive waveform generation for the three heads.

The generator runs on materialized float64 weights, outside the
training tape.  Two trunk evaluation modes exist:

* ``fast`` -- incremental, with per-block ring buffers (default);
* ``reference`` -- for every sample, replay the trunk over the last
  receptive field from a zeroed state.

Because both modes drive the same per-step kernel, they produce
bit-identical waveforms; the replay mode exists as the plainly-correct
oracle the incremental path is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import heads, lpc, metrics
from .audio import AudioBuffer, mulaw_decode
from .errors import ConfigError, DivergenceError, DomainError
from .features import FeatureTrack, extract_features, lsf_schedule, normalize
from .kernels import TrunkKernelPack, make_stepper
from .net import (
    HEAD_EXCITATION,
    HEAD_LP_MOG,
    HEAD_MULAW,
    MULAW_SILENT,
    WaveNetModel,
)


@dataclass
class GenWeights:
    """Float64 snapshot of everything generation needs from a model."""

    head: str
    pack: TrunkKernelPack
    in_w0: np.ndarray  # [R] for real input, [256,R] for class input
    in_w1: np.ndarray
    in_b: np.ndarray
    enc_c1: np.ndarray
    enc_c1b: np.ndarray
    enc_c2: np.ndarray
    enc_c2b: np.ndarray
    enc_up: np.ndarray
    enc_upb: np.ndarray
    hop: int
    lpc_order: int
    mixture_count: int


@dataclass
class GenTrace:
    """Per-sample audit data collected during generation."""

    effective_log_scale: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sharpened: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    voiced: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    clamp_count: int = 0


def extract_gen_weights(model: WaveNetModel) -> GenWeights:
    cfg = model.cfg

    def eff(name):
        return np.asarray(model.effective(name).data, dtype=np.float64)

    blocks = range(len(cfg.dilations))
    pack = TrunkKernelPack(
        dilations=np.asarray(cfg.dilations, dtype=np.int32),
        wf0=np.stack([eff(f"block{i:02d}.filter.w")[0] for i in blocks]),
        wf1=np.stack([eff(f"block{i:02d}.filter.w")[1] for i in blocks]),
        wg0=np.stack([eff(f"block{i:02d}.gate.w")[0] for i in blocks]),
        wg1=np.stack([eff(f"block{i:02d}.gate.w")[1] for i in blocks]),
        vf=np.stack([eff(f"block{i:02d}.filter.vc") for i in blocks]),
        vg=np.stack([eff(f"block{i:02d}.gate.vc") for i in blocks]),
        bf=np.stack([eff(f"block{i:02d}.filter.b") for i in blocks]),
        bg=np.stack([eff(f"block{i:02d}.gate.b") for i in blocks]),
        wr=np.stack([eff(f"block{i:02d}.res.w") for i in blocks]),
        br=np.stack([eff(f"block{i:02d}.res.b") for i in blocks]),
        ws=np.stack([eff(f"block{i:02d}.skip.w") for i in blocks]),
        bs=np.stack([eff(f"block{i:02d}.skip.b") for i in blocks]),
        post1=eff("post1.w"),
        post1_b=eff("post1.b"),
        post2=eff("post2.w"),
        post2_b=eff("post2.b"),
    )
    if cfg.head == HEAD_MULAW:
        in_w0, in_w1 = eff("input.w0"), eff("input.w1")
    else:
        w = eff("input.w")
        in_w0, in_w1 = w[0, 0], w[1, 0]
    return GenWeights(
        head=cfg.head,
        pack=pack,
        in_w0=in_w0,
        in_w1=in_w1,
        in_b=eff("input.b"),
        enc_c1=eff("enc.c1.w"),
        enc_c1b=eff("enc.c1.b"),
        enc_c2=eff("enc.c2.w"),
        enc_c2b=eff("enc.c2.b"),
        enc_up=eff("enc.up.w"),
        enc_upb=eff("enc.up.b"),
        hop=cfg.hop_samples,
        lpc_order=cfg.lpc_order,
        mixture_count=cfg.mixture_count,
    )


def _conv3_numpy(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    prev = np.vstack([np.zeros((1, x.shape[1])), x[:-1]])
    nxt = np.vstack([x[1:], np.zeros((1, x.shape[1]))])
    return prev @ w[0] + x @ w[1] + nxt @ w[2] + b


def encode_numpy(gw: GenWeights, feats: np.ndarray) -> np.ndarray:
    """Conditioning encoder on plain arrays; mirrors WaveNetModel.encode."""
    h = np.maximum(_conv3_numpy(feats, gw.enc_c1, gw.enc_c1b), 0.0)
    h = _conv3_numpy(h, gw.enc_c2, gw.enc_c2b)
    h = h + feats
    f, d = h.shape
    hop = gw.hop
    z = np.tensordot(h, gw.enc_up, axes=([1], [1]))  # [F,K,D]
    full = np.zeros(((f + 1) * hop, gw.enc_up.shape[2]))
    full[: f * hop] += z[:, :hop, :].reshape(f * hop, -1)
    full[hop:] += z[:, hop:, :].reshape(f * hop, -1)
    lo = hop // 2
    return full[lo : lo + f * hop] + gw.enc_upb


class TrunkStreamer:
    """Per-sample trunk evaluation: input layer + backend stepper."""

    def __init__(self, gw: GenWeights, cond: np.ndarray, backend: str | None = None,
                 reference: bool = False):
        self.gw = gw
        self.stepper = make_stepper(gw.pack, cond, backend)
        self.reference = reference
        self.span = gw.pack.history_span
        if reference:
            r = gw.pack.residual_channels
            self._h_hist = np.zeros((len(cond), r))
        self._prev_real = 0.0
        self._prev_cls = MULAW_SILENT

    def _input_real(self, x_prev: float) -> np.ndarray:
        h = self._prev_real * self.gw.in_w0 + x_prev * self.gw.in_w1 + self.gw.in_b
        self._prev_real = x_prev
        return h

    def _input_class(self, cls_prev: int) -> np.ndarray:
        h = self.gw.in_w0[self._prev_cls] + self.gw.in_w1[cls_prev] + self.gw.in_b
        self._prev_cls = cls_prev
        return h

    def step(self, x_prev, t: int) -> np.ndarray:
        if self.gw.head == HEAD_MULAW:
            h = self._input_class(int(x_prev))
        else:
            h = self._input_real(float(x_prev))
        if not self.reference:
            return self.stepper.step(h, t)
        self._h_hist[t] = h
        self.stepper.reset()
        logits = None
        for tau in range(max(0, t - self.span), t + 1):
            logits = self.stepper.step(self._h_hist[tau], tau)
        return logits


def generate(model: WaveNetModel, features: FeatureTrack, head: str | None = None,
             rng: np.random.Generator | None = None, *,
             sharpen: float = heads.VOICED_SHARPEN,
             log_scale_cap: float = heads.GEN_LOG_SCALE_CAP,
             backend: str | None = None, mode: str = "fast",
             trace: GenTrace | None = None) -> AudioBuffer:
    """Sample a waveform of exactly num_frames * hop samples.

    `features` must be the raw (unnormalized) track; normalization for
    the conditioning input uses the model's stored stats (falling back
    to stats attached to the track).  History starts at zero: no
    ground-truth priming.
    """
    cfg = model.cfg
    if head is not None and head != cfg.head:
        raise ConfigError(f"model head is {cfg.head}, requested {head}")
    head = cfg.head
    if features.normalized:
        raise DomainError("generate() needs the raw feature track")
    if features.sample_rate != cfg.sample_rate:
        raise ConfigError("feature sample rate does not match the model")
    if mode not in ("fast", "reference"):
        raise ConfigError(f"unknown generation mode {mode!r}")
    rng = rng or np.random.default_rng(0)

    num_frames = features.num_frames
    if num_frames == 0 or features.frames.size == 0:
        return AudioBuffer(np.zeros(0), cfg.sample_rate)

    stats = model.norm_stats or features.stats
    if stats is None:
        raise ConfigError("no normalization stats available for conditioning")
    norm = normalize(features, stats)

    gw = extract_gen_weights(model)
    cond = encode_numpy(gw, norm.frames.astype(np.float64))
    hop = cfg.hop_samples
    total = num_frames * hop
    vuv = np.repeat(features.vuv > 0.5, hop)[:total]

    needs_lp = head in (HEAD_EXCITATION, HEAD_LP_MOG)
    if needs_lp:
        sched = lsf_schedule(features)
        frame_coeffs = [lpc.LpcCoeffs(sched.order, a) for a in sched.alphas]

    streamer = TrunkStreamer(gw, cond, backend=backend,
                             reference=(mode == "reference"))
    speech = np.zeros(total)
    excit = np.zeros(total) if head == HEAD_EXCITATION else None
    classes = np.zeros(total, dtype=np.int64) if head == HEAD_MULAW else None
    p = cfg.lpc_order

    if trace is not None:
        trace.effective_log_scale = np.full(total, -np.inf)
        trace.sharpened = np.zeros(total, dtype=bool)
        trace.voiced = vuv.copy()
        trace.clamp_count = 0

    for t in range(total):
        if head == HEAD_MULAW:
            prev = MULAW_SILENT if t == 0 else classes[t - 1]
        elif head == HEAD_EXCITATION:
            prev = 0.0 if t == 0 else excit[t - 1]
        else:
            prev = 0.0 if t == 0 else speech[t - 1]
        logits = streamer.step(prev, t)
        if head == HEAD_MULAW:
            cls = heads.sample_categorical(logits, rng)
            classes[t] = cls
            speech[t] = mulaw_decode(cls)
            continue
        x_hat = lpc.lp_approximation(speech[max(0, t - p) : t],
                                     frame_coeffs[t // hop])
        if head == HEAD_LP_MOG:
            params = heads.mog_from_logits(logits, x_hat, shift=True)
            value, eff_ls, clamped, sharpened = heads.sample_mog_detailed(
                params, bool(vuv[t]), rng, sharpen, log_scale_cap)
            speech[t] = value
        else:
            params = heads.mog_from_logits(logits, 0.0, shift=False)
            e, eff_ls, clamped, sharpened = heads.sample_mog_detailed(
                params, bool(vuv[t]), rng, sharpen, log_scale_cap)
            excit[t] = e
            x = e + x_hat
            if x < -1.0 or x > 1.0:
                clamped = True
                x = min(1.0, max(-1.0, x))
            speech[t] = x
        if not np.isfinite(speech[t]):
            raise DivergenceError(
                f"generation diverged at sample {t}; "
                f"log-scale was {float(np.max(params.log_scales)):.3f}"
            )
        if trace is not None:
            trace.effective_log_scale[t] = eff_ls
            trace.sharpened[t] = sharpened
            trace.clamp_count += int(clamped)
    return AudioBuffer(speech, cfg.sample_rate)


def copy_synthesis(model: WaveNetModel, reference: AudioBuffer,
                   rng: np.random.Generator | None = None, *,
                   win_ms: float = 25.0, fmin: float = 60.0, fmax: float = 400.0,
                   sharpen: float = heads.VOICED_SHARPEN,
                   log_scale_cap: float = heads.GEN_LOG_SCALE_CAP,
                   backend: str | None = None):
    """Analysis/synthesis: vocode from the reference's own features,
    then score the result against the reference."""
    cfg = model.cfg
    hop_ms = 1000.0 * cfg.hop_samples / cfg.sample_rate
    if len(reference) < cfg.hop_samples:
        raise DomainError("reference shorter than one frame")
    track = extract_features(reference, order=cfg.lpc_order, win_ms=win_ms,
                             hop_ms=hop_ms, fmin=fmin, fmax=fmax)
    if model.norm_stats is None:
        # no training stats (fresh model): scale by the utterance itself
        from .features import compute_norm_stats

        track.stats = compute_norm_stats([track])
    out = generate(model, track, rng=rng, sharpen=sharpen,
                   log_scale_cap=log_scale_cap, backend=backend)
    report = metrics.full_report(reference, out, order=cfg.lpc_order,
                                 fmin=fmin, fmax=fmax)
    return out, report

