"""Per-frame conditioning features: LSF, log-F0, log-energy, voicing flag.

A FeatureTrack has layout [lsf(0..p-1), log_f0, log_energy, vuv] per
frame.  Two views matter downstream and must not be conflated: the
network is conditioned on the *normalized* view, while the LP machinery
always reads the *raw* LSF columns.  `lsf_schedule` refuses normalized
tracks for that reason.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import lpc
from .audio import AudioBuffer, frame_signal, ms_to_samples
from .errors import ConfigError, DomainError
from .lpc import LpcSchedule

STD_FLOOR = 1e-6
ENERGY_EPS = 1e-10
SILENCE_RMS = 1e-5
OCTAVE_COST = 0.02
FEATURE_FILE_VERSION = 1


@dataclass
class NormStats:
    """Per-dimension mean and standard deviation (std floored at 1e-6)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["mean"]), np.asarray(d["std"]))


@dataclass
class FeatureTrack:
    frames: np.ndarray  # [num_frames, order + 3]
    hop_ms: float
    sample_rate: int
    lpc_order: int
    normalized: bool = False
    stats: NormStats | None = None

    def __post_init__(self):
        self.frames = np.atleast_2d(np.asarray(self.frames, dtype=np.float64))
        if self.frames.shape[1] != self.lpc_order + 3:
            raise DomainError(
                f"expected {self.lpc_order + 3} feature dims, "
                f"got {self.frames.shape[1]}"
            )

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dims(self) -> int:
        return self.frames.shape[1]

    @property
    def hop_samples(self) -> int:
        return ms_to_samples(self.hop_ms, self.sample_rate)

    @property
    def lsf(self) -> np.ndarray:
        return self.frames[:, : self.lpc_order]

    @property
    def log_f0(self) -> np.ndarray:
        return self.frames[:, self.lpc_order]

    @property
    def log_energy(self) -> np.ndarray:
        return self.frames[:, self.lpc_order + 1]

    @property
    def vuv(self) -> np.ndarray:
        return self.frames[:, self.lpc_order + 2]


def _normalized_autocorr(frame: np.ndarray, lmax: int) -> np.ndarray:
    """Per-lag normalized autocorrelation in [-1, 1].

    Each lag is normalized by the energies of the two overlapping
    segments, so a perfectly periodic signal scores ~1 at its period
    regardless of window length; the plain r[k]/r[0] estimator decays
    with lag and under-reports periodicity near the window size.
    """
    n = len(frame)
    r = np.correlate(frame, frame, "full")[n - 1 : n + lmax]
    cum = np.concatenate([[0.0], np.cumsum(frame * frame)])
    k = np.arange(lmax + 1)
    head = cum[n - k]           # energy of frame[: n-k]
    tail = cum[n] - cum[k]      # energy of frame[k :]
    return r / (np.sqrt(head * tail) + 1e-20)


def extract_f0(buf: AudioBuffer, fmin: float = 60.0, fmax: float = 400.0,
               win_ms: float = 42.0, hop_ms: float = 5.0,
               voicing_threshold: float = 0.45,
               silence_rms: float = SILENCE_RMS):
    """Autocorrelation pitch tracker with parabolic lag refinement.

    A frame is voiced when its normalized autocorrelation peak inside
    the [sr/fmax, sr/fmin] lag range reaches the voicing threshold and
    the frame is not silent.  Returns (f0, vuv) arrays; f0 is 0.0 on
    unvoiced frames.
    """
    sr = buf.sample_rate
    if not (0.0 < fmin < fmax < sr / 2):
        raise ConfigError("need 0 < fmin < fmax < sample_rate/2")
    win = ms_to_samples(win_ms, sr)
    if win < 2 * sr / fmin:
        raise ConfigError(
            f"f0 window of {win} samples is shorter than two periods at fmin"
        )
    frames = frame_signal(buf, win_ms, hop_ms, window="rect")
    lmin = max(2, int(np.ceil(sr / fmax)))
    lmax = min(win - 2, int(np.floor(sr / fmin)))
    f0 = np.zeros(len(frames))
    vuv = np.zeros(len(frames))
    for t, frame in enumerate(frames):
        frame = frame - frame.mean()
        rms = np.sqrt(np.mean(frame * frame))
        if rms < silence_rms:
            continue
        nacf = _normalized_autocorr(frame, lmax + 1)
        # subharmonic lags of a periodic signal score just as high as the
        # true period; a small per-octave cost breaks those ties upward
        lags = np.arange(lmin, lmax + 1)
        score = nacf[lmin : lmax + 1] - OCTAVE_COST * np.log2(lags / lmin)
        k = lmin + int(np.argmax(score))
        peak = nacf[k]
        if peak < voicing_threshold:
            continue
        # parabolic interpolation around the integer lag
        denom = nacf[k - 1] - 2.0 * nacf[k] + nacf[k + 1]
        lag = float(k)
        if denom < 0.0:
            lag += 0.5 * (nacf[k - 1] - nacf[k + 1]) / denom
        vuv[t] = 1.0
        f0[t] = float(np.clip(sr / lag, fmin, fmax))
    return f0, vuv


def extract_features(buf: AudioBuffer, order: int = 16, win_ms: float = 25.0,
                     hop_ms: float = 5.0, fmin: float = 60.0,
                     fmax: float = 400.0,
                     voicing_threshold: float = 0.45) -> FeatureTrack:
    """Frame-level LSF + prosodic features.

    LP analysis runs on Hann-windowed frames of `win_ms`; the pitch
    tracker uses its own, longer window when `win_ms` cannot hold two
    periods at fmin.  Silent frames take the flat-spectrum LSF, the
    unvoiced log-F0 fill (log fmin) and log-energy of the 1e-10 floor.
    """
    sr = buf.sample_rate
    frames_raw = frame_signal(buf, win_ms, hop_ms, window="rect")
    frames_win = frame_signal(buf, win_ms, hop_ms, window="hann")
    num = len(frames_raw)

    f0_win_ms = max(win_ms, 1000.0 * 2.5 / fmin)
    f0, vuv = extract_f0(buf, fmin=fmin, fmax=fmax, win_ms=f0_win_ms,
                         hop_ms=hop_ms, voicing_threshold=voicing_threshold)
    assert len(f0) == num

    flat = lpc.flat_lsf(order).omega
    out = np.zeros((num, order + 3))
    for t in range(num):
        energy = float(np.dot(frames_raw[t], frames_raw[t]))
        r = lpc.autocorrelate(frames_win[t], order)
        if r[0] <= ENERGY_EPS:
            out[t, :order] = flat
        else:
            out[t, :order] = lpc.lpc_to_lsf(lpc.levinson_durbin(r, order)).omega
        out[t, order] = np.log(f0[t]) if vuv[t] else np.log(fmin)
        out[t, order + 1] = np.log(energy + ENERGY_EPS)
        out[t, order + 2] = vuv[t]
    return FeatureTrack(out, hop_ms=hop_ms, sample_rate=sr, lpc_order=order)


def compute_norm_stats(tracks) -> NormStats:
    """Mean/std over every frame of the given (raw) tracks."""
    frames = np.concatenate([t.frames for t in tracks], axis=0)
    return NormStats(frames.mean(axis=0), frames.std(axis=0))


def normalize(track: FeatureTrack, stats: NormStats) -> FeatureTrack:
    """(v - mean)/std per dimension; the vuv flag passes through unscaled."""
    if stats.mean.shape[0] != track.dims:
        raise DomainError("stats dimensionality does not match the track")
    if track.normalized:
        raise DomainError("track is already normalized")
    scaled = (track.frames - stats.mean) / stats.std
    scaled[:, -1] = track.frames[:, -1]
    return replace(track, frames=scaled, normalized=True, stats=stats)


def denormalize(track: FeatureTrack, stats: NormStats) -> FeatureTrack:
    if stats.mean.shape[0] != track.dims:
        raise DomainError("stats dimensionality does not match the track")
    raw = track.frames * stats.std + stats.mean
    raw[:, -1] = track.frames[:, -1]
    return replace(track, frames=raw, normalized=False, stats=None)


def lsf_schedule(track: FeatureTrack) -> LpcSchedule:
    """Frame-wise LP coefficients derived from the raw LSF columns."""
    if track.normalized:
        raise DomainError("LP coefficients must come from the raw LSF view")
    alphas = np.stack([
        lpc.lsf_to_lpc(lpc.Lsf(row)).alpha for row in track.lsf
    ])
    return LpcSchedule(alphas, hop_samples=track.hop_samples)


def feature_layout(order: int) -> list:
    return [f"lsf{i + 1}" for i in range(order)] + ["log_f0", "log_energy", "vuv"]


def save_features(track: FeatureTrack, json_path) -> None:
    """JSON manifest + little-endian float32 payload, row-major."""
    json_path = Path(json_path)
    payload_path = json_path.with_suffix(".f32")
    payload = track.frames.astype("<f4")
    manifest = {
        "version": FEATURE_FILE_VERSION,
        "dims": track.dims,
        "num_frames": track.num_frames,
        "hop_ms": track.hop_ms,
        "sample_rate": track.sample_rate,
        "lpc_order": track.lpc_order,
        "normalized": track.normalized,
        "layout": feature_layout(track.lpc_order),
        "payload": payload_path.name,
        "stats": track.stats.to_dict() if track.stats is not None else None,
    }
    json_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    payload_path.write_bytes(payload.tobytes())


def load_features(json_path) -> FeatureTrack:
    json_path = Path(json_path)
    manifest = json.loads(json_path.read_text())
    if manifest.get("version") != FEATURE_FILE_VERSION:
        raise DomainError(f"unsupported feature file version in {json_path}")
    payload_path = json_path.parent / manifest["payload"]
    raw = np.frombuffer(payload_path.read_bytes(), dtype="<f4")
    frames = raw.reshape(manifest["num_frames"], manifest["dims"]).astype(np.float64)
    stats = manifest.get("stats")
    return FeatureTrack(
        frames,
        hop_ms=manifest["hop_ms"],
        sample_rate=manifest["sample_rate"],
        lpc_order=manifest["lpc_order"],
        normalized=manifest["normalized"],
        stats=NormStats.from_dict(stats) if stats else None,
    )
