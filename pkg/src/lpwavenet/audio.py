"""Waveform I/O, framing and mu-law companding.

All waveforms are mono float64 arrays in [-1, 1].  WAV support is
deliberately narrow: 16-bit PCM mono RIFF files, which is what every
other part of the package produces and consumes.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError, UnsupportedFormatError

PCM_SCALE = 32768.0
MU = 255.0
_LOG_MU1 = np.log(256.0)


@dataclass
class AudioBuffer:
    """Mono waveform plus its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DomainError("AudioBuffer expects a 1-d sample array")
        if self.sample_rate <= 0:
            raise DomainError("sample_rate must be positive")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class WriteSummary:
    """Result of write_wav: how many samples had to be clamped."""

    clamped: int = 0
    path: str = ""
    extra: dict = field(default_factory=dict)


def read_wav(path) -> AudioBuffer:
    """Load a 16-bit PCM mono WAV file, scaling samples by 1/32768."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            nframes = wf.getnframes()
            raw = wf.readframes(nframes)
    except (wave.Error, EOFError, struct.error) as exc:
        raise FormatError(f"not a readable RIFF/WAVE file: {path} ({exc})") from exc
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: expected mono, got {channels} channels")
    if width != 2:
        raise UnsupportedFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(pcm.astype(np.float64) / PCM_SCALE, rate)


def write_wav(buf: AudioBuffer, path) -> WriteSummary:
    """Write 16-bit PCM mono.  Out-of-range samples are clamped and counted."""
    x = np.asarray(buf.samples, dtype=np.float64)
    clamped = int(np.count_nonzero((x < -1.0) | (x > 1.0)))
    x = np.clip(x, -1.0, 1.0)
    pcm = np.minimum(np.floor(x * PCM_SCALE), PCM_SCALE - 1).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(buf.sample_rate)
        wf.writeframes(pcm.tobytes())
    return WriteSummary(clamped=clamped, path=str(path))


def mulaw_encode(x):
    """Compand an amplitude in [-1, 1] to an 8-bit class index.

    y = sign(x) * ln(1 + 255|x|) / ln(256), binned by
    floor((y + 1) / 2 * 256) with the top bin clamped to 255.  The floor
    binning is part of the contract so encode/decode are bit-exact
    across platforms.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(arr) > 1.0):
        raise DomainError("mulaw_encode input must satisfy |x| <= 1")
    y = np.sign(arr) * np.log1p(MU * np.abs(arr)) / _LOG_MU1
    code = np.minimum(np.floor((y + 1.0) * 128.0), 255.0).astype(np.int64)
    if np.isscalar(x) or arr.ndim == 0:
        return int(code)
    return code


def mulaw_decode(c):
    """Expand an 8-bit class index back to the center of its amplitude bin."""
    arr = np.asarray(c, dtype=np.int64)
    if np.any((arr < 0) | (arr > 255)):
        raise DomainError("mulaw class index must lie in [0, 255]")
    y = (2.0 * arr + 1.0) / 256.0 - 1.0
    out = np.sign(y) * (np.power(256.0, np.abs(y)) - 1.0) / MU
    if np.isscalar(c) or arr.ndim == 0:
        return float(out)
    return out


def ms_to_samples(ms: float, sample_rate: int) -> int:
    return int(round(ms * sample_rate / 1000.0))


def hann_window(n: int) -> np.ndarray:
    """Symmetric Hann window: endpoints are exactly zero."""
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / (n - 1))


def frame_signal(buf: AudioBuffer, win_ms: float, hop_ms: float,
                 window: str = "rect") -> np.ndarray:
    """Slice a buffer into ceil(N/hop) frames of win samples.

    Frame t covers samples [t*hop, t*hop + win); the tail is zero-padded
    so the frame count only depends on the hop.  Returns an array of
    shape [num_frames, win] with the window already applied.
    """
    if hop_ms <= 0 or win_ms < hop_ms:
        raise DomainError("require win_ms >= hop_ms > 0")
    if window not in ("rect", "hann"):
        raise DomainError(f"unknown window {window!r}")
    win = ms_to_samples(win_ms, buf.sample_rate)
    hop = ms_to_samples(hop_ms, buf.sample_rate)
    x = buf.samples
    n = len(x)
    if n == 0:
        return np.zeros((0, win))
    num = -(-n // hop)  # ceil
    padded = np.zeros((num - 1) * hop + win)
    padded[:n] = x
    idx = np.arange(win)[None, :] + hop * np.arange(num)[:, None]
    frames = padded[idx]
    if window == "hann":
        frames = frames * hann_window(win)[None, :]
    return frames
