"""Deterministic synthetic speech-like corpus for tests and demos.

An utterance is a pulse train with a linearly swept fundamental pushed
through a slowly time-varying stable all-pole filter, plus noise 30 dB
below the pulse power.  It has everything the vocoder pipeline cares
about (pitch, spectral envelope, voicing) without needing any data
files.
"""

from __future__ import annotations

import numpy as np

from .audio import AudioBuffer
from .lpc import LpcSchedule, alphas_from_reflection, synthesis_filter


def timevarying_ar_schedule(num_frames: int, order: int, hop: int,
                            rng: np.random.Generator,
                            num_anchors: int = 4) -> LpcSchedule:
    """Per-frame AR coefficients interpolated between random stable anchors.

    Interpolation happens in the reflection domain, which keeps every
    intermediate filter strictly stable.
    """
    anchors = rng.uniform(-0.6, 0.6, size=(num_anchors, order))
    pos = np.linspace(0.0, num_anchors - 1.0, num_frames)
    alphas = np.zeros((num_frames, order))
    for t in range(num_frames):
        i = min(int(pos[t]), num_anchors - 2)
        frac = pos[t] - i
        ks = (1.0 - frac) * anchors[i] + frac * anchors[i + 1]
        alphas[t] = alphas_from_reflection(ks).alpha
    return LpcSchedule(alphas, hop_samples=hop)


def pulse_train(n: int, sample_rate: int, f0_start: float, f0_end: float,
                segments: int = 5) -> np.ndarray:
    """Unit impulses stepping through `segments` fundamentals in
    [f0_start, f0_end].

    Held plateaus rather than a continuous glide: the pitch stays
    coherent within analysis windows while the corpus still covers the
    whole range.  Phase accumulates continuously across steps.
    """
    levels = np.linspace(f0_start, f0_end, segments)
    f0 = levels[np.minimum((np.arange(n) * segments) // n, segments - 1)]
    phase = np.cumsum(f0 / sample_rate)
    out = np.zeros(n)
    out[np.diff(np.floor(phase), prepend=0.0) > 0.5] = 1.0
    return out


def synthetic_utterance(duration_s: float = 2.0, sample_rate: int = 16000,
                        f0_start: float = 100.0, f0_end: float = 250.0,
                        order: int = 16, hop: int = 80,
                        noise_db: float = -30.0, peak: float = 0.6,
                        seed: int = 0) -> AudioBuffer:
    rng = np.random.default_rng(seed)
    n = int(duration_s * sample_rate)
    num_frames = -(-n // hop)
    sched = timevarying_ar_schedule(num_frames, order, hop, rng)
    pulses = pulse_train(n, sample_rate, f0_start, f0_end)
    noise_rms = np.sqrt(np.mean(pulses**2)) * 10.0 ** (noise_db / 20.0)
    excitation = pulses + noise_rms * rng.standard_normal(n)
    voiced = synthesis_filter(excitation, sched, sample_rate)
    x = voiced.samples
    x = x * (peak / np.max(np.abs(x)))
    return AudioBuffer(x, sample_rate)
