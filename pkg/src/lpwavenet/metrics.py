"""Objective vocoder metrics: VUV error, F0 RMSE, envelope LSD, F-LSD.

All four are computed with 35-ms windows at a 5-ms hop.  F0 RMSE and
F-LSD are measured on voiced frames only, and F-LSD compensates an
integer sample lag (up to +-5 ms) chosen by maximum normalized
cross-correlation before comparing magnitude spectra.  Metrics that
have no valid frames return None, the "undefined" marker that report
files serialize as null/nan.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import lpc
from .audio import AudioBuffer, hann_window, ms_to_samples
from .errors import DomainError
from .features import extract_f0

METRIC_WIN_MS = 35.0
METRIC_HOP_MS = 5.0
MAX_SHIFT_MS = 5.0
SPECTRAL_FLOOR = 1e-8
ENVELOPE_GRID = 512


@dataclass
class VocoderReport:
    vuv_pct: float
    f0_rmse_hz: float | None
    lsd_db: float | None
    flsd_db: float | None
    voiced_frames: int
    skipped_frames: int

    def to_dict(self) -> dict:
        return asdict(self)


def vuv_error(ref_flags, test_flags) -> float:
    """Percent of frames whose voicing flags disagree."""
    ref = np.asarray(ref_flags) > 0.5
    test = np.asarray(test_flags) > 0.5
    if ref.shape != test.shape:
        raise DomainError("voicing tracks differ in length")
    if len(ref) == 0:
        return 0.0
    return 100.0 * float(np.count_nonzero(ref != test)) / len(ref)


def f0_rmse(ref_f0, test_f0, ref_vuv, test_vuv) -> float | None:
    """RMSE in Hz over frames both trackers call voiced; None if empty."""
    ref_f0 = np.asarray(ref_f0, dtype=np.float64)
    test_f0 = np.asarray(test_f0, dtype=np.float64)
    if ref_f0.shape != test_f0.shape:
        raise DomainError("F0 tracks differ in length")
    both = (np.asarray(ref_vuv) > 0.5) & (np.asarray(test_vuv) > 0.5)
    if not np.any(both):
        return None
    err = ref_f0[both] - test_f0[both]
    return float(np.sqrt(np.mean(err * err)))


def log_spectral_distance(mag_ref: np.ndarray, mag_test: np.ndarray,
                          floor: float = SPECTRAL_FLOOR) -> float:
    """sqrt(mean((20 log10 ratio)^2)) between two magnitude grids."""
    r = np.maximum(np.asarray(mag_ref, dtype=np.float64), floor)
    t = np.maximum(np.asarray(mag_test, dtype=np.float64), floor)
    diff = 20.0 * np.log10(r / t)
    return float(np.sqrt(np.mean(diff * diff)))


def lsf_envelope(lsf_row: np.ndarray, grid_points: int = ENVELOPE_GRID) -> np.ndarray:
    """Gain-free all-pole magnitude 1/|A| on a uniform frequency grid."""
    coeffs = lpc.lsf_to_lpc(lpc.Lsf(lsf_row))
    omega = np.pi * np.arange(grid_points) / grid_points
    i = np.arange(1, coeffs.order + 1)
    a_vals = 1.0 - np.exp(-1j * np.outer(omega, i)) @ coeffs.alpha
    return 1.0 / np.maximum(np.abs(a_vals), 1e-12)


def lsd_envelope(ref_lsf: np.ndarray, test_lsf: np.ndarray,
                 grid_points: int = ENVELOPE_GRID):
    """Mean per-frame LSD between LP envelopes.

    Frames where either LSF row is invalid (not strictly increasing
    inside (0, pi)) are skipped; returns (mean_db or None, skipped).
    """
    ref_lsf = np.atleast_2d(ref_lsf)
    test_lsf = np.atleast_2d(test_lsf)
    if ref_lsf.shape != test_lsf.shape:
        raise DomainError("LSF tracks must share order and frame count")
    dists = []
    skipped = 0
    for r_row, t_row in zip(ref_lsf, test_lsf):
        try:
            env_r = lsf_envelope(r_row, grid_points)
            env_t = lsf_envelope(t_row, grid_points)
        except (DomainError, lpc.InstabilityError):
            skipped += 1
            continue
        dists.append(log_spectral_distance(env_r, env_t))
    if not dists:
        return None, skipped
    return float(np.mean(dists)), skipped


def _segment(x: np.ndarray, start: int, length: int) -> np.ndarray:
    """x[start:start+length] with zero padding outside the signal."""
    out = np.zeros(length)
    lo = max(start, 0)
    hi = min(start + length, len(x))
    if lo < hi:
        out[lo - start : hi - start] = x[lo:hi]
    return out


def f_lsd(ref: AudioBuffer, test: AudioBuffer, ref_vuv,
          win_ms: float = METRIC_WIN_MS, hop_ms: float = METRIC_HOP_MS,
          max_shift_ms: float = MAX_SHIFT_MS) -> float | None:
    """Lag-compensated LSD between waveform magnitude spectra.

    For every ref-voiced frame the test segment is taken at the integer
    lag (within +-max_shift) that maximizes normalized cross-correlation
    with the reference segment; both are Hann-windowed before the FFT.
    """
    if ref.sample_rate != test.sample_rate:
        raise DomainError("sample rates differ")
    sr = ref.sample_rate
    win = ms_to_samples(win_ms, sr)
    hop = ms_to_samples(hop_ms, sr)
    max_lag = ms_to_samples(max_shift_ms, sr)
    x_ref = ref.samples
    x_test = test.samples
    n = min(len(x_ref), len(x_test))
    if n == 0:
        return None
    num_frames = -(-n // hop)
    ref_vuv = np.asarray(ref_vuv) > 0.5
    if len(ref_vuv) < num_frames:
        raise DomainError("voicing track shorter than the frame count")
    window = hann_window(win)
    nfft = 1 << int(np.ceil(np.log2(win)))
    lags = np.arange(-max_lag, max_lag + 1)
    dists = []
    for t in range(num_frames):
        if not ref_vuv[t]:
            continue
        start = t * hop
        seg_r = _segment(x_ref, start, win)
        norm_r = np.sqrt(np.dot(seg_r, seg_r))
        best_lag = 0
        if norm_r > 0.0:
            padded = _segment(x_test, start - max_lag, win + 2 * max_lag)
            cand = np.lib.stride_tricks.sliding_window_view(padded, win)
            norms = np.sqrt(np.einsum("ij,ij->i", cand, cand))
            scores = cand @ seg_r / (norms * norm_r + 1e-20)
            best_lag = int(lags[np.argmax(scores)])
        seg_t = _segment(x_test, start + best_lag, win)
        mag_r = np.abs(np.fft.rfft(seg_r * window, nfft))
        mag_t = np.abs(np.fft.rfft(seg_t * window, nfft))
        dists.append(log_spectral_distance(mag_r, mag_t))
    if not dists:
        return None
    return float(np.mean(dists))


def lsf_track(buf: AudioBuffer, order: int, win_ms: float = METRIC_WIN_MS,
              hop_ms: float = METRIC_HOP_MS) -> np.ndarray:
    """Frame-wise LSF analysis used by the envelope metric."""
    from .audio import frame_signal

    frames = frame_signal(buf, win_ms, hop_ms, window="hann")
    flat = lpc.flat_lsf(order).omega
    out = np.zeros((len(frames), order))
    for t, frame in enumerate(frames):
        r = lpc.autocorrelate(frame, order)
        if r[0] <= 1e-10:
            out[t] = flat
        else:
            out[t] = lpc.lpc_to_lsf(lpc.levinson_durbin(r, order)).omega
    return out


def full_report(ref: AudioBuffer, test: AudioBuffer, order: int = 16,
                fmin: float = 60.0, fmax: float = 400.0) -> VocoderReport:
    """All four metrics between a reference and a synthesized waveform.

    Both signals are truncated to their common length so every track
    has the same frame count.
    """
    if ref.sample_rate != test.sample_rate:
        raise DomainError("sample rates differ")
    n = min(len(ref), len(test))
    ref = AudioBuffer(ref.samples[:n], ref.sample_rate)
    test = AudioBuffer(test.samples[:n], test.sample_rate)
    f0_r, vuv_r = extract_f0(ref, fmin=fmin, fmax=fmax, win_ms=METRIC_WIN_MS,
                             hop_ms=METRIC_HOP_MS)
    f0_t, vuv_t = extract_f0(test, fmin=fmin, fmax=fmax, win_ms=METRIC_WIN_MS,
                             hop_ms=METRIC_HOP_MS)
    lsd_db, skipped = lsd_envelope(lsf_track(ref, order), lsf_track(test, order))
    report = VocoderReport(
        vuv_pct=vuv_error(vuv_r, vuv_t),
        f0_rmse_hz=f0_rmse(f0_r, f0_t, vuv_r, vuv_t),
        lsd_db=lsd_db,
        flsd_db=f_lsd(ref, test, vuv_r),
        voiced_frames=int(np.count_nonzero(vuv_r > 0.5)),
        skipped_frames=skipped,
    )
    return report


REPORT_FIELDS = ["vuv_pct", "f0_rmse_hz", "lsd_db", "flsd_db",
                 "voiced_frames", "skipped_frames"]


def write_report_json(report: VocoderReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def write_report_csv(rows, path, id_field: str = "system") -> None:
    """Rows is a list of (name, VocoderReport); None serializes as nan."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([id_field] + REPORT_FIELDS)
        for name, report in rows:
            d = report.to_dict()
            writer.writerow([name] + [
                "nan" if d[k] is None else d[k] for k in REPORT_FIELDS
            ])
