"""Linear prediction analysis and synthesis.

Conventions, fixed once for the whole package:

* the predictor is x_hat[n] = sum_{i=1..p} alpha[i] * x[n-i]  (plus sign),
* the analysis polynomial is A(z) = 1 - sum_i alpha[i] z^-i,
* excitation e[n] = x[n] - x_hat[n], speech x[n] = e[n] + x_hat[n],
* history before sample 0 is all zeros,
* coefficients are piecewise constant per frame: sample n uses frame
  n // hop_samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio import AudioBuffer
from .errors import (
    CoverageError,
    DegenerateFrameError,
    DivergenceError,
    DomainError,
    InstabilityError,
)

R0_REGULARIZATION = 1e-6
LSF_GRID_POINTS = 4096
LSF_BISECT_TOL = 1e-10


@dataclass
class LpcCoeffs:
    """Prediction coefficients alpha_1..alpha_p."""

    order: int
    alpha: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.alpha.shape != (self.order,):
            raise DomainError("alpha must have exactly `order` entries")


@dataclass
class Lsf:
    """Line spectral frequencies: strictly increasing angles in (0, pi)."""

    omega: np.ndarray

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=np.float64)

    @property
    def order(self) -> int:
        return len(self.omega)


@dataclass
class LpcSchedule:
    """Per-frame coefficient sets applied with a frame -> sample rule."""

    alphas: np.ndarray  # [num_frames, order]
    hop_samples: int

    def __post_init__(self):
        self.alphas = np.atleast_2d(np.asarray(self.alphas, dtype=np.float64))
        if self.hop_samples <= 0:
            raise DomainError("hop_samples must be positive")

    @property
    def num_frames(self) -> int:
        return self.alphas.shape[0]

    @property
    def order(self) -> int:
        return self.alphas.shape[1]

    def frame_for_sample(self, n: int) -> int:
        return n // self.hop_samples

    def check_covers(self, num_samples: int):
        if num_samples == 0:
            return
        last = (num_samples - 1) // self.hop_samples
        if last >= self.num_frames:
            raise CoverageError(
                f"schedule has {self.num_frames} frames but sample "
                f"{num_samples - 1} needs frame {last}"
            )


def autocorrelate(frame, max_lag: int) -> np.ndarray:
    """r[k] = sum_n frame[n] * frame[n+k] for k = 0..max_lag.

    An all-zero frame yields all-zero output; deciding what to do with
    it is the caller's job.
    """
    x = np.asarray(frame, dtype=np.float64)
    if max_lag >= len(x):
        raise DomainError("max_lag must be smaller than the frame length")
    return np.array([np.dot(x[: len(x) - k], x[k:]) for k in range(max_lag + 1)])


def levinson_durbin(r, p: int) -> LpcCoeffs:
    """Solve the Yule-Walker equations by the Levinson-Durbin recursion.

    r[0] is inflated by a factor (1 + 1e-6) before the recursion, which
    keeps near-silent frames numerically inside the stability region.
    """
    r = np.asarray(r, dtype=np.float64)
    if len(r) < p + 1:
        raise DomainError(f"need at least {p + 1} autocorrelation lags")
    if r[0] <= 0.0:
        raise DegenerateFrameError("autocorrelation r[0] must be positive")
    r = r.copy()
    r[0] *= 1.0 + R0_REGULARIZATION
    a = np.zeros(p + 1)
    a[0] = 1.0
    err = r[0]
    for i in range(1, p + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1 : 0 : -1])
        k = -acc / err
        if not np.isfinite(k) or abs(k) >= 1.0:
            raise InstabilityError(f"reflection coefficient {k!r} at order {i}")
        a[1 : i + 1] = a[1 : i + 1] + k * a[i - 1 :: -1][: i]
        err *= 1.0 - k * k
    return LpcCoeffs(order=p, alpha=-a[1:])


def reflection_coeffs(coeffs: LpcCoeffs) -> np.ndarray:
    """Step-down recursion; |k_i| < 1 for all i iff the filter is stable."""
    a = np.concatenate(([1.0], -coeffs.alpha))
    ks = np.zeros(coeffs.order)
    for i in range(coeffs.order, 0, -1):
        k = a[i]
        ks[i - 1] = k
        if abs(k) >= 1.0:
            # remaining orders are meaningless; report what we have
            ks[: i - 1] = np.nan
            break
        denom = 1.0 - k * k
        a = (a[: i + 1] - k * a[i::-1]) / denom
        a = a[:i]
    return ks


def is_stable(coeffs: LpcCoeffs) -> bool:
    ks = reflection_coeffs(coeffs)
    return bool(np.all(np.isfinite(ks)) and np.all(np.abs(ks) < 1.0))


def alphas_from_reflection(ks) -> LpcCoeffs:
    """Step-up recursion: any |k_i| < 1 sequence yields a stable filter."""
    ks = np.asarray(ks, dtype=np.float64)
    if np.any(np.abs(ks) >= 1.0):
        raise DomainError("reflection coefficients must lie in (-1, 1)")
    a = np.array([1.0])
    for k in ks:
        a = np.concatenate([a, [0.0]]) + k * np.concatenate([[0.0], a[::-1]])
    return LpcCoeffs(order=len(ks), alpha=-a[1:])


def _sum_diff_polys(coeffs: LpcCoeffs):
    """Coefficients of P(z) = A(z) + z^-(p+1) A(1/z) and the Q difference."""
    p = coeffs.order
    a = np.zeros(p + 2)
    a[0] = 1.0
    a[1 : p + 1] = -coeffs.alpha
    return a + a[::-1], a - a[::-1]


def _cosine_series(coeffs_poly: np.ndarray, symmetric: bool):
    """Return f(w) real-valued with the same interior roots as the polynomial.

    For a (anti)symmetric polynomial of degree d, evaluating on the unit
    circle and removing the linear-phase factor leaves a pure cosine
    (sine) series in w.
    """
    d = len(coeffs_poly) - 1
    m = d / 2.0 - np.arange(len(coeffs_poly))
    if symmetric:
        return lambda w: np.cos(np.multiply.outer(w, m)) @ coeffs_poly
    return lambda w: np.sin(np.multiply.outer(w, m)) @ coeffs_poly


def _bisect_root(f, lo: float, hi: float) -> float:
    flo = f(lo)
    while hi - lo > LSF_BISECT_TOL:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (flo < 0) != (fm < 0):
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def _scan_roots(f, points: int):
    grid = np.linspace(0.0, np.pi, points + 2)[1:-1]
    vals = f(grid)
    roots = []
    for j in range(len(grid) - 1):
        if vals[j] == 0.0:
            roots.append(grid[j])
        elif (vals[j] < 0) != (vals[j + 1] < 0):
            roots.append(_bisect_root(f, grid[j], grid[j + 1]))
    if vals[-1] == 0.0:
        roots.append(grid[-1])
    return roots


def _interior_roots(f, count: int) -> np.ndarray:
    # closely spaced root pairs can hide between grid points; rescan
    # finer before giving up on the filter
    points = LSF_GRID_POINTS
    while True:
        roots = _scan_roots(f, points)
        if len(roots) == count:
            return np.asarray(roots)
        if len(roots) > count or points >= 16 * LSF_GRID_POINTS:
            raise InstabilityError(
                f"expected {count} roots in (0, pi), found {len(roots)}; "
                "filter is not (safely) stable"
            )
        points *= 4


def lpc_to_lsf(coeffs: LpcCoeffs) -> Lsf:
    """Convert stable prediction coefficients to line spectral frequencies.

    Interior roots of the sum/difference polynomials are located by a
    dense grid scan plus bisection; the trivial roots at 0 and pi never
    enter the result.  Raises InstabilityError when the roots do not
    interleave, which is the stability test this package relies on.
    """
    p = coeffs.order
    ps, qs = _sum_diff_polys(coeffs)
    fp = _cosine_series(ps, symmetric=True)
    fq = _cosine_series(qs, symmetric=False)
    wp = _interior_roots(fp, (p + 1) // 2)
    wq = _interior_roots(fq, p // 2)
    omega = np.empty(p)
    omega[0::2] = wp
    omega[1::2] = wq
    if np.any(np.diff(omega) <= 0.0):
        raise InstabilityError("sum/difference roots do not interleave")
    return Lsf(omega)


def lsf_to_lpc(lsf: Lsf) -> LpcCoeffs:
    """Rebuild prediction coefficients from ordered LSFs via A = (P + Q)/2."""
    w = lsf.omega
    p = len(w)
    if np.any(w <= 0.0) or np.any(w >= np.pi) or np.any(np.diff(w) <= 0.0):
        raise DomainError("LSFs must be strictly increasing inside (0, pi)")

    def poly_from_pairs(angles):
        poly = np.array([1.0])
        for ang in angles:
            poly = np.convolve(poly, [1.0, -2.0 * np.cos(ang), 1.0])
        return poly

    ppoly = poly_from_pairs(w[0::2])
    qpoly = poly_from_pairs(w[1::2])
    if p % 2 == 0:
        ppoly = np.convolve(ppoly, [1.0, 1.0])
        qpoly = np.convolve(qpoly, [1.0, -1.0])
    else:
        qpoly = np.convolve(qpoly, [1.0, 1.0])
        qpoly = np.convolve(qpoly, [1.0, -1.0])
    a = 0.5 * (ppoly + qpoly)[: p + 1]
    return LpcCoeffs(order=p, alpha=-a[1:])


def flat_lsf(order: int) -> Lsf:
    """LSFs of the zero predictor: k*pi/(p+1); used for silent frames."""
    k = np.arange(1, order + 1)
    return Lsf(k * np.pi / (order + 1))


def lp_approximation(past, coeffs: LpcCoeffs) -> float:
    """One predictor output: sum_i alpha_i * x[n-i].

    `past` holds the most recent samples in chronological order, i.e.
    past[-1] is x[n-1].  Shorter-than-order histories are implicitly
    zero-padded on the left.
    """
    past = np.asarray(past, dtype=np.float64)
    p = coeffs.order
    if len(past) < p:
        past = np.concatenate([np.zeros(p - len(past)), past])
    return float(np.dot(coeffs.alpha, past[-1 : -p - 1 : -1]))


def _lag_matrix(x: np.ndarray, p: int) -> np.ndarray:
    """L[n, i] = x[n - 1 - i] with zeros before the signal start."""
    padded = np.concatenate([np.zeros(p), x])
    return sliding_window_view(padded, p)[: len(x)][:, ::-1]


def lp_approximation_track(x, sched: LpcSchedule) -> np.ndarray:
    """Vectorized x_hat[n] for a whole signal under a frame schedule."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    sched.check_covers(n)
    if n == 0:
        return np.zeros(0)
    lags = _lag_matrix(x, sched.order)
    frame_idx = np.arange(n) // sched.hop_samples
    return np.einsum("np,np->n", lags, sched.alphas[frame_idx])


def inverse_filter(buf, sched: LpcSchedule) -> np.ndarray:
    """Excitation e[n] = x[n] - x_hat[n] with ground-truth history."""
    x = buf.samples if isinstance(buf, AudioBuffer) else np.asarray(buf, dtype=np.float64)
    return x - lp_approximation_track(x, sched)


def synthesis_filter(excitation, sched: LpcSchedule,
                     sample_rate: int = 0) -> AudioBuffer:
    """Recursive reconstruction x[n] = e[n] + sum_i alpha_i x[n-i]."""
    e = np.asarray(excitation, dtype=np.float64)
    n = len(e)
    sched.check_covers(n)
    p = sched.order
    x = np.zeros(n + p)  # leading zeros = initial history
    hop = sched.hop_samples
    for i in range(n):
        alpha = sched.alphas[i // hop]
        acc = e[i] + np.dot(alpha, x[i + p - 1 : i - 1 if i > 0 else None : -1])
        if not np.isfinite(acc):
            raise DivergenceError(f"synthesis filter diverged at sample {i}")
        x[p + i] = acc
    return AudioBuffer(x[p:], sample_rate or 1)
