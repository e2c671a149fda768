"""Output heads: Gaussian-mixture and categorical losses plus sampling.

The mixture head supports a structural mean shift: the network emits a
residual mean and the predictor output x_hat is added on top.  All
likelihood math is carried out against the *unshifted* means and the
shifted target (x - shift), so evaluating shifted parameters at x is
bit-for-bit identical to evaluating unshifted parameters at x - shift.
That identity, and the matching gradient identity, are what make the
shift trainable with the ordinary mixture-density backprop rules.

All functions are shape-polymorphic: parameter fields may carry any
leading batch/time axes with the mixture axis last.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError

LOG_2PI = float(np.log(2.0 * np.pi))
TRAIN_LOG_SCALE_FLOOR = -10.0
GEN_LOG_SCALE_CAP = -4.0
VOICED_SHARPEN = 0.85


@dataclass
class MogParams:
    """Mixture weights/means/log-scales, optionally carrying a mean shift.

    `means` always holds the full (shifted) means.  `mean_logits` holds
    the pre-shift means; keeping both is what makes the shift identity
    exact instead of merely close.
    """

    weights: np.ndarray
    means: np.ndarray
    log_scales: np.ndarray
    shift: np.ndarray | float = 0.0
    mean_logits: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.log_scales = np.asarray(self.log_scales, dtype=np.float64)
        if self.weights.shape != self.means.shape or self.means.shape != self.log_scales.shape:
            raise DomainError("weights, means and log_scales must share a shape")
        if self.mean_logits is None:
            if np.any(np.asarray(self.shift) != 0.0):
                raise DomainError("a shifted MogParams needs explicit mean_logits")
            self.mean_logits = self.means
        else:
            self.mean_logits = np.asarray(self.mean_logits, dtype=np.float64)

    @property
    def mixture_count(self) -> int:
        return self.weights.shape[-1]


def _softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


def _logsumexp(z: np.ndarray) -> np.ndarray:
    m = np.max(z, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(m, -1) + np.log(np.exp(z - m).sum(axis=-1))


def mog_from_logits(z: np.ndarray, x_hat=0.0, shift: bool = False,
                    mixture_count: int | None = None) -> MogParams:
    """Split raw head output [..., 3N] into mixture parameters.

    Layout is [weight logits | means | log scales].  With `shift` on,
    x_hat is added to the means (broadcast over the mixture axis).
    """
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[-1] // 3
    if z.shape[-1] != 3 * n or (mixture_count is not None and n != mixture_count):
        raise DomainError(f"logit dim {z.shape[-1]} is not 3x the mixture count")
    zw, zmu, zs = z[..., :n], z[..., n : 2 * n], z[..., 2 * n :]
    weights = _softmax(zw)
    if shift:
        x_hat = np.asarray(x_hat, dtype=np.float64)
        return MogParams(weights, zmu + x_hat[..., None], zs,
                         shift=x_hat, mean_logits=zmu)
    return MogParams(weights, zmu, zs)


def _prepared(p: MogParams, x, train_clip: bool):
    x = np.asarray(x, dtype=np.float64)
    ls = p.log_scales
    if train_clip:
        ls = np.maximum(ls, TRAIN_LOG_SCALE_FLOOR)
    residual = (x - p.shift)[..., None] - p.mean_logits
    with np.errstate(divide="ignore"):
        logw = np.log(p.weights)
    log_comp = logw - 0.5 * LOG_2PI - ls - 0.5 * residual * residual * np.exp(-2.0 * ls)
    return x, ls, residual, log_comp


def mog_nll(p: MogParams, x, train_clip: bool = False):
    """-log p(x) under the mixture, computed via log-sum-exp.

    With `train_clip` the log-scales are floored at -10 before the
    density is evaluated, which bounds the loss explosion a collapsing
    component could cause early in training.
    """
    xarr = np.asarray(x, dtype=np.float64)
    if (not np.all(np.isfinite(xarr))
            or not np.all(np.isfinite(p.log_scales))
            or not np.all(np.isfinite(p.mean_logits))):
        bad = _first_bad_index(xarr, p.log_scales, p.mean_logits)
        raise NumericError(f"non-finite input to mog_nll at index {bad}")
    _, _, _, log_comp = _prepared(p, x, train_clip)
    out = -_logsumexp(log_comp)
    return float(out) if out.ndim == 0 else out


def _first_bad_index(*arrays):
    for a in arrays:
        bad = np.argwhere(~np.isfinite(np.atleast_1d(a)))
        if len(bad):
            return tuple(bad[0])
    return ()


def mog_nll_grad(p: MogParams, x, train_clip: bool = False):
    """Gradients of the NLL w.r.t. the raw head outputs (zw, zmu, zs).

    The mean gradient passes through the shift unchanged (the shift is
    constant w.r.t. the network output, so its Jacobian is the
    identity).  Where the training floor clips a log-scale, its gradient
    is zero.
    """
    _, ls, residual, log_comp = _prepared(p, x, train_clip)
    gamma = _softmax(log_comp)
    inv_var = np.exp(-2.0 * ls)
    d_zw = p.weights - gamma
    d_zmu = -gamma * residual * inv_var
    d_zs = gamma * (1.0 - residual * residual * inv_var)
    if train_clip:
        d_zs = np.where(p.log_scales >= TRAIN_LOG_SCALE_FLOOR, d_zs, 0.0)
    return d_zw, d_zmu, d_zs


def mog_loss_and_grad(z: np.ndarray, target: np.ndarray, x_hat=None,
                      train_clip: bool = True):
    """Vectorized training loss: per-sample NLL and d(NLL)/d(logits)."""
    shift = x_hat is not None
    p = mog_from_logits(z, x_hat if shift else 0.0, shift=shift)
    nll = mog_nll(p, target, train_clip=train_clip)
    grads = mog_nll_grad(p, target, train_clip=train_clip)
    return nll, np.concatenate(grads, axis=-1)


# ---------------------------------------------------------------------------
# categorical head

def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def categorical_loss(logits: np.ndarray, target):
    """Cross entropy -log softmax(logits)[target] over 256 classes."""
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target)
    if np.any((target < 0) | (target >= logits.shape[-1])):
        raise DomainError("categorical target out of range")
    logp = _log_softmax(logits)
    out = -np.take_along_axis(logp, target[..., None].astype(np.int64), -1)[..., 0]
    return float(out) if out.ndim == 0 else out


def categorical_loss_and_grad(logits: np.ndarray, target: np.ndarray):
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target)
    if np.any((target < 0) | (target >= logits.shape[-1])):
        raise DomainError("categorical target out of range")
    logp = _log_softmax(logits)
    nll = -np.take_along_axis(logp, target[..., None].astype(np.int64), -1)[..., 0]
    grad = np.exp(logp)
    np.put_along_axis(
        grad,
        target[..., None].astype(np.int64),
        np.take_along_axis(grad, target[..., None].astype(np.int64), -1) - 1.0,
        -1,
    )
    return nll, grad


# ---------------------------------------------------------------------------
# sampling

def _draw_component(weights: np.ndarray, rng: np.random.Generator) -> int:
    u = rng.random()
    return int(min(np.searchsorted(np.cumsum(weights), u), len(weights) - 1))


def sample_mog_detailed(p: MogParams, vuv: bool, rng: np.random.Generator,
                        sharpen: float = VOICED_SHARPEN,
                        log_scale_cap: float = GEN_LOG_SCALE_CAP):
    """One constrained draw.

    Returns (value, effective_log_scale, clamped, sharpened).  Order of
    the constraints is fixed: cap the log-scale first, then sharpen
    (scale by `sharpen`) only when the frame is voiced.  The excitation
    part (mean logit + scaled noise) is computed before the shift is
    added, so a shifted draw equals the unshifted draw plus the
    predictor output, bit for bit.
    """
    ls = np.minimum(p.log_scales, log_scale_cap)
    s = np.exp(ls)
    sharpened = bool(vuv)
    if sharpened:
        s = s * sharpen
    idx = _draw_component(p.weights, rng)
    eps = rng.standard_normal()
    core = float(p.mean_logits[idx]) + float(s[idx]) * eps
    value = core + float(np.asarray(p.shift))
    clamped = value < -1.0 or value > 1.0
    value = min(1.0, max(-1.0, value))
    return value, float(np.log(s[idx])), clamped, sharpened


def sample_mog(p: MogParams, vuv: bool, rng: np.random.Generator,
               sharpen: float = VOICED_SHARPEN,
               log_scale_cap: float = GEN_LOG_SCALE_CAP) -> float:
    """Constrained mixture draw, clamped into [-1, 1]."""
    return sample_mog_detailed(p, vuv, rng, sharpen, log_scale_cap)[0]


def sample_categorical(logits: np.ndarray, rng: np.random.Generator) -> int:
    """Draw a class index from softmax(logits); deterministic given rng state."""
    probs = _softmax(np.asarray(logits, dtype=np.float64))
    u = rng.random()
    return int(min(np.searchsorted(np.cumsum(probs), u), len(probs) - 1))
