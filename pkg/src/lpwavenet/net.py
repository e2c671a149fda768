"""Network definition: dilated causal trunk, conditioning encoder, heads.

The trunk follows the classic gated-residual recipe: an initial causal
convolution, a stack of dilated gated blocks with per-block conditioning
projections, and a two-layer post network over the summed skips.  The
conditioning encoder applies two kernel-3 convolutions with a residual
connection, then a strided transposed convolution that brings frame-rate
features up to sample rate.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from . import engine
from .engine import Tensor
from .errors import ConfigError

TRUNK_KERNEL = 2
ENCODER_KERNEL = 3

# Head identifiers (also the tokens accepted in config files).
HEAD_MULAW = "wn_s"       # 256-way categorical over mu-law speech classes
HEAD_EXCITATION = "wn_e"  # mixture of Gaussians over the LP residual
HEAD_LP_MOG = "wn_lp"     # mixture over speech, means shifted by the LP predictor

HEAD_ALIASES = {
    "wn_s": HEAD_MULAW,
    "mulaw": HEAD_MULAW,
    "wn_e": HEAD_EXCITATION,
    "excitation": HEAD_EXCITATION,
    "wn_lp": HEAD_LP_MOG,
    "lp_mog": HEAD_LP_MOG,
}

MULAW_CLASSES = 256
MULAW_SILENT = 128  # class of amplitude 0; the zero-history fill for class inputs
MOG_LOG_SCALE_BIAS = -3.0


def canonical_head(name: str) -> str:
    key = str(name).strip().lower()
    if key not in HEAD_ALIASES:
        raise ConfigError(f"unknown head kind {name!r}; expected one of "
                          f"{sorted(set(HEAD_ALIASES))}")
    return HEAD_ALIASES[key]


@dataclass
class NetConfig:
    head: str = HEAD_LP_MOG
    residual_channels: int = 32
    skip_channels: int = 32
    dilation_cycle: tuple = (1, 2, 4, 8, 16, 32, 64)
    repeats: int = 2
    mixture_count: int = 1
    weight_norm: bool = True
    lpc_order: int = 16
    hop_samples: int = 80
    sample_rate: int = 16000
    dtype: str = "float64"

    def __post_init__(self):
        self.head = canonical_head(self.head)
        self.dilation_cycle = tuple(int(d) for d in self.dilation_cycle)
        if self.repeats < 1 or not self.dilation_cycle:
            raise ConfigError("need at least one dilation and one repeat")
        if self.mixture_count < 1:
            raise ConfigError("mixture_count must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    @property
    def dilations(self) -> tuple:
        return self.dilation_cycle * self.repeats

    @property
    def feature_dim(self) -> int:
        return self.lpc_order + 3

    @property
    def out_channels(self) -> int:
        if self.head == HEAD_MULAW:
            return MULAW_CLASSES
        return 3 * self.mixture_count

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def to_dict(self) -> dict:
        return {
            "head": self.head,
            "residual_channels": self.residual_channels,
            "skip_channels": self.skip_channels,
            "dilation_cycle": list(self.dilation_cycle),
            "repeats": self.repeats,
            "mixture_count": self.mixture_count,
            "weight_norm": self.weight_norm,
            "lpc_order": self.lpc_order,
            "hop_samples": self.hop_samples,
            "sample_rate": self.sample_rate,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        d["dilation_cycle"] = tuple(d.get("dilation_cycle", ()))
        return cls(**d)


def receptive_field(cfg: NetConfig) -> int:
    """Past samples that can influence the next prediction.

    One for the current input position, one for the initial causal
    convolution, plus the dilation of every gated block.
    """
    return 2 + sum(cfg.dilations)


def desk_config(head: str = HEAD_LP_MOG, **overrides) -> NetConfig:
    """Small configuration meant for CPU experiments and the test suite."""
    head = canonical_head(head)
    cfg = NetConfig(head=head, weight_norm=head != HEAD_MULAW)
    return replace(cfg, **overrides) if overrides else cfg


def full_config(head: str = HEAD_LP_MOG, **overrides) -> NetConfig:
    """Production-scale configuration: 30 blocks, 3071-sample receptive
    field, 128 channels, 24 kHz audio with 40 LSF dimensions."""
    head = canonical_head(head)
    cfg = NetConfig(
        head=head,
        residual_channels=128,
        skip_channels=128,
        dilation_cycle=tuple(2**k for k in range(10)),
        repeats=3,
        mixture_count=10 if head == HEAD_EXCITATION else 1,
        weight_norm=head != HEAD_MULAW,
        lpc_order=40,
        hop_samples=120,
        sample_rate=24000,
    )
    return replace(cfg, **overrides) if overrides else cfg


PRESETS = {"desk": desk_config, "full": full_config}


def config_hash(config_dict: dict) -> str:
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# initialization

def xavier_fans(shape) -> tuple:
    if len(shape) == 1:
        return shape[0], shape[0]
    if len(shape) == 2:
        return shape[0], shape[1]
    k = int(np.prod(shape[:-2]))
    return k * shape[-2], k * shape[-1]


def xavier_init(shape, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = xavier_fans(tuple(shape))
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# functional layers

def causal_dilated_conv(x: Tensor, w: Tensor, b, dilation: int) -> Tensor:
    """Kernel-2 causal convolution: out[t] = x[t-d] @ w0 + x[t] @ w1 + b.

    Left zero padding keeps the output length equal to the input length
    and makes out[t] depend only on x[<= t].
    """
    if w.data.shape[0] != TRUNK_KERNEL:
        raise ConfigError("trunk convolutions use kernel size 2")
    if x.data.shape[-1] != w.data.shape[1]:
        raise ConfigError(
            f"channel mismatch: input has {x.data.shape[-1]}, "
            f"weight expects {w.data.shape[1]}"
        )
    return engine.causal_conv2(x, w, b, dilation)


def _weight_tap(w: Tensor, k: int) -> Tensor:
    """View of one kernel tap that routes gradient back into w[k]."""
    if not w.requires_grad:
        return Tensor(w.data[k])
    out = Tensor(w.data[k], requires_grad=True, _parents=(w,))

    def bw(g):
        dw = np.zeros_like(w.data)
        dw[k] = g
        w._accumulate(dw)

    out._bw = bw
    return out


def symmetric_conv3(x: Tensor, w: Tensor, b) -> Tensor:
    """Kernel-3 convolution with symmetric zero padding (same length)."""
    if w.data.shape[0] != ENCODER_KERNEL:
        raise ConfigError("encoder convolutions use kernel size 3")
    out = engine.matmul(engine.time_shift(x, 1), _weight_tap(w, 0))
    out = engine.add(out, engine.matmul(x, _weight_tap(w, 1)))
    out = engine.add(out, engine.matmul(engine.time_shift(x, -1), _weight_tap(w, 2)))
    if b is not None:
        out = engine.add(out, b)
    return out


# ---------------------------------------------------------------------------
# the model

class WaveNetModel:
    """Holds named parameters and builds forward tapes.

    Parameters live in `self.params` (name -> Tensor with requires_grad).
    When weight normalization is enabled every convolution weight is
    stored as a direction `<name>.v` plus per-output-channel gains
    `<name>.g`; gains start at ||v|| so the effective weight initially
    equals the Xavier draw.
    """

    def __init__(self, cfg: NetConfig, rng: np.random.Generator | None = None,
                 norm_stats=None):
        self.cfg = cfg
        self.norm_stats = norm_stats
        self.params: dict[str, Tensor] = {}
        rng = rng or np.random.default_rng(0)
        dt = cfg.np_dtype
        r, s, d = cfg.residual_channels, cfg.skip_channels, cfg.feature_dim

        def weight(name, shape):
            w = xavier_init(shape, rng, dt)
            if cfg.weight_norm:
                co = shape[-1]
                g = np.sqrt((w.reshape(-1, co) ** 2).sum(axis=0)).astype(dt)
                self.params[name + ".v"] = Tensor(w, requires_grad=True, name=name + ".v")
                self.params[name + ".g"] = Tensor(g, requires_grad=True, name=name + ".g")
            else:
                self.params[name] = Tensor(w, requires_grad=True, name=name)

        def bias(name, n):
            self.params[name] = Tensor(np.zeros(n, dtype=dt), requires_grad=True,
                                       name=name)

        if cfg.head == HEAD_MULAW:
            weight("input.w0", (MULAW_CLASSES, r))
            weight("input.w1", (MULAW_CLASSES, r))
        else:
            weight("input.w", (TRUNK_KERNEL, 1, r))
        bias("input.b", r)
        for i in range(len(cfg.dilations)):
            pre = f"block{i:02d}"
            weight(f"{pre}.filter.w", (TRUNK_KERNEL, r, r))
            bias(f"{pre}.filter.b", r)
            weight(f"{pre}.filter.vc", (d, r))
            weight(f"{pre}.gate.w", (TRUNK_KERNEL, r, r))
            bias(f"{pre}.gate.b", r)
            weight(f"{pre}.gate.vc", (d, r))
            weight(f"{pre}.res.w", (r, r))
            bias(f"{pre}.res.b", r)
            weight(f"{pre}.skip.w", (r, s))
            bias(f"{pre}.skip.b", s)
        weight("enc.c1.w", (ENCODER_KERNEL, d, d))
        bias("enc.c1.b", d)
        weight("enc.c2.w", (ENCODER_KERNEL, d, d))
        bias("enc.c2.b", d)
        weight("enc.up.w", (2 * cfg.hop_samples, d, d))
        bias("enc.up.b", d)
        weight("post1.w", (s, s))
        bias("post1.b", s)
        weight("post2.w", (s, cfg.out_channels))
        bias("post2.b", cfg.out_channels)
        if cfg.head != HEAD_MULAW:
            # start the mixture log-scales near the excitation magnitude
            # instead of s=1; saves the optimizer a long scale burn-in
            n = cfg.mixture_count
            self.params["post2.b"].data[2 * n :] = MOG_LOG_SCALE_BIAS

    # -- parameter access ---------------------------------------------------

    def effective(self, name: str) -> Tensor:
        """The weight as used in the forward pass (normalized if enabled)."""
        if name in self.params:
            return self.params[name]
        return engine.weight_norm(self.params[name + ".v"], self.params[name + ".g"])

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_arrays(self) -> dict:
        return {k: v.data for k, v in self.params.items()}

    def load_state_arrays(self, arrays: dict):
        for k, v in self.params.items():
            if k not in arrays:
                raise ConfigError(f"checkpoint is missing parameter {k}")
            if arrays[k].shape != v.data.shape:
                raise ConfigError(f"shape mismatch for {k}")
            v.data = arrays[k].astype(v.data.dtype, copy=True)

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.cfg)

    # -- forward passes -----------------------------------------------------

    def encode(self, feats: Tensor) -> Tensor:
        """Frame features [B,F,D] -> per-sample conditioning [B,F*hop,D]."""
        h = engine.relu(symmetric_conv3(feats, self.effective("enc.c1.w"),
                                        self.params["enc.c1.b"]))
        h = symmetric_conv3(h, self.effective("enc.c2.w"), self.params["enc.c2.b"])
        h = engine.add(h, feats)
        up = engine.upsample_tconv(h, self.effective("enc.up.w"),
                                   self.cfg.hop_samples)
        return engine.add(up, self.params["enc.up.b"])

    def input_layer(self, x_past) -> Tensor:
        """Initial causal convolution over the shifted input sequence.

        For the mu-law head `x_past` is an int array [B,T] of class
        indices; a row gather is the one-hot matmul.  Otherwise it is a
        Tensor [B,T,1] of real amplitudes.
        """
        if self.cfg.head == HEAD_MULAW:
            idx = np.asarray(x_past)
            prev = np.concatenate(
                [np.full((idx.shape[0], 1), MULAW_SILENT, dtype=idx.dtype),
                 idx[:, :-1]],
                axis=1,
            )
            out = engine.add(engine.take_rows(self.effective("input.w0"), prev),
                             engine.take_rows(self.effective("input.w1"), idx))
            return engine.add(out, self.params["input.b"])
        return causal_dilated_conv(x_past, self.effective("input.w"),
                                   self.params["input.b"], dilation=1)

    def forward(self, x_past, cond: Tensor) -> Tensor:
        """Teacher-forced trunk: logits[t] sees x_past[<= t] and cond[<= t]."""
        h = self.input_layer(x_past)
        if cond.data.shape[1] != h.data.shape[1]:
            raise ConfigError(
                f"conditioning length {cond.data.shape[1]} does not match "
                f"input length {h.data.shape[1]}"
            )
        skip_sum = None
        for i, dilation in enumerate(self.cfg.dilations):
            pre = f"block{i:02d}"
            f = causal_dilated_conv(h, self.effective(f"{pre}.filter.w"),
                                    self.params[f"{pre}.filter.b"], dilation)
            f = engine.add(f, engine.matmul(cond, self.effective(f"{pre}.filter.vc")))
            g = causal_dilated_conv(h, self.effective(f"{pre}.gate.w"),
                                    self.params[f"{pre}.gate.b"], dilation)
            g = engine.add(g, engine.matmul(cond, self.effective(f"{pre}.gate.vc")))
            z = engine.mul(engine.tanh(f), engine.sigmoid(g))
            skip = engine.add(engine.matmul(z, self.effective(f"{pre}.skip.w")),
                              self.params[f"{pre}.skip.b"])
            skip_sum = skip if skip_sum is None else engine.add(skip_sum, skip)
            h = engine.add(h, engine.add(
                engine.matmul(z, self.effective(f"{pre}.res.w")),
                self.params[f"{pre}.res.b"]))
        a = engine.relu(skip_sum)
        a = engine.relu(engine.add(engine.matmul(a, self.effective("post1.w")),
                                   self.params["post1.b"]))
        return engine.add(engine.matmul(a, self.effective("post2.w")),
                          self.params["post2.b"])
