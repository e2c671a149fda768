"""Streaming trunk kernels for autoregressive generation.

Generation evaluates the trunk one sample at a time, which is the hot
loop of the whole package.  Two interchangeable backends implement the
per-sample step:

* ``fallback`` -- pure numpy, always available;
* ``fast`` -- a Cython extension compiled at install time.

The compiled backend is picked automatically when present; set
``LPWAVENET_BACKEND=fallback`` (or ``fast``) to force a choice.  The two
backends agree to floating-point rounding, not bit-for-bit; within one
backend, the incremental and replay paths are bit-identical.
"""

from __future__ import annotations

import os

import numpy as np

from .fallback import PyStepper, TrunkKernelPack

try:
    from ._fast import FastStepper

    HAVE_FAST = True
except ImportError:  # extension not built
    FastStepper = None
    HAVE_FAST = False

BACKENDS = ("fast", "fallback")


def default_backend() -> str:
    forced = os.environ.get("LPWAVENET_BACKEND", "").strip().lower()
    if forced:
        if forced not in BACKENDS:
            raise ValueError(f"LPWAVENET_BACKEND must be one of {BACKENDS}")
        if forced == "fast" and not HAVE_FAST:
            raise RuntimeError("fast backend requested but the extension is not built")
        return forced
    return "fast" if HAVE_FAST else "fallback"


def make_stepper(pack: TrunkKernelPack, cond: np.ndarray, backend: str | None = None):
    """Instantiate a per-sample trunk stepper over conditioning `cond` [T, D]."""
    backend = backend or default_backend()
    if backend == "fast":
        if not HAVE_FAST:
            raise RuntimeError("fast backend is not available")
        return FastStepper(pack, np.ascontiguousarray(cond, dtype=np.float64))
    if backend == "fallback":
        return PyStepper(pack, np.asarray(cond, dtype=np.float64))
    raise ValueError(f"unknown backend {backend!r}")
