"""Adam with bias correction, operating on named parameter dicts."""

from __future__ import annotations

import numpy as np

from .errors import NumericError


def adam_step(params: dict, grads: dict, moments: tuple, t: int,
              lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected update, in place.

    `params` maps names to arrays (or objects with a .data array);
    `moments` is the (m, v) pair of dicts with matching shapes; `t` is
    the 1-based step count.  A non-finite gradient rejects the whole
    step before any parameter is touched.
    """
    m, v = moments
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, g in grads.items():
        data = _arr(params[name])
        m[name] = beta1 * m[name] + (1.0 - beta1) * g
        v[name] = beta2 * v[name] + (1.0 - beta2) * (g * g)
        update = (lr / c1) * m[name] / (np.sqrt(v[name] / c2) + eps)
        data -= update.astype(data.dtype, copy=False)


class Adam:
    """Stateful wrapper tracking the step count and the moment dicts."""

    def __init__(self, params: dict, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(_arr(p)) for k, p in params.items()}
        self.v = {k: np.zeros_like(_arr(p)) for k, p in params.items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        adam_step(self.params, grads, (self.m, self.v), self.t,
                  lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)

    def state_arrays(self) -> dict:
        out = {f"adam.m.{k}": val for k, val in self.m.items()}
        out.update({f"adam.v.{k}": val for k, val in self.v.items()})
        return out

    def load_state_arrays(self, arrays: dict, t: int) -> None:
        self.t = t
        for k in self.m:
            self.m[k] = arrays[f"adam.m.{k}"].astype(self.m[k].dtype, copy=True)
            self.v[k] = arrays[f"adam.v.{k}"].astype(self.v[k].dtype, copy=True)


def _arr(p):
    return p if isinstance(p, np.ndarray) else p.data
