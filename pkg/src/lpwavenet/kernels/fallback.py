"""Pure numpy implementation of the per-sample trunk step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TrunkKernelPack:
    """Materialized float64 trunk weights, stacked per block.

    Shapes: L blocks, R residual channels, S skip channels, D feature
    dims, O output channels.  `wf0`/`wg0` are the delayed taps and
    `wf1`/`wg1` the current taps of the kernel-2 dilated convolutions.
    """

    dilations: np.ndarray  # [L] int32
    wf0: np.ndarray        # [L,R,R]
    wf1: np.ndarray
    wg0: np.ndarray
    wg1: np.ndarray
    vf: np.ndarray         # [L,D,R]
    vg: np.ndarray
    bf: np.ndarray         # [L,R]
    bg: np.ndarray
    wr: np.ndarray         # [L,R,R]
    br: np.ndarray         # [L,R]
    ws: np.ndarray         # [L,R,S]
    bs: np.ndarray         # [L,S]
    post1: np.ndarray      # [S,S]
    post1_b: np.ndarray
    post2: np.ndarray      # [S,O]
    post2_b: np.ndarray

    @property
    def num_blocks(self) -> int:
        return len(self.dilations)

    @property
    def residual_channels(self) -> int:
        return self.wf0.shape[1]

    @property
    def history_span(self) -> int:
        """Steps of h-history the block stack can see: sum of dilations."""
        return int(np.sum(self.dilations))


class PyStepper:
    """Incremental trunk evaluation with per-block ring buffers.

    ``step(h, t)`` consumes the input-layer output for one time step and
    returns the head logits for that step.  ``t`` indexes the
    conditioning row; the ring position is tracked internally so a reset
    stepper can replay any window of history.
    """

    def __init__(self, pack: TrunkKernelPack, cond: np.ndarray):
        self.pack = pack
        self.cond = cond
        self._bufs = [
            np.zeros((int(d), pack.residual_channels)) for d in pack.dilations
        ]
        self._pos = 0

    def reset(self) -> None:
        for buf in self._bufs:
            buf[:] = 0.0
        self._pos = 0

    def step(self, h: np.ndarray, t: int) -> np.ndarray:
        pack = self.pack
        c = self.cond[t]
        skip = np.zeros(pack.bs.shape[1])
        pos = self._pos
        for l in range(pack.num_blocks):
            d = int(pack.dilations[l])
            buf = self._bufs[l]
            slot = pos % d
            x_old = buf[slot]
            f = x_old @ pack.wf0[l] + h @ pack.wf1[l] + c @ pack.vf[l] + pack.bf[l]
            g = x_old @ pack.wg0[l] + h @ pack.wg1[l] + c @ pack.vg[l] + pack.bg[l]
            z = np.tanh(f) * (1.0 / (1.0 + np.exp(-g)))
            buf[slot] = h
            skip += z @ pack.ws[l] + pack.bs[l]
            h = h + (z @ pack.wr[l] + pack.br[l])
        a = np.maximum(skip, 0.0)
        a = np.maximum(a @ pack.post1 + pack.post1_b, 0.0)
        self._pos = pos + 1
        return a @ pack.post2 + pack.post2_b
