"""Reverse-mode automatic differentiation over numpy arrays.

Only the operations the network needs are implemented.  Every op
returns a new Tensor wired into the tape; calling `backward(root, seed)`
propagates `seed` through the recorded graph.  Tensors built purely from
non-differentiable inputs carry no tape, so constant subgraphs cost
nothing on the backward pass.

Gradients are checked against central finite differences in the test
suite; that comparison, not any framework convention, is the contract.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents=(), _bw=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._bw = _bw
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        # First write may alias g (closures never mutate what they hand
        # over); later writes allocate instead of updating in place.
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad}{tag})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, bw) -> Tensor:
    tracked = tuple(p for p in parents if p.requires_grad)
    if not tracked:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=tracked, _bw=bw)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(root: Tensor, seed: np.ndarray) -> None:
    """Propagate d(loss)/d(root) = seed through the tape below `root`."""
    seed = np.asarray(seed)
    if seed.shape != root.data.shape:
        raise ValueError(f"seed shape {seed.shape} != root shape {root.data.shape}")
    order = []
    seen = {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if p.requires_grad and id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    root._accumulate(seed)
    for node in reversed(order):
        if node._bw is not None and node.grad is not None:
            node._bw(node.grad)


# ---------------------------------------------------------------------------
# elementwise ops

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _result(out_data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _result(out_data, (a, b), bw)


def tanh(a: Tensor) -> Tensor:
    a = _wrap(a)
    out_data = np.tanh(a.data)

    def bw(g):
        a._accumulate(g * (1.0 - out_data * out_data))

    return _result(out_data, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    a = _wrap(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        a._accumulate(g * out_data * (1.0 - out_data))

    return _result(out_data, (a,), bw)


def relu(a: Tensor) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0

    def bw(g):
        a._accumulate(g * mask)

    return _result(a.data * mask, (a,), bw)


# ---------------------------------------------------------------------------
# linear algebra / indexing

def matmul(x: Tensor, w: Tensor) -> Tensor:
    """x[..., Ci] @ w[Ci, Co]; w must be 2-d."""
    x, w = _wrap(x), _wrap(w)
    ci, co = w.data.shape
    out_data = x.data @ w.data

    def bw(g):
        if x.requires_grad:
            x._accumulate(g @ w.data.T)
        if w.requires_grad:
            w._accumulate(x.data.reshape(-1, ci).T @ g.reshape(-1, co))

    return _result(out_data, (x, w), bw)


def take_rows(w: Tensor, idx: np.ndarray) -> Tensor:
    """Row gather w[idx]; the differentiable path into one-hot matmuls."""
    w = _wrap(w)
    idx = np.asarray(idx)
    out_data = w.data[idx]

    def bw(g):
        dw = np.zeros_like(w.data)
        np.add.at(dw, idx.reshape(-1), g.reshape(-1, w.data.shape[1]))
        w._accumulate(dw)

    return _result(out_data, (w,), bw)


def time_shift(x: Tensor, d: int) -> Tensor:
    """Shift along axis 1 with zero fill: out[:, t] = x[:, t - d]."""
    x = _wrap(x)
    if d == 0:
        return x
    out_data = np.zeros_like(x.data)
    if d > 0:
        out_data[:, d:] = x.data[:, :-d]
    else:
        out_data[:, :d] = x.data[:, -d:]

    def bw(g):
        dx = np.zeros_like(x.data)
        if d > 0:
            dx[:, :-d] = g[:, d:]
        else:
            dx[:, -d:] = g[:, :d]
        x._accumulate(dx)

    return _result(out_data, (x,), bw)


def slice_time_padded(x: Tensor, start: int, length: int) -> Tensor:
    """out[:, j] = x[:, start + j], zero outside [0, T)."""
    x = _wrap(x)
    b, t = x.data.shape[0], x.data.shape[1]
    lo = max(start, 0)
    hi = min(start + length, t)
    out_data = np.zeros((b, length) + x.data.shape[2:], dtype=x.data.dtype)
    if lo < hi:
        out_data[:, lo - start : hi - start] = x.data[:, lo:hi]

    def bw(g):
        dx = np.zeros_like(x.data)
        if lo < hi:
            dx[:, lo:hi] = g[:, lo - start : hi - start]
        x._accumulate(dx)

    return _result(out_data, (x,), bw)


def concat0(tensors) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.data.shape[0] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=0)

    def bw(g):
        off = 0
        for t, n in zip(tensors, sizes):
            if t.requires_grad:
                t._accumulate(g[off : off + n])
            off += n

    return _result(out_data, tuple(tensors), bw)


def upsample_tconv(x: Tensor, w: Tensor, hop: int) -> Tensor:
    """Transposed 1-d convolution, stride hop, kernel 2*hop.

    The full transposed-conv output has (F+1)*hop samples; hop/2 samples
    are cropped from each side so the result covers exactly F*hop
    samples, one hop per input frame.
    """
    x, w = _wrap(x), _wrap(w)
    k, ci, co = w.data.shape
    if k != 2 * hop:
        raise ValueError("upsample kernel must equal 2*hop")
    b, f, _ = x.data.shape
    z = np.tensordot(x.data, w.data, axes=([2], [1]))  # [B,F,K,Co]
    full = np.zeros((b, (f + 1) * hop, co), dtype=z.dtype)
    full[:, : f * hop] += z[:, :, :hop, :].reshape(b, f * hop, co)
    full[:, hop:] += z[:, :, hop:, :].reshape(b, f * hop, co)
    lo = hop // 2
    out_data = full[:, lo : lo + f * hop]

    def bw(g):
        gfull = np.zeros((b, (f + 1) * hop, co), dtype=g.dtype)
        gfull[:, lo : lo + f * hop] = g
        gz = np.empty((b, f, k, co), dtype=g.dtype)
        gz[:, :, :hop, :] = gfull[:, : f * hop].reshape(b, f, hop, co)
        gz[:, :, hop:, :] = gfull[:, hop:].reshape(b, f, hop, co)
        if x.requires_grad:
            x._accumulate(np.tensordot(gz, w.data, axes=([2, 3], [0, 2])))
        if w.requires_grad:
            dw = np.tensordot(x.data, gz, axes=([0, 1], [0, 1]))  # [Ci,K,Co]
            w._accumulate(dw.transpose(1, 0, 2))

    return _result(out_data, (x, w), bw)


def causal_conv2(x: Tensor, w: Tensor, b, dilation: int) -> Tensor:
    """Fused kernel-2 causal convolution: out[t] = x[t-d] @ w[0] + x[t] @ w[1] + b.

    One op instead of shift/matmul/matmul/add/add keeps the tape short;
    this is the layer the trunk spends its time in.
    """
    x, w = _wrap(x), _wrap(w)
    b = _wrap(b) if b is not None else None
    d = int(dilation)
    ci, co = w.data.shape[1], w.data.shape[2]
    xs = np.zeros_like(x.data)
    xs[:, d:] = x.data[:, :-d]
    out_data = xs @ w.data[0] + x.data @ w.data[1]
    if b is not None:
        out_data += b.data

    def bw(g):
        if x.requires_grad:
            dx = g @ w.data[1].T
            t0 = g @ w.data[0].T
            dx[:, :-d] += t0[:, d:]
            x._accumulate(dx)
        if w.requires_grad:
            dw = np.empty_like(w.data)
            g2 = g.reshape(-1, co)
            dw[0] = xs.reshape(-1, ci).T @ g2
            dw[1] = x.data.reshape(-1, ci).T @ g2
            w._accumulate(dw)
        if b is not None and b.requires_grad:
            b._accumulate(g.reshape(-1, co).sum(axis=0))

    parents = (x, w, b) if b is not None else (x, w)
    return _result(out_data, parents, bw)


def weight_norm(v: Tensor, g: Tensor) -> Tensor:
    """w = g * v / ||v||, with the norm taken per output channel.

    The output channel is the last axis of v; g has one gain per output
    channel.  Gradients flow into both v and g.
    """
    v, g = _wrap(v), _wrap(g)
    co = v.data.shape[-1]
    v2 = v.data.reshape(-1, co)
    norm = np.sqrt((v2 * v2).sum(axis=0))
    if np.any(norm == 0.0):
        raise ValueError("weight_norm direction tensor has a zero column")
    scale = g.data / norm
    out_data = (v2 * scale).reshape(v.data.shape)

    def bw(gr):
        gr2 = gr.reshape(-1, co)
        dot = (gr2 * v2).sum(axis=0)
        if g.requires_grad:
            g._accumulate(dot / norm)
        if v.requires_grad:
            dv = scale * gr2 - v2 * (g.data * dot / norm**3)
            v._accumulate(dv.reshape(v.data.shape))

    return _result(out_data, (v, g), bw)
