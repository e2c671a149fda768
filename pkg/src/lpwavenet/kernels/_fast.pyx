# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython implementation of the per-sample trunk step.

Mirrors kernels.fallback.PyStepper: same state layout, same update
order.  All weights are flattened to contiguous buffers walked with
raw pointers, so the inner matvecs vectorize; this is what makes the
path an order of magnitude faster than issuing hundreds of tiny numpy
calls per sample.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline void _matvec_acc2(const double* w0, const double* w1,
                              const double* x0, const double* x1,
                              double* out, Py_ssize_t n_in,
                              Py_ssize_t n_out) noexcept nogil:
    """out += x0 @ w0 + x1 @ w1 for row-major [n_in, n_out] weights."""
    cdef Py_ssize_t i, o
    cdef double a, b
    cdef const double* row0
    cdef const double* row1
    for i in range(n_in):
        a = x0[i]
        b = x1[i]
        row0 = w0 + i * n_out
        row1 = w1 + i * n_out
        for o in range(n_out):
            out[o] += a * row0[o] + b * row1[o]


cdef inline void _matvec_acc(const double* w, const double* x, double* out,
                             Py_ssize_t n_in, Py_ssize_t n_out) noexcept nogil:
    cdef Py_ssize_t i, o
    cdef double a
    cdef const double* row
    for i in range(n_in):
        a = x[i]
        row = w + i * n_out
        for o in range(n_out):
            out[o] += a * row[o]


cdef inline void _matvec_acc_dual(const double* wa, const double* wb,
                                  const double* x, double* out_a,
                                  double* out_b, Py_ssize_t n_in,
                                  Py_ssize_t n_out) noexcept nogil:
    """out_a += x @ wa and out_b += x @ wb, reading x once."""
    cdef Py_ssize_t i, o
    cdef double a
    cdef const double* rowa
    cdef const double* rowb
    for i in range(n_in):
        a = x[i]
        rowa = wa + i * n_out
        rowb = wb + i * n_out
        for o in range(n_out):
            out_a[o] += a * rowa[o]
            out_b[o] += a * rowb[o]


cdef class FastStepper:
    cdef object _refs  # keep the packed arrays alive
    cdef double *wf0
    cdef double *wf1
    cdef double *wg0
    cdef double *wg1
    cdef double *vf
    cdef double *vg
    cdef double *bf
    cdef double *bg
    cdef double *wr
    cdef double *br
    cdef double *ws
    cdef double *bs
    cdef double *post1
    cdef double *post1_b
    cdef double *post2
    cdef double *post2_b
    cdef double *cond
    cdef double *bufs
    cdef double *fb
    cdef double *gb
    cdef double *zb
    cdef double *hw
    cdef double *sk
    cdef double *tmp
    cdef Py_ssize_t *dil
    cdef Py_ssize_t *boff
    cdef Py_ssize_t L, R, S, D, O, pos, nbuf

    def __init__(self, pack, cond):
        arrs = {}

        def keep(name, a, dtype=np.float64):
            arrs[name] = np.ascontiguousarray(a, dtype=dtype)
            return arrs[name]

        cdef cnp.ndarray a
        self.L = len(pack.dilations)
        self.R = pack.wf0.shape[1]
        self.S = pack.ws.shape[2]
        self.D = pack.vf.shape[1]
        self.O = pack.post2.shape[1]

        a = keep("wf0", pack.wf0); self.wf0 = <double*> a.data
        a = keep("wf1", pack.wf1); self.wf1 = <double*> a.data
        a = keep("wg0", pack.wg0); self.wg0 = <double*> a.data
        a = keep("wg1", pack.wg1); self.wg1 = <double*> a.data
        a = keep("vf", pack.vf); self.vf = <double*> a.data
        a = keep("vg", pack.vg); self.vg = <double*> a.data
        a = keep("bf", pack.bf); self.bf = <double*> a.data
        a = keep("bg", pack.bg); self.bg = <double*> a.data
        a = keep("wr", pack.wr); self.wr = <double*> a.data
        a = keep("br", pack.br); self.br = <double*> a.data
        a = keep("ws", pack.ws); self.ws = <double*> a.data
        a = keep("bs", pack.bs); self.bs = <double*> a.data
        a = keep("post1", pack.post1); self.post1 = <double*> a.data
        a = keep("post1_b", pack.post1_b); self.post1_b = <double*> a.data
        a = keep("post2", pack.post2); self.post2 = <double*> a.data
        a = keep("post2_b", pack.post2_b); self.post2_b = <double*> a.data
        a = keep("cond", cond); self.cond = <double*> a.data

        dil = np.asarray(pack.dilations, dtype=np.intp)
        off = np.zeros(self.L, dtype=np.intp)
        off[1:] = np.cumsum(dil)[:-1]
        a = keep("dil", dil, np.intp); self.dil = <Py_ssize_t*> a.data
        a = keep("boff", off, np.intp); self.boff = <Py_ssize_t*> a.data
        self.nbuf = int(dil.sum())
        a = keep("bufs", np.zeros((self.nbuf, self.R))); self.bufs = <double*> a.data
        for name, size in [("fb", self.R), ("gb", self.R), ("zb", self.R),
                           ("hw", self.R), ("sk", self.S),
                           ("tmp", max(self.R, self.S))]:
            keep(name, np.zeros(size))
        self.fb = <double*> (<cnp.ndarray> arrs["fb"]).data
        self.gb = <double*> (<cnp.ndarray> arrs["gb"]).data
        self.zb = <double*> (<cnp.ndarray> arrs["zb"]).data
        self.hw = <double*> (<cnp.ndarray> arrs["hw"]).data
        self.sk = <double*> (<cnp.ndarray> arrs["sk"]).data
        self.tmp = <double*> (<cnp.ndarray> arrs["tmp"]).data
        self.pos = 0
        self._refs = arrs

    def reset(self):
        cdef Py_ssize_t i
        for i in range(self.nbuf * self.R):
            self.bufs[i] = 0.0
        self.pos = 0

    def step(self, double[::1] h, Py_ssize_t t):
        cdef Py_ssize_t l, i, o, slot
        cdef Py_ssize_t L = self.L, R = self.R, S = self.S, D = self.D, O = self.O
        cdef double* xold
        cdef double* f = self.fb
        cdef double* g = self.gb
        cdef double* z = self.zb
        cdef double* hw = self.hw
        cdef double* sk = self.sk
        cdef double* tmp = self.tmp
        cdef double* ct = self.cond + t * D
        cdef double ai
        cdef cnp.ndarray out_arr = np.empty(O)
        cdef double* out = <double*> out_arr.data

        for i in range(R):
            hw[i] = h[i]
        for o in range(S):
            sk[o] = 0.0
        with nogil:
            for l in range(L):
                slot = self.boff[l] + self.pos % self.dil[l]
                xold = self.bufs + slot * R
                for o in range(R):
                    f[o] = self.bf[l * R + o]
                    g[o] = self.bg[l * R + o]
                _matvec_acc_dual(self.vf + l * D * R, self.vg + l * D * R,
                                 ct, f, g, D, R)
                # f/g get both conv taps in one pass
                _matvec_acc2(self.wf0 + l * R * R, self.wf1 + l * R * R,
                             xold, hw, f, R, R)
                _matvec_acc2(self.wg0 + l * R * R, self.wg1 + l * R * R,
                             xold, hw, g, R, R)
                for o in range(R):
                    z[o] = tanh(f[o]) * (1.0 / (1.0 + exp(-g[o])))
                for i in range(R):
                    xold[i] = hw[i]
                for o in range(S):
                    sk[o] += self.bs[l * S + o]
                _matvec_acc(self.ws + l * R * S, z, sk, R, S)
                for o in range(R):
                    tmp[o] = self.br[l * R + o]
                _matvec_acc(self.wr + l * R * R, z, tmp, R, R)
                for o in range(R):
                    hw[o] += tmp[o]
            # post network over the summed skips
            for o in range(S):
                if sk[o] < 0.0:
                    sk[o] = 0.0
            for o in range(S):
                tmp[o] = self.post1_b[o]
            _matvec_acc(self.post1, sk, tmp, S, S)
            for o in range(S):
                if tmp[o] < 0.0:
                    tmp[o] = 0.0
            for o in range(O):
                out[o] = self.post2_b[o]
            _matvec_acc(self.post2, tmp, out, S, O)
            self.pos += 1
        return out_arr
