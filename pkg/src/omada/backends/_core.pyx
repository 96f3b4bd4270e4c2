# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: dense MLP forward/backward and the latent attack loop.

Same contract as omada.backends.pure; see that module for semantics.
Matrices are float64 C-contiguous; small sizes dominate here, so plain
loops beat BLAS-call overhead.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()

NAME = "compiled"


cdef void _affine(double[:, ::1] x, double[:, ::1] w, double[:, ::1] b,
                  double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], din = x.shape[1], dout = w.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(dout):
            acc = b[0, j]
            for k in range(din):
                acc += x[i, k] * w[k, j]
            out[i, j] = acc


cdef void _apply_act(double[:, ::1] a, int act_code) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            if act_code == 0:
                a[i, j] = tanh(a[i, j])
            elif a[i, j] < 0.0:
                a[i, j] = 0.0


cdef void _mul(double[:, ::1] a, double[:, ::1] m, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            out[i, j] = a[i, j] * m[i, j]


cdef void _grad_wb(double[:, ::1] inp, double[:, ::1] delta,
                   double[:, ::1] dw, double[:, ::1] db) noexcept nogil:
    # dw = inp.T @ delta, db = column sums of delta
    cdef Py_ssize_t n = inp.shape[0], din = inp.shape[1], dout = delta.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for k in range(din):
        for j in range(dout):
            acc = 0.0
            for i in range(n):
                acc += inp[i, k] * delta[i, j]
            dw[k, j] = acc
    for j in range(dout):
        acc = 0.0
        for i in range(n):
            acc += delta[i, j]
        db[0, j] = acc


cdef void _grad_input(double[:, ::1] delta, double[:, ::1] w,
                      double[:, ::1] out) noexcept nogil:
    # out = delta @ w.T
    cdef Py_ssize_t n = delta.shape[0], dout = delta.shape[1], din = w.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for k in range(din):
            acc = 0.0
            for j in range(dout):
                acc += delta[i, j] * w[k, j]
            out[i, k] = acc


cdef void _act_backward(double[:, ::1] dh, double[:, ::1] h, int act_code,
                        double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(dh.shape[0]):
        for j in range(dh.shape[1]):
            if act_code == 0:
                out[i, j] = dh[i, j] * (1.0 - h[i, j] * h[i, j])
            else:
                out[i, j] = dh[i, j] if h[i, j] > 0.0 else 0.0


cdef void _softmax_row(double[:, ::1] logits, double[:, ::1] p) noexcept nogil:
    cdef Py_ssize_t n = logits.shape[0], c = logits.shape[1]
    cdef Py_ssize_t i, j
    cdef double mx, s
    for i in range(n):
        mx = logits[i, 0]
        for j in range(1, c):
            if logits[i, j] > mx:
                mx = logits[i, j]
        s = 0.0
        for j in range(c):
            p[i, j] = exp(logits[i, j] - mx)
            s += p[i, j]
        for j in range(c):
            p[i, j] /= s


def forward_pass(weights, biases, int act_code, x, masks):
    """See omada.backends.pure.forward_pass."""
    cdef int n_layers = len(weights)
    cdef int i
    cdef Py_ssize_t n = x.shape[0]
    inputs = [x]
    hiddens = []
    cur = x
    for i in range(n_layers - 1):
        h = np.empty((n, weights[i].shape[1]))
        _affine(cur, weights[i], biases[i], h)
        _apply_act(h, act_code)
        hiddens.append(h)
        if masks is not None:
            d = np.empty_like(h)
            _mul(h, masks[i], d)
        else:
            d = h
        inputs.append(d)
        cur = d
    out = np.empty((n, weights[n_layers - 1].shape[1]))
    _affine(cur, weights[n_layers - 1], biases[n_layers - 1], out)
    return inputs, hiddens, out


def backward_pass(weights, int act_code, inputs, hiddens, masks, grad_out):
    """See omada.backends.pure.backward_pass."""
    cdef int n_layers = len(weights)
    cdef int i
    dws = [None] * n_layers
    dbs = [None] * n_layers
    delta = grad_out
    for i in range(n_layers - 1, -1, -1):
        dw = np.empty_like(weights[i])
        db = np.empty((1, weights[i].shape[1]))
        _grad_wb(inputs[i], delta, dw, db)
        dws[i] = dw
        dbs[i] = db
        dprev = np.empty((delta.shape[0], weights[i].shape[0]))
        _grad_input(delta, weights[i], dprev)
        if i == 0:
            return dws, dbs, dprev
        if masks is not None:
            masked = np.empty_like(dprev)
            _mul(dprev, masks[i - 1], masked)
            dprev = masked
        nxt = np.empty_like(dprev)
        _act_backward(dprev, hiddens[i - 1], act_code, nxt)
        delta = nxt


cdef void _attack_forward(list acts, list weights, list biases,
                          int n_layers, int act_code, double[:, ::1] p):
    cdef int i
    for i in range(n_layers):
        _affine(acts[i], weights[i], biases[i], acts[i + 1])
        if i < n_layers - 1:
            _apply_act(acts[i + 1], act_code)
    _softmax_row(acts[n_layers], p)


def attack_steps(weights, biases, int act_code, z0, target, int steps,
                 double alpha, int record_stride, double early_stop):
    """See omada.backends.pure.attack_steps. Runs the whole loop natively
    with buffers allocated once."""
    cdef int n_layers = len(weights)
    cdef Py_ssize_t m = z0.shape[0]
    cdef int i, k
    cdef Py_ssize_t j
    cdef double mass
    cdef bint stop

    z = np.array(z0, dtype=np.float64).reshape(1, m)
    tgt = np.ascontiguousarray(np.asarray(target, dtype=np.float64).reshape(1, -1))
    cdef double[:, ::1] tgt_v = tgt
    cdef Py_ssize_t c = tgt.shape[1]

    # pre-allocate per-layer activation and delta buffers
    acts = [z] + [np.empty((1, w.shape[1])) for w in weights]
    deltas = [np.empty((1, w.shape[1])) for w in weights]
    dz = np.empty((1, m))
    p = np.empty((1, c))
    cdef double[:, ::1] p_v = p
    cdef double[:, ::1] z_v = z
    cdef double[:, ::1] dz_v = dz

    _attack_forward(acts, weights, biases, n_layers, act_code, p)
    codes = [z[0].copy()]
    probs_rec = [p[0].copy()]
    step_ids = [0]

    for k in range(1, steps + 1):
        # delta at logits = p - target, then backprop to dz
        for j in range(c):
            deltas[n_layers - 1][0, j] = p_v[0, j] - tgt_v[0, j]
        for i in range(n_layers - 1, 0, -1):
            _grad_input(deltas[i], weights[i], deltas[i - 1])
            _act_backward(deltas[i - 1], acts[i], act_code, deltas[i - 1])
        _grad_input(deltas[0], weights[0], dz)
        for j in range(m):
            if dz_v[0, j] > 0.0:
                z_v[0, j] -= alpha
            elif dz_v[0, j] < 0.0:
                z_v[0, j] += alpha
        _attack_forward(acts, weights, biases, n_layers, act_code, p)
        stop = False
        if early_stop >= 0.0:
            mass = 0.0
            for j in range(c):
                mass += p_v[0, j] * tgt_v[0, j]
            stop = mass >= early_stop
        if k % record_stride == 0 or k == steps or stop:
            codes.append(z[0].copy())
            probs_rec.append(p[0].copy())
            step_ids.append(k)
        if stop:
            break
    return (np.array(codes), np.array(probs_rec),
            np.array(step_ids, dtype=np.int64))
