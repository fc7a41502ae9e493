"""Numba-compiled kernels; contracts documented in `_numpy`.

Fully looped so compiled arithmetic stays in the input dtype; scalar
intermediates are f64 and truncate on store, which keeps f32 results
within a few ulp of the numpy backend and bitwise-stable per backend.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _sig(v):
    if v >= 0.0:
        return 1.0 / (1.0 + math.exp(-v))
    ev = math.exp(v)
    return ev / (1.0 + ev)


@njit(cache=True)
def lstm_fwd(x, wx, wh, b):
    seq_len, d_in = x.shape
    h = wh.shape[0]
    h_seq = np.zeros((seq_len, h), dtype=x.dtype)
    c_seq = np.zeros((seq_len, h), dtype=x.dtype)
    gates = np.zeros((seq_len, 4 * h), dtype=x.dtype)
    h_prev = np.zeros(h, dtype=x.dtype)
    z = np.zeros(4 * h, dtype=x.dtype)
    for t in range(seq_len):
        for j in range(4 * h):
            acc = float(b[j])
            for a in range(d_in):
                acc += x[t, a] * wx[a, j]
            for a in range(h):
                acc += h_prev[a] * wh[a, j]
            z[j] = acc
        for j in range(h):
            gi = _sig(z[j])
            gf = _sig(z[h + j])
            gg = math.tanh(z[2 * h + j])
            go = _sig(z[3 * h + j])
            c_prev = c_seq[t - 1, j] if t > 0 else 0.0
            c = gf * c_prev + gi * gg
            gates[t, j] = gi
            gates[t, h + j] = gf
            gates[t, 2 * h + j] = gg
            gates[t, 3 * h + j] = go
            c_seq[t, j] = c
            h_seq[t, j] = go * math.tanh(c)
        for j in range(h):
            h_prev[j] = h_seq[t, j]
    return h_seq, c_seq, gates


@njit(cache=True)
def lstm_bwd(x, wx, wh, gates, c_seq, h_seq, grad_h):
    seq_len, d_in = x.shape
    h = wh.shape[0]
    dx = np.zeros_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * h, dtype=x.dtype)
    dh_next = np.zeros(h, dtype=x.dtype)
    dc_next = np.zeros(h, dtype=x.dtype)
    dz = np.zeros(4 * h, dtype=x.dtype)
    for t in range(seq_len - 1, -1, -1):
        for j in range(h):
            gi = gates[t, j]
            gf = gates[t, h + j]
            gg = gates[t, 2 * h + j]
            go = gates[t, 3 * h + j]
            tc = math.tanh(c_seq[t, j])
            c_prev = c_seq[t - 1, j] if t > 0 else 0.0
            dh = grad_h[t, j] + dh_next[j]
            dc = dh * go * (1.0 - tc * tc) + dc_next[j]
            dz[j] = dc * gg * gi * (1.0 - gi)
            dz[h + j] = dc * c_prev * gf * (1.0 - gf)
            dz[2 * h + j] = dc * gi * (1.0 - gg * gg)
            dz[3 * h + j] = dh * tc * go * (1.0 - go)
            dc_next[j] = dc * gf
        for a in range(d_in):
            acc = 0.0
            for j in range(4 * h):
                acc += dz[j] * wx[a, j]
            dx[t, a] = acc
        for a in range(h):
            acc = 0.0
            for j in range(4 * h):
                acc += dz[j] * wh[a, j]
            dh_next[a] = acc
        for j in range(4 * h):
            dzj = dz[j]
            db[j] += dzj
            for a in range(d_in):
                dwx[a, j] += x[t, a] * dzj
            if t > 0:
                for a in range(h):
                    dwh[a, j] += h_seq[t - 1, a] * dzj
    return dx, dwx, dwh, db


@njit(cache=True)
def conv1d_fwd(x, w):
    seq_len, c_in = x.shape
    k, _, c_out = w.shape
    pad = k // 2
    y = np.zeros((seq_len, c_out), dtype=x.dtype)
    for t in range(seq_len):
        for tap in range(k):
            s = t + tap - pad
            if s < 0 or s >= seq_len:
                continue
            for a in range(c_in):
                xv = x[s, a]
                for j in range(c_out):
                    y[t, j] += xv * w[tap, a, j]
    return y


@njit(cache=True)
def conv1d_bwd(x, w, grad_y):
    seq_len, c_in = x.shape
    k, _, c_out = w.shape
    pad = k // 2
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for t in range(seq_len):
        for tap in range(k):
            s = t + tap - pad
            if s < 0 or s >= seq_len:
                continue
            for a in range(c_in):
                acc = 0.0
                xv = x[s, a]
                for j in range(c_out):
                    g = grad_y[t, j]
                    acc += g * w[tap, a, j]
                    dw[tap, a, j] += xv * g
                dx[s, a] += acc
    return dx, dw
