"""Pure-numpy reference kernels for the sequence hot loops.

Contracts (shared with the numba backend):

lstm_fwd(x, wx, wh, b)          x: [L, d_in], wx: [d_in, 4h], wh: [h, 4h], b: [4h]
    -> (h_seq [L, h], c_seq [L, h], gates [L, 4h])
    Gate blocks are ordered (input, forget, cell, output); `gates` stores
    post-activation values. Initial hidden and cell state are zero.

lstm_bwd(x, wx, wh, gates, c_seq, h_seq, grad_h)
    -> (dx, dwx, dwh, db)

conv1d_fwd(x, w)                x: [L, c_in], w: [k, c_in, c_out], k odd
    -> y [L, c_out]             zero-padded so the sequence length is preserved

conv1d_bwd(x, w, grad_y)
    -> (dx, dw)
"""

import numpy as np


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_fwd(x, wx, wh, b):
    seq_len = x.shape[0]
    h = wh.shape[0]
    h_seq = np.zeros((seq_len, h), dtype=x.dtype)
    c_seq = np.zeros((seq_len, h), dtype=x.dtype)
    gates = np.zeros((seq_len, 4 * h), dtype=x.dtype)
    h_prev = np.zeros(h, dtype=x.dtype)
    c_prev = np.zeros(h, dtype=x.dtype)
    for t in range(seq_len):
        z = x[t] @ wx + h_prev @ wh + b
        gi = _sigmoid(z[:h])
        gf = _sigmoid(z[h : 2 * h])
        gg = np.tanh(z[2 * h : 3 * h])
        go = _sigmoid(z[3 * h :])
        c = gf * c_prev + gi * gg
        h_t = go * np.tanh(c)
        gates[t, :h] = gi
        gates[t, h : 2 * h] = gf
        gates[t, 2 * h : 3 * h] = gg
        gates[t, 3 * h :] = go
        c_seq[t] = c
        h_seq[t] = h_t
        h_prev = h_t
        c_prev = c
    return h_seq, c_seq, gates


def lstm_bwd(x, wx, wh, gates, c_seq, h_seq, grad_h):
    seq_len, d_in = x.shape
    h = wh.shape[0]
    dx = np.zeros_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * h, dtype=x.dtype)
    dh_next = np.zeros(h, dtype=x.dtype)
    dc_next = np.zeros(h, dtype=x.dtype)
    dz = np.empty(4 * h, dtype=x.dtype)
    for t in range(seq_len - 1, -1, -1):
        gi = gates[t, :h]
        gf = gates[t, h : 2 * h]
        gg = gates[t, 2 * h : 3 * h]
        go = gates[t, 3 * h :]
        tc = np.tanh(c_seq[t])
        c_prev = c_seq[t - 1] if t > 0 else np.zeros(h, dtype=x.dtype)
        h_prev = h_seq[t - 1] if t > 0 else np.zeros(h, dtype=x.dtype)
        dh = grad_h[t] + dh_next
        dc = dh * go * (1.0 - tc * tc) + dc_next
        dz[:h] = dc * gg * gi * (1.0 - gi)
        dz[h : 2 * h] = dc * c_prev * gf * (1.0 - gf)
        dz[2 * h : 3 * h] = dc * gi * (1.0 - gg * gg)
        dz[3 * h :] = dh * tc * go * (1.0 - go)
        dx[t] = dz @ wx.T
        dh_next = dz @ wh.T
        dwx += np.outer(x[t], dz)
        dwh += np.outer(h_prev, dz)
        db += dz
        dc_next = dc * gf
    return dx, dwx, dwh, db


def conv1d_fwd(x, w):
    seq_len, c_in = x.shape
    k = w.shape[0]
    pad = k // 2
    xp = np.zeros((seq_len + k - 1, c_in), dtype=x.dtype)
    xp[pad : pad + seq_len] = x
    y = np.zeros((seq_len, w.shape[2]), dtype=x.dtype)
    for tap in range(k):
        y += xp[tap : tap + seq_len] @ w[tap]
    return y


def conv1d_bwd(x, w, grad_y):
    seq_len, c_in = x.shape
    k = w.shape[0]
    pad = k // 2
    xp = np.zeros((seq_len + k - 1, c_in), dtype=x.dtype)
    xp[pad : pad + seq_len] = x
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for tap in range(k):
        dxp[tap : tap + seq_len] += grad_y @ w[tap].T
        dw[tap] = xp[tap : tap + seq_len].T @ grad_y
    return dxp[pad : pad + seq_len].copy(), dw
