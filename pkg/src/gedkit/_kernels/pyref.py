"""Pure-numpy LSTM recurrence kernels (fallback backend).

Shared contract with the compiled backend:

  lstm_forward(pre, u, h0, c0) -> (h, c, tc, gi, gf, go, gg)
    pre : (T, B, 4H) input-side gate preactivations, gate order (i, f, o, g)
    u   : (H, 4H)    recurrent weights
    h0, c0 : (B, H)  initial states
    h, c : hidden/cell state per step; tc = tanh(c); g* = gate activations

  lstm_backward(u, h, c, tc, gi, gf, go, gg, h0, c0, dh_out)
      -> (dpre, du, dh0, dc0)
    dh_out : (T, B, H) gradient arriving at each h[t] from outside the
    recurrence. dpre chains back to input weights/bias/inputs outside.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "pure"


def lstm_forward(pre, u, h0, c0):
    T, B, H4 = pre.shape
    H = H4 // 4
    h = np.empty((T, B, H))
    c = np.empty((T, B, H))
    tc = np.empty((T, B, H))
    gi = np.empty((T, B, H))
    gf = np.empty((T, B, H))
    go = np.empty((T, B, H))
    gg = np.empty((T, B, H))
    h_prev, c_prev = h0, c0
    for t in range(T):
        z = pre[t] + h_prev @ u
        with np.errstate(over="ignore"):  # saturated sigmoid underflows to 0, which is correct
            sig = 1.0 / (1.0 + np.exp(-z[:, : 3 * H]))
        gi[t] = sig[:, :H]
        gf[t] = sig[:, H : 2 * H]
        go[t] = sig[:, 2 * H :]
        gg[t] = np.tanh(z[:, 3 * H :])
        c[t] = gf[t] * c_prev + gi[t] * gg[t]
        tc[t] = np.tanh(c[t])
        h[t] = go[t] * tc[t]
        h_prev, c_prev = h[t], c[t]
    return h, c, tc, gi, gf, go, gg


def lstm_backward(u, h, c, tc, gi, gf, go, gg, h0, c0, dh_out):
    T, B, H = h.shape
    dpre = np.empty((T, B, 4 * H))
    du = np.zeros_like(u)
    dh_rec = np.zeros((B, H))
    dc_rec = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dh_out[t] + dh_rec
        dc = dc_rec + dh * go[t] * (1.0 - tc[t] * tc[t])
        c_prev = c[t - 1] if t > 0 else c0
        h_prev = h[t - 1] if t > 0 else h0
        dpre[t, :, :H] = dc * gg[t] * gi[t] * (1.0 - gi[t])
        dpre[t, :, H : 2 * H] = dc * c_prev * gf[t] * (1.0 - gf[t])
        dpre[t, :, 2 * H : 3 * H] = dh * tc[t] * go[t] * (1.0 - go[t])
        dpre[t, :, 3 * H :] = dc * gi[t] * (1.0 - gg[t] * gg[t])
        dz = dpre[t]
        du += h_prev.T @ dz
        dh_rec = dz @ u.T
        dc_rec = dc * gf[t]
    return dpre, du, dh_rec, dc_rec
