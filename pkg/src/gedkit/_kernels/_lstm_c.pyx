# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled LSTM recurrence kernels.

Same contract as the pure backend (see pyref.py). The per-step recurrent
matmul goes through BLAS dgemm; gate nonlinearities run in flat exp-only
loops the C compiler can vectorize, and the cell update is a single fused
pass, removing the per-step temporaries of the numpy fallback.

Gate inputs are clamped to +/-40 (sigmoid) and +/-20 (tanh) before exp;
both saturate at double precision well inside those bounds, so results
match the fallback to ~1e-15 while keeping exp() overflow-free.
"""

import numpy as np

from libc.math cimport exp
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

BACKEND_NAME = "compiled"


cdef void _gemm_ab(int m, int n, int k, double* a, double* b, double beta, double* c) noexcept nogil:
    # row-major C(m,n) = A(m,k) @ B(k,n) + beta*C
    cdef char nt = b'N'
    cdef double one = 1.0
    dgemm(&nt, &nt, &n, &m, &k, &one, b, &n, a, &k, &beta, c, &n)


cdef void _gemm_abT(int m, int n, int k, double* a, double* b, double beta, double* c) noexcept nogil:
    # row-major C(m,n) = A(m,k) @ B(n,k)^T + beta*C
    cdef char tt = b'T'
    cdef char nt = b'N'
    cdef double one = 1.0
    dgemm(&tt, &nt, &n, &m, &k, &one, b, &k, a, &k, &beta, c, &n)


cdef void _gemm_aTb(int m, int n, int k, double* a, double* b, double beta, double* c) noexcept nogil:
    # row-major C(m,n) = A(k,m)^T @ B(k,n) + beta*C
    cdef char nt = b'N'
    cdef char tt = b'T'
    cdef double one = 1.0
    dgemm(&nt, &tt, &n, &m, &k, &one, b, &n, a, &m, &beta, c, &n)


cdef inline void _sigmoid_block(double* x, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double v
    for i in range(n):
        v = x[i]
        if v > 40.0:
            v = 40.0
        elif v < -40.0:
            v = -40.0
        x[i] = 1.0 / (1.0 + exp(-v))


cdef inline void _tanh_block(double* x, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double v, e
    for i in range(n):
        v = x[i]
        if v > 20.0:
            v = 20.0
        elif v < -20.0:
            v = -20.0
        e = exp(2.0 * v)
        x[i] = (e - 1.0) / (e + 1.0)


def lstm_forward(pre_in, u_in, h0_in, c0_in):
    cdef double[:, :, ::1] pre = np.ascontiguousarray(pre_in, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef double[:, ::1] h0 = np.ascontiguousarray(h0_in, dtype=np.float64)
    cdef double[:, ::1] c0 = np.ascontiguousarray(c0_in, dtype=np.float64)
    cdef Py_ssize_t T = pre.shape[0], B = pre.shape[1], H4 = pre.shape[2]
    cdef Py_ssize_t H = H4 // 4

    h_arr = np.empty((T, B, H))
    c_arr = np.empty((T, B, H))
    tc_arr = np.empty((T, B, H))
    gi_arr = np.empty((T, B, H))
    gf_arr = np.empty((T, B, H))
    go_arr = np.empty((T, B, H))
    gg_arr = np.empty((T, B, H))
    z_arr = np.empty((B, H4))
    cdef double[:, :, ::1] h = h_arr, c = c_arr, tc = tc_arr
    cdef double[:, :, ::1] gi = gi_arr, gf = gf_arr, go = go_arr, gg = gg_arr
    cdef double[:, ::1] z = z_arr

    cdef Py_ssize_t t, b, k
    cdef double* h_prev
    cdef double* c_prev_row
    cdef double* zrow
    cdef double cc
    with nogil:
        for t in range(T):
            memcpy(&z[0, 0], &pre[t, 0, 0], B * H4 * sizeof(double))
            h_prev = &h0[0, 0] if t == 0 else &h[t - 1, 0, 0]
            _gemm_ab(<int> B, <int> H4, <int> H, h_prev, &u[0, 0], 1.0, &z[0, 0])
            for b in range(B):
                zrow = &z[b, 0]
                _sigmoid_block(zrow, 3 * H)
                _tanh_block(zrow + 3 * H, H)
                c_prev_row = &c0[b, 0] if t == 0 else &c[t - 1, b, 0]
                for k in range(H):
                    gi[t, b, k] = zrow[k]
                    gf[t, b, k] = zrow[H + k]
                    go[t, b, k] = zrow[2 * H + k]
                    gg[t, b, k] = zrow[3 * H + k]
                    cc = zrow[H + k] * c_prev_row[k] + zrow[k] * zrow[3 * H + k]
                    c[t, b, k] = cc
                    tc[t, b, k] = cc
                _tanh_block(&tc[t, b, 0], H)
                for k in range(H):
                    h[t, b, k] = go[t, b, k] * tc[t, b, k]
    return h_arr, c_arr, tc_arr, gi_arr, gf_arr, go_arr, gg_arr


def lstm_backward(u_in, h_in, c_in, tc_in, gi_in, gf_in, go_in, gg_in, h0_in, c0_in, dh_out_in):
    cdef double[:, ::1] u = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef double[:, :, ::1] h = np.ascontiguousarray(h_in, dtype=np.float64)
    cdef double[:, :, ::1] c = np.ascontiguousarray(c_in, dtype=np.float64)
    cdef double[:, :, ::1] tc = np.ascontiguousarray(tc_in, dtype=np.float64)
    cdef double[:, :, ::1] gi = np.ascontiguousarray(gi_in, dtype=np.float64)
    cdef double[:, :, ::1] gf = np.ascontiguousarray(gf_in, dtype=np.float64)
    cdef double[:, :, ::1] go = np.ascontiguousarray(go_in, dtype=np.float64)
    cdef double[:, :, ::1] gg = np.ascontiguousarray(gg_in, dtype=np.float64)
    cdef double[:, ::1] h0 = np.ascontiguousarray(h0_in, dtype=np.float64)
    cdef double[:, ::1] c0 = np.ascontiguousarray(c0_in, dtype=np.float64)
    cdef double[:, :, ::1] dh_out = np.ascontiguousarray(dh_out_in, dtype=np.float64)
    cdef Py_ssize_t T = h.shape[0], B = h.shape[1], H = h.shape[2]
    cdef Py_ssize_t H4 = 4 * H

    dpre_arr = np.empty((T, B, H4))
    du_arr = np.zeros((H, H4))
    dh_rec_arr = np.zeros((B, H))
    dc_rec_arr = np.zeros((B, H))
    cdef double[:, :, ::1] dpre = dpre_arr
    cdef double[:, ::1] du = du_arr, dh_rec = dh_rec_arr, dc_rec = dc_rec_arr

    cdef Py_ssize_t t, b, k
    cdef double* c_prev_row
    cdef double* h_prev
    cdef double dh, dc, cp, i_, f_, o_, g_, tcv
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                c_prev_row = &c0[b, 0] if t == 0 else &c[t - 1, b, 0]
                for k in range(H):
                    i_ = gi[t, b, k]
                    f_ = gf[t, b, k]
                    o_ = go[t, b, k]
                    g_ = gg[t, b, k]
                    tcv = tc[t, b, k]
                    dh = dh_out[t, b, k] + dh_rec[b, k]
                    dc = dc_rec[b, k] + dh * o_ * (1.0 - tcv * tcv)
                    cp = c_prev_row[k]
                    dpre[t, b, k] = dc * g_ * i_ * (1.0 - i_)
                    dpre[t, b, H + k] = dc * cp * f_ * (1.0 - f_)
                    dpre[t, b, 2 * H + k] = dh * tcv * o_ * (1.0 - o_)
                    dpre[t, b, 3 * H + k] = dc * i_ * (1.0 - g_ * g_)
                    dc_rec[b, k] = dc * f_
            h_prev = &h0[0, 0] if t == 0 else &h[t - 1, 0, 0]
            # du += h_prev^T @ dz ; dh_rec = dz @ u^T
            _gemm_aTb(<int> H, <int> H4, <int> B, h_prev, &dpre[t, 0, 0], 1.0, &du[0, 0])
            _gemm_abT(<int> B, <int> H, <int> H4, &dpre[t, 0, 0], &u[0, 0], 0.0, &dh_rec[0, 0])
    return dpre_arr, du_arr, dh_rec_arr, dc_rec_arr
