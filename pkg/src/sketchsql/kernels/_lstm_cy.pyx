# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM sequence kernel.

Same gate layout and recurrences as lstm_numpy; the time loop and the small
recurrent matmuls run as C loops. The input projection x @ wx is still BLAS
(done once for the whole sequence before entering the loop).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()

NAME = "cython"


cdef inline double _sigmoid(double v) nogil:
    if v >= 0.0:
        return 1.0 / (1.0 + exp(-v))
    cdef double e = exp(v)
    return e / (1.0 + e)


def lstm_forward(x, h0, c0, wx, wh, b):
    if x.shape[0] == 0:
        raise ValueError("lstm_forward: empty sequence")
    cdef cnp.ndarray[double, ndim=2] base = np.ascontiguousarray(x @ wx + b)
    cdef cnp.ndarray[double, ndim=2] wh_arr = np.ascontiguousarray(wh)
    cdef int steps = base.shape[0]
    cdef int hidden = h0.shape[0]
    cdef cnp.ndarray[double, ndim=2] gates = np.empty((steps, 4 * hidden))
    cdef cnp.ndarray[double, ndim=2] h_seq = np.empty((steps, hidden))
    cdef cnp.ndarray[double, ndim=2] c_seq = np.empty((steps, hidden))
    cdef cnp.ndarray[double, ndim=1] h = np.ascontiguousarray(h0).copy()
    cdef cnp.ndarray[double, ndim=1] c = np.ascontiguousarray(c0).copy()

    cdef double[:, ::1] base_v = base
    cdef double[:, ::1] wh_v = wh_arr
    cdef double[:, ::1] gates_v = gates
    cdef double[:, ::1] hs_v = h_seq
    cdef double[:, ::1] cs_v = c_seq
    cdef double[::1] h_v = h
    cdef double[::1] c_v = c

    cdef int t, j, k
    cdef double acc, i_g, f_g, g_g, o_g
    cdef cnp.ndarray[double, ndim=1] pre = np.empty(4 * hidden)
    cdef double[::1] pre_v = pre

    with nogil:
        for t in range(steps):
            for j in range(4 * hidden):
                acc = base_v[t, j]
                for k in range(hidden):
                    acc += h_v[k] * wh_v[k, j]
                pre_v[j] = acc
            for j in range(hidden):
                i_g = _sigmoid(pre_v[j])
                f_g = _sigmoid(pre_v[hidden + j])
                g_g = tanh(pre_v[2 * hidden + j])
                o_g = _sigmoid(pre_v[3 * hidden + j])
                c_v[j] = f_g * c_v[j] + i_g * g_g
                h_v[j] = o_g * tanh(c_v[j])
                gates_v[t, j] = i_g
                gates_v[t, hidden + j] = f_g
                gates_v[t, 2 * hidden + j] = g_g
                gates_v[t, 3 * hidden + j] = o_g
                hs_v[t, j] = h_v[j]
                cs_v[t, j] = c_v[j]
    return h_seq, (x, h0, c0, wx, wh, h_seq, c_seq, gates)


def lstm_backward(cache, d_hseq):
    x_in, h0, c0, wx, wh, h_seq, c_seq, gates = cache
    cdef cnp.ndarray[double, ndim=2] x = np.ascontiguousarray(x_in)
    cdef cnp.ndarray[double, ndim=2] wx_arr = np.ascontiguousarray(wx)
    cdef cnp.ndarray[double, ndim=2] wh_arr = np.ascontiguousarray(wh)
    cdef cnp.ndarray[double, ndim=2] hs = np.ascontiguousarray(h_seq)
    cdef cnp.ndarray[double, ndim=2] cs = np.ascontiguousarray(c_seq)
    cdef cnp.ndarray[double, ndim=2] gs = np.ascontiguousarray(gates)
    cdef cnp.ndarray[double, ndim=2] dh_in = np.ascontiguousarray(d_hseq)
    cdef cnp.ndarray[double, ndim=1] h0_arr = np.ascontiguousarray(h0)
    cdef cnp.ndarray[double, ndim=1] c0_arr = np.ascontiguousarray(c0)

    cdef int steps = hs.shape[0]
    cdef int hidden = hs.shape[1]
    cdef int in_dim = x.shape[1]

    cdef cnp.ndarray[double, ndim=2] dx = np.zeros((steps, in_dim))
    cdef cnp.ndarray[double, ndim=2] dwx = np.zeros((in_dim, 4 * hidden))
    cdef cnp.ndarray[double, ndim=2] dwh = np.zeros((hidden, 4 * hidden))
    cdef cnp.ndarray[double, ndim=1] db = np.zeros(4 * hidden)
    cdef cnp.ndarray[double, ndim=1] dh_next = np.zeros(hidden)
    cdef cnp.ndarray[double, ndim=1] dc_next = np.zeros(hidden)
    cdef cnp.ndarray[double, ndim=1] dpre = np.empty(4 * hidden)

    cdef double[:, ::1] x_v = x
    cdef double[:, ::1] wx_v = wx_arr
    cdef double[:, ::1] wh_v = wh_arr
    cdef double[:, ::1] hs_v = hs
    cdef double[:, ::1] cs_v = cs
    cdef double[:, ::1] gs_v = gs
    cdef double[:, ::1] dh_v = dh_in
    cdef double[::1] h0_v = h0_arr
    cdef double[::1] c0_v = c0_arr
    cdef double[:, ::1] dx_v = dx
    cdef double[:, ::1] dwx_v = dwx
    cdef double[:, ::1] dwh_v = dwh
    cdef double[::1] db_v = db
    cdef double[::1] dhn_v = dh_next
    cdef double[::1] dcn_v = dc_next
    cdef double[::1] dpre_v = dpre

    cdef int t, j, k
    cdef double i_g, f_g, g_g, o_g, c_t, c_prev, h_prev, tc, dh, dc, acc

    with nogil:
        for t in range(steps - 1, -1, -1):
            for j in range(hidden):
                i_g = gs_v[t, j]
                f_g = gs_v[t, hidden + j]
                g_g = gs_v[t, 2 * hidden + j]
                o_g = gs_v[t, 3 * hidden + j]
                c_t = cs_v[t, j]
                c_prev = cs_v[t - 1, j] if t > 0 else c0_v[j]
                tc = tanh(c_t)
                dh = dh_v[t, j] + dhn_v[j]
                dc = dcn_v[j] + dh * o_g * (1.0 - tc * tc)
                dpre_v[j] = dc * g_g * i_g * (1.0 - i_g)
                dpre_v[hidden + j] = dc * c_prev * f_g * (1.0 - f_g)
                dpre_v[2 * hidden + j] = dc * i_g * (1.0 - g_g * g_g)
                dpre_v[3 * hidden + j] = dh * tc * o_g * (1.0 - o_g)
                dcn_v[j] = dc * f_g
            for j in range(4 * hidden):
                db_v[j] += dpre_v[j]
                for k in range(in_dim):
                    dwx_v[k, j] += x_v[t, k] * dpre_v[j]
            if t > 0:
                for j in range(4 * hidden):
                    for k in range(hidden):
                        dwh_v[k, j] += hs_v[t - 1, k] * dpre_v[j]
            else:
                for j in range(4 * hidden):
                    for k in range(hidden):
                        dwh_v[k, j] += h0_v[k] * dpre_v[j]
            for k in range(in_dim):
                acc = 0.0
                for j in range(4 * hidden):
                    acc += dpre_v[j] * wx_v[k, j]
                dx_v[t, k] = acc
            for k in range(hidden):
                acc = 0.0
                for j in range(4 * hidden):
                    acc += dpre_v[j] * wh_v[k, j]
                dhn_v[k] = acc
    return dx, dh_next, dc_next, dwx, dwh, db
