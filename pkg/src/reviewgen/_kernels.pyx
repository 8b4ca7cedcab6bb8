# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels. See _kernels_py.py for semantics."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def lcs_length(a, b):
    cdef long[::1] aa = np.ascontiguousarray(a, dtype=np.int64) if len(a) else np.zeros(0, np.int64)
    cdef long[::1] bb = np.ascontiguousarray(b, dtype=np.int64) if len(b) else np.zeros(0, np.int64)
    cdef Py_ssize_t n = aa.shape[0], m = bb.shape[0], i, j
    if n == 0 or m == 0:
        return 0
    cdef long[::1] prev = np.zeros(m + 1, np.int64)
    cdef long[::1] cur = np.zeros(m + 1, np.int64)
    cdef long[::1] tmp
    cdef long ai
    for i in range(n):
        ai = aa[i]
        cur[0] = 0
        for j in range(m):
            if ai == bb[j]:
                cur[j + 1] = prev[j] + 1
            elif cur[j] > prev[j + 1]:
                cur[j + 1] = cur[j]
            else:
                cur[j + 1] = prev[j + 1]
        tmp = prev
        prev = cur
        cur = tmp
    return int(prev[m])


def gru_combine_forward(double[:, ::1] z, double[:, ::1] h, double[:, ::1] pre_h,
                        double[::1] mask):
    cdef Py_ssize_t B = z.shape[0], D = z.shape[1], i, j
    # numpy's vectorized tanh beats a scalar libm loop; only the blend is fused
    hc_arr = np.tanh(np.asarray(pre_h))
    out_arr = np.empty((B, D))
    cdef double[:, ::1] hc = hc_arr
    cdef double[:, ::1] out = out_arr
    cdef double m
    for i in range(B):
        m = mask[i]
        for j in range(D):
            out[i, j] = h[i, j] + m * (z[i, j] * (hc[i, j] - h[i, j]))
    return hc_arr, out_arr


def gru_combine_backward(double[:, ::1] g, double[::1] mask, double[:, ::1] z,
                         double[:, ::1] h, double[:, ::1] hc):
    cdef Py_ssize_t B = g.shape[0], D = g.shape[1], i, j
    dz_arr = np.empty((B, D))
    dp_arr = np.empty((B, D))
    dh_arr = np.empty((B, D))
    cdef double[:, ::1] dz = dz_arr
    cdef double[:, ::1] dp = dp_arr
    cdef double[:, ::1] dh = dh_arr
    cdef double gm, zz, c
    for i in range(B):
        for j in range(D):
            gm = g[i, j] * mask[i]
            zz = z[i, j]
            c = hc[i, j]
            dz[i, j] = gm * (c - h[i, j]) * zz * (1.0 - zz)
            dp[i, j] = gm * zz * (1.0 - c * c)
            dh[i, j] = g[i, j] - gm * zz
    return dz_arr, dp_arr, dh_arr


def gru_reset_backward(double[:, ::1] d_rh, double[:, ::1] h, double[:, ::1] r):
    cdef Py_ssize_t B = d_rh.shape[0], D = d_rh.shape[1], i, j
    dr_arr = np.empty((B, D))
    dh_arr = np.empty((B, D))
    cdef double[:, ::1] dr = dr_arr
    cdef double[:, ::1] dh = dh_arr
    cdef double rr
    for i in range(B):
        for j in range(D):
            rr = r[i, j]
            dr[i, j] = d_rh[i, j] * h[i, j] * rr * (1.0 - rr)
            dh[i, j] = d_rh[i, j] * rr
    return dr_arr, dh_arr
