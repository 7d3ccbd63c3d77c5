# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled conv1d+tanh kernels. Semantics match kernels.py numpy fallback."""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh

cnp.import_array()


def conv1d_tanh_forward(double[:, ::1] M, double[:, :, ::1] W, double[::1] b):
    cdef Py_ssize_t s = M.shape[0]
    cdef Py_ssize_t d_in = M.shape[1]
    cdef Py_ssize_t w = W.shape[0]
    cdef Py_ssize_t d_out = W.shape[1]
    cdef Py_ssize_t off = w // 2
    cdef Py_ssize_t i, j, o, k, t
    cdef double acc

    out = np.empty((s, d_out), dtype=np.float64)
    cdef double[:, ::1] C = out

    for i in range(s):
        for o in range(d_out):
            C[i, o] = b[o]
        for j in range(w):
            t = i + j - off
            if t < 0 or t >= s:
                continue
            for o in range(d_out):
                acc = 0.0
                for k in range(d_in):
                    acc += W[j, o, k] * M[t, k]
                C[i, o] += acc
        for o in range(d_out):
            C[i, o] = tanh(C[i, o])
    return out


def conv1d_tanh_backward(double[:, ::1] M, double[:, :, ::1] W,
                         double[:, ::1] C, double[:, ::1] dC):
    cdef Py_ssize_t s = M.shape[0]
    cdef Py_ssize_t d_in = M.shape[1]
    cdef Py_ssize_t w = W.shape[0]
    cdef Py_ssize_t d_out = W.shape[1]
    cdef Py_ssize_t off = w // 2
    cdef Py_ssize_t i, j, o, k, t
    cdef double g

    dM_arr = np.zeros((s, d_in), dtype=np.float64)
    dW_arr = np.zeros((w, d_out, d_in), dtype=np.float64)
    db_arr = np.zeros(d_out, dtype=np.float64)
    cdef double[:, ::1] dM = dM_arr
    cdef double[:, :, ::1] dW = dW_arr
    cdef double[::1] db = db_arr

    for i in range(s):
        for o in range(d_out):
            # d tanh(p) / d p = 1 - tanh(p)^2
            g = dC[i, o] * (1.0 - C[i, o] * C[i, o])
            if g == 0.0:
                continue
            db[o] += g
            for j in range(w):
                t = i + j - off
                if t < 0 or t >= s:
                    continue
                for k in range(d_in):
                    dW[j, o, k] += g * M[t, k]
                    dM[t, k] += g * W[j, o, k]
    return dM_arr, dW_arr, db_arr
