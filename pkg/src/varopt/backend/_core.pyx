# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot per-step loops.

Same arithmetic, same operation order as varopt.backend.fallback; these
exist purely to remove interpreter overhead from the sequential mesh
recursions, which dominate the runtime of large ensemble runs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

NAME = "cython"


def mirror_run(x0, dual_steps, int map_kind, m_diag):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x0_ = np.ascontiguousarray(x0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d_ = np.ascontiguousarray(dual_steps, dtype=np.float64)
    cdef Py_ssize_t steps = d_.shape[0]
    cdef Py_ssize_t d = d_.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] path = np.empty((steps + 1, d))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] minv
    cdef Py_ssize_t k, i
    cdef double xi
    for i in range(d):
        path[0, i] = x0_[i]
    if map_kind == 0:
        minv = 1.0 / np.ascontiguousarray(m_diag, dtype=np.float64)
        for k in range(steps):
            for i in range(d):
                path[k + 1, i] = path[k, i] - d_[k, i] * minv[i]
    elif map_kind == 1:
        for k in range(steps):
            for i in range(d):
                path[k + 1, i] = path[k, i] * exp(-d_[k, i])
    else:
        raise ValueError(f"unknown map_kind {map_kind}")
    return path


def affine_sgd_run(x0, zbar, scale, m_diag):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x0_ = np.ascontiguousarray(x0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] z_ = np.ascontiguousarray(zbar, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s_ = np.ascontiguousarray(scale, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] minv = 1.0 / np.ascontiguousarray(m_diag, dtype=np.float64)
    cdef Py_ssize_t steps = z_.shape[0]
    cdef Py_ssize_t d = z_.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] path = np.empty((steps + 1, d))
    cdef Py_ssize_t k, i
    for i in range(d):
        path[0, i] = x0_[i]
    for k in range(steps):
        for i in range(d):
            path[k + 1, i] = path[k, i] - s_[k] * (path[k, i] - z_[k, i]) * minv[i]
    return path


def kalman_filter_run(g_stream, a_tilde, l_tilde, b_vec, double sigma_disc, p0):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] g_ = np.ascontiguousarray(g_stream, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a_ = np.ascontiguousarray(np.atleast_2d(a_tilde), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] l_ = np.ascontiguousarray(np.atleast_2d(l_tilde), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b_ = np.ascontiguousarray(np.atleast_1d(b_vec), dtype=np.float64)
    cdef Py_ssize_t steps = g_.shape[0]
    cdef Py_ssize_t d = g_.shape[1]
    cdef Py_ssize_t m = b_.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q = np.ascontiguousarray(l_.T @ l_)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.ascontiguousarray(np.atleast_2d(p0), dtype=np.float64).copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p_pred = np.empty((m, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] tmp = np.empty((m, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gain = np.zeros(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y_hat = np.zeros((d, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] y_path = np.empty((steps + 1, d, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gain_path = np.empty((steps, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s_path = np.empty(steps)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p_diag_path = np.empty((steps, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pred_row = np.empty(m)
    cdef double sig2 = sigma_disc * sigma_disc
    cdef double s, acc, innov
    cdef Py_ssize_t k, i, j, r

    y_path[0] = 0.0
    for k in range(steps):
        # p_pred = A p A' + Q, symmetrized
        for i in range(m):
            for j in range(m):
                acc = 0.0
                for r in range(m):
                    acc += p[i, r] * a_[j, r]
                tmp[i, j] = acc
        for i in range(m):
            for j in range(m):
                acc = q[i, j]
                for r in range(m):
                    acc += a_[i, r] * tmp[r, j]
                p_pred[i, j] = acc
        for i in range(m):
            for j in range(i + 1, m):
                acc = 0.5 * (p_pred[i, j] + p_pred[j, i])
                p_pred[i, j] = acc
                p_pred[j, i] = acc
        # innovation variance and gain
        s = sig2
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += p_pred[i, j] * b_[j]
            gain[i] = acc
        for i in range(m):
            s += b_[i] * gain[i]
        for i in range(m):
            gain[i] = gain[i] / s
        # p = (I - gain b') p_pred, symmetrized
        for i in range(m):
            for j in range(m):
                acc = p_pred[i, j]
                for r in range(m):
                    acc -= gain[i] * b_[r] * p_pred[r, j]
                p[i, j] = acc
        for i in range(m):
            for j in range(i + 1, m):
                acc = 0.5 * (p[i, j] + p[j, i])
                p[i, j] = acc
                p[j, i] = acc
        # mean update, row-wise
        for i in range(d):
            innov = g_[k, i]
            for j in range(m):
                acc = 0.0
                for r in range(m):
                    acc += y_hat[i, r] * a_[j, r]
                pred_row[j] = acc
            for j in range(m):
                innov -= pred_row[j] * b_[j]
            for j in range(m):
                y_hat[i, j] = pred_row[j] + innov * gain[j]
                y_path[k + 1, i, j] = y_hat[i, j]
        for j in range(m):
            gain_path[k, j] = gain[j]
            p_diag_path[k, j] = p[j, j]
        s_path[k] = s
    return np.asarray(y_path), np.asarray(gain_path), np.asarray(s_path), np.asarray(p_diag_path)


def momentum_filter_run(g_stream, p1_mat, k_inf):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] g_ = np.ascontiguousarray(g_stream, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p1 = np.ascontiguousarray(np.atleast_2d(p1_mat), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ki = np.ascontiguousarray(np.atleast_1d(k_inf), dtype=np.float64)
    cdef Py_ssize_t steps = g_.shape[0]
    cdef Py_ssize_t d = g_.shape[1]
    cdef Py_ssize_t m = ki.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] path = np.empty((steps + 1, d, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] row = np.empty(m)
    cdef Py_ssize_t k, i, j, r
    cdef double acc

    path[0] = 0.0
    for k in range(steps):
        for i in range(d):
            for j in range(m):
                acc = g_[k, i] * ki[j]
                for r in range(m):
                    acc += path[k, i, r] * p1[j, r]
                row[j] = acc
            for j in range(m):
                path[k + 1, i, j] = row[j]
    return np.asarray(path)
