"""Pure-Python reference implementations of the hot per-step loops.

These are the fallback kernels used when the compiled extension is not
available (see varopt.backend.__init__).  Each function is a strict
sequential recursion over mesh steps; the compiled versions perform the
same arithmetic in the same order.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def mirror_run(x0, dual_steps, map_kind, m_diag):
    """Iterate X_{k+1} = grad_h*(grad_h(X_k) - D_k) over precomputed
    dual-space steps D (K x d).

    map_kind 0: quadratic with diagonal M (m_diag), so the update is
    X - D / M.  map_kind 1: negative entropy, X * exp(-D).
    Returns the (K+1) x d iterate path.
    """
    x0 = np.asarray(x0, dtype=float)
    dual_steps = np.asarray(dual_steps, dtype=float)
    steps, d = dual_steps.shape
    path = np.empty((steps + 1, d))
    path[0] = x0
    x = x0.copy()
    if map_kind == 0:
        minv = 1.0 / np.asarray(m_diag, dtype=float)
        for k in range(steps):
            x = x - dual_steps[k] * minv
            path[k + 1] = x
    elif map_kind == 1:
        for k in range(steps):
            x = x * np.exp(-dual_steps[k])
            path[k + 1] = x
    else:
        raise ValueError(f"unknown map_kind {map_kind}")
    return path


def affine_sgd_run(x0, zbar, scale, m_diag):
    """SGD on the quadratic sample-mean problem with a diagonal mirror map.

    The mini-batch gradient at X is X - zbar_k, so the recursion is the
    affine map X_{k+1} = X_k - s_k (X_k - zbar_k) / M.  Returns the
    (K+1) x d iterate path.
    """
    x0 = np.asarray(x0, dtype=float)
    zbar = np.asarray(zbar, dtype=float)
    scale = np.asarray(scale, dtype=float)
    steps, d = zbar.shape
    minv = 1.0 / np.asarray(m_diag, dtype=float)
    path = np.empty((steps + 1, d))
    path[0] = x0
    x = x0.copy()
    for k in range(steps):
        x = x - scale[k] * (x - zbar[k]) * minv
        path[k + 1] = x
    return path


def kalman_filter_run(g_stream, a_tilde, l_tilde, b_vec, sigma_disc, p0):
    """Time-invariant discrete Kalman recursion over a K x d stream.

    Returns (y_hat_path, gain_path, s_path, p_diag_path) with shapes
    (K+1, d, dtilde), (K, dtilde), (K,), (K, dtilde).
    """
    g_stream = np.asarray(g_stream, dtype=float)
    a_tilde = np.atleast_2d(np.asarray(a_tilde, dtype=float))
    l_tilde = np.atleast_2d(np.asarray(l_tilde, dtype=float))
    b_vec = np.atleast_1d(np.asarray(b_vec, dtype=float))
    steps, d = g_stream.shape
    dtilde = len(b_vec)
    q = l_tilde.T @ l_tilde
    eye = np.eye(dtilde)

    y_hat = np.zeros((d, dtilde))
    p = np.atleast_2d(np.asarray(p0, dtype=float)).copy()
    y_path = np.empty((steps + 1, d, dtilde))
    gain_path = np.empty((steps, dtilde))
    s_path = np.empty(steps)
    p_diag_path = np.empty((steps, dtilde))
    y_path[0] = y_hat
    sig2 = sigma_disc ** 2
    for k in range(steps):
        p_pred = a_tilde @ p @ a_tilde.T + q
        p_pred = 0.5 * (p_pred + p_pred.T)
        s = sig2 + float(b_vec @ p_pred @ b_vec)
        gain = p_pred @ b_vec / s
        p = (eye - np.outer(gain, b_vec)) @ p_pred
        p = 0.5 * (p + p.T)
        pred_mean = y_hat @ a_tilde.T
        y_hat = pred_mean + np.outer(g_stream[k] - pred_mean @ b_vec, gain)
        y_path[k + 1] = y_hat
        gain_path[k] = gain
        s_path[k] = s
        p_diag_path[k] = np.diag(p)
    return y_path, gain_path, s_path, p_diag_path


def momentum_filter_run(g_stream, p1_mat, k_inf):
    """Steady-state (generalized momentum) filter recursion
    y_hat <- y_hat P1' + g k_inf' over a K x d stream.

    Returns the (K+1) x d x dtilde filter path starting from zero.
    """
    g_stream = np.asarray(g_stream, dtype=float)
    p1_mat = np.atleast_2d(np.asarray(p1_mat, dtype=float))
    k_inf = np.atleast_1d(np.asarray(k_inf, dtype=float))
    steps, d = g_stream.shape
    dtilde = len(k_inf)
    y_hat = np.zeros((d, dtilde))
    path = np.empty((steps + 1, d, dtilde))
    path[0] = y_hat
    for k in range(steps):
        y_hat = y_hat @ p1_mat.T + np.outer(g_stream[k], k_inf)
        path[k + 1] = y_hat
    return path
