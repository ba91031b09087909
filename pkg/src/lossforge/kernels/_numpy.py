"""Vectorized numpy reference implementations of the hot kernels."""

import numpy as np


def vs_grid_counts(f0, f1, labels, key, n_keys, w_grid, b_grid):
    """Misclassification counts per stratum for every (w, b) grid point.

    Prediction is class 0 iff ``w*f0 + b >= f1`` (ties to the lower index).
    Returns an int64 array of shape (len(w_grid), len(b_grid), n_keys).
    """
    onehot = np.zeros((n_keys, len(key)))
    onehot[key, np.arange(len(key))] = 1.0
    out = np.empty((len(w_grid), len(b_grid), n_keys), dtype=np.int64)
    is0 = labels == 0
    for i, w in enumerate(w_grid):
        pred0 = (w * f0)[:, None] + b_grid[None, :] >= f1[:, None]
        wrong = pred0 != is0[:, None]
        out[i] = np.rint(wrong.T.astype(np.float64) @ onehot.T).astype(np.int64)
    return out


def min_margins(angles, X, y, eps_pos, eps_neg):
    """``min_i y_i <u(angle), x_i> - eps_{y_i}`` for each angle."""
    U = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    eps = np.where(y > 0, eps_pos, eps_neg)
    marg = (U @ X.T) * y[None, :] - eps[None, :]
    return marg.min(axis=1)


def cs_svm_dual(Q, m, max_iter, tol):
    """Accelerated projected gradient ascent on ``m.a - a.Q.a/2`` over ``a >= 0``.

    Stops when the projected-gradient residual falls below ``tol``.
    Returns ``(alpha, iterations)``.
    """
    n = len(m)
    L = np.linalg.eigvalsh(Q)[-1] if n else 1.0
    step = 1.0 / max(L, 1e-300)
    a = np.zeros(n)
    z = a.copy()
    t = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        g = m - Q @ z
        a_new = np.maximum(z + step * g, 0.0)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = a_new + ((t - 1.0) / t_new) * (a_new - a)
        a, t = a_new, t_new
        if it % 10 == 0:
            ga = m - Q @ a
            res = np.abs(np.where(a > 0, ga, np.maximum(ga, 0.0))).max()
            if res <= tol:
                break
    return a, it


def ngd_vs_binary(X, y, wy, ly, dy, theta0, eta, epochs, ref):
    """Normalized gradient descent on the binary parametric loss.

    Loss per point: ``wy * log(1 + exp(ly - dy * y * <theta, x>))``.  The
    step direction is computed in log-space so it stays defined when every
    loss term underflows.  Returns ``(theta, cosines)`` with the cosine to
    ``ref`` after each epoch.
    """
    theta = theta0.astype(np.float64).copy()
    ref_n = ref / np.linalg.norm(ref)
    cos = np.empty(epochs)
    base = np.log(wy * dy)
    yx = X * y[:, None]
    for e in range(epochs):
        z = ly - dy * (yx @ theta)
        logc = base - np.logaddexp(0.0, -z)
        c = np.exp(logc - logc.max())
        g = -(c @ yx)
        theta = theta - eta * g / np.linalg.norm(g)
        cos[e] = theta @ ref_n / np.linalg.norm(theta)
    return theta, cos
