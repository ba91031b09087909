"""Explicit-loop versions of the kernels, written for ``numba.njit``.

Each function mirrors its counterpart in ``_numpy`` and must return
identical results (bit-for-bit for the integer kernels).
"""

import math

import numpy as np


def vs_grid_counts(f0, f1, labels, key, n_keys, w_grid, b_grid):
    # For fixed w, ``w*f0 + b >= f1`` is monotone in b, so each point flips
    # prediction at one grid index found by bisection on the exact predicate.
    # Errors then accumulate through a difference array over b.
    nw, nb, n = len(w_grid), len(b_grid), len(f0)
    out = np.zeros((nw, nb, n_keys), dtype=np.int64)
    diff = np.zeros((nb + 1, n_keys), dtype=np.int64)
    for i in range(nw):
        w = w_grid[i]
        diff[:, :] = 0
        for k in range(n):
            wf = w * f0[k]
            lo, hi = 0, nb
            while lo < hi:
                mid = (lo + hi) // 2
                if wf + b_grid[mid] >= f1[k]:
                    hi = mid
                else:
                    lo = mid + 1
            # class 0 predicted for b index >= lo
            if labels[k] == 0:
                diff[0, key[k]] += 1
                diff[lo, key[k]] -= 1
            else:
                diff[lo, key[k]] += 1
        for c in range(n_keys):
            run = 0
            for j in range(nb):
                run += diff[j, c]
                out[i, j, c] = run
    return out


def min_margins(angles, X, y, eps_pos, eps_neg):
    na, n = len(angles), X.shape[0]
    out = np.empty(na)
    for a in range(na):
        c, s = math.cos(angles[a]), math.sin(angles[a])
        best = np.inf
        for i in range(n):
            e = eps_pos if y[i] > 0 else eps_neg
            v = y[i] * (c * X[i, 0] + s * X[i, 1]) - e
            if v < best:
                best = v
        out[a] = best
    return out


def cs_svm_dual(Q, m, max_iter, tol):
    n = len(m)
    L = np.linalg.eigvalsh(Q)[-1] if n > 0 else 1.0
    step = 1.0 / max(L, 1e-300)
    a = np.zeros(n)
    z = np.zeros(n)
    a_new = np.zeros(n)
    t = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        gz = m - np.dot(Q, z)
        for i in range(n):
            v = z[i] + step * gz[i]
            a_new[i] = v if v > 0.0 else 0.0
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        for i in range(n):
            z[i] = a_new[i] + mom * (a_new[i] - a[i])
            a[i] = a_new[i]
        t = t_new
        if it % 10 == 0:
            res = 0.0
            ga = m - np.dot(Q, a)
            for i in range(n):
                g = ga[i]
                r = abs(g) if a[i] > 0.0 else max(g, 0.0)
                if r > res:
                    res = r
            if res <= tol:
                break
    return a, it


def ngd_vs_binary(X, y, wy, ly, dy, theta0, eta, epochs, ref):
    n, d = X.shape
    theta = theta0.astype(np.float64).copy()
    rn = 0.0
    for j in range(d):
        rn += ref[j] * ref[j]
    rn = math.sqrt(rn)
    cos = np.empty(epochs)
    logc = np.empty(n)
    g = np.empty(d)
    for e in range(epochs):
        mx = -np.inf
        for i in range(n):
            s = 0.0
            for j in range(d):
                s += X[i, j] * theta[j]
            z = ly[i] - dy[i] * y[i] * s
            # log sigmoid(z) = -log(1 + exp(-z)), computed stably
            if z >= 0:
                lsig = -math.log1p(math.exp(-z))
            else:
                lsig = z - math.log1p(math.exp(z))
            logc[i] = math.log(wy[i] * dy[i]) + lsig
            if logc[i] > mx:
                mx = logc[i]
        for j in range(d):
            g[j] = 0.0
        for i in range(n):
            c = math.exp(logc[i] - mx)
            for j in range(d):
                g[j] -= c * y[i] * X[i, j]
        gn = 0.0
        for j in range(d):
            gn += g[j] * g[j]
        gn = math.sqrt(gn)
        tn = 0.0
        dotr = 0.0
        for j in range(d):
            theta[j] -= eta * g[j] / gn
            tn += theta[j] * theta[j]
            dotr += theta[j] * ref[j]
        cos[e] = dotr / (rn * math.sqrt(tn))
    return theta, cos
