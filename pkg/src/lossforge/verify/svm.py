"""Homogeneous cost-sensitive and augmented hard-margin SVMs (no intercept)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import InfeasibleError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class SvmSolution:
    w: np.ndarray
    objective: float
    active_margins: np.ndarray
    dual: np.ndarray | None = None
    kkt: dict = field(default_factory=dict)

    @property
    def direction(self):
        return self.w / np.linalg.norm(self.w)


def _labels(y):
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +1 / -1")
    return y


def cs_margins(y, delta_plus, delta_minus):
    if delta_plus <= 0 or delta_minus <= 0:
        raise ValueError("margin parameters must be positive")
    return np.where(y > 0, 1.0 / delta_plus, 1.0 / delta_minus)


def _polish(A, m, a):
    """Re-solve the equality system on the estimated support.

    Returns a refined dual vector, or None when the refinement is not a
    valid KKT point.
    """
    n = len(m)
    w = A.T @ a
    slack = A @ w - m
    scale = max(1.0, float(np.max(m)))
    for thresh in (1e-6, 1e-4, 1e-3):
        S = np.flatnonzero((a > thresh * max(a.max(), 1e-300)) | (slack < thresh * scale))
        if len(S) == 0:
            continue
        As = A[S]
        sol, *_ = np.linalg.lstsq(As @ As.T, m[S], rcond=None)
        if np.any(sol < -1e-12):
            continue
        cand = np.zeros(n)
        cand[S] = np.maximum(sol, 0.0)
        wc = A.T @ cand
        if np.all(A @ wc - m >= -1e-10 * scale):
            return cand
    return None


def solve_cs_svm(X, y, delta_plus, delta_minus, max_iter=200000, tol=1e-12):
    """Minimum-norm ``w`` with ``w.x >= 1/delta_plus`` on positives and
    ``w.x <= -1/delta_minus`` on negatives.

    Solved through the dual by accelerated projected gradient, then polished
    on the active set.  ``kkt`` reports the residuals of the normalized
    problem ``min ||w||`` whose multipliers are ``dual / ||w||``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 1 and len(np.atleast_1d(y)) > 1:
        X = X.T
    y = _labels(y)
    m = cs_margins(y, delta_plus, delta_minus)
    A = X * y[:, None]
    Q = A @ A.T
    a, _ = kernels.cs_svm_dual(Q, m, max_iter, tol)
    pol = _polish(A, m, a)
    if pol is not None:
        a = pol
    w = A.T @ a
    slack = A @ w - m
    scale = float(np.max(m))
    if not np.all(np.isfinite(w)) or np.linalg.norm(w) == 0 or slack.min() < -1e-8 * scale:
        raise InfeasibleError("no homogeneous separator meets the margins")
    norm = float(np.linalg.norm(w))
    an = a / norm
    kkt = {
        "dual_min": float(a.min()),
        "complementary": float(np.max(np.abs(a * slack))),
        "stationarity": float(np.linalg.norm(A.T @ an - w / norm)),
        "primal_violation": float(max(0.0, -slack.min())),
    }
    return SvmSolution(w, norm, slack, a, kkt)


def augmented_radius(X, y, u, eps_plus, eps_minus):
    """Smallest ``r`` making ``w = r u`` feasible for the augmented constraints, or inf."""
    y = _labels(y)
    eps = np.where(y > 0, eps_plus, eps_minus)
    mm = float(np.min(y * (X @ u) - eps))
    return 1.0 / mm if mm > 0 else math.inf


def solve_augmented_svm_2d(X, y, eps_plus, eps_minus, grid=3600, tol=1e-10):
    """Minimum-norm ``w`` with ``w.x - eps_plus ||w|| >= 1`` (positives) and
    ``w.x + eps_minus ||w|| <= -1`` (negatives), in two dimensions.

    Along direction ``u`` the smallest feasible norm is ``1 / min_i(y_i u.x_i - eps_i)``,
    so the problem reduces to maximizing that minimum over the angle: a grid
    scan followed by golden-section refinement.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValueError("augmented SVM solver is two-dimensional")
    if eps_plus < 0 or eps_minus < 0:
        raise ValueError("radii must be nonnegative")
    y = _labels(y)
    step = 2.0 * math.pi / grid
    angles = np.arange(grid) * step
    scores = kernels.min_margins(angles, X, y, float(eps_plus), float(eps_minus))
    k = int(np.argmax(scores))
    if scores[k] <= 0:
        # a feasible arc narrower than the grid spacing is still possible; scan finer once
        angles = np.arange(grid * 50) * (step / 50)
        scores = kernels.min_margins(angles, X, y, float(eps_plus), float(eps_minus))
        k = int(np.argmax(scores))
        step /= 50
        if scores[k] <= 0:
            raise InfeasibleError("no direction clears the augmentation radii")

    def f(t):
        return kernels.min_margins(np.array([t]), X, y, float(eps_plus), float(eps_minus))[0]

    lo, hi = angles[k] - step, angles[k] + step
    c, d = hi - GOLDEN * (hi - lo), lo + GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - GOLDEN * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + GOLDEN * (hi - lo)
            fd = f(d)
    t = 0.5 * (lo + hi)
    best = f(t)
    if best < scores[k]:
        t, best = angles[k], scores[k]
    u = np.array([math.cos(t), math.sin(t)])
    w = u / best
    slack = augmented_slack(X, y, w, eps_plus, eps_minus)
    return SvmSolution(w, float(np.linalg.norm(w)), slack)


def augmented_slack(X, y, w, eps_plus, eps_minus):
    """``y_i w.x_i - eps_i ||w|| - 1`` for every point (audit, solver-independent)."""
    y = _labels(y)
    eps = np.where(y > 0, eps_plus, eps_minus)
    return y * (np.asarray(X) @ w) - eps * np.linalg.norm(w) - 1.0
