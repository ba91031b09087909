"""Spherical augmentation versus class-dependent margins, and the ridgeless limit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..rng import stream
from .svm import solve_augmented_svm_2d, solve_cs_svm

COSINE_TOL = 1e-6


def radii_for(delta, w_norm):
    """Augmentation radius matching margin parameter ``delta``: ``(1/delta - 1) / ||w||``."""
    return (1.0 / delta - 1.0) / w_norm


def lemma2_check(X, y, delta_plus, delta_minus):
    """Solve both problems and compare their directions."""
    cs = solve_cs_svm(X, y, delta_plus, delta_minus)
    eps_p = radii_for(delta_plus, cs.objective)
    eps_m = radii_for(delta_minus, cs.objective)
    aug = solve_augmented_svm_2d(X, y, eps_p, eps_m)
    cos = float(cs.direction @ aug.direction)
    return {
        "delta_plus": float(delta_plus),
        "delta_minus": float(delta_minus),
        "eps_plus": float(eps_p),
        "eps_minus": float(eps_m),
        "cosine": cos,
        "cs_norm": cs.objective,
        "aug_min_slack": float(aug.active_margins.min()),
        "pass": bool(cos >= 1.0 - COSINE_TOL and aug.active_margins.min() >= -1e-8),
    }


def separable_pair(n, seed, mean=(2.0, 1.0), scale=0.6, gap=0.2):
    """Two Gaussian blobs at +-mean, kept only where ``y * <mean, x> > gap``.

    The filter guarantees a separator through the origin.
    """
    rng = stream(seed, "lemma2-data")
    mean = np.asarray(mean, dtype=np.float64)
    y = np.where(np.arange(n) < n // 2, 1.0, -1.0)
    X = np.empty((n, 2))
    u = mean / np.linalg.norm(mean)
    for i in range(n):
        while True:
            x = y[i] * mean + scale * rng.standard_normal(2)
            if y[i] * (x @ u) > gap:
                X[i] = x
                break
    return X, y


@dataclass
class BinaryLossParams:
    """Per-class (w, l, delta) for the +1 and -1 classes."""

    w_plus: float = 1.0
    w_minus: float = 1.0
    l_plus: float = 0.0
    l_minus: float = 0.0
    delta_plus: float = 1.0
    delta_minus: float = 1.0

    def per_point(self, y):
        pos = y > 0
        return (np.where(pos, self.w_plus, self.w_minus),
                np.where(pos, self.l_plus, self.l_minus),
                np.where(pos, self.delta_plus, self.delta_minus))


def ridgeless_direction(X, y, params=None, epochs=4000, eta=0.5, seed=0):
    """Normalized gradient descent on ``w_y log(1 + e^{l_y} e^{-delta_y y <theta, x>})``.

    Returns the per-epoch cosine to the class-dependent-margin SVM direction
    (margins ``1/delta_y``) and the final iterate.
    """
    params = params or BinaryLossParams()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ref = solve_cs_svm(X, y, params.delta_plus, params.delta_minus).direction
    wy, ly, dy = params.per_point(y)
    theta0 = 1e-3 * stream(seed, "ridgeless-init").standard_normal(X.shape[1])
    theta, cos = kernels.ngd_vs_binary(X, y, wy, ly, dy, theta0, float(eta), int(epochs), ref)
    tail = cos[len(cos) // 2:]
    return {
        "cosines": cos,
        "theta": theta,
        "reference": ref,
        "final_cosine": float(cos[-1]),
        "tail_nondecreasing_frac": float(np.mean(np.diff(tail) >= -1e-12)) if len(tail) > 1 else 1.0,
        "tail_trend": float(tail[-1] - tail[0]) if len(tail) else 0.0,
    }
