"""Validation-size trend for hyperparameter selection on a blended objective.

Binary Gaussian classes ``x ~ N(y mu, sigma^2 I)`` with priors ``(pi_+, pi_-)``.
A linear score ``s(x) = w.x + b`` has class-conditional errors in closed form,
so the population risk of every candidate is exact and only the selection
step is noisy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from ..rng import stream


@dataclass
class TrendProblem:
    dim: int = 2
    mean: list = field(default_factory=lambda: [1.0, 0.5])
    sigma: float = 1.0
    prior_pos: float = 0.1
    n_train: int = 200
    taus: list = field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0])
    lam: float = 0.5
    ridge: float = 1e-3


def sample(problem, n_pos, n_neg, rng):
    mu = np.asarray(problem.mean, dtype=np.float64)
    Xp = mu + problem.sigma * rng.standard_normal((n_pos, problem.dim))
    Xn = -mu + problem.sigma * rng.standard_normal((n_neg, problem.dim))
    X = np.vstack([Xp, Xn])
    y = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    return X, y


def stratified_counts(n, prior_pos):
    n_pos = int(np.clip(np.floor(n * prior_pos + 0.5), 1, n - 1))
    return n_pos, n - n_pos


def fit_adjusted_logistic(X, y, offset, ridge, iters=50):
    """Newton's method on ``mean log(1 + exp(-y (w.x + b + offset)))``.

    ``offset`` is the logit adjustment ``tau * log(pi_+ / pi_-)`` applied in
    training only; predictions use ``sign(w.x + b)``.
    """
    Z = np.hstack([X, np.ones((len(X), 1))])
    beta = np.zeros(Z.shape[1])
    reg = ridge * np.eye(Z.shape[1])
    reg[-1, -1] = 1e-8  # near-free intercept, still invertible on separable draws
    n = len(y)
    for _ in range(iters):
        m = y * (Z @ beta + offset)
        p = 0.5 * (1.0 - np.tanh(0.5 * m))  # sigmoid(-m), stable
        g = -(Z.T @ (y * p)) / n + reg @ beta
        H = (Z.T * (p * (1 - p))) @ Z / n + reg
        step = np.linalg.solve(H, g)
        beta -= step
        if np.abs(step).max() < 1e-12:
            break
    return beta[:-1], beta[-1]


def population_errors(problem, w, b):
    """Exact class-conditional errors ``(err_+, err_-)`` of ``sign(w.x + b)``."""
    mu = np.asarray(problem.mean, dtype=np.float64)
    s = problem.sigma * np.linalg.norm(w)
    if s == 0:
        return (0.0, 1.0) if b >= 0 else (1.0, 0.0)
    e_pos = ndtr(-(w @ mu + b) / s)
    e_neg = ndtr(-(w @ mu - b) / s)
    return float(e_pos), float(e_neg)


def blended(problem, e_pos, e_neg):
    """``(1 - lam) * standard error + lam * balanced error``."""
    pi = problem.prior_pos
    std = pi * e_pos + (1 - pi) * e_neg
    bal = 0.5 * (e_pos + e_neg)
    return (1 - problem.lam) * std + problem.lam * bal


def empirical_blended(problem, w, b, X, y):
    pred = np.where(X @ w + b >= 0, 1.0, -1.0)
    wrong = pred != y
    e_pos = wrong[y > 0].mean()
    e_neg = wrong[y < 0].mean()
    std = wrong.mean()
    return (1 - problem.lam) * std + problem.lam * 0.5 * (e_pos + e_neg)


def candidates(problem, seed):
    rng = stream(seed, "theorem1-train")
    n_pos, n_neg = stratified_counts(problem.n_train, problem.prior_pos)
    X, y = sample(problem, n_pos, n_neg, rng)
    shift = np.log(problem.prior_pos / (1 - problem.prior_pos))
    return [fit_adjusted_logistic(X, y, tau * shift, problem.ridge) for tau in problem.taus]


def excess_risk(problem, models, n_val, seed):
    """Population risk of the validation-selected candidate minus the best candidate's."""
    risks = np.array([blended(problem, *population_errors(problem, w, b)) for w, b in models])
    rng = stream(seed, f"theorem1-val-{n_val}")
    Xv, yv = sample(problem, *stratified_counts(n_val, problem.prior_pos), rng)
    emp = np.array([empirical_blended(problem, w, b, Xv, yv) for w, b in models])
    pick = int(np.argmin(emp))
    return float(risks[pick] - risks.min())


def theorem1_trend(problem=None, val_sizes=(32, 128, 512), seeds=range(40)):
    """Median (and mean) excess blended risk per validation size.

    Within a seed, the candidate models are trained once and shared across
    validation sizes, so only the selection sample changes.
    """
    problem = problem or TrendProblem()
    seeds = list(seeds)
    table = {n: [] for n in val_sizes}
    for s in seeds:
        models = candidates(problem, s)
        for n in val_sizes:
            table[n].append(excess_risk(problem, models, n, s))
    medians = [float(np.median(table[n])) for n in val_sizes]
    means = [float(np.mean(table[n])) for n in val_sizes]
    nonincreasing = all(a >= b for a, b in zip(medians[:-1], medians[1:]))
    return {
        "val_sizes": list(val_sizes),
        "median_excess": medians,
        "mean_excess": means,
        "num_seeds": len(seeds),
        "nonincreasing": bool(nonincreasing),
        "pass": bool(nonincreasing),
    }
