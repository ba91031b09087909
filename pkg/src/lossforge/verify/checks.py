"""Self-contained verification runs, each returning a JSON-ready verdict."""

from __future__ import annotations

import itertools

import numpy as np

from .. import autodiff as ad
from .. import losses
from ..bilevel import hypergradient, neumann_ihvp
from ..models import ModelSpec
from ..rng import stream
from .lemma1 import lemma1_check, make_case
from .lemma2 import BinaryLossParams, lemma2_check, ridgeless_direction, separable_pair
from .theorem1 import theorem1_trend

DELTA_GRID = (0.3, 0.5, 0.8, 0.95)


def check_lemma1():
    cases = []
    for d, g in itertools.product(((1.0, 2.0), (2.0, 1.0), (0.5, 0.9), (1.0, 1.0), (0.7, 0.7)),
                                  (0.5, 1.0, 2.0, 3.0)):
        r = lemma1_check(make_case(d, g))
        expect = d[0] != d[1] and g != 1.0
        cases.append({"delta": list(d), "gamma": g, "disagrees": r["disagrees"],
                      "expected": expect, "ok": r["disagrees"] == expect})
    return {"check": "lemma1", "cases": cases, "pass": all(c["ok"] for c in cases)}


def check_lemma2(instances_per_pair=2, n=40, ridgeless_epochs=4000):
    rows = []
    for k, (dp, dm) in enumerate(itertools.product(DELTA_GRID, repeat=2)):
        for s in range(instances_per_pair):
            X, y = separable_pair(n, 1000 * k + s)
            r = lemma2_check(X, y, dp, dm)
            rows.append({key: r[key] for key in ("delta_plus", "delta_minus", "cosine", "pass")})
    X, y = separable_pair(n, 7)
    rl = ridgeless_direction(X, y, BinaryLossParams(delta_plus=0.5, delta_minus=0.8),
                             epochs=ridgeless_epochs)
    ok = all(r["pass"] for r in rows) and rl["final_cosine"] >= 0.999
    return {
        "check": "lemma2",
        "instances": len(rows),
        "min_cosine": min(r["cosine"] for r in rows),
        "failures": [r for r in rows if not r["pass"]],
        "ridgeless_final_cosine": rl["final_cosine"],
        "pass": bool(ok),
    }


def neumann_table(order=3, eta=0.25):
    """The H = 2I, v = (1, 0) case: scaled partial sums against the exact inverse."""
    H = 2.0 * np.eye(2)
    v = np.array([1.0, 0.0])
    rows = []
    for i in range(order + 1):
        p = neumann_ihvp(lambda u: H @ u, v, i, eta, True)
        rows.append({"order": i, "approx": p.tolist(), "exact": np.linalg.solve(H, v).tolist()})
    return rows


def neumann_ratios(seed=0, dim=5, orders=range(0, 30)):
    """Errors of the scaled series on a random SPD matrix with eta = 0.9 / lambda_max."""
    rng = stream(seed, "neumann")
    B = rng.standard_normal((dim, dim))
    H = B @ B.T + 0.5 * np.eye(dim)
    v = rng.standard_normal(dim)
    eta = 0.9 / np.linalg.eigvalsh(H)[-1]
    exact = np.linalg.solve(H, v)
    errs = [float(np.linalg.norm(neumann_ihvp(lambda u: H @ u, v, i, eta) - exact)) for i in orders]
    ratios = [b / a for a, b in zip(errs[:-1], errs[1:])]
    return errs, ratios


def check_neumann(seeds=range(10)):
    table = neumann_table()
    ok = abs(table[-1]["approx"][0] - 0.46875) < 1e-15
    worst = 0.0
    for s in seeds:
        _, ratios = neumann_ratios(s)
        worst = max(worst, max(ratios))
    ok = ok and worst < 1.0
    return {"check": "neumann", "table": table, "worst_ratio": worst, "pass": bool(ok)}


# -- hypergradient oracles ---------------------------------------------------


def quadratic_case(seed=0, dim=4, order=400):
    """``L_train = 0.5 t'At - a't``, ``L_val = 0.5||t - c||^2``: exact answer ``A^-1(A^-1 a - c)``."""
    rng = stream(seed, "hyper-quadratic")
    B = rng.standard_normal((dim, dim))
    A = B @ B.T / dim + np.eye(dim)
    a = rng.standard_normal(dim)
    c = rng.standard_normal(dim)
    theta = np.linalg.solve(A, a)
    At, ct = ad.Tensor(A), ad.Tensor(c)

    def train(th, al):
        return ad.sub(ad.dot(th, ad.matmul(At, th)) * 0.5, ad.dot(al, th))

    def val(th):
        r = ad.sub(th, ct)
        return ad.dot(r, r) * 0.5

    eta = 1.0 / np.linalg.eigvalsh(A)[-1]
    got = hypergradient(train, val, theta, a, order, eta, True)
    exact = np.linalg.solve(A, theta - c)
    return float(np.linalg.norm(got - exact) / np.linalg.norm(exact))


def _logistic_problem(seed):
    rng = stream(seed, "hyper-logistic")
    X = rng.standard_normal((10, 2))
    y = np.array([0] * 5 + [1] * 5)
    X[y == 1] += 0.8
    spec = ModelSpec("linear", 2, [], 2)
    return X, y, spec


def _logistic_train_fn(X, y, spec, l2):
    def fn(th, al):
        base = losses.parametric_ce(y, spec(th, X), np.ones(2), al, np.ones(2))
        return ad.add(base, ad.dot(th, th) * (0.5 * l2))
    return fn


def _inner_solve(fn, alpha, dim, tol=1e-10):
    """Newton with a dense Hessian assembled from Hessian-vector products."""
    theta = np.zeros(dim)
    for _ in range(100):
        _, (g,) = ad.value_and_grad(lambda t: fn(t, ad.Tensor(alpha)), theta)
        if np.linalg.norm(g) < tol:
            break
        so = ad.SecondOrder(lambda t: fn(t, ad.Tensor(alpha)), theta)
        H = np.column_stack([so.hvp(e) for e in np.eye(dim)])
        theta = theta - np.linalg.solve(H, g)
    return theta


def logistic_case(seed=0, l2=0.05, h=1e-4):
    """IFT hypergradient of a balanced validation CE w.r.t. the additive shifts,
    against central differences of fully re-solved inner problems."""
    X, y, spec = _logistic_problem(seed)
    rng = stream(seed, "hyper-logistic-val")
    Xv = rng.standard_normal((12, 2))
    yv = np.array([0] * 6 + [1] * 6)
    Xv[yv == 1] += 0.8
    fn = _logistic_train_fn(X, y, spec, 0.0)
    fn_reg = _logistic_train_fn(X, y, spec, l2)
    alpha = np.array([0.3, -0.4])
    dim = spec.num_params

    def val(th):
        return losses.balanced_ce(yv, spec(th, Xv), 2)

    def outer(al):
        th = _inner_solve(fn_reg, al, dim)
        return float(val(ad.Tensor(th)).data)

    theta = _inner_solve(fn_reg, alpha, dim)
    so = ad.SecondOrder(lambda t: fn_reg(t, ad.Tensor(alpha)), theta)
    lam_max = np.linalg.eigvalsh(np.column_stack([so.hvp(e) for e in np.eye(dim)]))[-1]
    got = hypergradient(fn, val, theta, alpha, 3000, 1.0 / lam_max, True, l2=l2)
    fd = np.array([(outer(alpha + h * e) - outer(alpha - h * e)) / (2 * h) for e in np.eye(2)])
    return float(np.linalg.norm(got - fd) / np.linalg.norm(fd)), got.tolist(), fd.tolist()


def check_hypergrad(seeds=range(3)):
    quad = [quadratic_case(s) for s in seeds]
    logi = [logistic_case(s)[0] for s in seeds]
    ok = max(quad) <= 1e-6 and max(logi) <= 1e-2
    return {"check": "hypergrad", "quadratic_rel_err": quad, "logistic_rel_err": logi,
            "pass": bool(ok)}


def check_theorem1(seeds=range(40)):
    r = theorem1_trend(seeds=seeds)
    r["check"] = "theorem1"
    return r


CHECKS = {
    "lemma1": check_lemma1,
    "lemma2": check_lemma2,
    "neumann": check_neumann,
    "hypergrad": check_hypergrad,
    "theorem1": check_theorem1,
}


def run(which="all"):
    names = list(CHECKS) if which == "all" else [which]
    verdicts = [CHECKS[n]() for n in names]
    return {"which": which, "verdicts": verdicts, "pass": all(v["pass"] for v in verdicts)}
