"""Config-driven experiment pieces shared by the CLI and the acceptance suite."""

from __future__ import annotations

import logging
import warnings

import numpy as np

from . import bilevel, config, data, losses, metrics
from .errors import ConfigError
from .models import ModelSpec
from .rng import stream

log = logging.getLogger(__name__)


def _seed_for(seed, name):
    return int(stream(seed, name).integers(2**31 - 1))


def build_data(cfg, seed):
    """``(split, test)`` for the configured generator under root ``seed``."""
    d = cfg["data"]
    if d["kind"] == "longtail":
        mix = data.GaussianMixtureSpec(dim=d["dim"], mean_scale=d["mean_scale"], noise=d["noise"])
        K = d["num_classes"]
        ds = data.make_longtail([d["base_count"]] * K, d["rho"], mix, seed=_seed_for(seed, "data"))
        test = data.make_longtail([d["test_per_class"]] * K, 1.0, mix,
                                  seed=_seed_for(seed, "test-data"))
    else:
        spur = data.SpuriousSpec(**(d["spurious"] or {}))
        ds = data.make_group_dataset(d["fractions"], d["n"], spur, seed=_seed_for(seed, "data"))
        test = data.make_group_dataset(d["fractions"], d["n_test"], spur,
                                       seed=_seed_for(seed, "test-data"))
    sp = data.split(ds, d["split_fraction"], seed=_seed_for(seed, "split"))
    return sp, test


def model_spec(cfg, ds):
    m = cfg["model"]
    hidden = m["hidden_sizes"] if m["kind"] == "mlp" else []
    return ModelSpec(m["kind"], ds.dim, hidden, ds.num_classes)


def _dictionary(cfg, priors):
    kind = cfg["loss"]["dictionary"]
    K = len(priors)
    if kind == "identity":
        return losses.identity_dictionary(K)
    if kind == "cluster":
        return losses.cluster_dictionary(K, cfg["loss"]["clusters"], priors)
    return losses.la_dictionary(priors)


def build_params(cfg, train, init=None, trainable=None):
    """Initial loss parameters from the training split's frequencies."""
    lc = cfg["loss"]
    init = init or lc["init"]
    trainable = tuple(lc["train"] if trainable is None else trainable)
    if train.groups is not None and cfg["data"]["kind"] == "group":
        K, G = train.num_classes, train.num_groups
        if init == "group-la":
            counts = train.group_counts.astype(np.float64)
            if np.any(counts == 0):
                raise ConfigError("group-LA needs every (class, group) cell in the training split")
            gf = counts.sum(axis=0) / counts.sum()
            cf = counts / counts.sum(axis=0, keepdims=True)
            return losses.group_la_params(gf, cf, trainable)
        if init != "ce":
            raise ConfigError(f"group data supports loss.init ce or group-la, not {init!r}")
        return losses.group_ce_params(K, G, trainable)
    if init == "group-la":
        raise ConfigError("group-la init needs group data")
    priors = train.class_priors
    if np.any(priors == 0):
        raise ConfigError("every class must appear in the training split")
    eps = lc["eps"]
    return losses.init_params(init, priors, _dictionary(cfg, priors), trainable, lc["tau"],
                              None if eps is None else np.asarray(eps, dtype=np.float64))


def validation_objective(cfg, ds, lam=None):
    o = cfg["objective"]
    lam = o["lambda_val"] if lam is None else lam
    return losses.ValidationObjective(o["target"], lam, ds.num_classes, ds.num_groups)


def _evaluate(spec, theta, test):
    return metrics.evaluate(lambda X: spec.logits(theta, X), test)


def run_single(cfg, seed):
    """One ``run``: search + retrain (or a fixed-loss baseline).

    Returns a dict with ``params``, ``init``, ``log``, ``report``, ``theta``.
    """
    sp, test = build_data(cfg, seed)
    spec = model_spec(cfg, sp.train)
    bcfg = config.bilevel_config(cfg, seed)
    mode = cfg["mode"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", losses.EmptyCellWarning)
        if mode == "autobalance":
            init = build_params(cfg, sp.train)
            res = bilevel.autobalance(sp, spec, init, bcfg, validation_objective(cfg, sp.train), test)
            theta, params, runlog, init = res.theta, res.params, res.log, res.init_params
        else:
            kind = {"baseline-ce": "ce", "baseline-la": "la-init",
                    "baseline-balanced-ce": "balanced-ce"}[mode]
            union = sp.union()
            if union.groups is not None and cfg["data"]["kind"] == "group":
                kind = "group-la" if kind == "la-init" else "ce"
            init = build_params(cfg, union, kind, trainable=())
            theta, runlog = bilevel.train_baseline(union, spec, init, bcfg, test)
            params = init
    return {"params": params, "init": init, "log": runlog, "theta": theta,
            "report": _evaluate(spec, theta, test), "spec": spec}


# ---------------------------------------------------------------------------
# fairness sweeps


def sweep_point(cfg, method, lam, seed):
    """Train one (method, lambda, seed) cell of a group-data sweep; returns a MetricsReport."""
    sp, test = build_data(cfg, seed)
    if sp.train.groups is None:
        raise ConfigError("sweeps need group data")
    spec = model_spec(cfg, sp.train)
    bcfg = config.bilevel_config(cfg, seed)
    union = sp.union()
    deo_blend = losses.ValidationObjective("deo", lam, union.num_classes, union.num_groups)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", losses.EmptyCellWarning)
        if method == "autobalance":
            init = build_params(cfg, sp.train)
            bcfg.lambda_val = lam
            res = bilevel.autobalance(sp, spec, init, bcfg, deo_blend)
            theta = res.theta
        elif method == "ce-deo":
            fixed = build_params(cfg, union, "ce", trainable=())
            theta, _ = bilevel.train_baseline(union, spec, fixed, bcfg, train_objective=deo_blend)
        elif method == "group-la":
            fixed = build_params(cfg, union, "group-la", trainable=())
            theta, _ = bilevel.train_baseline(union, spec, fixed, bcfg)
        elif method == "posthoc":
            fixed = build_params(cfg, sp.train, "ce", trainable=())
            theta, _ = bilevel.train_baseline(sp.train, spec, fixed, bcfg)
            w, b, _ = metrics.posthoc_vector_scaling(
                spec.logits(theta, sp.val.features), sp.val.labels, sp.val.groups, "blend", lam)
            f = spec.logits(theta, test.features) * w + b
            return metrics.report_from_predictions(metrics.predict(f), test.labels, 2,
                                                   test.groups, test.num_groups)
        else:
            raise ConfigError(f"unknown sweep method {method!r}")
    return _evaluate(spec, theta, test)


def _sweep_task(args):
    cfg, method, lam, seed = args
    return sweep_point(cfg, method, lam, seed)


def sweep(cfg, lambdas=None, methods=None, seeds=None, jobs=1):
    """All (method, lambda, seed) runs; returns per-run rows in deterministic order."""
    sw = cfg["sweep"]
    lambdas = sw["lambdas"] if lambdas is None else lambdas
    methods = sw["methods"] if methods is None else methods
    seeds = sw["seeds"] if seeds is None else seeds
    tasks = [(cfg, m, float(lam), int(s)) for m in methods for lam in lambdas for s in seeds]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_sweep_task, tasks))
    else:
        reports = [_sweep_task(t) for t in tasks]
    rows = []
    for (_, m, lam, s), rep in zip(tasks, reports):
        rows.append({"method": m, "lambda": lam, "seed": s, "std_err": rep.std_err,
                     "deo": rep.deo, "balanced_err": rep.balanced_err,
                     "group_balanced_err": rep.group_balanced_err,
                     "worst_cell_err": rep.worst_cell_err})
    return rows


def average_rows(rows):
    """Seed-averaged rows per (method, lambda), with a per-method Pareto flag."""
    keys = []
    for r in rows:
        k = (r["method"], r["lambda"])
        if k not in keys:
            keys.append(k)
    out = []
    for m, lam in keys:
        grp = [r for r in rows if (r["method"], r["lambda"]) == (m, lam)]
        avg = {"method": m, "lambda": lam, "seeds": len(grp)}
        for f in ("std_err", "deo", "balanced_err", "group_balanced_err", "worst_cell_err"):
            vals = [r[f] for r in grp if r[f] is not None]
            avg[f] = float(np.mean(vals)) if vals else None
        out.append(avg)
    for m in dict.fromkeys(r["method"] for r in out):
        sub = [r for r in out if r["method"] == m]
        pts = [metrics.ParetoPoint(r["lambda"], r["std_err"], r["deo"], m) for r in sub]
        for r, keep in zip(sub, metrics.pareto_mask(pts)):
            r["frontier"] = bool(keep)
    return out


def hypervolumes(avg_rows, ref=None):
    """Per-method hypervolume of (std_err, deo) with the worst observed corner as reference."""
    if ref is None:
        ref = (max(r["std_err"] for r in avg_rows), max(r["deo"] for r in avg_rows))
    out = {}
    for m in dict.fromkeys(r["method"] for r in avg_rows):
        pts = [(r["std_err"], r["deo"]) for r in avg_rows if r["method"] == m]
        out[m] = metrics.hypervolume_2d(pts, ref)
    return out, ref
