"""Bilevel loss search: warm-up, alternating theta / alpha steps, retrain.

The upper-level gradient comes from the implicit function theorem with a
truncated Neumann series standing in for the inverse Hessian.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import losses
from .data import unit_ball
from .errors import ConfigError, DivergenceError, NumericalError
from .metrics import class_errors, predict
from .rng import Streams

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6


@dataclass
class BilevelConfig:
    t1: int = 200
    t2: int = 1000
    eta_theta: float = 0.1
    eta_alpha: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    alpha_momentum: float = 0.9
    alpha_weight_decay: float = 1e-4
    batch_train: int = 128
    batch_val: int = 128
    neumann_order: int = 5
    neumann_step: float = 0.1
    neumann_eta_scaling: bool = True
    lambda_val: float = 1.0
    train_w: bool = False
    alpha_every_n: int = 1
    lr_schedule: str = "step"
    retrain: bool = True
    aug_samples: int = 1
    seed: int = 0

    def __post_init__(self):
        if not (self.t2 >= self.t1 >= 0):
            raise ConfigError("need t2 >= t1 >= 0")
        if self.eta_theta <= 0 or self.eta_alpha <= 0 or self.neumann_step <= 0:
            raise ConfigError("step sizes must be positive")
        if self.neumann_order < 0:
            raise ConfigError("neumann_order must be >= 0")
        if self.alpha_every_n < 1 or self.aug_samples < 1:
            raise ConfigError("alpha_every_n and aug_samples must be >= 1")
        if self.batch_train < 1 or self.batch_val < 1:
            raise ConfigError("batch sizes must be positive")
        if self.lr_schedule not in ("step", "cosine", "constant"):
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")
        if not 0 <= self.lambda_val <= 1:
            raise ConfigError("lambda_val must lie in [0, 1]")


def lr_at(base, it, total, schedule):
    """Step decay x0.1 at 73% and 87% of ``total``, or cosine, or constant."""
    if schedule == "constant" or total <= 0:
        return base
    if schedule == "cosine":
        return base * 0.5 * (1.0 + math.cos(math.pi * it / total))
    frac = it / total
    return base * (0.1 ** ((frac >= 0.73) + (frac >= 0.87)))


# ---------------------------------------------------------------------------
# primitives


@dataclass
class SGDState:
    velocity: np.ndarray | None = None


def sgd_step(theta, grad, state, eta, momentum=0.0, weight_decay=0.0):
    """``v <- momentum v + grad + wd theta``; ``theta <- theta - eta v``."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != theta.shape:
        raise ValueError("grad and theta shapes differ")
    if state.velocity is None:
        state.velocity = np.zeros_like(theta)
    state.velocity = momentum * state.velocity + grad + weight_decay * theta
    return theta - eta * state.velocity


def neumann_ihvp(hvp, v, order, eta, eta_scaling=True):
    """``sum_{j=0}^{order} (I - eta H)^j v``, times ``eta`` if ``eta_scaling``.

    ``hvp`` is a callable ``u -> H u``.
    """
    v1 = np.asarray(v, dtype=np.float64).copy()
    p = v1.copy()
    for j in range(1, order + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            v1 = v1 - eta * np.asarray(hvp(v1))
        if not np.all(np.isfinite(v1)):
            raise NumericalError(f"Neumann series blew up at iteration {j}", j)
        p = p + v1
    return eta * p if eta_scaling else p


def hypergradient(train_fn, val_fn, theta, alpha, order, eta, eta_scaling=True, l2=0.0):
    """IFT hypergradient of ``val_fn(theta)`` through ``argmin_theta train_fn(theta, alpha)``.

    ``train_fn(theta_t, alpha_t)`` and ``val_fn(theta_t)`` build scalar Tensors.
    ``l2`` adds ``l2/2 ||theta||^2`` to the lower objective (weight decay).
    The validation loss has no direct alpha dependence, so the result is
    ``-v^T d2L/dtheta dalpha`` with ``v`` the approximate ``H^{-1} dLval/dtheta``.
    """
    _, (v1,) = ad.value_and_grad(val_fn, theta)
    so = ad.SecondOrder(train_fn, theta, alpha)

    def hv(u):
        return so.hvp(u) + l2 * u

    p = neumann_ihvp(hv, v1, order, eta, eta_scaling)
    return -so.mixed_vjp(p)


# ---------------------------------------------------------------------------
# run bookkeeping


@dataclass
class RunLog:
    records: list = field(default_factory=list)

    def append(self, **rec):
        if self.records:
            last = self.records[-1]
            if (rec["phase"], rec["epoch"]) == (last["phase"], last["epoch"]) or (
                    rec["phase"] == last["phase"] and rec["epoch"] < last["epoch"]):
                raise ValueError("epochs must increase within a phase")
        self.records.append(rec)

    def phase(self, name):
        return [r for r in self.records if r["phase"] == name]

    def to_jsonl(self):
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


@dataclass
class AutoBalanceResult:
    theta: np.ndarray
    params: losses.LossParams
    log: RunLog
    search_theta: np.ndarray
    init_params: losses.LossParams

    def __iter__(self):
        return iter((self.theta, self.params, self.log))


# ---------------------------------------------------------------------------
# training helpers


class _Batcher:
    """Epoch-wise shuffled mini-batches from a named stream."""

    def __init__(self, n, size, rng):
        self.n, self.size, self.rng = n, min(size, n), rng
        self._perm, self._pos = None, n

    def next(self):
        if self._pos + self.size > self.n:
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
        idx = self._perm[self._pos:self._pos + self.size]
        self._pos += self.size
        return np.sort(idx)


def _uses_augmentation(params):
    return params.eps_embed is not None and (
        "eps" in params.trainable or np.any(params.eps_embed != 0))


def make_train_fn(model, params, X, y, g=None, draws=None):
    """``(theta_t, alpha_t) -> L_train`` on a fixed batch."""
    if params.num_groups:
        def fn(th, al):
            return losses.group_train_loss(model, th, X, y, g, params.tensors(al))
    else:
        def fn(th, al):
            return losses.train_loss(model, th, X, y, params.tensors(al), draws)
    return fn


def make_val_fn(model, objective, X, y, g=None):
    def fn(th):
        return objective(y, model(th, X), g)
    return fn


def _check_loss(value, epoch):
    if not np.isfinite(value) or value > DIVERGENCE_LIMIT:
        raise DivergenceError(f"loss {value} diverged at epoch {epoch}", epoch)


def _theta_grad(model, params, alpha, theta, X, y, g, draws, epoch, objective=None):
    if objective is None:
        fn = make_train_fn(model, params, X, y, g, draws)

        def loss(th):
            return fn(th, ad.Tensor(alpha))
    else:
        def loss(th):
            return objective(y, model(th, X), g)
    try:
        val, (gt,) = ad.value_and_grad(loss, theta)
    except NumericalError as exc:
        raise DivergenceError(f"non-finite value at epoch {epoch}: {exc}", epoch) from exc
    _check_loss(val, epoch)
    return val, gt


def _draws(params, cfg, n, dim, rng):
    if not _uses_augmentation(params):
        return None
    return unit_ball((cfg.aug_samples, n), dim, rng)


def _epoch_stats(model, theta, train, val, test, objective):
    rec = {"train_err": float(np.mean(predict(model.logits(theta, train.features)) != train.labels))}
    if val is not None and len(val):
        pv = predict(model.logits(theta, val.features))
        rec["val_err"] = float(class_errors(pv, val.labels, val.num_classes).mean()) \
            if np.all(val.class_counts > 0) else float(np.mean(pv != val.labels))
        if objective is not None:
            with ad.no_record():
                rec["val_loss"] = float(objective(val.labels, model(theta, val.features),
                                                  val.groups).data)
    if test is not None:
        pt = predict(model.logits(theta, test.features))
        rec["test_err"] = float(class_errors(pt, test.labels, test.num_classes).mean())
    return rec


def train_fixed(ds, spec, params, cfg, iters, theta0, rng_batches, rng_aug, log=None,
                phase="retrain", test=None, train_objective=None):
    """Plain SGD on ``ds`` with frozen loss parameters (retrain and baselines).

    ``train_objective(labels, logits, groups)`` replaces the parametric loss
    when given (used by the blended-CE baselines).
    """
    theta = theta0.copy()
    state = SGDState()
    alpha = params.alpha()
    batcher = _Batcher(len(ds), cfg.batch_train, rng_batches)
    per_epoch = max(1, math.ceil(len(ds) / batcher.size))
    for it in range(iters):
        epoch = it // per_epoch
        idx = batcher.next()
        X, y = ds.features[idx], ds.labels[idx]
        g = None if ds.groups is None else ds.groups[idx]
        draws = _draws(params, cfg, len(idx), ds.dim, rng_aug)
        loss, gt = _theta_grad(spec, params, alpha, theta, X, y, g, draws, epoch, train_objective)
        theta = sgd_step(theta, gt, state, lr_at(cfg.eta_theta, it, iters, cfg.lr_schedule),
                         cfg.momentum, cfg.weight_decay)
        if log is not None and ((it + 1) % per_epoch == 0 or it + 1 == iters):
            rec = _epoch_stats(spec, theta, ds, None, test, None)
            log.append(phase=phase, epoch=epoch, iteration=it + 1,
                       train_loss=loss, alpha=alpha.tolist(), **rec)
    return theta


def autobalance(ds, spec, init, cfg, objective, test=None, theta0=None):
    """Search alpha on ``ds.train`` / ``ds.val``, then retrain on their union.

    Returns an :class:`AutoBalanceResult` (unpacks as ``theta, params, log``).
    """
    streams = Streams(cfg.seed)
    params = init
    trainable = [f for f in params.trainable if f != "w" or cfg.train_w]
    if cfg.train_w and "w" not in trainable:
        trainable.insert(0, "w")
    if tuple(trainable) != params.trainable:
        params = losses.LossParams(params.dictionary, params.w_embed, params.l_embed,
                                   params.delta_raw_embed, params.eps_embed, tuple(trainable),
                                   params.num_classes, params.num_groups)
    init_params = params
    theta0 = spec.init(streams["init"]) if theta0 is None else np.asarray(theta0, dtype=np.float64)
    train, val = ds.train, ds.val
    runlog = RunLog()

    theta = theta0.copy()
    alpha = params.alpha()
    th_state, al_state = SGDState(), SGDState()
    tb = _Batcher(len(train), cfg.batch_train, streams["batches"])
    vb = _Batcher(len(val), cfg.batch_val, streams["val-batches"])
    hb = _Batcher(len(train), cfg.batch_train, streams["hyper-batches"])
    per_epoch = max(1, math.ceil(len(train) / tb.size))
    upper_steps = 0

    for it in range(cfg.t2):
        epoch = it // per_epoch
        idx = tb.next()
        X, y = train.features[idx], train.labels[idx]
        g = None if train.groups is None else train.groups[idx]
        draws = _draws(params, cfg, len(idx), train.dim, streams["augment"])
        loss, gt = _theta_grad(spec, params, alpha, theta, X, y, g, draws, epoch)
        theta = sgd_step(theta, gt, th_state, lr_at(cfg.eta_theta, it, cfg.t2, cfg.lr_schedule),
                         cfg.momentum, cfg.weight_decay)

        if it >= cfg.t1 and params.alpha_size and (it - cfg.t1) % cfg.alpha_every_n == 0:
            hidx = hb.next()
            vidx = vb.next()
            Xh, yh = train.features[hidx], train.labels[hidx]
            gh = None if train.groups is None else train.groups[hidx]
            hdraws = _draws(params, cfg, len(hidx), train.dim, streams["augment"])
            Xv, yv = val.features[vidx], val.labels[vidx]
            gv = None if val.groups is None else val.groups[vidx]
            try:
                hg = hypergradient(
                    make_train_fn(spec, params, Xh, yh, gh, hdraws),
                    make_val_fn(spec, objective, Xv, yv, gv),
                    theta, alpha, cfg.neumann_order, cfg.neumann_step,
                    cfg.neumann_eta_scaling, l2=cfg.weight_decay)
            except NumericalError as exc:
                raise DivergenceError(f"hypergradient failed at epoch {epoch}: {exc}", epoch) from exc
            if not np.all(np.isfinite(hg)):
                raise DivergenceError(f"non-finite hypergradient at epoch {epoch}", epoch)
            eta_a = lr_at(cfg.eta_alpha, it, cfg.t2, cfg.lr_schedule)
            alpha = sgd_step(alpha, hg, al_state, eta_a, cfg.alpha_momentum, cfg.alpha_weight_decay)
            params = params.with_alpha(alpha)
            alpha = params.alpha()
            upper_steps += 1

        if (it + 1) % per_epoch == 0 or it + 1 == cfg.t2:
            rec = _epoch_stats(spec, theta, train, val, test, objective)
            runlog.append(phase="search", epoch=epoch, iteration=it + 1, train_loss=loss,
                          alpha=alpha.tolist(), **rec)

    search_theta = theta
    log.info("search finished: %d upper steps", upper_steps)
    if cfg.retrain:
        theta = train_fixed(ds.union(), spec, params, cfg, cfg.t2, theta0,
                            streams["retrain-batches"], streams["retrain-augment"],
                            log=runlog, phase="retrain", test=test)
    return AutoBalanceResult(theta, params, runlog, search_theta, init_params)


def train_baseline(ds, spec, params, cfg, test=None, theta0=None, train_objective=None):
    """Train with a fixed loss on ``ds`` (a Dataset) for ``cfg.t2`` iterations."""
    streams = Streams(cfg.seed)
    theta0 = spec.init(streams["init"]) if theta0 is None else theta0
    runlog = RunLog()
    theta = train_fixed(ds, spec, params, cfg, cfg.t2, theta0, streams["retrain-batches"],
                        streams["retrain-augment"], log=runlog, phase="retrain", test=test,
                        train_objective=train_objective)
    return theta, runlog


def config_dict(cfg):
    return asdict(cfg)
