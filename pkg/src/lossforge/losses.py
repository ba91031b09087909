"""Parametric cross-entropy family and its hyperparameter search space.

Hyperparameters are stored as low-dimensional embeddings that a fixed
dictionary matrix expands to one value per class (or per (class, group)
cell).  The multiplicative adjustment is stored raw and squashed through a
sigmoid wherever the training loss uses it.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError

FIELDS = ("w", "l", "delta", "eps")


class EmptyCellWarning(UserWarning):
    """A class or (class, group) cell had no examples in a batch."""


# ---------------------------------------------------------------------------
# dictionaries


@dataclass
class Dictionary:
    matrix: np.ndarray
    kind: str = "identity"
    priors: np.ndarray | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ConfigError("dictionary matrix must be 2-D")
        if self.kind == "cluster":
            m = self.matrix
            if not np.all((m == 0) | (m == 1)) or not np.all(m.sum(axis=1) == 1):
                raise ConfigError("cluster dictionary columns must be disjoint indicators")

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def cols(self):
        return self.matrix.shape[1]

    def for_field(self, name):
        """Matrix used to expand embedding ``name``.

        The LA column (entries ``log pi``) only makes sense for the additive
        term; the other fields get a single all-ones column so the shared
        scalar stays a uniform value.
        """
        if self.kind == "la-column" and name != "l":
            return np.ones((self.rows, 1))
        return self.matrix

    def to_json(self):
        return {
            "kind": self.kind,
            "matrix": self.matrix.tolist(),
            "priors": None if self.priors is None else np.asarray(self.priors).tolist(),
        }

    @classmethod
    def from_json(cls, obj):
        pri = obj.get("priors")
        return cls(np.array(obj["matrix"], dtype=np.float64), obj["kind"],
                   None if pri is None else np.array(pri, dtype=np.float64))


def identity_dictionary(n):
    return Dictionary(np.eye(n), "identity")


def cluster_dictionary(num_classes, cluster_size, priors=None):
    """Indicator columns over classes grouped ``cluster_size`` at a time.

    Classes are ordered by decreasing frequency when ``priors`` is given,
    otherwise by index.
    """
    if cluster_size < 1:
        raise ConfigError("cluster size must be >= 1")
    order = np.arange(num_classes) if priors is None else np.argsort(-np.asarray(priors), kind="stable")
    ncols = math.ceil(num_classes / cluster_size)
    mat = np.zeros((num_classes, ncols))
    for rank, k in enumerate(order):
        mat[k, rank // cluster_size] = 1.0
    return Dictionary(mat, "cluster", None if priors is None else np.asarray(priors, dtype=float))


def la_dictionary(priors):
    priors = np.asarray(priors, dtype=np.float64)
    if np.any(priors <= 0):
        raise ConfigError("LA dictionary needs positive class frequencies")
    return Dictionary(np.log(priors)[:, None], "la-column", priors)


# ---------------------------------------------------------------------------
# hyperparameter bundle


@dataclass
class LossParams:
    """Embeddings of the loss hyperparameters plus the dictionary expanding them.

    ``num_groups`` set means the group form: the dictionary rows index the
    flattened K x G (class, group) table in row-major order.
    """

    dictionary: Dictionary
    w_embed: np.ndarray
    l_embed: np.ndarray
    delta_raw_embed: np.ndarray
    eps_embed: np.ndarray | None = None
    trainable: tuple = ("l", "delta")
    num_classes: int | None = None
    num_groups: int | None = None

    def __post_init__(self):
        for name in ("w_embed", "l_embed", "delta_raw_embed"):
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)))
        if self.eps_embed is not None:
            self.eps_embed = np.atleast_1d(np.asarray(self.eps_embed, dtype=np.float64))
        self.trainable = tuple(self.trainable)
        bad = set(self.trainable) - set(FIELDS)
        if bad:
            raise ConfigError(f"unknown trainable fields {sorted(bad)}")
        if "eps" in self.trainable and self.eps_embed is None:
            raise ConfigError("eps is trainable but no eps embedding was given")
        for name in FIELDS:
            emb = self.embedding(name)
            if emb is not None and len(emb) != self.dictionary.for_field(name).shape[1]:
                raise ConfigError(f"{name} embedding length {len(emb)} does not match dictionary")
        if self.num_classes is None:
            self.num_classes = self.dictionary.rows // (self.num_groups or 1)
        if self.num_classes * (self.num_groups or 1) != self.dictionary.rows:
            raise ConfigError("dictionary rows must equal K (or K*G)")
        w, _, _, eps = self.expand()
        if np.any(w < 0):
            raise ConfigError("expanded weights must be nonnegative")
        if eps is not None and np.any(eps < 0):
            raise ConfigError("augmentation radii must be nonnegative")

    # -- embeddings -----------------------------------------------------------

    def embedding(self, name):
        return {"w": self.w_embed, "l": self.l_embed, "delta": self.delta_raw_embed,
                "eps": self.eps_embed}[name]

    @property
    def table_shape(self):
        if self.num_groups:
            return (self.num_classes, self.num_groups)
        return (self.num_classes,)

    def expand(self):
        """``(w, l, delta_eff, eps)`` as arrays of shape K (or K x G)."""
        shape = self.table_shape
        out = []
        for name in FIELDS:
            emb = self.embedding(name)
            if emb is None:
                out.append(None)
                continue
            v = (self.dictionary.for_field(name) @ emb).reshape(shape)
            if name == "delta":
                v = 1.0 / (1.0 + np.exp(-v))
            out.append(v)
        return tuple(out)

    # -- flat trainable vector -----------------------------------------------

    def _slices(self):
        out, lo = {}, 0
        for name in FIELDS:
            if name in self.trainable:
                n = len(self.embedding(name))
                out[name] = slice(lo, lo + n)
                lo += n
        return out, lo

    @property
    def alpha_size(self):
        return self._slices()[1]

    def alpha(self):
        """Concatenated trainable embeddings."""
        parts = [self.embedding(n) for n in FIELDS if n in self.trainable]
        return np.concatenate(parts) if parts else np.zeros(0)

    def with_alpha(self, alpha):
        alpha = np.asarray(alpha, dtype=np.float64)
        slices, n = self._slices()
        if alpha.shape != (n,):
            raise ConfigError(f"alpha must have length {n}")
        kw = {}
        for name, key in zip(FIELDS, ("w_embed", "l_embed", "delta_raw_embed", "eps_embed")):
            kw[key] = alpha[slices[name]].copy() if name in slices else self.embedding(name)
        if kw["eps_embed"] is not None and "eps" in slices:
            kw["eps_embed"] = np.maximum(kw["eps_embed"], 0.0)
        if "w" in slices:
            kw["w_embed"] = np.maximum(kw["w_embed"], 0.0)
        return LossParams(self.dictionary, trainable=self.trainable,
                          num_classes=self.num_classes, num_groups=self.num_groups, **kw)

    def tensors(self, alpha=None):
        """Expanded ``(w, l, delta_eff, eps)`` Tensors, differentiable in ``alpha``.

        ``alpha`` is a Tensor holding the trainable embeddings; frozen fields
        come out as constants.
        """
        slices, _ = self._slices()
        shape = self.table_shape
        out = []
        for name in FIELDS:
            emb = self.embedding(name)
            if emb is None:
                out.append(None)
                continue
            if alpha is not None and name in slices:
                e = ad.getitem(alpha, slices[name])
            else:
                e = ad.Tensor(emb)
            v = ad.matmul(ad.Tensor(self.dictionary.for_field(name)), e)
            if len(shape) == 2:
                v = ad.reshape(v, shape)
            if name == "delta":
                v = ad.sigmoid(v)
            out.append(v)
        return tuple(out)

    # -- persistence ----------------------------------------------------------

    def to_json(self):
        return {
            "dictionary": self.dictionary.to_json(),
            "w_embed": self.w_embed.tolist(),
            "l_embed": self.l_embed.tolist(),
            "delta_raw_embed": self.delta_raw_embed.tolist(),
            "eps_embed": None if self.eps_embed is None else self.eps_embed.tolist(),
            "trainable": list(self.trainable),
            "num_classes": int(self.num_classes),
            "num_groups": None if self.num_groups is None else int(self.num_groups),
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, obj):
        eps = obj.get("eps_embed")
        return cls(
            Dictionary.from_json(obj["dictionary"]),
            np.array(obj["w_embed"]),
            np.array(obj["l_embed"]),
            np.array(obj["delta_raw_embed"]),
            None if eps is None else np.array(eps),
            tuple(obj.get("trainable", ("l", "delta"))),
            obj.get("num_classes"),
            obj.get("num_groups"),
        )

    @classmethod
    def loads(cls, text):
        return cls.from_json(json.loads(text))


class GroupLossParams(LossParams):
    """Group form built directly from K x G tables (identity dictionary)."""

    @classmethod
    def from_tables(cls, w, l, delta_raw, trainable=("l", "delta")):
        w, l, delta_raw = (np.asarray(a, dtype=np.float64) for a in (w, l, delta_raw))
        K, G = w.shape
        return cls(identity_dictionary(K * G), w.ravel(), l.ravel(), delta_raw.ravel(),
                   trainable=trainable, num_classes=K, num_groups=G)


def expand(params):
    return params.expand()[:3]


# ---------------------------------------------------------------------------
# initializations


def _embed_constant(dictionary, name, values):
    """Least-squares embedding reproducing ``values`` through the dictionary."""
    mat = dictionary.for_field(name)
    emb, *_ = np.linalg.lstsq(mat, np.asarray(values, dtype=np.float64), rcond=None)
    return emb


def init_params(kind, priors, dictionary=None, trainable=("l", "delta"), tau=1.0, eps=None):
    """Consistent initializations.

    ``ce``: w = 1, l = 0.  ``balanced-ce``: w proportional to 1/pi with mean 1,
    l = 0.  ``la-init``: w = 1, l = tau * log pi.  All start with the raw
    multiplicative term at 0 (uniform sigmoid value 0.5).
    """
    priors = np.asarray(priors, dtype=np.float64)
    K = len(priors)
    dictionary = dictionary or identity_dictionary(K)
    if kind == "ce":
        w, l = np.ones(K), np.zeros(K)
    elif kind == "balanced-ce":
        w = 1.0 / priors
        w = w / w.mean()
        l = np.zeros(K)
    elif kind == "la-init":
        w, l = np.ones(K), tau * np.log(priors)
    else:
        raise ConfigError(f"unknown init kind {kind!r}")
    if dictionary.kind == "la-column":
        l_emb = np.array([tau if kind == "la-init" else 0.0])
    else:
        l_emb = _embed_constant(dictionary, "l", l)
    eps_emb = None
    if eps is not None or "eps" in trainable:
        eps_emb = _embed_constant(dictionary, "eps", np.zeros(K) if eps is None else eps)
    return LossParams(
        dictionary,
        _embed_constant(dictionary, "w", w),
        l_emb,
        _embed_constant(dictionary, "delta", np.zeros(K)),
        eps_emb,
        trainable,
    )


def group_la_params(group_freqs, class_freqs_given_group, trainable=("l", "delta")):
    """Group-LA: ``w_kg = 1/pibar_g``, ``l_kg = log pi_{k|g}``, uniform delta."""
    gf = np.asarray(group_freqs, dtype=np.float64)
    cf = np.asarray(class_freqs_given_group, dtype=np.float64)
    if np.any(gf <= 0) or np.any(cf <= 0):
        raise ConfigError("group-LA needs positive frequencies")
    K, G = cf.shape
    w = np.broadcast_to(1.0 / gf, (K, G))
    return GroupLossParams.from_tables(w, np.log(cf), np.zeros((K, G)), trainable)


def group_ce_params(num_classes, num_groups, trainable=("l", "delta")):
    K, G = num_classes, num_groups
    return GroupLossParams.from_tables(np.ones((K, G)), np.zeros((K, G)), np.zeros((K, G)), trainable)


# ---------------------------------------------------------------------------
# losses (all take logits as Tensors of shape n x K)


def _per_example_ce(labels, z):
    n = len(labels)
    return ad.sub(ad.logsumexp(z, axis=1), ad.getitem(z, (np.arange(n), labels)))


def parametric_ce(labels, logits, w, l, delta, reduction="mean"):
    """``w_y * (logsumexp(delta*f + l) - (delta_y f_y + l_y))``.

    Equal to ``w_y log(1 + sum_{k != y} exp(l_k - l_y + delta_k f_k - delta_y f_y))``.
    ``w``, ``l``, ``delta`` are K-vectors (Tensors or arrays); ``delta`` is
    used as given, with no sigmoid.
    """
    labels = np.asarray(labels, dtype=np.int64)
    logits = ad.as_tensor(logits)
    if logits.ndim == 1:
        logits = ad.reshape(logits, (1, -1))
        labels = labels.reshape(1)
    w, l, delta = ad.as_tensor(w), ad.as_tensor(l), ad.as_tensor(delta)
    z = ad.add(ad.mul(logits, delta), l)
    per = ad.mul(ad.getitem(w, labels), _per_example_ce(labels, z))
    return _reduce(per, reduction)


def _reduce(per, reduction):
    if reduction == "mean":
        return ad.reduce_sum(per) * (1.0 / per.shape[0])
    if reduction == "sum":
        return ad.reduce_sum(per)
    return per


def augmented_inputs(X, labels, eps, draws):
    """``x + eps_y * u`` for fixed ball draws ``u`` of shape (m, n, d).

    Differentiable in ``eps``; returns an (m*n) x d Tensor (draw-major).
    """
    X = np.asarray(X, dtype=np.float64)
    m, n, d = draws.shape
    base = ad.Tensor(np.tile(X, (m, 1)))
    radius = ad.getitem(ad.as_tensor(eps), np.tile(labels, m))
    shift = ad.mul(ad.broadcast_to(ad.reshape(radius, (m * n, 1)), (m * n, d)),
                   ad.Tensor(draws.reshape(m * n, d)))
    return ad.add(base, shift)


def train_loss(model, theta, X, labels, tensors, draws=None):
    """Monte-Carlo estimate of the augmented training loss.

    ``tensors`` is ``(w, l, delta_eff, eps)`` from :meth:`LossParams.tensors`;
    ``draws`` holds the fixed unit-ball samples (m, n, d) or None for no
    augmentation.
    """
    w, l, delta, eps = tensors
    labels = np.asarray(labels, dtype=np.int64)
    if draws is None or eps is None:
        return parametric_ce(labels, model(theta, X), w, l, delta)
    Xa = augmented_inputs(X, labels, eps, draws)
    return parametric_ce(np.tile(labels, draws.shape[0]), model(theta, Xa), w, l, delta)


def group_parametric_ce(labels, groups, logits, w, l, delta, reduction="mean"):
    """Group form: the (class, group) tables are indexed by each example's group.

    ``delta`` is the effective (already squashed) K x G table.
    """
    labels = np.asarray(labels, dtype=np.int64)
    groups = np.asarray(groups, dtype=np.int64)
    logits = ad.as_tensor(logits)
    w, l, delta = ad.as_tensor(w), ad.as_tensor(l), ad.as_tensor(delta)
    d_rows = ad.getitem(ad.transpose(delta), groups)
    l_rows = ad.getitem(ad.transpose(l), groups)
    z = ad.add(ad.mul(logits, d_rows), l_rows)
    per = ad.mul(ad.getitem(w, (labels, groups)), _per_example_ce(labels, z))
    return _reduce(per, reduction)


def group_train_loss(model, theta, X, labels, groups, tensors):
    w, l, delta, _ = tensors
    return group_parametric_ce(labels, groups, model(theta, X), w, l, delta)


def cross_entropy(labels, logits):
    labels = np.asarray(labels, dtype=np.int64)
    return _reduce(_per_example_ce(labels, ad.as_tensor(logits)), "mean")


def weighted_ce(labels, logits, w):
    labels = np.asarray(labels, dtype=np.int64)
    per = ad.mul(ad.getitem(ad.as_tensor(w), labels), _per_example_ce(labels, ad.as_tensor(logits)))
    return _reduce(per, "mean")


def _stratum_weights(key, num_strata, what):
    counts = np.bincount(key, minlength=num_strata)
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        warnings.warn(f"empty {what} {empty.tolist()} contribute 0", EmptyCellWarning, stacklevel=3)
    inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)
    return inv[key]


def balanced_ce(labels, logits, num_classes):
    """Mean over classes of the class-conditional mean CE."""
    labels = np.asarray(labels, dtype=np.int64)
    a = _stratum_weights(labels, num_classes, "classes") / num_classes
    return ad.reduce_sum(ad.mul(ad.Tensor(a), _per_example_ce(labels, ad.as_tensor(logits))))


def cell_ce(labels, groups, logits, num_classes, num_groups):
    """K x G Tensor of (class, group)-conditional mean CE (0 for empty cells)."""
    labels = np.asarray(labels, dtype=np.int64)
    groups = np.asarray(groups, dtype=np.int64)
    key = labels * num_groups + groups
    a = _stratum_weights(key, num_classes * num_groups, "cells")
    per = ad.mul(ad.Tensor(a), _per_example_ce(labels, ad.as_tensor(logits)))
    cells = ad.scatter_add(per, key, (num_classes * num_groups,))
    return ad.reshape(cells, (num_classes, num_groups))


def group_balanced_ce(labels, groups, logits, num_classes, num_groups):
    return ad.reduce_sum(cell_ce(labels, groups, logits, num_classes, num_groups)) * (
        1.0 / (num_classes * num_groups))


def deo_surrogate_ce(labels, groups, logits, num_classes=2, num_groups=2):
    """Sum over classes of ``|CE_{k,1} - CE_{k,2}|`` (two groups)."""
    if num_groups != 2:
        raise ConfigError("DEO surrogate is defined for two groups")
    cells = cell_ce(labels, groups, logits, num_classes, num_groups)
    gap = ad.sub(ad.getitem(cells, (slice(None), 0)), ad.getitem(cells, (slice(None), 1)))
    return ad.reduce_sum(ad.absolute(gap))


VALIDATION_TARGETS = ("balanced", "group-balanced", "deo", "ce")


@dataclass
class ValidationObjective:
    """``(1 - lam) * CE + lam * target`` where target is balanced CE,
    group-balanced CE or the DEO surrogate."""

    target: str = "balanced"
    lam: float = 1.0
    num_classes: int = 2
    num_groups: int | None = None

    def __post_init__(self):
        if self.target not in VALIDATION_TARGETS:
            raise ConfigError(f"unknown validation target {self.target!r}")
        if not 0 <= self.lam <= 1:
            raise ConfigError("lambda_val must lie in [0, 1]")

    def __call__(self, labels, logits, groups=None):
        parts = []
        if self.lam < 1 or self.target == "ce":
            parts.append(cross_entropy(labels, logits) * (1.0 if self.target == "ce" else 1.0 - self.lam))
        if self.target == "ce" or self.lam == 0:
            return parts[0]
        if self.target == "balanced":
            t = balanced_ce(labels, logits, self.num_classes)
        elif self.target == "group-balanced":
            t = group_balanced_ce(labels, groups, logits, self.num_classes, self.num_groups)
        else:
            t = deo_surrogate_ce(labels, groups, logits, self.num_classes, self.num_groups)
        parts.append(t * self.lam)
        return parts[0] if len(parts) == 1 else ad.add(parts[0], parts[1])
