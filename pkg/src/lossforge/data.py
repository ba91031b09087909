"""Synthetic long-tailed and group-imbalanced datasets, stratified splits,
per-class spherical augmentation, and CSV/JSON persistence."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    groups: np.ndarray | None = None
    num_groups: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError("features must be n x d with one label per row")
        if len(self.labels) < 1:
            raise ValueError("dataset must hold at least one example")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("label out of range")
        if self.groups is not None:
            self.groups = np.asarray(self.groups, dtype=np.int64)
            if self.num_groups is None:
                self.num_groups = int(self.groups.max()) + 1
            if len(self.groups) != len(self.labels):
                raise ValueError("one group per example required")
            if self.groups.min() < 0 or self.groups.max() >= self.num_groups:
                raise ValueError("group out of range")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes)

    @property
    def group_counts(self):
        """K x G table of (class, group) cell sizes, or None."""
        if self.groups is None:
            return None
        table = np.zeros((self.num_classes, self.num_groups), dtype=np.int64)
        np.add.at(table, (self.labels, self.groups), 1)
        return table

    @property
    def class_priors(self):
        return self.class_counts / len(self)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            self.num_classes,
            None if self.groups is None else self.groups[idx],
            self.num_groups,
            dict(self.meta),
        )


@dataclass
class SplitDataset:
    train: Dataset
    val: Dataset
    split_fraction: float
    train_index: np.ndarray
    val_index: np.ndarray

    def union(self):
        """Train and validation rows together, in original index order."""
        idx = np.concatenate([self.train_index, self.val_index])
        order = np.argsort(idx, kind="stable")
        feats = np.concatenate([self.train.features, self.val.features])[order]
        labels = np.concatenate([self.train.labels, self.val.labels])[order]
        groups = None
        if self.train.groups is not None:
            groups = np.concatenate([self.train.groups, self.val.groups])[order]
        return Dataset(feats, labels, self.train.num_classes, groups, self.train.num_groups,
                       dict(self.train.meta))


@dataclass
class AugmentPolicy:
    radii: np.ndarray
    samples_per_point: int = 1

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=np.float64)
        if np.any(self.radii < 0):
            raise ConfigError("augmentation radii must be nonnegative")
        if self.samples_per_point < 1:
            raise ConfigError("samples_per_point must be >= 1")


@dataclass
class GaussianMixtureSpec:
    """Isotropic class-conditional Gaussians.

    With ``dim >= K`` class means sit on scaled simplex vertices
    ``mean_scale * e_k``; otherwise they are spread on a circle in the first
    two coordinates.
    """

    dim: int = 16
    mean_scale: float = 2.0
    noise: float = 1.0
    means: list | None = None

    def class_means(self, num_classes):
        if self.means is not None:
            means = np.asarray(self.means, dtype=np.float64)
            if means.shape != (num_classes, self.dim):
                raise ConfigError(f"means must be {num_classes} x {self.dim}")
            return means
        means = np.zeros((num_classes, self.dim))
        if self.dim >= num_classes:
            means[np.arange(num_classes), np.arange(num_classes)] = self.mean_scale
        else:
            if self.dim < 2:
                raise ConfigError("need dim >= 2 for circular class means")
            ang = 2 * np.pi * np.arange(num_classes) / num_classes
            means[:, 0] = self.mean_scale * np.cos(ang)
            means[:, 1] = self.mean_scale * np.sin(ang)
        return means


def longtail_ratio(num_classes, rho):
    """Per-class decay ``mu`` with ``mu ** (K-1) == 1 / rho``."""
    if rho < 1:
        raise ConfigError("imbalance factor rho must be >= 1")
    if num_classes == 1:
        return 1.0
    return float(rho ** (-1.0 / (num_classes - 1)))


def longtail_counts(base_counts, rho):
    base = np.asarray(base_counts, dtype=np.float64)
    mu = longtail_ratio(len(base), rho)
    counts = np.floor(base * mu ** np.arange(len(base)) + 0.5).astype(np.int64)
    if counts.min() < 1:
        raise ConfigError(f"rho={rho} leaves class {int(np.argmin(counts))} empty")
    return counts, mu


def sample_classes(counts, spec, rng):
    """Draw ``counts[k]`` points from class ``k`` of the mixture."""
    counts = np.asarray(counts, dtype=np.int64)
    means = spec.class_means(len(counts))
    labels = np.repeat(np.arange(len(counts)), counts)
    feats = means[labels] + spec.noise * rng.standard_normal((len(labels), spec.dim))
    return feats, labels


def make_longtail(base_counts, rho, mixture=None, seed=0):
    """Long-tailed sample where class ``i`` keeps ``round(n_i * mu**i)`` points."""
    mixture = mixture or GaussianMixtureSpec()
    counts, mu = longtail_counts(base_counts, rho)
    rng = np.random.default_rng(seed)
    feats, labels = sample_classes(counts, mixture, rng)
    perm = rng.permutation(len(labels))
    meta = {
        "generator": "longtail",
        "base_counts": [int(c) for c in base_counts],
        "rho": float(rho),
        "mu": mu,
        "mixture": asdict(mixture),
        "seed": int(seed),
    }
    return Dataset(feats[perm], labels[perm], len(counts), meta=meta)


@dataclass
class SpuriousSpec:
    """Feature layout for the group dataset.

    The first ``core_dim`` coordinates carry the class signal
    (mean ``+-core_scale``); the next ``spurious_dim`` coordinates carry the
    group signal (mean ``+-spurious_scale``); the rest is pure noise.
    """

    core_dim: int = 2
    spurious_dim: int = 2
    noise_dim: int = 0
    core_scale: float = 1.0
    spurious_scale: float = 2.0
    noise: float = 1.0

    @property
    def dim(self):
        return self.core_dim + self.spurious_dim + self.noise_dim


def cell_sizes(fractions, n):
    fr = np.asarray(fractions, dtype=np.float64)
    if np.any(fr < 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise ConfigError("cell fractions must be nonnegative and sum to 1")
    sizes = np.floor(fr * n + 0.5).astype(np.int64)
    sizes.flat[np.argmax(fr)] += n - sizes.sum()
    empty = (sizes == 0) & (fr > 0)
    if np.any(empty):
        cells = [tuple(int(i) for i in c) for c in np.argwhere(empty)]
        raise ConfigError(f"cells {cells} round to zero examples at n={n}")
    return sizes


def sample_cells(sizes, spec, rng):
    sizes = np.asarray(sizes, dtype=np.int64)
    K, G = sizes.shape
    labels = np.repeat(np.repeat(np.arange(K), G), sizes.ravel())
    groups = np.repeat(np.tile(np.arange(G), K), sizes.ravel())
    n = len(labels)
    feats = spec.noise * rng.standard_normal((n, spec.dim))
    csign = 2.0 * labels / max(K - 1, 1) - 1.0
    gsign = 2.0 * groups / max(G - 1, 1) - 1.0
    feats[:, : spec.core_dim] += spec.core_scale * csign[:, None]
    feats[:, spec.core_dim : spec.core_dim + spec.spurious_dim] += spec.spurious_scale * gsign[:, None]
    return feats, labels, groups


def make_group_dataset(fractions, n, spurious=None, seed=0):
    spurious = spurious or SpuriousSpec()
    sizes = cell_sizes(fractions, n)
    rng = np.random.default_rng(seed)
    feats, labels, groups = sample_cells(sizes, spurious, rng)
    perm = rng.permutation(len(labels))
    K, G = sizes.shape
    meta = {
        "generator": "group",
        "fractions": np.asarray(fractions, dtype=float).tolist(),
        "n": int(n),
        "spurious": asdict(spurious),
        "seed": int(seed),
    }
    return Dataset(feats[perm], labels[perm], K, groups[perm], G, meta=meta)


def split(ds, fraction=0.8, seed=0):
    """Stratified train/validation split.

    Strata are classes, or (class, group) cells when groups are present.
    A stratum with a single example goes to train (with a warning); any
    larger stratum keeps at least one validation example.
    """
    if not 0 < fraction < 1:
        raise ConfigError("split fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    key = ds.labels if ds.groups is None else ds.labels * ds.num_groups + ds.groups
    train_idx, val_idx = [], []
    for s in np.unique(key):
        idx = np.flatnonzero(key == s)
        idx = idx[rng.permutation(len(idx))]
        c = len(idx)
        if c == 1:
            warnings.warn(f"stratum {int(s)} has a single example; assigning it to train")
            n_val = 0
        else:
            n_val = max(1, int(math.floor(c * (1 - fraction) + 0.5)))
            n_val = min(n_val, c - 1)
        val_idx.append(idx[:n_val])
        train_idx.append(idx[n_val:])
    train_idx = np.sort(np.concatenate(train_idx))
    val_idx = np.sort(np.concatenate(val_idx))
    return SplitDataset(ds.subset(train_idx), ds.subset(val_idx), fraction, train_idx, val_idx)


def unit_ball(shape, dim, rng):
    """Uniform draws from the unit ``dim``-ball: Gaussian direction times U**(1/dim)."""
    z = rng.standard_normal(tuple(shape) + (dim,))
    z /= np.linalg.norm(z, axis=-1, keepdims=True)
    r = rng.random(tuple(shape) + (1,)) ** (1.0 / dim)
    return z * r


def augment(x, y, policy, rng):
    """``m`` copies of ``x`` pushed by ``eps_y * u`` with ``u`` uniform in the unit ball."""
    x = np.asarray(x, dtype=np.float64)
    u = unit_ball((policy.samples_per_point,), x.shape[-1], rng)
    return x + policy.radii[y] * u


# ---------------------------------------------------------------------------
# persistence


def _fmt(v):
    return format(float(v), ".17g")


def save_dataset(ds, csv_path, extra_meta=None):
    """Write features/labels[/groups] as CSV plus a ``.json`` sidecar."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    header = [f"x{j}" for j in range(ds.dim)] + ["label"]
    if ds.groups is not None:
        header.append("group")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(ds)):
            row = [_fmt(v) for v in ds.features[i]] + [str(int(ds.labels[i]))]
            if ds.groups is not None:
                row.append(str(int(ds.groups[i])))
            w.writerow(row)
    side = {
        "num_classes": int(ds.num_classes),
        "num_groups": None if ds.num_groups is None else int(ds.num_groups),
        "class_counts": ds.class_counts.tolist(),
        "group_counts": None if ds.groups is None else ds.group_counts.tolist(),
        "meta": ds.meta,
    }
    if extra_meta:
        side["meta"] = {**side["meta"], **extra_meta}
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return csv_path, sidecar


def load_dataset(csv_path):
    csv_path = Path(csv_path)
    side = json.loads(csv_path.with_suffix(".json").read_text())
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    has_group = header[-1] == "group"
    d = len(header) - (2 if has_group else 1)
    feats = np.array([[float(v) for v in r[:d]] for r in body], dtype=np.float64).reshape(len(body), d)
    labels = np.array([int(r[d]) for r in body], dtype=np.int64)
    groups = np.array([int(r[d + 1]) for r in body], dtype=np.int64) if has_group else None
    return Dataset(feats, labels, side["num_classes"], groups, side["num_groups"], side.get("meta", {}))
