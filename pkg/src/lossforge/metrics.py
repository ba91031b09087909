"""0/1 evaluation objectives, Pareto utilities and posthoc vector scaling."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, EvalError


@dataclass
class MetricsReport:
    std_err: float
    balanced_err: float
    per_class_err: list
    group_balanced_err: float | None = None
    per_cell_err: list | None = None
    deo: float | None = None
    worst_cell_err: float | None = None

    def to_json(self):
        return asdict(self)

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)


def predict(logits):
    """Argmax with ties to the lowest class index (numpy's argmax already does)."""
    return np.argmax(np.asarray(logits), axis=1)


def class_errors(pred, labels, num_classes):
    wrong = (pred != labels).astype(np.float64)
    counts = np.bincount(labels, minlength=num_classes)
    if np.any(counts == 0):
        raise EvalError(f"classes {np.flatnonzero(counts == 0).tolist()} absent from eval set")
    return np.bincount(labels, weights=wrong, minlength=num_classes) / counts


def cell_errors(pred, labels, groups, num_classes, num_groups):
    key = labels * num_groups + groups
    wrong = (pred != labels).astype(np.float64)
    counts = np.bincount(key, minlength=num_classes * num_groups)
    if np.any(counts == 0):
        raise EvalError("every (class, group) cell must appear in the eval set")
    err = np.bincount(key, weights=wrong, minlength=num_classes * num_groups) / counts
    return err.reshape(num_classes, num_groups)


def deo(cell_err):
    """Symmetric DEO: sum over classes of the gap between the two groups."""
    cell_err = np.asarray(cell_err)
    if cell_err.shape != (2, 2):
        raise EvalError("DEO needs two classes and two groups")
    return float(np.abs(cell_err[:, 0] - cell_err[:, 1]).sum())


def report_from_predictions(pred, labels, num_classes, groups=None, num_groups=None):
    labels = np.asarray(labels, dtype=np.int64)
    pcls = class_errors(pred, labels, num_classes)
    rep = MetricsReport(
        std_err=float(np.mean(pred != labels)),
        balanced_err=float(pcls.mean()),
        per_class_err=pcls.tolist(),
    )
    if groups is not None:
        cells = cell_errors(pred, labels, np.asarray(groups, dtype=np.int64), num_classes, num_groups)
        rep.per_cell_err = cells.tolist()
        rep.group_balanced_err = float(cells.mean())
        rep.worst_cell_err = float(cells.max())
        if num_classes == 2 and num_groups == 2:
            rep.deo = deo(cells)
    return rep


def evaluate(model, ds):
    """``model`` maps a feature matrix to an n x K logit array."""
    logits = np.asarray(model(ds.features))
    return report_from_predictions(predict(logits), ds.labels, ds.num_classes,
                                   ds.groups, ds.num_groups)


# ---------------------------------------------------------------------------
# Pareto utilities


@dataclass
class ParetoPoint:
    lam: float
    std_err: float
    fairness_value: float
    tag: str = ""

    def __post_init__(self):
        if not (np.isfinite(self.std_err) and np.isfinite(self.fairness_value)):
            raise ValueError("Pareto points must be finite")


def dominates(a, b):
    """Minimization in both coordinates: a is no worse anywhere and better somewhere."""
    return (a.std_err <= b.std_err and a.fairness_value <= b.fairness_value
            and (a.std_err < b.std_err or a.fairness_value < b.fairness_value))


def pareto_mask(points):
    return [not any(dominates(q, p) for q in points) for p in points]


def pareto_front(points):
    """Non-dominated points, stably sorted by std_err."""
    points = list(points)
    if not points:
        raise ValueError("pareto_front needs at least one point")
    keep = [p for p, k in zip(points, pareto_mask(points)) if k]
    return sorted(keep, key=lambda p: p.std_err)


def hypervolume_2d(points, ref):
    """Area dominated by ``points`` and bounded by the reference corner ``ref``.

    ``points`` are (x, y) pairs to be minimized; points outside the box
    contribute nothing.
    """
    pts = sorted((float(x), float(y)) for x, y in points if x <= ref[0] and y <= ref[1])
    # sweep by x; each point that lowers the staircase adds a horizontal strip
    area, prev_y = 0.0, float(ref[1])
    for x, y in pts:
        if y < prev_y:
            area += (ref[0] - x) * (prev_y - y)
            prev_y = y
    return area


# ---------------------------------------------------------------------------
# posthoc vector scaling (binary)


@dataclass
class ScalingGrid:
    w_lo: float = 0.5
    w_hi: float = 2.0
    b_lo: float = -2.0
    b_hi: float = 2.0
    step: float = 0.05

    def axes(self):
        if self.step <= 0 or self.w_hi < self.w_lo or self.b_hi < self.b_lo:
            raise ConfigError("degenerate posthoc grid")
        w = np.round(np.arange(self.w_lo, self.w_hi + self.step / 2, self.step), 10)
        b = np.round(np.arange(self.b_lo, self.b_hi + self.step / 2, self.step), 10)
        if len(w) == 0 or len(b) == 0:
            raise ConfigError("degenerate posthoc grid")
        return w, b


def posthoc_objective(counts, class_n, cell_n, objective, lam):
    """Objective per grid point from misclassification counts per (class, group) cell.

    ``counts`` has shape (W, B, 2*G).  ``objective`` is ``balanced`` (class-balanced
    error) or ``blend``: ``(1 - lam) * std_err + lam * deo``.
    """
    G = cell_n.shape[1]
    per_class = counts.reshape(*counts.shape[:2], 2, G).sum(axis=3) / class_n
    if objective == "balanced":
        return per_class.mean(axis=2)
    if objective == "blend":
        std = counts.sum(axis=2) / cell_n.sum()
        cells = counts.reshape(*counts.shape[:2], 2, G) / cell_n
        d = np.abs(cells[..., 0] - cells[..., 1]).sum(axis=2)
        return (1.0 - lam) * std + lam * d
    raise ConfigError(f"unknown posthoc objective {objective!r}")


def posthoc_vector_scaling(logits, labels, groups=None, objective="balanced", lam=0.0,
                           grid=None):
    """Grid search over ``f' = w * f + b`` with ``w2 = 1, b2 = 0`` fixed.

    Returns ``(w, b, report)``; ties go to the first grid point in row-major
    (w, b) order.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise ConfigError("posthoc vector scaling is binary")
    grid = grid or ScalingGrid()
    w_axis, b_axis = grid.axes()
    if groups is None:
        if objective == "blend":
            raise ConfigError("the DEO blend needs group labels")
        groups = np.zeros(len(labels), dtype=np.int64)
        G = 1
    else:
        groups = np.asarray(groups, dtype=np.int64)
        G = 2
    key = labels * G + groups
    cell_n = np.bincount(key, minlength=2 * G).reshape(2, G).astype(np.float64)
    if objective == "blend" and np.any(cell_n == 0):
        raise EvalError("every (class, group) cell must appear for the DEO blend")
    class_n = cell_n.sum(axis=1)
    if np.any(class_n == 0):
        raise EvalError("both classes must appear")
    counts = kernels.vs_grid_counts(
        np.ascontiguousarray(logits[:, 0]), np.ascontiguousarray(logits[:, 1]),
        labels, key, 2 * G, w_axis, b_axis)
    obj = posthoc_objective(counts, class_n, cell_n, objective, lam)
    i, j = np.unravel_index(int(np.argmin(obj)), obj.shape)
    w = np.array([w_axis[i], 1.0])
    b = np.array([b_axis[j], 0.0])
    pred = np.where(w[0] * logits[:, 0] + b[0] >= logits[:, 1], 0, 1)
    rep = report_from_predictions(pred, labels, 2, groups if G == 2 else None, G if G == 2 else None)
    return w, b, rep
