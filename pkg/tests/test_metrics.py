import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lossforge import metrics
from lossforge.data import Dataset
from lossforge.errors import ConfigError, EvalError

P = metrics.ParetoPoint


def test_perfect_classifier():
    labels = np.array([0, 0, 1, 1])
    groups = np.array([0, 1, 0, 1])
    rep = metrics.report_from_predictions(labels.copy(), labels, 2, groups, 2)
    assert rep.std_err == rep.balanced_err == rep.deo == rep.worst_cell_err == 0.0


def test_balanced_err_is_mean_of_class_errors():
    labels = np.r_[np.zeros(10, int), np.ones(10, int)]
    pred = labels.copy()
    pred[:1] = 1
    pred[10:13] = 0
    rep = metrics.report_from_predictions(pred, labels, 2)
    assert rep.per_class_err == pytest.approx([0.1, 0.3])
    assert rep.balanced_err == pytest.approx(0.2)


def test_deo_example():
    assert metrics.deo([[0.4, 0.1], [0.2, 0.2]]) == pytest.approx(0.3)


def test_missing_cell_is_eval_error():
    labels = np.array([0, 0, 1])
    with pytest.raises(EvalError):
        metrics.report_from_predictions(labels, labels, 2, np.array([0, 1, 0]), 2)
    with pytest.raises(EvalError):
        metrics.report_from_predictions(np.zeros(2, int), np.zeros(2, int), 2)


def test_argmax_ties_go_to_lowest_index():
    assert metrics.predict(np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]])).tolist() == [0, 1]


def test_evaluate_and_json(rng):
    X = rng.standard_normal((40, 2))
    ds = Dataset(X, (X[:, 0] > 0).astype(int), 2, groups=(X[:, 1] > 0).astype(int), num_groups=2)
    rep = metrics.evaluate(lambda F: np.c_[-F[:, 0], F[:, 0]], ds)
    assert rep.std_err == 0.0 and rep.deo == 0.0
    assert json.loads(rep.dumps())["per_cell_err"] == [[0.0, 0.0], [0.0, 0.0]]


@given(st.lists(st.integers(0, 2), min_size=30, max_size=30), st.floats(0.01, 100))
@settings(max_examples=30, deadline=None)
def test_positive_scaling_invariance(raw, c):
    rng = np.random.default_rng(len(raw))
    logits = rng.standard_normal((30, 3))
    labels = np.array(raw)
    labels[:3] = [0, 1, 2]
    a = metrics.report_from_predictions(metrics.predict(logits), labels, 3)
    b = metrics.report_from_predictions(metrics.predict(c * logits), labels, 3)
    assert a == b


def test_balanced_matches_standard_on_balanced_set(rng):
    labels = np.repeat([0, 1, 2], 20)
    pred = rng.integers(0, 3, 60)
    rep = metrics.report_from_predictions(pred, labels, 3)
    assert abs(rep.balanced_err - rep.std_err) <= 1 / 60


@given(st.lists(st.integers(0, 1), min_size=8, max_size=8))
@settings(max_examples=30, deadline=None)
def test_group_blind_predictor_on_symmetric_data_has_zero_deo(pred_half):
    # both groups carry the same features, so any group-blind rule acts identically
    labels = np.array([0, 0, 1, 1, 0, 0, 1, 1] * 2)
    groups = np.repeat([0, 1], 8)
    pred = np.array(pred_half * 2)
    rep = metrics.report_from_predictions(pred, labels, 2, groups, 2)
    assert rep.deo == 0.0
    assert 0.0 <= rep.deo <= 2.0


# -- Pareto -------------------------------------------------------------------


def test_pareto_examples():
    one = [P(0.0, 0.1, 0.5)]
    assert metrics.pareto_front(one) == one
    pts = [P(0, 0.1, 0.5), P(1, 0.2, 0.4), P(2, 0.15, 0.6)]
    front = metrics.pareto_front(pts)
    assert [(p.std_err, p.fairness_value) for p in front] == [(0.1, 0.5), (0.2, 0.4)]
    same = [P(i, 0.3, 0.3) for i in range(3)]
    assert len(metrics.pareto_front(same)) == 3


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=20))
@settings(max_examples=60, deadline=None)
def test_pareto_front_has_no_dominated_pair(coords):
    pts = [P(0, x / 10, y / 10) for x, y in coords]
    front = metrics.pareto_front(pts)
    for a, b in itertools.permutations(front, 2):
        assert not metrics.dominates(a, b)
    # every dropped point is dominated by something kept
    for p in pts:
        if p not in front:
            assert any(metrics.dominates(q, p) for q in front)
    assert [p.std_err for p in front] == sorted(p.std_err for p in front)


def test_pareto_rejects_nonfinite():
    with pytest.raises(ValueError):
        P(0, float("nan"), 0.1)


def _hv_oracle(points, ref):
    # exact area on the grid induced by the point coordinates
    xs = sorted({p[0] for p in points} | {ref[0]})
    ys = sorted({p[1] for p in points} | {ref[1]})
    area = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        for y0, y1 in zip(ys, ys[1:]):
            if any(px <= x0 and py <= y0 for px, py in points):
                area += (x1 - x0) * (y1 - y0)
    return area


def test_hypervolume_simple():
    assert metrics.hypervolume_2d([(0.5, 0.5)], (1, 1)) == pytest.approx(0.25)
    assert metrics.hypervolume_2d([(0.2, 0.6), (0.6, 0.2)], (1, 1)) == pytest.approx(0.48)
    assert metrics.hypervolume_2d([(2.0, 0.0)], (1, 1)) == 0.0


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=12))
@settings(max_examples=60, deadline=None)
def test_hypervolume_matches_cell_decomposition(points):
    assert metrics.hypervolume_2d(points, (1.0, 1.0)) == pytest.approx(_hv_oracle(points, (1.0, 1.0)), abs=1e-12)


# -- posthoc vector scaling ---------------------------------------------------


def _brute_force(logits, labels, groups, objective, lam, grid):
    w_axis, b_axis = grid.axes()
    best, arg = np.inf, None
    for w in w_axis:
        for b in b_axis:
            pred = np.where(w * logits[:, 0] + b >= logits[:, 1], 0, 1)
            rep = metrics.report_from_predictions(pred, labels, 2, groups, 2 if groups is not None else None)
            val = rep.balanced_err if objective == "balanced" else (1 - lam) * rep.std_err + lam * rep.deo
            if val < best - 1e-15:
                best, arg = val, (w, b)
    return best, arg


@pytest.mark.parametrize("objective,lam", [("balanced", 0.0), ("blend", 0.4)])
def test_posthoc_matches_brute_force(objective, lam):
    rng = np.random.default_rng(5)
    logits = rng.standard_normal((20, 2))
    labels = np.array([0] * 14 + [1] * 6)
    groups = np.array([0, 1] * 10)
    grid = metrics.ScalingGrid(0.5, 2.0, -1.0, 1.0, 0.1)
    w, b, rep = metrics.posthoc_vector_scaling(logits, labels, groups, objective, lam, grid)
    best, (bw, bb) = _brute_force(logits, labels, groups, objective, lam, grid)
    assert (w[0], b[0]) == (bw, bb)
    val = rep.balanced_err if objective == "balanced" else (1 - lam) * rep.std_err + lam * rep.deo
    assert val == pytest.approx(best, abs=1e-12)
    assert w[1] == 1.0 and b[1] == 0.0


def test_posthoc_beats_identity(rng):
    logits = rng.standard_normal((200, 2)) + np.array([0.8, 0.0])
    labels = np.r_[np.zeros(180, int), np.ones(20, int)]
    logits[180:, 1] += 0.5
    _, _, rep = metrics.posthoc_vector_scaling(logits, labels)
    ident = metrics.report_from_predictions(np.where(logits[:, 0] >= logits[:, 1], 0, 1), labels, 2)
    assert rep.balanced_err <= ident.balanced_err


def test_posthoc_constant_shift():
    logits = np.zeros((6, 2))
    labels = np.array([0, 0, 0, 1, 1, 1])
    grid = metrics.ScalingGrid(1.0, 1.0, 1.0, 1.0, 0.05)
    w, b, rep = metrics.posthoc_vector_scaling(logits, labels, grid=grid)
    # f' = (1, 0) on every row, so everything goes to the first class
    assert b.tolist() == [1.0, 0.0]
    assert rep.per_class_err == [0.0, 1.0]


def test_posthoc_errors():
    logits = np.zeros((4, 2))
    labels = np.array([0, 1, 0, 1])
    with pytest.raises(ConfigError):
        metrics.posthoc_vector_scaling(logits, labels, grid=metrics.ScalingGrid(2.0, 1.0))
    with pytest.raises(ConfigError):
        metrics.posthoc_vector_scaling(logits, labels, grid=metrics.ScalingGrid(step=0.0))
    with pytest.raises(ConfigError):
        metrics.posthoc_vector_scaling(logits, labels, objective="blend")
    with pytest.raises(ConfigError):
        metrics.posthoc_vector_scaling(np.zeros((4, 3)), labels)
