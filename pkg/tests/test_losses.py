import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lossforge import autodiff as ad
from lossforge import data, losses
from lossforge.errors import ConfigError
from lossforge.models import ModelSpec

from conftest import central_diff, rel_err

logit_rows = arrays(np.float64, (3, 4), elements=st.floats(-3, 3))


def pce(labels, logits, w, l, delta):
    with ad.no_record():
        return float(losses.parametric_ce(labels, np.atleast_2d(logits), w, l, delta).data)


def mp_parametric_ce(y, f, w, l, delta):
    """High-precision direct evaluation of the parametric loss for one example."""
    mp.mp.dps = 50
    s = mp.mpf(0)
    for k in range(len(f)):
        if k != y:
            s += mp.e ** (mp.mpf(l[k]) - l[y] + mp.mpf(delta[k]) * f[k] - mp.mpf(delta[y]) * f[y])
    return mp.mpf(w[y]) * mp.log(1 + s)


# -- dictionaries and expansion ----------------------------------------------


def test_expand_identity():
    p = losses.LossParams(losses.identity_dictionary(3), np.ones(3), [1.0, 2.0, 3.0], np.zeros(3))
    w, l, d = losses.expand(p)
    assert l.tolist() == [1.0, 2.0, 3.0] and np.allclose(d, 0.5)


def test_expand_cluster():
    D = losses.cluster_dictionary(4, 2)
    p = losses.LossParams(D, np.ones(2), [0.3, -1.2], np.zeros(2))
    assert losses.expand(p)[1].tolist() == [0.3, 0.3, -1.2, -1.2]
    assert D.kind == "cluster"
    assert np.all(D.matrix.sum(axis=1) == 1)


def test_cluster_dictionary_groups_by_frequency():
    D = losses.cluster_dictionary(4, 2, priors=[0.1, 0.4, 0.05, 0.45])
    # the two most frequent classes (1 and 3) share a column
    assert np.array_equal(D.matrix[1], D.matrix[3])
    assert np.array_equal(D.matrix[0], D.matrix[2])


def test_expand_la_column():
    D = losses.la_dictionary([0.9, 0.1])
    p = losses.LossParams(D, [1.0], [1.0], [0.0])
    l = losses.expand(p)[1]
    assert np.allclose(l, [math.log(0.9), math.log(0.1)], atol=1e-15)
    assert np.round(l, 5).tolist() == [-0.10536, -2.30259]


@given(arrays(np.float64, 2, elements=st.floats(-3, 3)))
@settings(max_examples=20, deadline=None)
def test_cluster_expansion_constant_within_cluster(emb):
    p = losses.LossParams(losses.cluster_dictionary(6, 3), np.ones(2), emb, emb)
    _, l, d, _ = p.expand()
    assert np.all(l[:3] == l[0]) and np.all(l[3:] == l[3])
    assert np.all(d[:3] == d[0])


def test_loss_params_json_round_trip():
    p = losses.init_params("la-init", [0.5, 0.3, 0.2], losses.cluster_dictionary(3, 2, [0.5, 0.3, 0.2]),
                           trainable=("l", "delta", "eps"), eps=np.zeros(3))
    back = losses.LossParams.loads(p.dumps())
    assert back.dumps() == p.dumps()
    assert np.array_equal(back.alpha(), p.alpha())


def test_negative_weights_rejected():
    with pytest.raises(ConfigError):
        losses.LossParams(losses.identity_dictionary(2), [-1.0, 1.0], np.zeros(2), np.zeros(2))


def test_with_alpha_round_trip():
    p = losses.init_params("la-init", [0.7, 0.2, 0.1])
    a = p.alpha() + 0.25
    assert np.array_equal(p.with_alpha(a).alpha(), a)


def test_init_kinds():
    pri = np.array([0.6, 0.3, 0.1])
    bal = losses.init_params("balanced-ce", pri)
    w, l, d, _ = bal.expand()
    assert w.mean() == pytest.approx(1.0) and np.allclose(w * pri, (w * pri)[0])
    la = losses.init_params("la-init", pri, tau=1.0)
    assert np.allclose(la.expand()[1], np.log(pri))
    assert np.allclose(la.expand()[2], 0.5)
    with pytest.raises(ConfigError):
        losses.init_params("mystery", pri)


# -- parametric CE ------------------------------------------------------------


def test_parametric_ce_symmetric_logits():
    assert pce([0], [0.0, 0.0], np.ones(2), np.zeros(2), np.ones(2)) == pytest.approx(math.log(2), abs=1e-15)


def test_parametric_ce_worked_example():
    got = pce([0], [1.0, 0.0], [2.0, 1.0], [math.log(2), 0.0], [1.0, 1.0])
    ref = mp_parametric_ce(0, [1.0, 0.0], [2.0, 1.0], [math.log(2), 0.0], [1.0, 1.0])
    assert got == pytest.approx(float(ref), abs=1e-14)
    assert got == pytest.approx(2 * math.log(1 + 0.5 * math.exp(-1)), abs=1e-15)


def test_parametric_ce_zero_weight():
    assert pce([1], [5.0, -3.0], [1.0, 0.0], [0.2, 0.1], [1.0, 1.0]) == 0.0


@given(logit_rows, arrays(np.float64, 4, elements=st.floats(-2, 2)), st.floats(-5, 5))
@settings(max_examples=40, deadline=None)
def test_additive_shift_invariance(f, l, c):
    y = np.array([0, 2, 3])
    w, d = np.ones(4), np.full(4, 0.8)
    assert abs(pce(y, f, w, l, d) - pce(y, f, w, l + c, d)) <= 1e-12


@given(logit_rows)
@settings(max_examples=40, deadline=None)
def test_ce_recovery(f):
    y = np.array([1, 0, 3])
    with ad.no_record():
        ce = float(losses.cross_entropy(y, f).data)
    assert abs(pce(y, f, np.ones(4), np.zeros(4), np.ones(4)) - ce) <= 1e-12


@given(logit_rows, st.integers(0, 3), st.floats(0.01, 2.0))
@settings(max_examples=40, deadline=None)
def test_monotone_penalty(f, k, bump):
    y = np.array([0, 1, 2])
    keep = y != k
    if not keep.any():
        return
    l = np.zeros(4)
    l2 = l.copy()
    l2[k] += bump
    ys, fs = y[keep], f[keep]
    assert pce(ys, fs, np.ones(4), l2, np.ones(4)) > pce(ys, fs, np.ones(4), l, np.ones(4))


def test_parametric_ce_gradients_match_finite_differences(rng):
    y = np.array([0, 2, 1])
    f0 = rng.uniform(-2, 2, (3, 3))
    w0, l0, d0 = rng.uniform(0.5, 2, 3), rng.uniform(-2, 2, 3), rng.uniform(0.3, 1.5, 3)
    fn = lambda f, w, l, d: losses.parametric_ce(y, f, w, l, d)  # noqa: E731
    _, grads = ad.value_and_grad(fn, f0, w0, l0, d0)
    args = [f0, w0, l0, d0]
    for i, g in enumerate(grads):
        def scalar(v, i=i):
            a = list(args)
            a[i] = v
            return pce(y, *a)
        assert rel_err(g, central_diff(scalar, args[i])) <= 1e-5


def test_parametric_ce_matches_high_precision(rng):
    for _ in range(10):
        f = rng.uniform(-3, 3, 4)
        w, l, d = rng.uniform(0, 2, 4), rng.uniform(-2, 2, 4), rng.uniform(0.2, 2, 4)
        y = int(rng.integers(4))
        assert pce([y], f, w, l, d) == pytest.approx(float(mp_parametric_ce(y, f, w, l, d)), abs=1e-12)


# -- augmented training loss --------------------------------------------------


def _tiny_model(rng):
    spec = ModelSpec("linear", 3, [], 2)
    return spec, spec.init(rng), rng.standard_normal((6, 3)), np.array([0, 1, 0, 1, 1, 0])


def test_train_loss_reduces_to_parametric_ce_without_augmentation(rng):
    spec, theta, X, y = _tiny_model(rng)
    p = losses.init_params("la-init", [0.7, 0.3], trainable=("l", "delta", "eps"), eps=np.zeros(2))
    draws = data.unit_ball((1, len(y)), 3, rng)
    with ad.no_record():
        tensors = p.tensors()
        a = float(losses.train_loss(spec, theta, X, y, tensors, draws).data)
        w, l, d, _ = p.expand()
        b = float(losses.parametric_ce(y, spec(theta, X), w, l, d).data)
    assert a == b


def test_train_loss_symmetric_case():
    spec = ModelSpec("linear", 1, [], 2)
    theta = np.zeros(spec.num_params)
    p = losses.init_params("ce", [0.5, 0.5])
    with ad.no_record():
        v = float(losses.train_loss(spec, theta, np.zeros((1, 1)), [0], p.tensors()).data)
    assert v == pytest.approx(math.log(2), abs=1e-15)


def test_train_loss_differentiable_in_radius(rng):
    spec, theta, X, y = _tiny_model(rng)
    p = losses.init_params("ce", [0.5, 0.5], trainable=("eps",), eps=np.array([0.3, 0.6]))
    draws = data.unit_ball((4, len(y)), 3, rng)

    def fn(a):
        return losses.train_loss(spec, theta, X, y, p.tensors(a), draws)

    _, (g,) = ad.value_and_grad(fn, p.alpha())
    fd = central_diff(lambda a: float(fn(ad.Tensor(a)).data), p.alpha())
    assert rel_err(g, fd) <= 1e-5


def test_monte_carlo_variance_shrinks_with_draws(rng):
    spec, theta, X, y = _tiny_model(rng)
    p = losses.init_params("ce", [0.5, 0.5], eps=np.array([1.5, 1.5]))
    tensors = p.tensors()

    def estimates(m, reps=200):
        out = []
        r = np.random.default_rng(99)
        with ad.no_record():
            for _ in range(reps):
                out.append(float(losses.train_loss(spec, theta, X, y, tensors,
                                                   data.unit_ball((m, len(y)), 3, r)).data))
        return np.var(out)

    v1, v16 = estimates(1), estimates(16)
    assert 8 < v1 / v16 < 32  # 1/m scaling, ratio 16 within sampling noise


# -- group loss ---------------------------------------------------------------


def _mp_group(y, g, f, w, l, draw):
    mp.mp.dps = 50
    K = len(f)
    sig = [1 / (1 + mp.e ** (-mp.mpf(draw[k][g]))) for k in range(K)]
    z = [sig[k] * f[k] + l[k][g] for k in range(K)]
    return -mp.mpf(w[y][g]) * (z[y] - mp.log(sum(mp.e ** zk for zk in z)))


def test_group_loss_matches_high_precision(rng):
    K, G = 3, 2
    w, l, draw = rng.uniform(0.2, 2, (K, G)), rng.uniform(-2, 2, (K, G)), rng.uniform(-2, 2, (K, G))
    p = losses.GroupLossParams.from_tables(w, l, draw)
    y, g = rng.integers(K, size=5), rng.integers(G, size=5)
    f = rng.uniform(-3, 3, (5, K))
    we, le, de, _ = p.expand()
    with ad.no_record():
        per = losses.group_parametric_ce(y, g, f, we, le, de, reduction="none").data
    for i in range(5):
        assert per[i] == pytest.approx(float(_mp_group(y[i], g[i], f[i], w, l, draw)), abs=1e-12)


@given(logit_rows)
@settings(max_examples=30, deadline=None)
def test_group_collapse(f):
    rng = np.random.default_rng(0)
    w, l, draw = rng.uniform(0.2, 2, 4), rng.uniform(-2, 2, 4), rng.uniform(-2, 2, 4)
    y = np.array([0, 3, 1])
    p = losses.GroupLossParams.from_tables(w[:, None], l[:, None], draw[:, None])
    we, le, de, _ = p.expand()
    with ad.no_record():
        a = float(losses.group_parametric_ce(y, np.zeros(3, int), f, we, le, de).data)
    b = pce(y, f, w, l, 1 / (1 + np.exp(-draw)))
    assert abs(a - b) <= 1e-12


def test_group_symmetric():
    p = losses.group_ce_params(2, 2)
    w, l, d, _ = p.expand()
    with ad.no_record():
        v = float(losses.group_parametric_ce([0], [1], np.zeros((1, 2)), w, l, d).data)
    assert v == pytest.approx(math.log(2), abs=1e-15)


def test_group_la_params():
    p = losses.group_la_params([0.8, 0.2], [[0.9, 0.5], [0.1, 0.5]])
    w, l, d, _ = p.expand()
    assert np.allclose(w[0], [1.25, 5.0])
    assert np.allclose(l[:, 0], [math.log(0.9), math.log(0.1)])
    assert np.allclose(d, 0.5)
    with pytest.raises(ConfigError):
        losses.group_la_params([1.0, 0.0], [[0.5, 0.5], [0.5, 0.5]])


def test_group_la_uniform():
    p = losses.group_la_params([0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]])
    w, l, _, _ = p.expand()
    assert np.all(w == w[0, 0]) and np.all(l == l[0, 0])


# -- baseline and validation losses -------------------------------------------


def test_balanced_ce_equals_ce_on_balanced_batch(rng):
    y = np.array([0, 1, 2, 0, 1, 2])
    f = rng.standard_normal((6, 3))
    with ad.no_record():
        assert float(losses.balanced_ce(y, f, 3).data) == pytest.approx(
            float(losses.cross_entropy(y, f).data), abs=1e-14)


def test_weighted_ce_unit_weights(rng):
    y = np.array([0, 1, 1])
    f = rng.standard_normal((3, 2))
    with ad.no_record():
        assert float(losses.weighted_ce(y, f, np.ones(2)).data) == pytest.approx(
            float(losses.cross_entropy(y, f).data), abs=1e-15)


def test_deo_surrogate_symmetric_is_zero():
    y = np.array([0, 0, 1, 1])
    g = np.array([0, 1, 0, 1])
    f = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 2.0], [0.0, 2.0]])
    with ad.no_record():
        assert float(losses.deo_surrogate_ce(y, g, f).data) == 0.0


def test_deo_surrogate_gap():
    # cell CE values: class 0 groups (1.0, 0.4), class 1 groups equal
    def logits_for(ce):
        # two logits with CE(label 0) = ce: f = (0, t), log(1 + e^t) = ce
        return [0.0, math.log(math.exp(ce) - 1)]
    f = np.array([logits_for(1.0), logits_for(0.4), [0.0, -1.0], [0.0, -1.0]])
    f[2:] = f[2:, ::-1]
    y = np.array([0, 0, 1, 1])
    g = np.array([0, 1, 0, 1])
    with ad.no_record():
        assert float(losses.deo_surrogate_ce(y, g, f).data) == pytest.approx(0.6, abs=1e-12)


def test_empty_cell_warns_and_contributes_zero():
    y = np.array([0, 0, 1])
    g = np.array([0, 1, 0])
    f = np.zeros((3, 2))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        with ad.no_record():
            cells = losses.cell_ce(y, g, f, 2, 2).data
    assert any(issubclass(w.category, losses.EmptyCellWarning) for w in caught)
    assert cells[1, 1] == 0.0


def test_validation_objective_blend(rng):
    y = np.array([0, 1, 1, 1])
    f = rng.standard_normal((4, 2))
    obj = losses.ValidationObjective("balanced", 0.3, 2)
    with ad.no_record():
        got = float(obj(y, f).data)
        exp = 0.7 * float(losses.cross_entropy(y, f).data) + 0.3 * float(losses.balanced_ce(y, f, 2).data)
    assert got == pytest.approx(exp, abs=1e-14)
    with pytest.raises(ConfigError):
        losses.ValidationObjective("nonsense")
