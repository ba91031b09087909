import itertools

import numpy as np
import pytest
from scipy.optimize import minimize

from lossforge.errors import ConfigError, InfeasibleError
from lossforge.verify import checks, lemma1, lemma2, svm, theorem1


def qp_oracle(X, y, margins):
    """Dense SLSQP solve of min 0.5||w||^2 s.t. y_i w.x_i >= m_i."""
    A = X * y[:, None]
    w0 = np.linalg.lstsq(A, margins, rcond=None)[0] * 2
    res = minimize(lambda w: 0.5 * w @ w, w0, jac=lambda w: w, method="SLSQP",
                   constraints=[{"type": "ineq", "fun": lambda w: A @ w - margins, "jac": lambda w: A}],
                   options={"ftol": 1e-14, "maxiter": 500})
    assert res.success
    return res.x


# -- CS-SVM -------------------------------------------------------------------


def test_cs_svm_one_dimensional_example():
    X = np.array([[2.0], [-1.0]])
    y = np.array([1.0, -1.0])
    sol = svm.solve_cs_svm(X, y, 0.5, 1.0)
    assert sol.w[0] == pytest.approx(1.0, abs=1e-10)
    assert qp_oracle(X, y, np.array([2.0, 1.0]))[0] == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("dp,dm", [(0.5, 0.8), (0.3, 0.95), (0.7, 0.7)])
def test_cs_svm_matches_dense_qp(dp, dm):
    X, y = lemma2.separable_pair(20, seed=3)
    sol = svm.solve_cs_svm(X, y, dp, dm)
    ref = qp_oracle(X, y, svm.cs_margins(y, dp, dm))
    assert np.allclose(sol.w, ref, atol=1e-6)


def test_cs_svm_homogeneity():
    X, y = lemma2.separable_pair(30, seed=1)
    a = svm.solve_cs_svm(X, y, 0.6, 0.9)
    b = svm.solve_cs_svm(X, y, 0.3, 0.45)
    assert b.objective == pytest.approx(2 * a.objective, rel=1e-9)


def test_cs_svm_kkt_residuals():
    for seed in range(5):
        X, y = lemma2.separable_pair(40, seed=seed)
        sol = svm.solve_cs_svm(X, y, 0.5, 0.8)
        assert sol.kkt["dual_min"] >= 0
        assert sol.kkt["complementary"] <= 1e-8
        assert sol.kkt["stationarity"] <= 1e-8
        assert sol.active_margins.min() >= -1e-8


def test_cs_svm_infeasible():
    X = np.array([[1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(InfeasibleError):
        svm.solve_cs_svm(X, np.array([1.0, -1.0]), 0.5, 0.5)


def test_equal_deltas_give_standard_svm_direction():
    X, y = lemma2.separable_pair(30, seed=2)
    a = svm.solve_cs_svm(X, y, 1.0, 1.0)
    b = svm.solve_cs_svm(X, y, 0.4, 0.4)
    assert a.direction @ b.direction == pytest.approx(1.0, abs=1e-12)


# -- augmented SVM --------------------------------------------------------------


def test_augmented_zero_radius_equals_standard_svm():
    X, y = lemma2.separable_pair(30, seed=4)
    aug = svm.solve_augmented_svm_2d(X, y, 0.0, 0.0)
    std = svm.solve_cs_svm(X, y, 1.0, 1.0)
    assert np.allclose(aug.w, std.w, atol=1e-7)


@pytest.mark.parametrize("seed", range(4))
def test_augmented_solution_passes_independent_audit(seed):
    X, y = lemma2.separable_pair(40, seed=seed)
    aug = svm.solve_augmented_svm_2d(X, y, 0.1, 0.3)
    y = np.asarray(y)
    w = aug.w
    slack = y * (X @ w) - np.where(y > 0, 0.1, 0.3) * np.linalg.norm(w) - 1
    assert slack.min() >= -1e-8


def test_augmented_infeasible():
    X = np.array([[1.0, 0.0], [-1.0, 0.0]])
    with pytest.raises(InfeasibleError):
        svm.solve_augmented_svm_2d(X, np.array([1.0, -1.0]), 2.0, 2.0)


# -- Lemma 2 ------------------------------------------------------------------


def test_lemma2_symmetric_case():
    X, y = lemma2.separable_pair(40, seed=0)
    r = lemma2.lemma2_check(X, y, 0.5, 0.5)
    assert r["pass"] and r["eps_plus"] == r["eps_minus"]
    std = svm.solve_cs_svm(X, y, 1.0, 1.0).direction
    aug = svm.solve_augmented_svm_2d(X, y, r["eps_plus"], r["eps_minus"]).direction
    assert std @ aug >= 1 - 1e-6


def test_lemma2_asymmetric_example():
    X, y = lemma2.separable_pair(40, seed=11)
    r = lemma2.lemma2_check(X, y, 0.5, 0.8)
    assert r["pass"] and r["eps_plus"] > r["eps_minus"] > 0


def test_lemma2_limit_case():
    X, y = lemma2.separable_pair(40, seed=5)
    r = lemma2.lemma2_check(X, y, 1 - 1e-9, 1 - 1e-9)
    assert r["pass"] and abs(r["eps_plus"]) < 1e-8


def test_lemma2_grid_of_instances():
    vals = (0.3, 0.5, 0.8, 0.95)
    results = []
    for i, (dp, dm) in enumerate(itertools.product(vals, vals)):
        X, y = lemma2.separable_pair(40, seed=100 + i)
        results.append(lemma2.lemma2_check(X, y, dp, dm)["pass"])
    assert len(results) >= 16 and all(results)
    extra = [lemma2.lemma2_check(*lemma2.separable_pair(40, seed=200 + s), 0.3, 0.8)["pass"] for s in range(4)]
    assert all(extra)


def test_ridgeless_symmetric_and_asymmetric():
    X, y = lemma2.separable_pair(30, seed=7)
    sym = lemma2.ridgeless_direction(X, y, epochs=3000)
    assert sym["final_cosine"] >= 0.999
    asym = lemma2.ridgeless_direction(X, y, lemma2.BinaryLossParams(delta_plus=0.5, delta_minus=0.9),
                                      epochs=3000)
    assert asym["final_cosine"] >= 0.999
    assert asym["tail_trend"] >= 0
    assert asym["tail_nondecreasing_frac"] >= 0.9


# -- Lemma 1 ------------------------------------------------------------------


@pytest.mark.parametrize("gamma", [0.5, 1.5, 2.0, 3.0])
def test_lemma1_equal_deltas_never_disagree(gamma):
    assert not lemma1.lemma1_check(lemma1.make_case((1.5, 1.5), gamma))["disagrees"]


def test_lemma1_worked_example():
    r = lemma1.lemma1_check(lemma1.make_case((1.0, 2.0), 2.0))
    assert r["disagrees"]


def test_lemma1_gamma_one_agrees():
    assert not lemma1.lemma1_check(lemma1.make_case((1.0, 2.0), 1.0))["disagrees"]


@pytest.mark.parametrize("delta,gamma", [((1.0, 2.0), 0.5), ((0.5, 1.0), 1.8), ((2.0, 0.7), 2.5),
                                         ((1.0, 3.0), 1.2)])
def test_lemma1_disagreement_for_unequal_deltas(delta, gamma):
    for costs in ((1.0, 1.0), (1.0, 3.0)):
        assert lemma1.lemma1_check(lemma1.make_case(delta, gamma, costs))["disagrees"]


def test_lemma1_case_validation():
    with pytest.raises(ConfigError):
        lemma1.Lemma1Case((1.0, 2.0), 2.0, (0.5, 1.2), (0.5, 0.5))


def test_lemma1_decisions_oracle():
    # direct enumeration on one case with explicit likelihoods and l
    case = lemma1.Lemma1Case((1.0, 2.0), 2.0, (0.3, 0.3), (0.6, 0.6), l=(0.0, 0.0))
    r = lemma1.lemma1_check(case, t=1e-4)
    for key, val in r["rule_decisions"].items():
        eta = np.array(case.x1_likelihoods if key.startswith("x1") else case.x2_likelihoods)
        eta[0] *= 1 + (1e-4 if key.endswith("+") else -1e-4)
        assert val == int(np.argmax(np.log(eta) / np.array([1.0, 2.0])))


# -- Theorem 1 trend -----------------------------------------------------------


def test_single_candidate_has_zero_excess():
    prob = theorem1.TrendProblem(taus=(0.5,))
    r = theorem1.theorem1_trend(prob, (16, 64), seeds=range(3))
    assert r["median_excess"] == [0.0, 0.0]


def test_large_validation_set_has_small_excess():
    r = theorem1.theorem1_trend(val_sizes=(20000,), seeds=range(5))
    assert r["median_excess"][0] <= 2e-3


def test_population_errors_match_monte_carlo(rng):
    prob = theorem1.TrendProblem()
    w, b = np.array([1.0, 0.3]), -0.2
    e_pos, e_neg = theorem1.population_errors(prob, w, b)
    X, y = theorem1.sample(prob, 100_000, 100_000, rng)
    s = X @ w + b
    assert np.mean(s[y > 0] < 0) == pytest.approx(e_pos, abs=5e-3)
    assert np.mean(s[y < 0] >= 0) == pytest.approx(e_neg, abs=5e-3)


def test_check_neumann_table():
    r = checks.check_neumann(seeds=range(3))
    assert r["pass"]
    assert r["table"][-1]["approx"][0] == pytest.approx(0.46875)
    assert r["table"][-1]["exact"][0] == 0.5
