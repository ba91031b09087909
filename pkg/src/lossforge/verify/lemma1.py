"""Decision-rule disagreement for multiplicative logit adjustment.

At the population level the parametric loss is minimized by scores
``f_y(x) = log(eta_y(x) / e^{l_y}) / delta_y``, so its decision is
``argmax_y a_y eta_y(x)^{1/delta_y}`` with ``a_y = e^{-l_y/delta_y}``.  The
Bayes rule for costs ``c`` is ``argmax_y c_y eta_y(x)``.  Scaling both
likelihoods by ``gamma`` leaves Bayes alone but shifts the adjusted rule
whenever the two exponents differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass
class Lemma1Case:
    delta: tuple
    gamma: float
    x1_likelihoods: tuple
    x2_likelihoods: tuple
    l: tuple | None = None
    costs: tuple = (1.0, 1.0)

    def __post_init__(self):
        self.delta = tuple(float(d) for d in self.delta)
        self.costs = tuple(float(c) for c in self.costs)
        for v in (*self.x1_likelihoods, *self.x2_likelihoods):
            if not 0 < v < 1:
                raise ConfigError("likelihoods must lie in (0, 1)")
        if min(self.delta) <= 0:
            raise ConfigError("delta must be positive")


def make_case(delta, gamma, costs=(1.0, 1.0), l=None, base=0.4):
    """Build the pair: ``x1`` is a Bayes tie, ``x2`` has ``gamma`` times its likelihoods."""
    c1, c2 = (float(c) for c in costs)
    p = base
    q = c1 * p / c2
    top = max(p, q) * max(1.0, gamma)
    if top >= 1:
        shrink = 0.9 / top
        p, q = p * shrink, q * shrink
    return Lemma1Case(tuple(delta), float(gamma), (p, q), (gamma * p, gamma * q), l, tuple(costs))


def calibrated_l(case):
    """``l`` placing the adjusted rule's tie exactly at ``x1`` (the hardest case to refute)."""
    p, q = case.x1_likelihoods
    d1, d2 = case.delta
    return (0.0, math.log(q) - d2 * math.log(p) / d1)


def _bayes(eta, costs):
    s = np.asarray(costs) * np.asarray(eta)
    return int(np.argmax(s))


def _rule(eta, delta, l):
    s = (np.log(eta) - np.asarray(l)) / np.asarray(delta)
    return int(np.argmax(s))


def lemma1_check(case, t=None):
    """Compare Bayes and adjusted-rule decisions at both points under +-t perturbations.

    The first-class likelihood is multiplied by ``1 + s t`` (``s`` = +-1)
    at both points.  By default ``t`` is small next to the rule's shift
    ``|(1/delta_1 - 1/delta_2) log gamma|``.
    """
    l = case.l if case.l is not None else calibrated_l(case)
    gap = abs((1.0 / case.delta[0] - 1.0 / case.delta[1]) * math.log(case.gamma))
    if t is None:
        t = 1e-3 if gap == 0 else min(1e-3, 0.25 * case.delta[0] * gap)
    bayes, rule = {}, {}
    disagrees = False
    for sign, tag in ((1.0, "+"), (-1.0, "-")):
        for name, eta in (("x1", case.x1_likelihoods), ("x2", case.x2_likelihoods)):
            e = np.array(eta, dtype=np.float64)
            e[0] *= 1.0 + sign * t
            b, r = _bayes(e, case.costs), _rule(e, case.delta, l)
            bayes[f"{name}{tag}"] = b
            rule[f"{name}{tag}"] = r
            disagrees |= b != r
    return {
        "delta": list(case.delta),
        "gamma": case.gamma,
        "l": list(l),
        "perturbation": t,
        "bayes_decisions": bayes,
        "rule_decisions": rule,
        "disagrees": bool(disagrees),
    }
