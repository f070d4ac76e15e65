import math

import numpy as np
import pytest

from superlab.offspring import (build_offspring_law, jump_rate_constant,
                                levy_identity_residual, tail_first_moment,
                                tail_sum)

BETA = 0.8


def test_low_order_probabilities():
    law = build_offspring_law(BETA)
    assert law.probs[0] == pytest.approx(1.0 / (1.0 + BETA), abs=1e-15)
    assert law.probs[1] == 0.0
    assert law.probs[2] == pytest.approx(BETA / 2.0, abs=1e-15)


def test_recursion_holds_along_table():
    law = build_offspring_law(BETA)
    p = law.probs
    k = np.arange(2, law.tail_cutoff)
    lhs = p[k + 1] * (k + 1)
    rhs = p[k] * (k - 1 - BETA)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_normalization_and_criticality():
    law = build_offspring_law(BETA)
    M = law.tail_cutoff
    total = law.probs.sum() + tail_sum(BETA, M)
    assert total == pytest.approx(1.0, abs=1e-12)
    ks = np.arange(M + 1)
    mean = np.dot(ks, law.probs) + tail_first_moment(BETA, M) \
        + tail_sum(BETA, M)
    assert mean == pytest.approx(1.0, abs=1e-10)


def test_cumulative_monotone():
    law = build_offspring_law(BETA)
    assert np.all(np.diff(law.cumulative) >= 0)
    assert law.cumulative[-1] <= 1.0 + 1e-12


def test_tail_sum_decreasing():
    vals = [tail_sum(BETA, n) for n in (10, 100, 1000)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_jump_rate_constant_closed_form():
    expected = BETA * (1.0 + BETA) / math.gamma(1.0 - BETA)
    assert jump_rate_constant(BETA) == pytest.approx(expected, rel=1e-12)


def test_levy_identity_residual_small():
    lam = np.array([0.25, 1.0, 4.0, 16.0])
    res = levy_identity_residual(BETA, lam)
    assert np.max(np.abs(res)) < 1e-8


def test_other_beta_values():
    for beta in (0.3, 0.5, 0.95):
        law = build_offspring_law(beta)
        assert law.probs[0] == pytest.approx(1.0 / (1.0 + beta), abs=1e-15)
        total = law.probs.sum() + tail_sum(beta, law.tail_cutoff)
        assert total == pytest.approx(1.0, abs=1e-10)
