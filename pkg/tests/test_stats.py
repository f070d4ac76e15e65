import math

import numpy as np
import pytest

from superlab.stats import (EstimateWithError, binomial_estimate,
                            derive_seeds, loglog_slope, mean_estimate,
                            merge_estimates)


def test_binomial_estimate():
    est = binomial_estimate(25, 100)
    assert est.value == 0.25
    assert est.stderr == pytest.approx(math.sqrt(0.25 * 0.75 / 100))
    assert est.reps == 100


def test_mean_estimate():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    est = mean_estimate(x)
    assert est.value == 2.5
    assert est.stderr == pytest.approx(x.std(ddof=1) / 2.0)


def test_merge_estimates_pools_replicates():
    a = binomial_estimate(10, 100)
    b = binomial_estimate(30, 300)
    merged = merge_estimates(a, b)
    assert merged.reps == 400
    assert merged.value == pytest.approx(0.1)


def test_agrees_uses_stderr():
    a = EstimateWithError(1.0, 0.1, 100)
    assert a.agrees(1.25, n_sigma=3)
    assert not a.agrees(2.0, n_sigma=3)


def test_loglog_slope_exact_power_law():
    x = np.array([0.1, 0.2, 0.4, 0.8])
    y = 3.0 * x ** -1.8
    slope, se = loglog_slope(x, y)
    assert slope == pytest.approx(-1.8, abs=1e-12)
    assert se == pytest.approx(0.0, abs=1e-10)


def test_derive_seeds_deterministic_and_distinct():
    s1 = derive_seeds(7, 10, stream=0)
    s2 = derive_seeds(7, 10, stream=0)
    s3 = derive_seeds(7, 10, stream=1)
    assert np.array_equal(s1, s2)
    assert not np.array_equal(s1, s3)
    assert len(np.unique(s1)) == 10
