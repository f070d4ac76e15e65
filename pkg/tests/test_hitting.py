import numpy as np
import pytest

from superlab.engine import EngineParams
from superlab.hitting import (HitQuery, estimate_hit_prob, hit_counts)
from superlab.measures import AtomicMeasure

BETA = 0.8
ORIGIN = AtomicMeasure.point([0.0, 0.0, 0.0], 0.5)


def _params(N=1000, t=0.5, **kw):
    return EngineParams(BETA, 3, N, t, (t,), seed=17, **kw)


def test_hits_monotone_in_eps():
    centers = np.array([[0.3, 0.0, 0.0]])
    run = hit_counts(ORIGIN, 0.5, centers, [0.1, 0.2, 0.4], _params(),
                     reps=400)
    hits = run["hits"][0]
    # nested balls on the same sample paths: counts must be monotone
    assert hits[0] <= hits[1] <= hits[2]
    assert list(run["eps"]) == [0.1, 0.2, 0.4]


def test_truncated_hits_below_full():
    centers = np.array([[0.3, 0.0, 0.0], [1.0, 0.0, 0.0]])
    run = hit_counts(ORIGIN, 0.5, centers, [0.2, 0.4], _params(K=0.5),
                     reps=400)
    assert np.all(run["hits_kept"] <= run["hits"])


def test_hit_prob_estimate_near_center_is_large():
    q = HitQuery(ORIGIN, 0.25, np.zeros(3), 0.5, "full-process")
    est = estimate_hit_prob(q, _params(t=0.25), reps=400)
    # a ball around the starting point at short times is hit whenever
    # the process survives, which has probability about 0.55 here
    assert est.value > 0.3
    assert 0 < est.stderr < 0.05


def test_hit_prob_far_ball_is_small():
    q = HitQuery(ORIGIN, 0.25, np.array([5.0, 0.0, 0.0]), 0.2,
                 "full-process")
    est = estimate_hit_prob(q, _params(t=0.25), reps=400)
    assert est.value < 0.01


def test_determinism():
    centers = np.array([[0.3, 0.0, 0.0]])
    a = hit_counts(ORIGIN, 0.5, centers, [0.2], _params(), reps=200)
    b = hit_counts(ORIGIN, 0.5, centers, [0.2], _params(), reps=200)
    assert np.array_equal(a["hits"], b["hits"])
