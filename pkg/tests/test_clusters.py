import math

import numpy as np
import pytest

from superlab.clusters import (estimate_a_h, eta_prob_from_xi,
                               multi_hit_bound, sample_clusters,
                               survival_prob_oracle, xi_prob_from_eta)
from superlab.engine import EngineParams

BETA = 0.8


def _params(N=2000, h=0.1, **kw):
    return EngineParams(BETA, 3, N, h, (h,), seed=11, **kw)


def test_survival_oracle_monotone_in_mass():
    probs = [survival_prob_oracle(1.0, BETA, m) for m in (0.1, 0.5, 2.0)]
    assert probs[0] < probs[1] < probs[2] < 1.0


def test_transfer_roundtrip_exact():
    t = 0.7
    for p in np.logspace(-8, -0.1, 25):
        q = eta_prob_from_xi(p, t, BETA)
        assert xi_prob_from_eta(q, t, BETA) == pytest.approx(p, abs=1e-13)
    assert eta_prob_from_xi(0.0, t, BETA) == 0.0


def test_transfer_small_p_linear():
    # for tiny p the cluster rate is p times the normalizer
    t, p = 0.5, 1e-9
    q = eta_prob_from_xi(p, t, BETA)
    assert q == pytest.approx((BETA * t) ** (1 / BETA) * p, rel=1e-6)


def test_sample_clusters_count_and_shape():
    h = 0.1
    clusters, attempts = sample_clusters(np.zeros(3), h, _params(h=h), 25)
    assert len(clusters) == 25
    assert attempts >= 25
    for c in clusters:
        assert c.ndim == 2 and c.shape[1] == 3 and c.shape[0] > 0
        assert np.isfinite(c).all()
        # clusters live near their root at small age
        assert np.linalg.norm(c, axis=1).max() < 20 * math.sqrt(h)


def test_estimate_a_h_untruncated_matches_closed_form():
    h = 0.1
    N = 30_000  # keeps the particle-approximation bias under the stderr
    est = estimate_a_h(h, None, _params(N=N, h=h), reps=4000)
    target = (BETA * h) ** (1.0 / BETA)
    assert abs(est.value - target) < 4 * est.stderr + 0.02 * target


def test_estimate_a_h_truncated_at_least_untruncated():
    h = 0.1
    p = _params(N=10_000, h=h)
    est_inf = estimate_a_h(h, None, p, reps=3000)
    est_k = estimate_a_h(h, 0.5, p, reps=3000)
    # truncation removes mass, so survival drops and the normalizer grows
    assert est_k.value >= est_inf.value - 3 * math.hypot(est_k.stderr,
                                                         est_inf.stderr)


def test_multi_hit_bound_scaling():
    kw = dict(t=0.5, h=0.1, center=np.zeros(3), beta=BETA, d=3)
    from superlab.measures import AtomicMeasure
    mu = AtomicMeasure.point([0.0, 0.0, 0.0], 1.0)
    b1 = multi_hit_bound(0.1, initial=mu, **kw)
    b2 = multi_hit_bound(0.2, initial=mu, **kw)
    # exponent 2(d - 2/beta) = 1 for the defaults
    assert b2 / b1 == pytest.approx(2.0, rel=1e-9)
