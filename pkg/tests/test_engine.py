import math

import numpy as np
import pytest

from superlab.engine import (EngineParams, extinction_prob_oracle,
                             load_trajectory, mass_laplace_oracle,
                             save_trajectory, simulate_coupled,
                             simulate_mass, tau_tail_experiment)
from superlab.measures import AtomicMeasure

BETA = 0.8
ORIGIN = AtomicMeasure.point([0.0, 0.0, 0.0], 1.0)


def _params(**kw):
    base = dict(beta=BETA, d=3, mass_scale=1000, horizon=0.5,
                snapshot_times=(0.25, 0.5), seed=42)
    base.update(kw)
    return EngineParams(**base)


def test_params_validation():
    with pytest.raises(ValueError):
        _params(d=2)  # requires d > 2/beta
    with pytest.raises(ValueError):
        _params(snapshot_times=(0.25, 0.9))  # beyond horizon
    with pytest.raises(ValueError):
        _params(snapshot_times=(0.5, 0.25))  # not sorted
    with pytest.raises(ValueError):
        _params(K=1e-9)  # clip below two offspring


def test_mass_determinism():
    p = _params()
    m1, _, _ = simulate_mass(p, 1.0, reps=20)
    m2, _, _ = simulate_mass(p, 1.0, reps=20)
    assert np.array_equal(m1, m2)


def test_mass_stream_independence():
    p = _params()
    m1, _, _ = simulate_mass(p, 1.0, reps=20, seed_stream=0)
    m2, _, _ = simulate_mass(p, 1.0, reps=20, seed_stream=1)
    assert not np.array_equal(m1, m2)


def test_mass_matches_laplace_oracle():
    p = _params(mass_scale=2000)
    reps = 600
    masses, _, _ = simulate_mass(p, 1.0, reps=reps)
    lam = 1.0
    emp = np.exp(-lam * masses[:, 1])
    se = emp.std(ddof=1) / math.sqrt(reps)
    oracle = mass_laplace_oracle(1.0, 0.5, lam, BETA)
    assert abs(emp.mean() - oracle) < 4 * se


def test_extinction_oracle_limits():
    assert extinction_prob_oracle(1.0, 1e9, BETA) == pytest.approx(1.0)
    assert extinction_prob_oracle(5.0, 0.01, BETA) < 1e-6


def test_coupled_invariants():
    p = _params(K=0.05, seed=7)
    traj = simulate_coupled(p, ORIGIN)
    assert traj.coupling_ok()
    for snap, kp in zip(traj.snapshots, traj.kept):
        assert len(kp) == len(snap)
        assert set(np.unique(kp)).issubset({0, 1})


def test_untruncated_run_keeps_everything():
    p = _params(seed=9)
    traj = simulate_coupled(p, ORIGIN)
    assert not math.isfinite(traj.tau_k)
    for kp in traj.kept:
        assert np.all(kp == 1)


def test_trajectory_roundtrip(tmp_path):
    p = _params(K=0.1, seed=3)
    traj = simulate_coupled(p, ORIGIN)
    save_trajectory(traj, tmp_path / "run")
    back = load_trajectory(tmp_path / "run")
    assert len(back.snapshots) == len(traj.snapshots)
    for a, b in zip(traj.snapshots, back.snapshots):
        assert np.allclose(a.positions, b.positions)
        assert np.allclose(a.masses, b.masses)
    for a, b in zip(traj.kept, back.kept):
        assert np.array_equal(a, b)


def test_tau_tail_decreases_in_K():
    p = EngineParams(BETA, 3, 300, 0.25, (0.25,), seed=5)
    rep = tau_tail_experiment(p, 0.5, 20_000, K_ladder=(0.5, 2.0))
    assert rep.estimates[0].value > rep.estimates[1].value
    assert all(r > 0 for r in rep.analytic_rates)
