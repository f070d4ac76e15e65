import math

import numpy as np
import pytest

from superlab.measures import AtomicMeasure
from superlab.neighborhood import (DilationQuery, ResolutionError,
                                   age_schedule, default_test_fns,
                                   dilation_volume, median_nn_spacing,
                                   neighborhood_integral, scaling_curve,
                                   validity_band)

BETA = 0.8


def _ball_volume(eps):
    return 4.0 / 3.0 * math.pi * eps ** 3


def test_single_atom_ball_volume():
    m = AtomicMeasure.point([0.0, 0.0, 0.0], 1.0)
    eps = 0.5
    res = dilation_volume(DilationQuery(m, eps))
    assert res.volume == pytest.approx(_ball_volume(eps), rel=0.02)
    assert res.error_bound > 0
    assert float(res) == res.volume


def test_disjoint_atoms_add():
    pos = np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    m = AtomicMeasure(pos, np.ones(2))
    eps = 0.4
    res = dilation_volume(DilationQuery(m, eps))
    assert res.volume == pytest.approx(2 * _ball_volume(eps), rel=0.02)


def test_overlapping_atoms_do_not_double_count():
    pos = np.array([[0.0, 0.0, 0.0], [1e-4, 0.0, 0.0]])
    m = AtomicMeasure(pos, np.ones(2))
    eps = 0.4
    res = dilation_volume(DilationQuery(m, eps))
    assert res.volume == pytest.approx(_ball_volume(eps), rel=0.02)


def test_resolution_precondition():
    m = AtomicMeasure.point([0.0, 0.0, 0.0], 1.0)
    with pytest.raises(ResolutionError):
        DilationQuery(m, 0.1, resolution=0.05)  # coarser than eps/8
    with pytest.raises(ValueError):
        DilationQuery(m, -0.1)


def test_integral_of_one_matches_volume():
    m = AtomicMeasure.point([0.2, 0.0, -0.1], 1.0)
    q = DilationQuery(m, 0.3)
    vol = dilation_volume(q).volume
    val = neighborhood_integral(q, lambda x: np.ones(x.shape[0]))
    assert val == pytest.approx(vol, rel=1e-9)


def test_median_nn_and_band():
    rng = np.random.default_rng(1)
    pos = rng.normal(size=(200, 3))
    s = median_nn_spacing(pos)
    lo, hi = validity_band(pos)
    assert lo == pytest.approx(4 * s)
    assert hi > lo > 0


def test_scaling_curve_shapes_and_csv(tmp_path):
    rng = np.random.default_rng(2)
    pos = rng.normal(scale=0.5, size=(500, 3))
    m = AtomicMeasure(pos, np.full(500, 1e-3))
    fns = default_test_fns(1.0)
    eps = [0.4, 0.3, 0.2]
    curve = scaling_curve(m, eps, fns, BETA, enforce_band=False)
    assert curve.eps.tolist() == sorted(eps, reverse=True)
    assert curve.scaled_ratio.shape == (3, len(fns))
    assert np.all(curve.volume > 0)
    path = tmp_path / "curve.csv"
    curve.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "eps,volume,f_id,raw,scaled_ratio"


def test_age_schedule_vanishes_faster_than_eps_squared():
    # the defect bound needs h(eps) with eps^2 << h(eps) -> 0
    for eps in (0.1, 0.01):
        h = age_schedule(eps, BETA, 3)
        assert eps ** 2 < h < 1.0
