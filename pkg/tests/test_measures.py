import math

import numpy as np
import pytest

from superlab.measures import (AtomicMeasure, Window, convolve_heat,
                               heat_kernel, heat_kernel_radial, integrate,
                               total_mass)


def test_point_and_total_mass():
    m = AtomicMeasure.point([1.0, 2.0, 3.0], 0.5)
    assert total_mass(m) == 0.5
    assert m.dim == 3
    assert len(m) == 1


def test_empty_measure():
    m = AtomicMeasure.empty(3)
    assert total_mass(m) == 0.0
    assert len(m) == 0


def test_integrate_linear_functional():
    pos = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    w = np.array([1.0, 2.0, 3.0])
    m = AtomicMeasure(pos, w)
    val = integrate(m, lambda x: x[:, 0] + x[:, 1])
    assert val == pytest.approx(1.0 * 2 + 2.0 * 3, abs=1e-12)


def test_csv_roundtrip(tmp_path):
    pos = np.random.default_rng(0).normal(size=(7, 3))
    w = np.full(7, 0.25)
    m = AtomicMeasure(pos, w)
    path = tmp_path / "m.csv"
    m.to_csv(path)
    back = AtomicMeasure.from_csv(path)
    assert np.allclose(back.positions, pos)
    assert np.allclose(back.masses, w)


def test_heat_kernel_peak_and_radial_consistency():
    t = 0.7
    x = np.array([[0.3, -0.1, 0.2]])
    r = float(np.linalg.norm(x))
    direct = heat_kernel(t, x, d=3)
    radial = heat_kernel_radial(t, np.array([r]), 3)
    assert np.allclose(direct, radial)
    peak = heat_kernel(t, np.zeros((1, 3)), d=3)
    assert peak == pytest.approx((2 * math.pi * t) ** -1.5, rel=1e-12)


def test_heat_kernel_integrates_to_one():
    t = 0.4
    grid = np.linspace(-8, 8, 1601)
    vals = heat_kernel(t, grid[:, None], d=1)
    total = np.trapz(vals, grid)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_convolve_heat_point_mass():
    m = AtomicMeasure.point([0.0, 0.0, 0.0], 2.0)
    x = np.array([0.5, 0.0, 0.0])
    val = convolve_heat(m, 0.3, x)
    ref = 2.0 * heat_kernel(0.3, x[None, :], d=3)[0]
    assert val == pytest.approx(ref, rel=1e-12)


def test_window_shape():
    w = Window(lower=np.zeros(3), upper=np.ones(3), resolution=0.1)
    assert w.dim == 3
    assert w.shape() == (10, 10, 10)
