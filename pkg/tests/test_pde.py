import numpy as np
import pytest

from superlab.pde import (ConstantEstimate, estimate_c_beta_d,
                          heat_convolve_bump, solve_radial, v0_ode,
                          v_infinity_solution)

BETA = 0.8


def test_flat_profile_reduces_to_reaction_ode():
    sol = solve_radial(BETA, 3, 2.0, 1.0, out_times=[0.5, 1.0],
                       profile=lambda r: np.ones_like(r),
                       neumann_outer=True)
    for t in (0.5, 1.0):
        assert sol.at(t, 0.7) == pytest.approx(v0_ode(t, 2.0, BETA),
                                               abs=1e-8)


def test_linear_case_matches_heat_convolution():
    sol = solve_radial(BETA, 3, 1.0, 0.5, out_times=[0.5], reaction=False,
                       dr=0.02)
    xs = np.linspace(0.0, 2.5, 15)
    ref = heat_convolve_bump(0.5, xs)
    assert np.max(np.abs(sol.at(0.5, xs) - ref)) < 1e-3


def test_reaction_only_shrinks_solution():
    with_r = solve_radial(BETA, 3, 2.0, 0.5, out_times=[0.5], dr=0.02)
    without = solve_radial(BETA, 3, 2.0, 0.5, out_times=[0.5], dr=0.02,
                           reaction=False)
    xs = np.linspace(0.0, 2.0, 10)
    assert np.all(with_r.at(0.5, xs) <= without.at(0.5, xs) + 1e-12)


def test_monotone_in_lambda():
    a = solve_radial(BETA, 3, 1.0, 0.5, out_times=[0.5], dr=0.02)
    b = solve_radial(BETA, 3, 4.0, 0.5, out_times=[0.5], dr=0.02)
    xs = np.linspace(0.0, 2.0, 10)
    assert np.all(b.at(0.5, xs) >= a.at(0.5, xs) - 1e-12)


def test_v_infinity_ladder_converges():
    sol = v_infinity_solution(BETA, 3, 1.0, out_times=[1.0], dr=0.02)
    assert sol.at(1.0, 0.0) > 0
    assert sol.at(1.0, 0.0) > sol.at(1.0, 3.0)


def test_constant_estimate_positive_and_agreement():
    est = estimate_c_beta_d(BETA, 3, eps_ladder=(0.3, 0.2, 0.15, 0.1),
                            dr=0.02)
    assert est.c_beta_d > 0
    assert est.method == "pde-scaling"
    other = ConstantEstimate(est.c_beta_d * 1.1, "hitting-mc",
                             est.error_bar)
    assert est.agrees(other, 0.25)
    far = ConstantEstimate(est.c_beta_d * 3.0, "hitting-mc", 0.01)
    assert not est.agrees(far, 0.25)


def test_solution_csv(tmp_path):
    sol = solve_radial(BETA, 3, 1.0, 0.2, out_times=[0.2], dr=0.05)
    path = tmp_path / "sol.csv"
    sol.to_csv(path)
    assert path.read_text().count("\n") > 10
