"""
Tests for heat kernel bounds, finite propagation speed and the transmutation formula
"""
import logging

import numpy as np
import pytest

from geometry.space import Ball, ball_members, build_interval_grid, build_torus_grid
from kernels.heat_bounds import (
    check_davies_gaffney,
    check_due,
    check_maximal_domination,
    fit_gaussian_ue,
    maximal_at,
    maximal_function,
    theta_heat_kernel,
)
from kernels.propagation import (
    check_finite_speed,
    dalembert_deviation,
    dalembert_oracle,
    transmutation,
    transmutation_multiplier,
    transmutation_rule,
    wave_energy_defect,
)
from spectral.calculus import complex_semigroup, heat_function, schrodinger_function
from spectral.operator import build_operator, l2_norm


@pytest.fixture(scope="module")
def wave_torus():
    return build_operator(build_torus_grid(1, 512, 2 * np.pi))


def bump(space, center=0, sigma=0.2):
    distances = space.distances_from(center)
    return np.exp(-distances ** 2 / (2 * sigma ** 2))


def opposite_balls(space, radius):
    half = space.point_count // 2
    return ball_members(space, Ball(0, radius)), ball_members(space, Ball(half, radius))


def test_theta_kernel_on_a_long_period():
    assert theta_heat_kernel(1, 1000.0, 0.5, [[0.0]])[0] == pytest.approx(1 / np.sqrt(2 * np.pi))
    assert theta_heat_kernel(2, 1000.0, 0.25, [[0.0, 0.0]])[0] == pytest.approx(1 / np.pi)


def test_due_constant_is_order_one(torus_1d):
    report = check_due(torus_1d, [0.1, 0.5, 1.0])
    assert 0.4 <= report.constant <= 1.0
    assert list(report.table["t"]) == [0.1, 0.5, 1.0]
    assert not report.table["flagged"].any()


def test_due_flags_subgrid_times(torus_1d, caplog):
    with caplog.at_level(logging.WARNING):
        report = check_due(torus_1d, [1e-3, 0.5])
    assert list(report.table["flagged"]) == [True, False]
    assert "not Gaussian" in caplog.text


def test_gaussian_fit_dominates_the_diagonal(torus_1d):
    t_grid = [0.1, 0.3, 1.0]
    fit = fit_gaussian_ue(torus_1d, heat_function, t_grid)
    assert fit.c == 0.25
    assert len(fit.table) == 3
    assert fit.C >= check_due(torus_1d, t_grid).constant * (1 - 1e-12)


def test_gaussian_fit_falls_back_when_cap_is_unreachable(torus_1d, caplog):
    with caplog.at_level(logging.WARNING):
        fit = fit_gaussian_ue(torus_1d, heat_function, [0.1, 0.3], prefactor_cap=1e-6)
    assert fit.c == 0.25
    assert "No trial exponent" in caplog.text


def test_gaussian_fit_rejects_non_decaying_profiles(torus_1d):
    with pytest.raises(ValueError, match="does not decay"):
        fit_gaussian_ue(torus_1d, schrodinger_function, [0.1, 0.3])


def test_davies_gaffney_between_opposite_balls(torus_1d):
    source, target = opposite_balls(torus_1d.space, 0.3)
    result = check_davies_gaffney(torus_1d, source, target, 0.5)
    assert result.within_budget
    assert result.passed
    assert result.distance > 2.0


def test_davies_gaffney_flags_wrapping_times(torus_1d, caplog):
    source, target = opposite_balls(torus_1d.space, 0.3)
    with caplog.at_level(logging.WARNING):
        result = check_davies_gaffney(torus_1d, source, target, 3.0)
    assert not result.within_budget
    assert "wrap budget" in caplog.text


def test_finite_speed_inside_the_cone(torus_1d):
    source, target = opposite_balls(torus_1d.space, 0.2)
    result = check_finite_speed(torus_1d, source, target, 1.0)
    assert result.applicable
    assert result.tail <= 1e-3
    assert result.passed


def test_finite_speed_outside_the_cone_is_not_applicable(torus_1d):
    source, target = opposite_balls(torus_1d.space, 0.2)
    result = check_finite_speed(torus_1d, source, target, 3.0)
    assert not result.applicable
    assert not result.passed


def test_transmutation_scalar():
    assert transmutation_multiplier([1.0], 1.0)[0] == pytest.approx(np.exp(-1), rel=1e-9)
    assert transmutation_multiplier([0.0], 0.5)[0] == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("z", [1.0, 0.2 + 0.5j, 0.05 + 2j])
def test_transmutation_matches_the_complex_semigroup(torus_1d, z):
    v = bump(torus_1d.space, sigma=0.3)
    expected = complex_semigroup(torus_1d, z, v)
    error = l2_norm(torus_1d.space, transmutation(torus_1d, z, v) - expected)
    assert error <= 1e-6 * l2_norm(torus_1d.space, expected)


def test_transmutation_rule_validation():
    with pytest.raises(ValueError, match="Re z > 0"):
        transmutation_rule(1j, 10.0)
    with pytest.raises(ValueError, match="under-resolves"):
        transmutation_rule(1.0, 100.0, n_points=10)

    rule = transmutation_rule(1.0, 10.0)
    assert rule.step == pytest.approx(rule.s_max / (rule.n_points - 1))


def test_dalembert_agrees_for_smooth_data(wave_torus):
    space = wave_torus.space
    v = bump(space, center=100)
    t = 40 * space.spacing
    assert dalembert_deviation(wave_torus, v, t) <= 0.05


def test_dalembert_oracle_preconditions(torus_2d, wave_torus):
    space = wave_torus.space
    with pytest.raises(ValueError, match="1-D torus"):
        dalembert_oracle(torus_2d.space, np.ones(torus_2d.size), 0.1)
    with pytest.raises(ValueError, match="integer multiple"):
        dalembert_oracle(space, np.ones(space.point_count), 0.5 * space.spacing)


def test_dalembert_oracle_is_two_shifts():
    space = build_torus_grid(1, 8, 8.0)
    v = np.zeros(8)
    v[0] = 1.0
    assert np.allclose(dalembert_oracle(space, v, 2.0), [0, 0, 0.5, 0, 0, 0, 0.5, 0])


def test_wave_energy_is_conserved(torus_2d):
    v = np.random.default_rng(1).standard_normal(torus_2d.size)
    for t in (0.3, 1.0, 7.0):
        assert wave_energy_defect(torus_2d, t, v) < 1e-10


def test_maximal_function_basics():
    space = build_torus_grid(1, 32, 1.0)
    v = np.random.default_rng(4).standard_normal(space.point_count)
    maximal = maximal_function(space, v)
    assert np.all(maximal >= np.abs(v) - 1e-12)
    assert maximal_at(space, v, 7) == pytest.approx(maximal[7])
    assert np.allclose(maximal_function(space, np.full(32, 2.0)), 2.0)


def test_maximal_domination(torus_1d, caplog):
    ones = np.ones(torus_1d.size)
    assert check_maximal_domination(torus_1d, ones, 5, [0.1, 1.0]) == pytest.approx(1.0)

    ratio = check_maximal_domination(torus_1d, bump(torus_1d.space), 10, [0.05, 0.2, 1.0])
    assert 0 < ratio <= 10

    with caplog.at_level(logging.WARNING):
        assert check_maximal_domination(torus_1d, np.zeros(torus_1d.size), 0, [0.1]) is None
    assert "vanishes" in caplog.text


def test_dirichlet_heat_is_dominated_by_the_neumann_heat():
    # same spacing 1/40: Dirichlet nodes k/40, Neumann cell centres (k + 1/2)/40
    dirichlet = build_operator(build_interval_grid(39, 1.0, "dirichlet"))
    neumann = build_operator(build_interval_grid(40, 1.0, "neumann"))
    t_grid = [1e-4, 1e-3, 1e-2, 0.1]
    ratios = []
    for operator, x0 in ((dirichlet, 19), (neumann, 19)):
        mass = np.zeros(operator.size)
        mass[x0] = 1.0
        assert maximal_at(operator.space, mass, x0) == pytest.approx(1.0)
        ratios.append(check_maximal_domination(operator, mass, x0, t_grid))
    assert 0 < ratios[0] <= ratios[1] + 1e-10
    assert ratios[1] <= 1.0 + 1e-10
