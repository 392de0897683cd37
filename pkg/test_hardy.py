"""
Tests for Hardy atoms, the BMO seminorm and atom pairings
"""
import logging

import numpy as np
import pytest

from geometry.space import Ball, ball_members, build_torus_grid
from hardy.atoms import (
    atom_l1_audit,
    binomial_atom,
    bmo_dual_norm,
    bmo_norm,
    bq_function,
    build_atom_family,
    make_atom,
    minimal_order,
)
from hardy.pairing import (
    dyadic_gaussian_sum,
    l1_linf_exponent,
    l1_linf_regularized,
    pairing_decay_experiment,
    pairing_experiment,
    regularized_pairing,
    regularized_uniformity,
    sum_bound_check,
    sum_bound_constant,
)
from spectral.calculus import SpectralOperator, heat_function, kernel_matrix, psi_function, schrodinger_function
from spectral.operator import build_operator
from strichartz.norms import lq_norm


def test_minimal_order():
    assert minimal_order(1) == 3
    assert minimal_order(3) == 3
    assert minimal_order(8) == 4


def test_bq_function_kills_the_kernel():
    bq = bq_function(0.5, 3)
    assert bq(0.0) == 0.0
    assert bq(1e4) == pytest.approx(1.0)


def test_atom_pre_function_is_normalized(torus_1d):
    space = torus_1d.space
    atom = make_atom(torus_1d, Ball(0, 0.3), shape="bump")
    members = ball_members(space, atom.ball)
    volume = space.weight[members].sum()
    assert np.sum(space.weight * atom.pre_function ** 2) == pytest.approx(1 / volume)
    assert np.all(atom.pre_function[np.setdiff1d(np.arange(space.point_count), members)] == 0)
    assert atom.order == 3


def test_atoms_have_zero_mean_on_the_torus(torus_1d):
    atom = make_atom(torus_1d, Ball(5, 0.4), shape="oscillating", seed=3)
    assert abs(np.sum(torus_1d.space.weight * atom.realized)) < 1e-12


def test_binomial_expansion_reproduces_the_atom(torus_1d):
    atom = make_atom(torus_1d, Ball(0, 0.3), M=4)
    expanded, l1_bound = binomial_atom(torus_1d, atom)
    assert np.allclose(expanded, atom.realized, atol=1e-10)
    assert lq_norm(torus_1d.space, atom.realized, 1) <= l1_bound * (1 + 1e-12)
    assert l1_bound <= 2 ** 4 * (1 + 1e-12)


def test_make_atom_validation(torus_1d):
    space = torus_1d.space
    ball = Ball(0, 0.3)
    with pytest.raises(ValueError, match="below the admissible minimum"):
        make_atom(torus_1d, ball, M=2)
    with pytest.raises(ValueError, match="unknown atom shape"):
        make_atom(torus_1d, ball, shape="spike")

    outside = np.zeros(space.point_count)
    outside[20] = 0.1
    with pytest.raises(ValueError, match="outside the ball"):
        make_atom(torus_1d, ball, pre_function=outside)

    heavy = np.zeros(space.point_count)
    heavy[0] = 100.0
    with pytest.raises(ValueError, match="exceeds"):
        make_atom(torus_1d, ball, pre_function=heavy)

    light = np.zeros(space.point_count)
    light[0] = 0.1
    assert make_atom(torus_1d, ball, pre_function=light).shape == "explicit"


def test_atom_family_and_audit(torus_1d, caplog):
    atoms = build_atom_family(torus_1d, [0.2, 0.4], center_stride=16)
    assert len(atoms) == 2 * 3 * 4
    assert {a.shape for a in atoms} == {"indicator", "bump", "oscillating"}

    with caplog.at_level(logging.WARNING):
        audit = atom_l1_audit(torus_1d, atoms, bound=8.0)
    assert "only 24 atoms" in caplog.text
    assert audit.passed
    assert audit.max_l1 == pytest.approx(audit.table["l1"].max())


def test_bmo_norm_vanishes_on_constants(torus_1d):
    balls = [Ball(c, r) for r in (0.2, 0.5) for c in range(0, 64, 8)]
    assert bmo_norm(torus_1d, torus_1d.modes[:, 0], balls, 3).norm <= 1e-12

    v = np.random.default_rng(2).standard_normal(torus_1d.size)
    result = bmo_norm(torus_1d, v, balls, 3)
    assert result.norm > 0
    assert result.argmax in balls
    assert len(result.table) == len(balls)


def test_bmo_duality_is_attained_by_extremal_atoms(torus_1d):
    balls = [Ball(c, r) for r in (0.2, 0.5) for c in range(0, 64, 16)]
    v = np.random.default_rng(7).standard_normal(torus_1d.size)
    duality = bmo_dual_norm(torus_1d, v, balls, 3)
    assert duality.dual_norm == pytest.approx(duality.ball_norm, rel=1e-9)
    assert duality.shape_norm <= duality.ball_norm * (1 + 1e-9)


def test_pairing_of_a_self_adjoint_operator_is_symmetric(torus_1d):
    atoms = build_atom_family(torus_1d, [0.3], shapes=("bump",), center_stride=8)
    T = SpectralOperator(torus_1d, heat_function(0.05))
    result = pairing_experiment(torus_1d, T, atoms, a_star=2.0)
    assert result.swap_defect < 1e-12
    assert result.ratio == pytest.approx(result.sup / 2.0)

    other = pairing_experiment(torus_1d, T, atoms[:2], atoms[2:])
    assert np.isnan(other.swap_defect)
    assert np.isnan(other.ratio)


def test_pairing_decay_slope(long_torus):
    atoms_a = [make_atom(long_torus, Ball(0, 0.025), 3, "indicator")]
    atoms_b = [make_atom(long_torus, Ball(c, 0.025), 3, "indicator") for c in range(0, 641, 8)]
    decay = pairing_decay_experiment(long_torus, 0.025, 1, [0.0025, 0.005, 0.01, 0.025], atoms_a, atoms_b)
    assert decay.fit.slope == pytest.approx(-0.5, abs=0.15)
    assert decay.passed
    assert len(decay.table) == 4


def test_small_regularization_barely_moves_the_pairing(torus_1d):
    atoms = build_atom_family(torus_1d, [0.3], shapes=("indicator",), center_stride=8)
    T = SpectralOperator(torus_1d, schrodinger_function(0.2) * psi_function(1, 1.0, 0.01))
    base = pairing_experiment(torus_1d, T, atoms).sup
    assert regularized_pairing(torus_1d, T, 1e-6, atoms).sup == pytest.approx(base, rel=0.01)
    with pytest.raises(ValueError, match="positive"):
        regularized_pairing(torus_1d, T, 0.0, atoms)


def test_heat_pairings_are_uniform_in_the_regularization(torus_1d):
    atoms = build_atom_family(torus_1d, [0.3], shapes=("bump",), center_stride=8)
    T = SpectralOperator(torus_1d, heat_function(0.01))
    uniformity = regularized_uniformity(torus_1d, T, atoms)
    assert uniformity.passed
    assert uniformity.table["sup"].max() <= uniformity.base * (1 + 1e-12)
    assert uniformity.spread >= 1.0
    assert uniformity.spread <= 4.0


def test_l1_linf_regularized_is_the_largest_kernel_entry(torus_1d, caplog):
    T = SpectralOperator(torus_1d, heat_function(0.1))
    result = l1_linf_regularized(torus_1d, T, 0.1)
    assert result.value == pytest.approx(np.max(np.abs(kernel_matrix(torus_1d, heat_function(0.2)))))
    assert result.within_budget

    with caplog.at_level(logging.WARNING):
        assert not l1_linf_regularized(torus_1d, T, 10.0).within_budget
    assert "wrap budget" in caplog.text


def test_l1_linf_exponent(caplog):
    operator = build_operator(build_torus_grid(1, 256, 1.0))
    T = SpectralOperator(operator, schrodinger_function(0.001))
    with caplog.at_level(logging.WARNING):
        exponent = l1_linf_exponent(operator, T, [0.001, 0.003, 0.01, 0.03, 0.1])
    assert exponent.passed
    assert exponent.fit.slope >= -0.65
    assert abs(exponent.fit.slope + 0.5) <= 0.15
    assert list(exponent.table["within_budget"]) == [True, True, True, True, False]
    assert "wrap budget" in caplog.text


def test_dyadic_gaussian_sum():
    assert dyadic_gaussian_sum(1.0, 0) == pytest.approx(np.exp(-1) + np.exp(-4) + np.exp(-16), rel=1e-12)
    with pytest.raises(ValueError, match="positive"):
        dyadic_gaussian_sum(0.0, 1)


def test_sum_bound():
    check = sum_bound_check(1.0, 1, 2)
    assert check.product == pytest.approx(check.sum)
    with pytest.raises(ValueError, match="at least 1"):
        sum_bound_check(1.0, 1, 0)
    assert 0 < sum_bound_constant(1, 1) <= 5


def test_regularization_that_erases_the_pairing_is_not_uniform(torus_1d, caplog):
    atoms = build_atom_family(torus_1d, [0.3], shapes=("bump",), center_stride=8)
    T = SpectralOperator(torus_1d, heat_function(0.01))
    with caplog.at_level(logging.WARNING):
        uniformity = regularized_uniformity(torus_1d, T, atoms, s_grid=[1e-4, 1.0, 10.0])
    assert not uniformity.passed
    assert uniformity.spread > 4.0
    assert "exceeds" in caplog.text


def test_bmo_norm_of_an_eigenmode(torus_1d):
    space = torus_1d.space
    v, lam = torus_1d.modes[:, 5], torus_1d.eigenvalues[5]
    balls = [Ball(c, r) for r in (0.2, 0.5) for c in range(0, 64, 4)]
    expected = max(
        (1 - np.exp(-ball.radius ** 2 * lam)) ** 3
        * np.sqrt(np.sum(space.weight[m] * v[m] ** 2) / space.weight[m].sum())
        for ball in balls
        for m in [ball_members(space, ball)]
    )
    assert bmo_norm(torus_1d, v, balls, 3).norm == pytest.approx(expected, rel=1e-10)
