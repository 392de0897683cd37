"""
Tests for the self-adjoint operator builders and the functional calculus
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geometry.space import build_general_graph, build_interval_grid, build_torus_grid
from spectral.calculus import (
    SpectralFunction,
    SpectralOperator,
    almost_orthogonality_constant,
    apply_calculus,
    c_constant,
    calculus_operator_norm,
    calculus_symmetry_defect,
    complex_function,
    composition_defect,
    empirical_operator_norm,
    heat,
    heat_function,
    kernel_matrix,
    kernel_projector,
    psi,
    psi_function,
    reproducing_residual,
    restricted_norm,
    schrodinger,
    semigroup_difference_residual,
    sobolev_norm,
    square_function_norm,
    square_function_oracle,
    wave_cos,
    wave_sin,
)
from spectral.operator import (
    PeriodicLaplacian,
    build_operator,
    eigen_residual,
    gram_defect,
    l2_norm,
    symmetry_defect,
)


def random_state(operator, seed=0):
    return np.random.default_rng(seed).standard_normal(operator.size)


def test_psi_and_c_constant_values():
    assert psi(1, 1, 1.0) == pytest.approx(np.exp(-1))
    assert psi(2, 2, 0.5) == pytest.approx(0.25 * np.exp(-1))
    assert c_constant(3, 2) == pytest.approx(0.25)
    assert c_constant(1, 1) == pytest.approx(1.0)
    with pytest.raises(ValueError, match="m >= 1"):
        c_constant(0, 1)


def test_torus_spectrum(torus_1d):
    h = torus_1d.space.spacing
    assert torus_1d.eigenvalues[0] == 0.0
    assert torus_1d.kernel_dimension == 1
    assert torus_1d.smallest_positive() == pytest.approx(4 / h ** 2 * np.sin(np.pi / 64) ** 2)
    assert torus_1d.lambda_max == pytest.approx(4 / h ** 2)
    assert np.all(np.diff(torus_1d.eigenvalues) >= 0)


@pytest.mark.parametrize("fixture", ["torus_1d", "torus_2d", "dirichlet_interval"])
def test_eigensystem_audits(fixture, request):
    operator = request.getfixturevalue(fixture)
    assert gram_defect(operator) < 1e-10
    assert eigen_residual(operator) < 1e-10
    assert symmetry_defect(operator, n_trials=5) < 1e-12


def test_dirichlet_has_trivial_kernel(dirichlet_interval):
    assert dirichlet_interval.kernel_dimension == 0
    assert dirichlet_interval.smallest_positive() == dirichlet_interval.eigenvalues[0]


def test_neumann_kernel_is_constants():
    operator = build_operator(build_interval_grid(30, 2.0, "neumann"))
    assert operator.kernel_dimension == 1
    assert eigen_residual(operator) < 1e-10


def test_heat_preserves_constants_on_torus(torus_2d):
    ones = np.ones(torus_2d.size)
    assert np.allclose(heat(torus_2d, 0.7, ones), 1.0)


def test_heat_kernel_rows_are_substochastic(torus_1d, dirichlet_interval):
    torus_kernel = kernel_matrix(torus_1d, heat_function(0.5))
    assert np.allclose(torus_kernel @ torus_1d.space.weight, 1.0)

    kernel = kernel_matrix(dirichlet_interval, heat_function(0.01))
    row_sums = kernel @ dirichlet_interval.space.weight
    assert np.all(kernel > -1e-10)
    assert np.all(row_sums <= 1 + 1e-10)


def test_kernel_matrix_respects_dense_cap(torus_1d):
    with pytest.raises(ValueError, match="dense cap"):
        kernel_matrix(torus_1d, heat_function(1.0), cap=10)


def test_schrodinger_is_unitary(torus_1d):
    v = random_state(torus_1d)
    assert l2_norm(torus_1d.space, schrodinger(torus_1d, 3.0, v)) == pytest.approx(l2_norm(torus_1d.space, v))


def test_wave_propagators_act_on_modes(torus_1d):
    mode = torus_1d.modes[:, 5]
    omega = np.sqrt(torus_1d.eigenvalues[5])
    assert np.allclose(wave_cos(torus_1d, 0.7, mode), np.cos(0.7 * omega) * mode)
    assert np.allclose(wave_sin(torus_1d, 0.7, mode), np.sin(0.7 * omega) * mode)

    v = random_state(torus_1d)
    energy = l2_norm(torus_1d.space, wave_cos(torus_1d, 1.3, v)) ** 2 + \
        l2_norm(torus_1d.space, wave_sin(torus_1d, 1.3, v)) ** 2
    assert energy == pytest.approx(l2_norm(torus_1d.space, v) ** 2)


def test_projector_onto_kernel(torus_1d, dirichlet_interval):
    v = random_state(torus_1d)
    mean = np.sum(torus_1d.space.weight * v) / torus_1d.space.total_measure
    assert np.allclose(kernel_projector(torus_1d)(v), mean)

    w = random_state(dirichlet_interval)
    assert np.allclose(kernel_projector(dirichlet_interval)(w), 0.0)


def test_composition_and_symmetry(torus_2d):
    assert composition_defect(torus_2d, heat_function(0.3), psi_function(2, 1, 0.5)) < 1e-12
    assert calculus_symmetry_defect(torus_2d, psi_function(3, 2)) < 1e-12


def test_heat_operator_norms(torus_1d, dirichlet_interval):
    assert calculus_operator_norm(torus_1d, heat_function(0.2)) == pytest.approx(1.0)

    lam = dirichlet_interval.eigenvalues[0]
    exact = calculus_operator_norm(dirichlet_interval, heat_function(0.01))
    assert exact == pytest.approx(np.exp(-0.01 * lam))
    assert empirical_operator_norm(dirichlet_interval, heat_function(0.01), n_trials=10) <= exact + 1e-12


def test_spectral_operator_blocks(torus_1d):
    operator = SpectralOperator(torus_1d, heat_function(0.4))
    everything = np.arange(torus_1d.size)
    assert restricted_norm(operator, everything, everything) == pytest.approx(
        calculus_operator_norm(torus_1d, heat_function(0.4)))

    v = random_state(torus_1d)
    assert np.allclose(operator(v), heat(torus_1d, 0.4, v))
    assert np.allclose(operator.compose(operator)(v), heat(torus_1d, 0.8, v))


def test_compose_across_operators_is_rejected(torus_1d, dirichlet_interval):
    left = SpectralOperator(torus_1d, heat_function(1.0))
    right = SpectralOperator(dirichlet_interval, heat_function(1.0))
    with pytest.raises(ValueError, match="different operators"):
        left.compose(right)


def test_non_finite_function_is_reported(torus_1d):
    singular = SpectralFunction(lambda lam: np.where(lam > 0, 1.0, np.nan), "singular")
    with pytest.raises(ValueError, match="not finite"):
        singular.values(torus_1d)


def test_complex_time_needs_nonnegative_real_part():
    with pytest.raises(ValueError, match="Re z"):
        complex_function(-0.1 + 1j)


def test_reproducing_formula(torus_1d):
    report = reproducing_residual(torus_1d.eigenvalues, 3, 2)
    assert report.kappa == pytest.approx(4.0)
    assert report.residual <= 1e-6
    assert report.widenings == 0


def test_reproducing_needs_positive_spectrum():
    with pytest.raises(ValueError, match="positive eigenvalue"):
        reproducing_residual([0.0], 2, 1)


def test_semigroup_difference(torus_1d):
    assert semigroup_difference_residual(torus_1d.eigenvalues[:20], 0.5) < 1e-10


def test_almost_orthogonality_below_ceiling(torus_1d):
    lams = torus_1d.eigenvalues[1:]
    grid = np.logspace(-2, 1, 12) / lams[0]
    report = almost_orthogonality_constant(lams, 2, grid, grid)
    assert report.constant <= report.ceiling
    assert report.ceiling == pytest.approx((4 / np.e) ** 4)


def test_sobolev_norm_of_a_mode(torus_1d):
    mode = torus_1d.modes[:, 1]
    lam = torus_1d.eigenvalues[1]
    assert sobolev_norm(torus_1d, 2, mode) == pytest.approx(1 + lam)
    assert sobolev_norm(torus_1d, 0, mode) == pytest.approx(1.0)


def test_square_function_of_a_constant(torus_1d):
    ones = np.ones(torus_1d.size)
    report = square_function_norm(torus_1d, 2, 1, 2, ones, np.logspace(-3, 0, 40))
    assert report.low_part == pytest.approx(report.lq_norm)
    assert report.square_part == pytest.approx(0.0, abs=1e-12)
    assert report.ratio == pytest.approx(1.0)

    with pytest.raises(ValueError, match="m >= 2"):
        square_function_norm(torus_1d, 1, 1, 2, ones, [0.5])
    with pytest.raises(ValueError, match="u_grid"):
        square_function_norm(torus_1d, 2, 1, 2, ones, [0.5, 2.0])


def test_square_function_oracle_limits():
    assert square_function_oracle([0.0], 2, 1)[0] == 0.0
    assert square_function_oracle([1e6], 2, 1)[0] == pytest.approx(6 / 16)


def test_divergence_form_with_unit_coefficient_matches_analytic():
    space = build_torus_grid(1, 32, 1.0)
    analytic = build_operator(space)
    dense = build_operator(space, {"builder": "divergence_form_dense", "coefficient": {"type": "constant", "value": 1.0}})
    assert np.allclose(dense.eigenvalues, analytic.eigenvalues, rtol=1e-9, atol=1e-8)


def test_divergence_form_variable_coefficient_and_density():
    space = build_torus_grid(1, 48, 1.0)
    descriptor = {
        "builder": "divergence_form_dense",
        "coefficient": {"type": "cosine", "mean": 2.0, "amplitude": 1.0},
        "density": {"type": "cosine", "mean": 1.5, "amplitude": 0.5},
    }
    operator = build_operator(space, descriptor)
    assert operator.kernel_dimension == 1
    assert operator.space.total_measure == pytest.approx(1.5)
    assert gram_defect(operator) < 1e-10
    assert eigen_residual(operator) < 1e-10
    assert symmetry_defect(operator, n_trials=5) < 1e-12


def test_coefficient_descriptors_are_validated():
    space = build_torus_grid(1, 16, 1.0)
    with pytest.raises(ValueError, match="stay positive"):
        build_operator(space, {"builder": "divergence_form_dense",
                               "coefficient": {"type": "cosine", "mean": 1.0, "amplitude": 1.0}})
    with pytest.raises(ValueError, match="unknown operator builder"):
        build_operator(space, {"builder": "spectral_magic"})


def test_graph_laplacian_on_a_path():
    coords = [[0.0], [1.0], [2.0], [3.0], [4.0]]
    space = build_general_graph(coords, [1, 1, 1, 1, 1], [(0, 1), (1, 2), (2, 3), (3, 4)], dim=1)
    operator = build_operator(space)
    assert operator.builder == "graph_laplacian_dense"
    assert operator.kernel_dimension == 1
    assert eigen_residual(operator) < 1e-10
    # free-end path Laplacian: 2 - 2 cos(pi k / 5)
    expected = 2 - 2 * np.cos(np.pi * np.arange(5) / 5)
    assert np.allclose(operator.eigenvalues, expected, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(t=st.floats(1e-3, 5.0), seed=st.integers(0, 2 ** 16))
def test_heat_is_a_contraction(torus_2d, t, seed):
    v = random_state(torus_2d, seed)
    assert l2_norm(torus_2d.space, heat(torus_2d, t, v)) <= l2_norm(torus_2d.space, v) * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(s=st.floats(0.0, 4.0), t=st.floats(0.0, 4.0))
def test_heat_semigroup_law(torus_1d, s, t):
    v = random_state(torus_1d, 3)
    twice = apply_calculus(torus_1d, heat_function(s), heat(torus_1d, t, v))
    assert np.allclose(twice, heat(torus_1d, s + t, v), atol=1e-10)


@pytest.fixture(scope="module")
def fourier_pairs():
    """The same tori as dense eigensystems and as Fourier operators"""
    pairs = []
    for space in (build_torus_grid(1, 32, 2 * np.pi), build_torus_grid(2, 8, 2.0)):
        pairs.append((build_operator(space), build_operator(space, {"dense_cap": 16})))
    return pairs


def test_large_tori_use_the_fourier_operator(fourier_pairs):
    for dense, fourier in fourier_pairs:
        assert isinstance(fourier, PeriodicLaplacian)
        assert fourier.modes is None
        assert fourier.builder == "torus_laplacian_analytic"
        assert np.allclose(fourier.eigenvalues, dense.eigenvalues, atol=1e-9)
        assert fourier.kernel_dimension == 1


def test_fourier_coefficients_are_unitary(fourier_pairs):
    for _, fourier in fourier_pairs:
        v = random_state(fourier, 5)
        coefficients = fourier.coefficients(v)
        assert np.sum(np.abs(coefficients) ** 2) == pytest.approx(l2_norm(fourier.space, v) ** 2)
        assert np.allclose(fourier.synthesize(coefficients), v)

        columns = np.column_stack([v, 2 * v])
        assert np.allclose(fourier.coefficients(columns)[:, 1], 2 * coefficients)


@pytest.mark.parametrize("function", [heat_function(0.3), psi_function(2, 1.0, 0.1), complex_function(0.05 - 0.4j)])
def test_fourier_calculus_matches_the_dense_eigensystem(fourier_pairs, function):
    for dense, fourier in fourier_pairs:
        v = random_state(dense, 2)
        assert np.allclose(apply_calculus(fourier, function, v), apply_calculus(dense, function, v), atol=1e-10)
        assert np.allclose(kernel_matrix(fourier, function), kernel_matrix(dense, function), atol=1e-10)

        source, target = np.arange(0, dense.size, 3), np.arange(1, dense.size, 5)
        expected = SpectralOperator(dense, function).block(source, target)
        assert np.allclose(SpectralOperator(fourier, function).block(source, target), expected, atol=1e-10)


def test_fourier_heat_stays_real(fourier_pairs):
    _, fourier = fourier_pairs[1]
    smoothed = heat(fourier, 0.1, random_state(fourier))
    assert np.isrealobj(smoothed)
    assert np.allclose(fourier.apply_stencil(np.ones(fourier.size)), 0.0, atol=1e-9)


@pytest.mark.parametrize("q", [2, 4])
def test_square_function_is_comparable_to_the_lq_norm(torus_1d, q):
    grid = np.logspace(-4, 0, 60)
    for seed in range(5):
        report = square_function_norm(torus_1d, 2, 1.0, q, random_state(torus_1d, seed), grid)
        assert 0.1 <= report.ratio <= 10
        assert report.square_part > 0


def test_fourier_operators_pass_the_eigensystem_audits(fourier_pairs):
    for _, fourier in fourier_pairs:
        assert gram_defect(fourier) < 1e-12
        assert eigen_residual(fourier) < 1e-12
        assert symmetry_defect(fourier, n_trials=5) < 1e-12
