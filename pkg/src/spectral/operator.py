import logging

import numpy as np
from scipy import fft
from scipy.linalg import eigh
from scipy.sparse import coo_matrix, diags

from geometry.space import neighbor_pairs, with_density

logger = logging.getLogger(__name__)

DENSE_CAP = 4096
CLAMP_TOLERANCE = 1e-10
BUILDERS = (
    "torus_laplacian_analytic",
    "interval_laplacian_analytic",
    "graph_laplacian_dense",
    "divergence_form_dense",
)


class SelfAdjointOperator:
    """Nonnegative operator given by a spectrum and a mu-orthonormal mode table"""

    def __init__(self, space, eigenvalues, modes, builder, stencil=None):
        self.space = space
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.modes = np.asarray(modes, dtype=float)
        self.builder = builder
        self.stencil = stencil
        self.eigenvalues.setflags(write=False)
        self.modes.setflags(write=False)
        self.logger = logging.getLogger(__name__)

    @property
    def size(self):
        return self.space.point_count

    @property
    def lambda_max(self):
        return float(self.eigenvalues[-1])

    @property
    def kernel_dimension(self):
        return int(np.count_nonzero(self.eigenvalues == 0.0))

    def smallest_positive(self):
        positive = self.eigenvalues[self.eigenvalues > 0]
        return float(positive[0]) if len(positive) else None

    def coefficients(self, v):
        """Mode coefficients <v, phi_k>_mu; columns of a 2-D input are separate states"""
        v = np.asarray(v)
        weight = self.space.weight if v.ndim == 1 else self.space.weight[:, None]
        return self.modes.T @ (weight * v)

    def synthesize(self, coefficients):
        return self.modes @ coefficients

    def apply(self, values, v):
        """Multiply mode coefficients by `values` and synthesize"""
        coefficients = self.coefficients(v)
        if coefficients.ndim == 1:
            return self.synthesize(values * coefficients)
        return self.synthesize(values[:, None] * coefficients)

    def apply_stencil(self, v):
        """Action of the assembled difference operator, independent of the eigensystem"""
        stencil = self.stencil if self.stencil is not None else assemble_stencil(self.space, self.builder)
        return stencil @ v

    def __repr__(self):
        return f"SelfAdjointOperator(builder={self.builder}, size={self.size}, lambda_max={self.lambda_max:.4g})"


class PeriodicLaplacian(SelfAdjointOperator):
    """Torus grid Laplacian diagonalized by the discrete Fourier transform

    Eigenvalues are sorted as for the dense builders. Coefficients are complex and refer to the
    exponential basis exp(2 pi i k.j / n) / sqrt(|T|); no mode table is stored.
    """

    def __init__(self, space, clamp_tol=CLAMP_TOLERANCE, workers=None):
        self.space = space
        self.builder = "torus_laplacian_analytic"
        self.stencil = None
        self.modes = None
        self.workers = workers
        self.logger = logging.getLogger(__name__)

        n, h = space.shape[0], space.spacing
        axis_values = 4.0 / h ** 2 * np.sin(np.pi * np.arange(n) / n) ** 2
        grid = axis_values
        for _ in range(1, space.dim):
            grid = np.add.outer(grid, axis_values)
        self.order = np.argsort(grid.ravel(), kind="stable")
        self.eigenvalues = _clamp_spectrum(grid.ravel()[self.order], clamp_tol)
        self.eigenvalues.setflags(write=False)
        self._axes = tuple(range(space.dim))
        self._scale = np.sqrt(space.total_measure)
        self.logger.info(f"Periodic Fourier eigensystem: {space.point_count} modes, "
                         f"lambda_max={self.eigenvalues[-1]:.4g}")

    def grid_values(self, values):
        """Scatter values listed in eigenvalue order back onto the frequency grid"""
        values = np.asarray(values)
        grid = np.empty(values.shape, dtype=values.dtype)
        grid[self.order] = values
        return grid.reshape(self.space.shape + values.shape[1:])

    def coefficients(self, v):
        v = np.asarray(v)
        columns = v.shape[1:]
        transformed = fft.fftn(v.reshape(self.space.shape + columns), axes=self._axes, workers=self.workers)
        flat = transformed.reshape((self.size,) + columns)[self.order]
        return self.space.weight[0] / self._scale * flat

    def synthesize(self, coefficients):
        coefficients = np.asarray(coefficients)
        grid = self.grid_values(coefficients)
        states = fft.ifftn(grid, axes=self._axes, workers=self.workers)
        return self.size / self._scale * states.reshape((self.size,) + coefficients.shape[1:])

    def apply(self, values, v):
        values = np.asarray(values)
        v = np.asarray(v)
        columns = v.shape[1:]
        multiplier = self.grid_values(values)
        if columns:
            multiplier = multiplier.reshape(self.space.shape + (1,) * len(columns))
        transformed = fft.fftn(v.reshape(self.space.shape + columns), axes=self._axes, workers=self.workers)
        states = fft.ifftn(multiplier * transformed, axes=self._axes, workers=self.workers)
        states = states.reshape(v.shape)
        if np.isrealobj(values) and np.isrealobj(v):
            return states.real
        return states

    def convolution_kernel(self, values):
        """c with (f(H)v)(x) = sum_y c(x - y) v(y); equals mu K(x, y) on the lattice"""
        values = np.asarray(values)
        kernel = fft.ifftn(self.grid_values(values), workers=self.workers)
        return kernel.real if np.isrealobj(values) else kernel

    def apply_stencil(self, v):
        if self.stencil is None:
            self.stencil = assemble_stencil(self.space, self.builder)
        return self.stencil @ v

    def __repr__(self):
        return f"PeriodicLaplacian(size={self.size}, lambda_max={self.lambda_max:.4g})"


def _clamp_spectrum(eigenvalues, clamp_tol):
    scale = max(float(np.max(np.abs(eigenvalues))), 1.0)
    if eigenvalues.min() < -clamp_tol * scale:
        raise ValueError(f"operator is not nonnegative: eigenvalue {eigenvalues.min():.6g}")
    clamped = eigenvalues.copy()
    clamped[clamped <= clamp_tol * scale] = 0.0
    return clamped


def _periodic_modes_1d(n, period):
    """Real trigonometric basis of the periodic 3-point Laplacian, orthonormal for weight period/n"""
    j = np.arange(n)
    h = period / n
    modes, wavenumbers = [np.full(n, 1.0 / np.sqrt(period))], [0]
    for k in range(1, (n + 1) // 2):
        phase = 2 * np.pi * k * j / n
        modes.append(np.sqrt(2.0 / period) * np.cos(phase))
        modes.append(np.sqrt(2.0 / period) * np.sin(phase))
        wavenumbers.extend([k, k])
    if n % 2 == 0:
        modes.append((-1.0) ** j / np.sqrt(period))
        wavenumbers.append(n // 2)
    wavenumbers = np.asarray(wavenumbers)
    eigenvalues = 4.0 / h ** 2 * np.sin(np.pi * wavenumbers / n) ** 2
    return eigenvalues, np.column_stack(modes)


def build_torus_laplacian(space, clamp_tol=CLAMP_TOLERANCE, cap=DENSE_CAP):
    """Analytic eigenpairs of the periodic grid Laplacian, Kronecker products across axes

    Grids above `cap` points get the Fourier-diagonalized PeriodicLaplacian instead of a mode table.
    """
    if space.geometry != "torus_grid":
        raise ValueError(f"torus Laplacian needs a torus grid, got {space.geometry}")
    if space.point_count > cap:
        return PeriodicLaplacian(space, clamp_tol)

    eigenvalues_1d, modes_1d = _periodic_modes_1d(space.shape[0], space.period)
    eigenvalues, modes = eigenvalues_1d, modes_1d
    for _ in range(1, space.dim):
        eigenvalues = np.add.outer(eigenvalues, eigenvalues_1d).ravel()
        modes = np.kron(modes, modes_1d)

    order = np.argsort(eigenvalues, kind="stable")
    eigenvalues = _clamp_spectrum(eigenvalues[order], clamp_tol)
    return SelfAdjointOperator(space, eigenvalues, modes[:, order], "torus_laplacian_analytic")


def build_interval_laplacian(space, clamp_tol=CLAMP_TOLERANCE):
    """Analytic sine (Dirichlet) or cosine (Neumann) eigenpairs of the interval Laplacian"""
    if space.geometry != "interval_grid":
        raise ValueError(f"interval Laplacian needs an interval grid, got {space.geometry}")

    n, length, h = space.shape[0], space.length, space.spacing
    x = space.coords[:, 0]
    if space.bc == "dirichlet":
        k = np.arange(1, n + 1)
        modes = np.sqrt(2.0 / length) * np.sin(np.pi * np.outer(x, k) / length)
        eigenvalues = 4.0 / h ** 2 * np.sin(np.pi * k / (2 * (n + 1))) ** 2
    else:
        k = np.arange(n)
        modes = np.sqrt(2.0 / length) * np.cos(np.pi * np.outer(x, k) / length)
        modes[:, 0] = 1.0 / np.sqrt(length)
        eigenvalues = 4.0 / h ** 2 * np.sin(np.pi * k / (2 * n)) ** 2

    eigenvalues = _clamp_spectrum(eigenvalues, clamp_tol)
    return SelfAdjointOperator(space, eigenvalues, modes, "interval_laplacian_analytic")


def coefficient_field(descriptor, points, extent):
    """Evaluate a coefficient descriptor {type: constant|cosine, ...} at points"""
    if descriptor is None:
        return np.ones(len(points))
    kind = descriptor.get("type", "constant")
    if kind == "constant":
        value = float(descriptor.get("value", 1.0))
        if value <= 0:
            raise ValueError(f"constant coefficient must be positive, got {value}")
        return np.full(len(points), value)
    if kind == "cosine":
        mean = float(descriptor["mean"])
        amplitude = float(descriptor["amplitude"])
        axis = int(descriptor.get("axis", 0))
        if mean - abs(amplitude) <= 0:
            raise ValueError(f"cosine coefficient must stay positive: mean={mean}, amplitude={amplitude}")
        return mean + amplitude * np.cos(2 * np.pi * points[:, axis] / extent)
    raise ValueError(f"unknown coefficient type {kind!r}")


def _conductance_matrix(n_points, heads, tails, conductance, boundary=None):
    """Weighted Laplacian matrix sum_e c_e (e_i - e_j)(e_i - e_j)^T plus boundary diagonal"""
    rows = np.concatenate([heads, tails, heads, tails])
    cols = np.concatenate([heads, tails, tails, heads])
    vals = np.concatenate([conductance, conductance, -conductance, -conductance])
    laplacian = coo_matrix((vals, (rows, cols)), shape=(n_points, n_points)).tocsr()
    if boundary is not None:
        laplacian = laplacian + diags(boundary)
    return laplacian


def _grid_conductances(space, coefficient):
    heads, tails, lengths, axes = neighbor_pairs(space)
    h = space.spacing
    midpoints = space.coords[heads].copy()
    extent = space.period if space.geometry == "torus_grid" else space.length
    midpoints[np.arange(len(heads)), axes] += h / 2
    conductance = coefficient_field(coefficient, midpoints, extent) * h ** (space.dim - 2)

    boundary = None
    if space.geometry == "interval_grid" and space.bc == "dirichlet":
        ends = np.array([[h / 2], [space.length - h / 2]])
        end_values = coefficient_field(coefficient, ends, extent) * h ** (space.dim - 2)
        boundary = np.zeros(space.point_count)
        boundary[0] += end_values[0]
        boundary[-1] += end_values[1]
    return heads, tails, conductance, boundary


def assemble_stencil(space, builder=None, coefficient=None):
    """Sparse matrix of H = W^-1 L for the nearest-neighbour stencil of the space"""
    if space.is_grid:
        heads, tails, conductance, boundary = _grid_conductances(space, coefficient)
    else:
        heads, tails, lengths, _ = neighbor_pairs(space)
        conductance = np.sqrt(space.weight[heads] * space.weight[tails]) / lengths ** 2
        boundary = None
    laplacian = _conductance_matrix(space.point_count, heads, tails, conductance, boundary)
    return diags(1.0 / space.weight) @ laplacian


def _dense_eigensystem(space, laplacian, builder, clamp_tol, cap):
    if space.point_count > cap:
        raise ValueError(f"{space.point_count} points exceed the dense eigendecomposition cap {cap}")

    inv_sqrt_w = 1.0 / np.sqrt(space.weight)
    symmetric = (diags(inv_sqrt_w) @ laplacian @ diags(inv_sqrt_w)).toarray()
    symmetric = 0.5 * (symmetric + symmetric.T)

    eigenvalues, vectors = eigh(symmetric)
    eigenvalues = _clamp_spectrum(eigenvalues, clamp_tol)
    modes = inv_sqrt_w[:, None] * vectors
    stencil = diags(1.0 / space.weight) @ laplacian
    logger.info(f"Dense {builder} eigensystem: {space.point_count} modes, lambda_max={eigenvalues[-1]:.4g}")
    return SelfAdjointOperator(space, eigenvalues, modes, builder, stencil=stencil)


def build_graph_laplacian(space, clamp_tol=CLAMP_TOLERANCE, cap=DENSE_CAP):
    """H = W^-1 L with conductance sqrt(w_i w_j) / len^2 on every edge"""
    heads, tails, lengths, _ = neighbor_pairs(space)
    conductance = np.sqrt(space.weight[heads] * space.weight[tails]) / lengths ** 2
    laplacian = _conductance_matrix(space.point_count, heads, tails, conductance)
    return _dense_eigensystem(space, laplacian, "graph_laplacian_dense", clamp_tol, cap)


def build_divergence_form(space, coefficient=None, density=None, clamp_tol=CLAMP_TOLERANCE, cap=DENSE_CAP):
    """H = -(1/rho) div(a grad) on a grid, self-adjoint in L^2(rho dx)"""
    if not space.is_grid:
        raise ValueError("divergence-form operators need a grid geometry")
    if density is not None:
        extent = space.period if space.geometry == "torus_grid" else space.length
        space = with_density(space, coefficient_field(density, space.coords, extent))

    heads, tails, conductance, boundary = _grid_conductances(space, coefficient)
    laplacian = _conductance_matrix(space.point_count, heads, tails, conductance, boundary)
    return _dense_eigensystem(space, laplacian, "divergence_form_dense", clamp_tol, cap)


def build_operator(space, descriptor=None):
    """Dispatch an operator descriptor {builder, coefficient, density, clamp_tol}"""
    descriptor = dict(descriptor or {})
    default = {
        "torus_grid": "torus_laplacian_analytic",
        "interval_grid": "interval_laplacian_analytic",
        "general_graph": "graph_laplacian_dense",
    }[space.geometry]
    builder = descriptor.get("builder", default)
    clamp_tol = float(descriptor.get("clamp_tol", CLAMP_TOLERANCE))
    cap = int(descriptor.get("dense_cap", DENSE_CAP))

    if builder == "torus_laplacian_analytic":
        return build_torus_laplacian(space, clamp_tol, cap)
    if builder == "interval_laplacian_analytic":
        return build_interval_laplacian(space, clamp_tol)
    if builder == "graph_laplacian_dense":
        return build_graph_laplacian(space, clamp_tol, cap)
    if builder == "divergence_form_dense":
        return build_divergence_form(space, descriptor.get("coefficient"), descriptor.get("density"),
                                     clamp_tol, cap)
    raise ValueError(f"unknown operator builder {builder!r}, expected one of {BUILDERS}")


def inner_product(space, u, v):
    """<u, v>_mu, conjugate-linear in the second slot"""
    return np.sum(space.weight * u * np.conj(v))


def l2_norm(space, v):
    return float(np.sqrt(np.sum(space.weight * np.abs(v) ** 2)))


def gram_defect(operator, n_trials=4, seed=0):
    """max |Phi^T W Phi - I|; Parseval defect on random states when there is no mode table"""
    if operator.modes is None:
        states = np.random.default_rng(seed).standard_normal((operator.size, n_trials))
        norms = np.sqrt(np.sum(operator.space.weight[:, None] * states ** 2, axis=0))
        energies = np.linalg.norm(operator.coefficients(states), axis=0)
        return float(np.max(np.abs(energies / norms - 1)))
    gram = operator.modes.T @ (operator.space.weight[:, None] * operator.modes)
    return float(np.max(np.abs(gram - np.eye(gram.shape[0]))))


def eigen_residual(operator, n_trials=4, seed=0):
    """Relative residual |H_stencil Phi - Phi Lambda| of the eigensystem"""
    if operator.modes is None:
        states = np.random.default_rng(seed).standard_normal((operator.size, n_trials))
        residual = operator.apply_stencil(states) - operator.apply(operator.eigenvalues, states)
        return float(np.max(np.abs(residual)) / (max(operator.lambda_max, 1.0) * np.max(np.abs(states))))
    residual = operator.apply_stencil(operator.modes) - operator.modes * operator.eigenvalues
    scale = max(operator.lambda_max, 1.0) * np.max(np.abs(operator.modes))
    return float(np.max(np.abs(residual)) / scale)


def symmetry_defect(operator, n_trials=10, seed=0):
    """max |<Hu, v>_mu - <u, Hv>_mu| over random states, relative to |H||u||v|"""
    rng = np.random.default_rng(seed)
    space = operator.space
    worst = 0.0
    for _ in range(n_trials):
        u = rng.standard_normal(space.point_count)
        v = rng.standard_normal(space.point_count)
        left = inner_product(space, operator.apply_stencil(u), v)
        right = inner_product(space, u, operator.apply_stencil(v))
        scale = max(operator.lambda_max, 1.0) * l2_norm(space, u) * l2_norm(space, v)
        worst = max(worst, abs(left - right) / scale)
    return float(worst)
