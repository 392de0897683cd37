import logging
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.integrate import quad, trapezoid
from scipy.special import gamma, gammainc, gammaincc

from spectral.operator import DENSE_CAP, l2_norm
from strichartz.norms import lq_norm

logger = logging.getLogger(__name__)

KERNEL_TOLERANCE = 1e-10
POINTS_PER_DECADE = 64


class SpectralFunction:
    """Function on the spectrum, evaluated elementwise on eigenvalues"""

    def __init__(self, evaluator, label="f"):
        self.evaluator = evaluator
        self.label = label

    def __call__(self, lam):
        return self.evaluator(np.asarray(lam, dtype=float))

    def values(self, operator):
        values = self(operator.eigenvalues)
        bad = ~np.isfinite(values)
        if np.any(bad):
            lam = operator.eigenvalues[np.argmax(bad)]
            raise ValueError(f"{self.label} is not finite at eigenvalue {lam:.6g}")
        return values

    def sup_norm(self, operator):
        return float(np.max(np.abs(self.values(operator))))

    def conjugate(self):
        return SpectralFunction(lambda lam: np.conj(self(lam)), f"conj({self.label})")

    def __mul__(self, other):
        return SpectralFunction(lambda lam: self(lam) * other(lam), f"{self.label}*{other.label}")

    def __repr__(self):
        return f"SpectralFunction({self.label})"


def psi(m, n, x):
    """psi_{m,n}(x) = x^m exp(-n x)"""
    x = np.asarray(x, dtype=float)
    return np.power(x, m) * np.exp(-n * x)


def c_constant(m, n):
    """Integral of psi_{m,n}(u) du/u over (0, inf), equal to Gamma(m) / n^m"""
    if m < 1:
        raise ValueError(f"c_constant needs m >= 1, got {m} (the integral diverges)")
    return float(gamma(m) / n ** m)


def constant_function(value=1.0):
    return SpectralFunction(lambda lam: np.full(lam.shape, value), f"const({value})")


def heat_function(t):
    if t < 0:
        raise ValueError(f"heat time must be nonnegative, got {t}")
    return SpectralFunction(lambda lam: np.exp(-t * lam), f"exp(-{t}H)")


def schrodinger_function(t):
    return SpectralFunction(lambda lam: np.exp(1j * t * lam), f"exp(i{t}H)")


def complex_function(z):
    z = complex(z)
    if z.real < 0:
        raise ValueError(f"complex time needs Re z >= 0, got {z}")
    return SpectralFunction(lambda lam: np.exp(-z * lam), f"exp(-({z})H)")


def wave_cos_function(t):
    return SpectralFunction(lambda lam: np.cos(t * np.sqrt(lam)), f"cos({t}sqrtH)")


def wave_sin_function(t):
    return SpectralFunction(lambda lam: np.sin(t * np.sqrt(lam)), f"sin({t}sqrtH)")


def psi_function(m, n=1.0, scale=1.0):
    """psi_{m,n}(scale * H)"""
    return SpectralFunction(lambda lam: psi(m, n, scale * lam), f"psi_{m},{n}({scale}H)")


def sobolev_function(s):
    return SpectralFunction(lambda lam: (1.0 + lam) ** (s / 2.0), f"(1+H)^{s / 2}")


def indicator_function(low, high, sqrt=False):
    """Sharp window 1_[low, high) on lambda, or on sqrt(lambda)"""
    def window(lam):
        x = np.sqrt(lam) if sqrt else lam
        return ((x >= low) & (x < high)).astype(float)

    return SpectralFunction(window, f"1[{low},{high})({'sqrtH' if sqrt else 'H'})")


def kernel_indicator(tolerance=KERNEL_TOLERANCE):
    return SpectralFunction(lambda lam: (lam <= tolerance).astype(float), "P_N(H)")


def apply_calculus(operator, function, v):
    """f(H)v = sum_k f(lambda_k) <v, phi_k>_mu phi_k"""
    return operator.apply(function.values(operator), v)


def heat(operator, t, v):
    return apply_calculus(operator, heat_function(t), v)


def schrodinger(operator, t, v):
    return apply_calculus(operator, schrodinger_function(t), v)


def complex_semigroup(operator, z, v):
    return apply_calculus(operator, complex_function(z), v)


def wave_cos(operator, t, v):
    return apply_calculus(operator, wave_cos_function(t), v)


def wave_sin(operator, t, v):
    return apply_calculus(operator, wave_sin_function(t), v)


def lattice_gather(space, convolution, source, target):
    """convolution[y - x] for y in target, x in source, indices taken modulo the grid shape"""
    lattice = space.lattice
    offsets = lattice[np.asarray(target)][:, None, :] - lattice[np.asarray(source)][None, :, :]
    offsets %= np.asarray(space.shape)
    return convolution[tuple(np.moveaxis(offsets, -1, 0))]


def kernel_matrix(operator, function, cap=DENSE_CAP):
    """K with (f(H)v)(x) = sum_y K(x, y) v(y) mu(y)"""
    if operator.size > cap:
        raise ValueError(
            f"kernel of {operator.size} points exceeds the dense cap {cap}; "
            "use apply_calculus or SpectralOperator.block for matrix-free evaluation"
        )
    values = function.values(operator)
    if operator.modes is None:
        everything = np.arange(operator.size)
        convolution = operator.convolution_kernel(values)
        return lattice_gather(operator.space, convolution, everything, everything) / operator.space.weight[0]
    return (operator.modes * values) @ operator.modes.T


def kernel_projector(operator, tolerance=KERNEL_TOLERANCE):
    """Action of the projector onto N(H)"""
    return partial(apply_calculus, operator, kernel_indicator(tolerance))


class SpectralOperator:
    """f(H) bound to an operator; exposes mu-weighted kernel blocks through the eigensystem"""

    def __init__(self, operator, function):
        self.operator = operator
        self.function = function
        self._values = None
        self._convolution = None

    @property
    def space(self):
        return self.operator.space

    @property
    def values(self):
        if self._values is None:
            self._values = self.function.values(self.operator)
        return self._values

    def __call__(self, v):
        return self.operator.apply(self.values, v)

    def block(self, source, target):
        """sqrt(mu_y) K(y, x) sqrt(mu_x) for y in target, x in source"""
        if self.operator.modes is None:
            if self._convolution is None:
                self._convolution = self.operator.convolution_kernel(self.values)
            return lattice_gather(self.space, self._convolution, source, target)
        modes = self.operator.modes
        sqrt_w = np.sqrt(self.space.weight)
        left = modes[target] * sqrt_w[target][:, None] * self.values
        right = modes[source] * sqrt_w[source][:, None]
        return left @ right.T

    def kernel(self, cap=DENSE_CAP):
        return kernel_matrix(self.operator, self.function, cap)

    def compose(self, other):
        if other.operator is not self.operator:
            raise ValueError("cannot compose spectral operators of different operators")
        return SpectralOperator(self.operator, self.function * other.function)

    def adjoint(self):
        return SpectralOperator(self.operator, self.function.conjugate())

    def __repr__(self):
        return f"SpectralOperator({self.function.label})"


def restricted_norm(spectral_operator, source, target):
    """Operator norm of P_target f(H) P_source on L^2(mu)"""
    return float(np.linalg.norm(spectral_operator.block(source, target), 2))


def calculus_operator_norm(operator, function, cap=DENSE_CAP):
    """Exact L^2(mu) operator norm of f(H) from the symmetrized kernel"""
    kernel = kernel_matrix(operator, function, cap)
    sqrt_w = np.sqrt(operator.space.weight)
    return float(np.linalg.norm(sqrt_w[:, None] * kernel * sqrt_w[None, :], 2))


def empirical_operator_norm(operator, function, n_trials=50, seed=0):
    """max ||f(H)v|| / ||v|| over random states"""
    rng = np.random.default_rng(seed)
    space = operator.space
    values = function.values(operator)
    worst = 0.0
    for _ in range(n_trials):
        v = rng.standard_normal(space.point_count)
        worst = max(worst, l2_norm(space, operator.apply(values, v)) / l2_norm(space, v))
    return worst


def composition_defect(operator, f, g, n_trials=10, seed=0):
    """max |f(H)g(H)v - (fg)(H)v| / ||v|| over random states"""
    rng = np.random.default_rng(seed)
    space = operator.space
    worst = 0.0
    for _ in range(n_trials):
        v = rng.standard_normal(space.point_count)
        left = apply_calculus(operator, f, apply_calculus(operator, g, v))
        right = apply_calculus(operator, f * g, v)
        worst = max(worst, l2_norm(space, left - right) / l2_norm(space, v))
    return worst


def calculus_symmetry_defect(operator, function, n_trials=10, seed=0):
    """max |<f(H)u, v> - <u, f(H)v>| for real f"""
    rng = np.random.default_rng(seed)
    space = operator.space
    worst = 0.0
    for _ in range(n_trials):
        u = rng.standard_normal(space.point_count)
        v = rng.standard_normal(space.point_count)
        left = np.sum(space.weight * apply_calculus(operator, function, u) * v)
        right = np.sum(space.weight * u * apply_calculus(operator, function, v))
        worst = max(worst, abs(left - right) / (l2_norm(space, u) * l2_norm(space, v)))
    return float(worst)


def log_quadrature(low, high, points_per_decade=POINTS_PER_DECADE):
    """Log-uniform nodes covering [low, high]"""
    decades = np.log10(high / low)
    count = max(int(np.ceil(decades * points_per_decade)) + 1, 3)
    return np.logspace(np.log10(low), np.log10(high), count)


def reproducing_integrals(lams, m, n, nodes):
    """integral of psi_{m,n}(s lambda) ds/s per lambda, trapezoid rule in log s"""
    lams = np.asarray(lams, dtype=float)
    integrand = psi(m, n, np.outer(lams, nodes))
    return trapezoid(integrand, np.log(nodes), axis=1)


@dataclass(frozen=True)
class ReproducingReport:
    residual: float
    kappa: float
    window: tuple
    widenings: int


def reproducing_residual(lams, m, n, window=None, points_per_decade=POINTS_PER_DECADE,
                         tolerance=1e-6, max_widenings=4):
    """max over positive lambda of |kappa * integral psi_{m,n}(s lambda) ds/s - 1|, kappa = 1/c_{m,n}"""
    lams = np.unique(np.asarray(lams, dtype=float))
    lams = lams[lams > 0]
    if len(lams) == 0:
        raise ValueError("reproducing residual needs at least one positive eigenvalue")

    kappa = 1.0 / c_constant(m, n)
    low, high = window if window is not None else (1e-8 / lams[-1], 1e8 / lams[0])

    widenings = 0
    while True:
        nodes = log_quadrature(low, high, points_per_decade)
        residual = float(np.max(np.abs(kappa * reproducing_integrals(lams, m, n, nodes) - 1.0)))
        if residual <= tolerance or widenings >= max_widenings:
            break
        logger.warning(f"Reproducing residual {residual:.3g} above {tolerance:g}; widening the window")
        low, high = low / 10, high * 10
        widenings += 1

    if residual > tolerance:
        logger.warning(f"Reproducing residual {residual:.3g} still above {tolerance:g} after {widenings} widenings")
    return ReproducingReport(residual=residual, kappa=kappa, window=(low, high), widenings=widenings)


def semigroup_difference_residual(lams, r):
    """max over lambda of |(1 - exp(-r^2 lambda)) - integral_0^{r^2} lambda exp(-s lambda) ds|"""
    worst = 0.0
    for lam in np.unique(np.asarray(lams, dtype=float)):
        integral, _ = quad(lambda s: lam * np.exp(-s * lam), 0.0, r ** 2, epsabs=1e-14, epsrel=1e-12)
        worst = max(worst, abs((1 - np.exp(-r ** 2 * lam)) - integral))
    return float(worst)


@dataclass(frozen=True)
class AlmostOrthogonality:
    constant: float
    ceiling: float


def almost_orthogonality_constant(lams, m, u_grid, v_grid):
    """sup of psi_m(u lambda) psi_m(v lambda) / min(u/v, v/u)^m over the grids and spectrum"""
    lams = np.asarray(lams, dtype=float)
    worst = 0.0
    for u in u_grid:
        left = psi(m, 1.0, u * lams)
        for v in v_grid:
            product = np.max(left * psi(m, 1.0, v * lams))
            worst = max(worst, product / min(u / v, v / u) ** m)
    return AlmostOrthogonality(constant=float(worst), ceiling=float((2 * m / np.e) ** (2 * m)))


def sobolev_norm(operator, s, v):
    """||(1 + H)^{s/2} v||_{L^2(mu)}"""
    return lq_norm(operator.space, apply_calculus(operator, sobolev_function(s), v), 2)


def phi_function(m, n):
    """phi(lambda) = integral_lambda^inf psi_{m,n}(u) du/u = Gamma(m, n lambda) / n^m"""
    return SpectralFunction(lambda lam: gammaincc(m, n * lam) * gamma(m) / n ** m, f"phi_{m},{n}")


def square_function_oracle(lams, m, n):
    """integral_0^1 psi_{m,n}(u lambda)^2 du/u = gamma(2m, 2n lambda) / (2n)^{2m}"""
    lams = np.asarray(lams, dtype=float)
    return gammainc(2 * m, 2 * n * lams) * gamma(2 * m) / (2 * n) ** (2 * m)


@dataclass(frozen=True)
class SquareFunctionReport:
    low_part: float
    square_part: float
    lq_norm: float
    ratio: float


def square_function_norm(operator, m, n, q, v, u_grid):
    """Low-frequency term ||phi(H)v||_q and square term (int_0^1 ||psi(uH)v||_q^2 du/u)^(1/2)"""
    if m < 2:
        raise ValueError(f"square function characterization needs m >= 2, got {m}")
    u_grid = np.asarray(u_grid, dtype=float)
    if np.any(u_grid <= 0) or np.any(u_grid > 1):
        raise ValueError("u_grid must lie in (0, 1]")

    space = operator.space
    low_part = lq_norm(space, apply_calculus(operator, phi_function(m, n), v), q)

    coefficients = operator.coefficients(v)
    multipliers = psi(m, n, np.outer(operator.eigenvalues, u_grid))
    states = operator.synthesize(multipliers * coefficients[:, None])
    norms = lq_norm(space, states, q)
    square_part = float(np.sqrt(trapezoid(norms ** 2, np.log(u_grid))))

    total = lq_norm(space, v, q)
    return SquareFunctionReport(low_part=low_part, square_part=square_part, lq_norm=total,
                                ratio=total / (low_part + square_part))
