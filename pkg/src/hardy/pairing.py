import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from spectral.calculus import (
    SpectralOperator,
    heat_function,
    kernel_matrix,
    psi_function,
    schrodinger_function,
)
from validation.metrics import fit_decay_exponent

logger = logging.getLogger(__name__)

SUM_TAIL = 1e-16
REGULARIZATION_TIMES = (1e-4, 1e-3, 1e-2)


def _atom_coefficients(operator, atoms):
    states = np.column_stack([atom.realized for atom in atoms])
    return operator.coefficients(states)


def pairing_matrix(operator, T, atoms_a, atoms_b):
    """P[i, j] = <T a_i, b_j>_mu through the eigensystem"""
    values = T.values if isinstance(T, SpectralOperator) else T.values(operator)
    left = _atom_coefficients(operator, atoms_a) * values[:, None]
    right = _atom_coefficients(operator, atoms_b)
    return left.T @ np.conj(right)


@dataclass(frozen=True)
class PairingResult:
    sup: float
    argmax: tuple
    ratio: float
    swap_defect: float


def pairing_experiment(operator, T, atoms_a, atoms_b=None, a_star=None):
    """Measured sup |<T a, b>_mu| over the sample (a lower bound of the true supremum)"""
    symmetric = atoms_b is None
    atoms_b = atoms_a if symmetric else atoms_b
    matrix = pairing_matrix(operator, T, atoms_a, atoms_b)
    magnitude = np.abs(matrix)
    i, j = np.unravel_index(int(np.argmax(magnitude)), magnitude.shape)
    sup = float(magnitude[i, j])

    swap_defect = float(np.max(np.abs(matrix - np.conj(matrix.T)))) if symmetric else np.nan
    ratio = sup / a_star if a_star else np.nan
    return PairingResult(sup=sup, argmax=(int(i), int(j)), ratio=ratio, swap_defect=swap_defect)


@dataclass(frozen=True)
class PairingDecay:
    fit: object
    table: pd.DataFrame
    tolerance: float
    passed: bool


def pairing_decay_experiment(operator, h, m_prime, t_grid, atoms_a, atoms_b, tolerance=0.15, workers=1):
    """sup |<e^{itH} psi_{m'}(h^2 H) a, b>| over t, fitted against |t|^(-d/2)"""
    d = operator.space.dim
    cutoff = psi_function(m_prime, 1.0, h ** 2)

    def measure(t):
        T = SpectralOperator(operator, schrodinger_function(t) * cutoff)
        return pairing_experiment(operator, T, atoms_a, atoms_b).sup

    t_grid = [float(t) for t in t_grid]
    if workers > 1:
        sups = Parallel(n_jobs=workers, prefer="threads")(delayed(measure)(t) for t in t_grid)
    else:
        sups = [measure(t) for t in t_grid]

    table = pd.DataFrame({"t": t_grid, "sup": sups})
    fit = fit_decay_exponent(zip(np.abs(table["t"]), table["sup"]))
    passed = abs(fit.slope + d / 2) <= tolerance
    logger.info(f"Atom pairing slope {fit.slope:.4f} (target {-d / 2})")
    return PairingDecay(fit=fit, table=table, tolerance=tolerance, passed=bool(passed))


def regularized_pairing(operator, T, s, atoms_a, atoms_b=None):
    """pairing_experiment for T exp(-sH)"""
    if s <= 0:
        raise ValueError(f"regularization time must be positive, got {s}")
    return pairing_experiment(operator, T.compose(SpectralOperator(operator, heat_function(s))), atoms_a, atoms_b)


@dataclass(frozen=True)
class RegularizedUniformity:
    base: float
    table: pd.DataFrame
    spread: float
    passed: bool


def regularized_uniformity(operator, T, atoms_a, atoms_b=None, s_grid=REGULARIZATION_TIMES, factor=4.0):
    """Spread max / min over s of the regularized pairing; uniform when the spread stays within `factor`

    A vanishing regularized pairing makes the spread infinite.
    """
    base = pairing_experiment(operator, T, atoms_a, atoms_b).sup
    values = [regularized_pairing(operator, T, s, atoms_a, atoms_b).sup for s in s_grid]
    table = pd.DataFrame({"s": list(s_grid), "sup": values})

    spread = max(values) / min(values) if min(values) > 0 else np.inf
    passed = spread <= factor
    if not passed:
        logger.warning(f"Regularized pairing spread {spread:.4g} over s in {list(s_grid)} exceeds {factor}")
    return RegularizedUniformity(base=base, table=table, spread=float(spread), passed=bool(passed))


@dataclass(frozen=True)
class L1LinfResult:
    value: float
    within_budget: bool


def l1_linf_regularized(operator, T, s):
    """||T exp(-sH)||_{L^1 -> L^inf} as the largest kernel entry"""
    space = operator.space
    within_budget = True
    if space.geometry == "torus_grid" and s > space.period ** 2 / 16:
        within_budget = False
        logger.warning(f"s={s:.3g} exceeds the wrap budget period^2/16 = {space.period ** 2 / 16:.3g}")
    kernel = kernel_matrix(operator, T.function * heat_function(s))
    return L1LinfResult(value=float(np.max(np.abs(kernel))), within_budget=within_budget)


@dataclass(frozen=True)
class L1LinfExponent:
    fit: object
    table: pd.DataFrame
    tolerance: float
    passed: bool


def l1_linf_exponent(operator, T, s_grid, tolerance=0.15):
    """Fitted s-exponent of ||T exp(-sH)||_{1 -> inf}, expected within tolerance of -d/2"""
    d = operator.space.dim
    results = [l1_linf_regularized(operator, T, s) for s in s_grid]
    table = pd.DataFrame({
        "s": [float(s) for s in s_grid],
        "value": [r.value for r in results],
        "within_budget": [r.within_budget for r in results],
    })
    fit = fit_decay_exponent(zip(table["s"], table["value"]))
    return L1LinfExponent(fit=fit, table=table, tolerance=tolerance,
                          passed=bool(abs(fit.slope + d / 2) <= tolerance))


def dyadic_gaussian_sum(x, d):
    """sum over l >= 0 of (2^l x)^d exp(-(2^l x)^2), stopped once the decreasing tail is below 1e-16"""
    if x <= 0:
        raise ValueError(f"x must be positive, got {x}")
    total, l = 0.0, 0
    while True:
        y = 2.0 ** l * x
        term = y ** d * np.exp(-y * y)
        total += term
        if y >= np.sqrt(d / 2) and term < SUM_TAIL:
            return total
        l += 1


@dataclass(frozen=True)
class SumBound:
    sum: float
    product: float


def sum_bound_check(x, d, N):
    """S(x) and S(x) x^N"""
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    total = dyadic_gaussian_sum(x, d)
    return SumBound(sum=float(total), product=float(total * x ** N))


def sum_bound_constant(d, N, x_grid=None):
    """max over x in [0.1, 10] of S(x) x^N"""
    x_grid = np.logspace(-1, 1, 81) if x_grid is None else x_grid
    return max(sum_bound_check(float(x), d, N).product for x in x_grid)
