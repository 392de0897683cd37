import logging
from dataclasses import dataclass

import numpy as np

from geometry.space import set_distance
from spectral.calculus import SpectralOperator, restricted_norm, wave_cos, wave_cos_function, wave_sin
from spectral.operator import l2_norm

logger = logging.getLogger(__name__)

TRUNCATION = 1e-12
ALIAS_EXPONENT = 40.0
POINTS_PER_PERIOD = 8
CHUNK = 4096


@dataclass(frozen=True)
class FiniteSpeedResult:
    tail: float
    distance: float
    applicable: bool
    passed: bool


def check_finite_speed(operator, source, target, t, tolerance=1e-3):
    """tail = ||P_F cos(t sqrt H) P_E||, applicable when t < d(E, F) - 3 spacing"""
    space = operator.space
    distance = set_distance(space, source, target)
    applicable = t < distance - 3 * space.spacing
    if not applicable:
        logger.warning(f"t={t:.4g} is outside the light cone margin for d(E, F)={distance:.4g}")

    tail = restricted_norm(SpectralOperator(operator, wave_cos_function(t)), source, target)
    return FiniteSpeedResult(tail=tail, distance=distance, applicable=bool(applicable),
                             passed=bool(applicable and tail <= tolerance))


@dataclass(frozen=True)
class TransmutationRule:
    step: float
    s_max: float
    n_points: int


def transmutation_rule(z, omega_max, s_max=None, n_points=None):
    """Trapezoid rule on [0, s_max] for (pi z)^(-1/2) int cos(s w) exp(-s^2 / 4z) ds"""
    z = complex(z)
    if z.real <= 0:
        raise ValueError(f"transmutation needs Re z > 0, got {z}")

    decay = (1.0 / (4 * z)).real
    if s_max is None:
        s_max = np.sqrt(np.log(1.0 / TRUNCATION) / decay)
    elif np.exp(-s_max ** 2 * decay) >= TRUNCATION:
        logger.warning(f"s_max={s_max:.4g} truncates the Gaussian above {TRUNCATION:g}")

    step = 2 * np.pi / (omega_max + np.sqrt(ALIAS_EXPONENT / z.real))
    if omega_max > 0:
        step = min(step, 2 * np.pi / (POINTS_PER_PERIOD * omega_max))
    required = int(np.ceil(s_max / step)) + 1

    if n_points is None:
        n_points = required
    elif n_points < required:
        raise ValueError(f"n_points={n_points} under-resolves the quadrature; need at least {required}")
    return TransmutationRule(step=s_max / (n_points - 1), s_max=s_max, n_points=n_points)


def transmutation_multiplier(lams, z, s_max=None, n_points=None):
    """Quadrature values of exp(-z lambda) through the wave propagator, per eigenvalue"""
    z = complex(z)
    omegas = np.sqrt(np.asarray(lams, dtype=float))
    rule = transmutation_rule(z, float(omegas.max()) if omegas.size else 0.0, s_max, n_points)

    nodes = np.arange(rule.n_points) * rule.step
    weights = np.exp(-nodes ** 2 / (4 * z)) * rule.step
    weights[0] *= 0.5

    result = np.zeros(omegas.shape, dtype=complex)
    for start in range(0, rule.n_points, CHUNK):
        block = slice(start, start + CHUNK)
        result += np.cos(np.outer(omegas, nodes[block])) @ weights[block]
    return result / np.sqrt(np.pi * z)


def transmutation(operator, z, v, s_max=None, n_points=None):
    """exp(-zH)v from the Hadamard transmutation of the wave group"""
    values = transmutation_multiplier(operator.eigenvalues, z, s_max, n_points)
    return operator.apply(values, v)


def dalembert_oracle(space, v, t):
    """(shift_+ v + shift_- v) / 2 on a 1-D torus, t a multiple of the spacing"""
    if space.geometry != "torus_grid" or space.dim != 1:
        raise ValueError("the d'Alembert oracle needs a 1-D torus")
    cells = t / space.spacing
    shift = int(round(cells))
    if abs(cells - shift) > 1e-9 * max(1.0, abs(cells)):
        raise ValueError(f"t={t} is not an integer multiple of the spacing {space.spacing}")
    return 0.5 * (np.roll(v, shift) + np.roll(v, -shift))


def dalembert_deviation(operator, v, t):
    """||cos(t sqrt H)v - oracle|| / ||v||"""
    space = operator.space
    reference = dalembert_oracle(space, v, t)
    return l2_norm(space, wave_cos(operator, t, v) - reference) / l2_norm(space, v)


def wave_energy_defect(operator, t, v):
    """| ||cos v||^2 + ||sin v||^2 - ||v||^2 | / ||v||^2"""
    space = operator.space
    total = l2_norm(space, v) ** 2
    energy = l2_norm(space, wave_cos(operator, t, v)) ** 2 + l2_norm(space, wave_sin(operator, t, v)) ** 2
    return abs(energy - total) / total
