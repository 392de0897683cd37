import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

logger = logging.getLogger(__name__)

ADMISSIBILITY_TOLERANCE = 1e-12


def _reciprocal(exponent):
    return 0.0 if np.isinf(exponent) else 1.0 / exponent


@dataclass(frozen=True)
class AdmissiblePair:
    p: float
    q: float
    d: int

    def __post_init__(self):
        if not is_admissible(self.p, self.q, self.d):
            raise ValueError(f"(p, q, d) = ({self.p}, {self.q}, {self.d}) is not admissible")

    @property
    def label(self):
        return f"({self.p},{self.q},{self.d})"


def is_admissible(p, q, d):
    """2/p + d/q = d/2 with p, q in [2, inf], excluding the endpoint (2, inf, 2)"""
    p, q = float(p), float(q)
    if p < 2 or q < 2:
        return False
    if p == 2 and np.isinf(q) and d == 2:
        return False
    return abs(2 * _reciprocal(p) + d * _reciprocal(q) - d / 2) <= ADMISSIBILITY_TOLERANCE


def lq_norm(space, v, q):
    """Discrete L^q(mu) norm; columns of a 2-D input are separate states"""
    q = float(q)
    if q < 1:
        raise ValueError(f"L^q norm needs q >= 1, got {q}")
    magnitude = np.abs(np.asarray(v))
    if np.isinf(q):
        return magnitude.max(axis=0)
    weight = space.weight if magnitude.ndim == 1 else space.weight[:, None]
    return np.sum(weight * magnitude ** q, axis=0) ** (1.0 / q)


def time_grid(T, dt):
    """Uniform grid on [-T, T] with a multiple of four intervals and step at most dt"""
    if T <= 0 or dt <= 0:
        raise ValueError(f"time grid needs positive T and dt, got T={T}, dt={dt}")
    intervals = 4 * int(np.ceil(2 * T / dt / 4))
    return np.linspace(-T, T, intervals + 1)


def time_integral(norms, times, p, rtol=0.01):
    """(int |norms|^p dt)^(1/p) by Simpson's rule, checked against the half-resolution grid"""
    norms = np.asarray(norms, dtype=float)
    if np.isinf(p):
        return float(norms.max())

    fine = simpson(norms ** p, x=times) ** (1.0 / p)
    coarse = simpson(norms[::2] ** p, x=times[::2]) ** (1.0 / p)
    if abs(fine - coarse) > rtol * abs(fine):
        raise ValueError(
            f"time quadrature not converged: {fine:.6g} vs half-grid {coarse:.6g}; use a finer dt"
        )
    return float(fine)


def mixed_norm(space, u, times, p, q, rtol=0.01):
    """L^p_t L^q_x norm of time-indexed states u[i] over the uniform grid `times`"""
    u = np.asarray(u)
    if len(u) != len(times):
        raise ValueError(f"{len(u)} states for {len(times)} time points")
    norms = lq_norm(space, u.T, q)
    return time_integral(norms, times, p, rtol)
