import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from spectral.calculus import SpectralOperator, indicator_function
from strichartz.norms import lq_norm
from validation.metrics import fit_decay_exponent

logger = logging.getLogger(__name__)

RHO_LOW, RHO_HIGH = 0.5, 2.0


def cluster_members(operator, lam):
    """Mode indices with sqrt(lambda_k) in [lam, lam + 1)"""
    if lam < 0:
        raise ValueError(f"cluster level must be nonnegative, got {lam}")
    frequencies = np.sqrt(operator.eigenvalues)
    return np.flatnonzero((frequencies >= lam) & (frequencies < lam + 1))


def cluster_projector(operator, lam):
    """Pi_lam = 1_[lam, lam + 1)(sqrt H)"""
    if lam < 0:
        raise ValueError(f"cluster level must be nonnegative, got {lam}")
    return SpectralOperator(operator, indicator_function(lam, lam + 1, sqrt=True))


def rho(lam, x):
    """sin(lam - x) / (lam - x) + sin(lam + x) / (lam + x), with sin(0) / 0 = 1"""
    lam = np.asarray(lam, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.sinc((lam - x) / np.pi) + np.sinc((lam + x) / np.pi)


def rho_threshold(lam_grid, samples=1001):
    """Smallest lam of the grid from which rho(lam, x) stays in [1/2, 2] on every window [lam, lam + 1)"""
    validated = []
    for lam in sorted(float(v) for v in lam_grid):
        x = lam + np.linspace(0.0, 1.0, samples, endpoint=False)
        values = rho(lam, x)
        validated.append((lam, bool(values.min() >= RHO_LOW and values.max() <= RHO_HIGH)))

    threshold = None
    for lam, ok in reversed(validated):
        if not ok:
            break
        threshold = lam
    if threshold is None:
        logger.warning("rho leaves [1/2, 2] at the largest sampled level")
    return threshold


def cluster_norm(operator, lam, q, n_trials=32, seed=0):
    """||Pi_lam||_{L^2 -> L^q}; exact for q in {2, inf}, a sampled lower bound otherwise. None when empty"""
    members = cluster_members(operator, lam)
    if len(members) == 0:
        return None
    q = float(q)
    if q == 2:
        return 1.0

    if operator.modes is None:
        if not np.isinf(q):
            raise ValueError("finite-q cluster norms need a mode table; use q = inf on Fourier operators")
        # translation invariance: |phi_k(x)|^2 = 1 / |T| for every exponential mode
        return float(np.sqrt(len(members) / operator.space.total_measure))

    modes = operator.modes[:, members]
    if np.isinf(q):
        return float(np.sqrt(np.max(np.sum(modes ** 2, axis=1))))

    space = operator.space
    peak = int(np.argmax(np.sum(modes ** 2, axis=1)))
    candidates = [modes[peak]]
    rng = np.random.default_rng(seed)
    candidates.extend(rng.standard_normal((n_trials, len(members))))
    best = 0.0
    for coefficients in candidates:
        norm = np.linalg.norm(coefficients)
        if norm > 0:
            best = max(best, float(lq_norm(space, modes @ coefficients, q)) / norm)
    return best


def critical_exponent(d):
    """2(d + 1) / (d - 1), infinite in one dimension"""
    return np.inf if d == 1 else 2 * (d + 1) / (d - 1)


def predicted_cluster_exponent(d, q):
    reciprocal = 0.0 if np.isinf(q) else 1.0 / q
    if q >= critical_exponent(d):
        return d * (0.5 - reciprocal) - 0.5
    return (d - 1) / 2 * (0.5 - reciprocal)


@dataclass(frozen=True)
class ClusterFit:
    fit: object
    predicted: float
    table: pd.DataFrame
    tolerance: float
    passed: bool


def cluster_norm_fit(operator, q, lam_grid, tolerance=0.2, min_decades=1.0):
    """Slope of log ||Pi_lam||_{2 -> q} against log lam, compared with the regime prediction"""
    limit = np.sqrt(operator.lambda_max) / 2
    too_high = [lam for lam in lam_grid if lam >= limit]
    if too_high:
        raise ValueError(f"cluster levels {too_high} not below sqrt(lambda_max)/2 = {limit:.4g}")

    rows = []
    for lam in lam_grid:
        value = cluster_norm(operator, lam, q)
        if value is None:
            logger.info(f"Empty cluster at lam={lam}; skipped")
            continue
        rows.append({"lam": float(lam), "size": len(cluster_members(operator, lam)), "norm": value})
    table = pd.DataFrame(rows)

    d = operator.space.dim
    predicted = predicted_cluster_exponent(d, float(q))
    fit = fit_decay_exponent(zip(table["lam"], table["norm"]), min_decades)
    passed = abs(fit.slope - predicted) <= tolerance
    return ClusterFit(fit=fit, predicted=float(predicted), table=table, tolerance=tolerance, passed=bool(passed))
