import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from geometry.space import Ball, ball_measure, ball_members, set_distance
from spectral.calculus import SpectralOperator, apply_calculus, heat_function, restricted_norm

logger = logging.getLogger(__name__)

THETA_IMAGES = 5


def theta_heat_kernel(d, period, t, displacement, images=THETA_IMAGES):
    """Continuum periodic heat kernel: product over axes of truncated Gaussian image sums"""
    displacement = np.atleast_2d(np.asarray(displacement, dtype=float))
    shifts = np.arange(-images, images + 1) * period
    total = np.ones(len(displacement))
    for axis in range(d):
        offsets = displacement[:, axis][:, None] + shifts[None, :]
        total *= np.sum(np.exp(-offsets ** 2 / (4 * t)), axis=1) / np.sqrt(4 * np.pi * t)
    return total


def theta_due_constant(space, t, center=0):
    """Continuum on-diagonal value times the discrete ball measure mu(B(x, sqrt t))"""
    diagonal = theta_heat_kernel(space.dim, space.period, t, np.zeros((1, space.dim)))[0]
    return float(diagonal * ball_measure(space, Ball(center, np.sqrt(t))))


def heat_diagonal(operator, t, centers):
    """p_t(x, x) for x in centers"""
    rows = operator.modes[centers]
    return (rows ** 2) @ np.exp(-t * operator.eigenvalues)


def default_centers(space, count=16):
    stride = max(1, space.point_count // count)
    return np.arange(0, space.point_count, stride)


@dataclass(frozen=True)
class DueReport:
    constant: float
    table: pd.DataFrame


def check_due(operator, t_grid, centers=None):
    """sup over (x, t) of p_t(x, x) mu(B(x, sqrt t))"""
    space = operator.space
    centers = default_centers(space) if centers is None else np.asarray(centers)
    band = (space.spacing ** 2, space.diameter ** 2)

    rows = []
    for t in t_grid:
        flagged = not (band[0] <= t <= band[1])
        if flagged:
            logger.warning(f"t={t:.3g} outside [{band[0]:.3g}, {band[1]:.3g}]; the discrete kernel is not Gaussian there")
        diagonal = heat_diagonal(operator, t, centers)
        volumes = np.array([ball_measure(space, Ball(int(c), np.sqrt(t))) for c in centers])
        products = diagonal * volumes
        worst = int(np.argmax(products))
        rows.append({"t": float(t), "center": int(centers[worst]), "diagonal": float(diagonal[worst]),
                     "ball_measure": float(volumes[worst]), "constant": float(products[worst]),
                     "flagged": flagged})

    table = pd.DataFrame(rows)
    return DueReport(constant=float(table["constant"].max()), table=table)


@dataclass(frozen=True)
class GaussianFit:
    C: float
    c: float
    table: pd.DataFrame


def fit_gaussian_ue(operator, profile, t_grid, trial_c=(0.25, 0.125, 0.0625), floor=1e-10,
                    prefactor_cap=None, centers=None):
    """Smallest C with |K_t(x, y)| mu(B(x, sqrt t)) <= C exp(-c d(x, y)^2 / t) for each trial c

    `profile` maps t to the SpectralFunction whose kernel is tested (heat or psi_{m,n}(tH)).
    Entries whose trial envelope is below `floor` are excluded as round-off.
    """
    space = operator.space
    centers = default_centers(space) if centers is None else np.asarray(centers)

    first = profile(t_grid[0])
    values = np.abs(first.values(operator))
    if values[-1] > 1e-3 * values.max():
        raise ValueError(f"{first.label} does not decay on the spectrum; no Gaussian bound to fit")

    cutoff = np.log(1.0 / floor)
    log_ratios = {c: -np.inf for c in trial_c}
    for t in t_grid:
        function = profile(t)
        rows = (operator.modes[centers] * function.values(operator)) @ operator.modes.T
        for row, center in zip(np.abs(rows), centers):
            distances = space.distances_from(int(center))
            volume = ball_measure(space, Ball(int(center), np.sqrt(t)))
            with np.errstate(divide="ignore"):
                log_entry = np.log(row) + np.log(volume)
            for c in trial_c:
                exponent = c * distances ** 2 / t
                window = (exponent <= cutoff) & np.isfinite(log_entry)
                if np.any(window):
                    log_ratios[c] = max(log_ratios[c], float(np.max(log_entry[window] + exponent[window])))

    table = pd.DataFrame([{"c": c, "C": float(np.exp(log_ratios[c]))} for c in trial_c])
    admissible = table if prefactor_cap is None else table[table["C"] <= prefactor_cap]
    if admissible.empty:
        logger.warning(f"No trial exponent keeps the prefactor below {prefactor_cap}")
        admissible = table
    best = admissible.sort_values("c", ascending=False).iloc[0]
    return GaussianFit(C=float(best["C"]), c=float(best["c"]), table=table)


@dataclass(frozen=True)
class DaviesGaffneyResult:
    ratio: float
    norm: float
    distance: float
    within_budget: bool
    passed: bool


def check_davies_gaffney(operator, source, target, t, bound=2.0):
    """||P_F exp(-tH) P_E|| / exp(-d(E, F)^2 / 4t)"""
    space = operator.space
    distance = set_distance(space, source, target)
    within_budget = True
    if space.geometry == "torus_grid" and t > space.period ** 2 / 16:
        within_budget = False
        logger.warning(f"t={t:.3g} exceeds the wrap budget period^2/16 = {space.period ** 2 / 16:.3g}")

    norm = restricted_norm(SpectralOperator(operator, heat_function(t)), source, target)
    ratio = norm / np.exp(-distance ** 2 / (4 * t))
    return DaviesGaffneyResult(ratio=float(ratio), norm=norm, distance=distance,
                               within_budget=within_budget, passed=bool(ratio <= bound))


def _ball_averages(space, magnitude, center):
    """Averages of |v| over the nested balls around `center`, one per distinct radius"""
    distances = space.distances_from(center)
    order = np.argsort(distances, kind="stable")
    sorted_distances = distances[order]
    mass = np.cumsum(magnitude[order] * space.weight[order])
    volume = np.cumsum(space.weight[order])
    ends = np.searchsorted(sorted_distances, sorted_distances, side="right") - 1
    return order, sorted_distances, mass[ends] / volume[ends]


def maximal_function(space, v):
    """Uncentered Hardy-Littlewood maximal function over all grid balls"""
    magnitude = np.abs(np.asarray(v))
    result = np.zeros(space.point_count)
    for center in range(space.point_count):
        order, _, averages = _ball_averages(space, magnitude, center)
        best = np.maximum.accumulate(averages[::-1])[::-1]
        result[order] = np.maximum(result[order], best)
    return result


def maximal_at(space, v, x):
    """Maximal function at a single point"""
    magnitude = np.abs(np.asarray(v))
    best = 0.0
    for center in range(space.point_count):
        _, sorted_distances, averages = _ball_averages(space, magnitude, center)
        reach = space.distances_from(center)[x]
        admitted = sorted_distances >= reach - 1e-12 * space.spacing
        best = max(best, float(averages[admitted].max()))
    return best


def check_maximal_domination(operator, v, x0, t_grid):
    """sup_t ||exp(-tH)v||_{L^inf(B(x0, sqrt t))} / Mv(x0), or None when Mv(x0) = 0"""
    space = operator.space
    denominator = maximal_at(space, v, x0)
    if denominator == 0:
        logger.warning(f"Maximal function vanishes at {x0}; point skipped")
        return None

    worst = 0.0
    for t in t_grid:
        smoothed = apply_calculus(operator, heat_function(t), v)
        members = ball_members(space, Ball(x0, np.sqrt(t)))
        worst = max(worst, float(np.max(np.abs(smoothed[members]))))
    return worst / denominator
