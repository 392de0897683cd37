import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from spectral.calculus import psi, sobolev_function
from strichartz.norms import AdmissiblePair, lq_norm, time_grid, time_integral
from validation.metrics import fit_decay_exponent

logger = logging.getLogger(__name__)

DATA_KINDS = ("modes", "packets", "random")
SWEEP_MODES = ("euclidean", "compact")
ACTIVE_TOLERANCE = 1e-14
DENOMINATOR_FLOOR = 1e-14
TIME_CHUNK = 1024
STEPS_PER_PERIOD = 16
STABILITY = 0.2


def _sweep_extent(space):
    return space.period if space.geometry == "torus_grid" else space.diameter


def sweep_window(space, h, mode, T=None):
    """Time window of a loss sweep at scale h: min(1, extent h / 16) when euclidean, T (default 1) when compact"""
    if mode == "euclidean":
        return min(1.0, _sweep_extent(space) * h / 16)
    return 1.0 if T is None else T


def data_family(operator, h, kinds=DATA_KINDS, seed=0, random_count=4):
    """Named initial data at frequency scale 1/h: eigenmodes, Gaussian wave packets and band-limited fields"""
    unknown = [k for k in kinds if k not in DATA_KINDS]
    if unknown:
        raise ValueError(f"unknown data kinds {unknown}, expected a subset of {DATA_KINDS}")
    space = operator.space
    lams = operator.eigenvalues
    data = {}

    if "modes" in kinds:
        if operator.modes is None:
            raise ValueError("eigenmode data need a mode table; use packets or random data on Fourier operators")
        for target in (1.0, 2.0):
            index = int(np.argmin(np.abs(h ** 2 * lams - target)))
            data[f"mode_{index}"] = operator.modes[:, index].copy()

    if "packets" in kinds:
        if not space.is_grid:
            raise ValueError("wave packets need a grid geometry")
        offset = space.displacement(0)
        radius2 = np.sum(offset ** 2, axis=1)
        for factor in (1, 2):
            sigma = factor * h
            data[f"packet_{factor}h"] = np.exp(-radius2 / (2 * sigma ** 2) + 1j * offset[:, 0] / h)

    if "random" in kinds:
        rng = np.random.default_rng(seed)
        band = (h ** 2 * lams >= 0.25) & (h ** 2 * lams <= 4.0)
        for k in range(random_count):
            coefficients = np.zeros(len(lams))
            coefficients[band] = rng.standard_normal(int(band.sum()))
            data[f"random_{k}"] = operator.synthesize(coefficients)

    return data


def _default_dt(lams, T):
    top = float(np.max(lams)) if len(lams) else 0.0
    if top == 0:
        return T / 2
    return min(T / 2, 2 * np.pi / (STEPS_PER_PERIOD * top))


def _flow_mixed_norms(operator, coefficients, multiplier, T, dt, p, q, rtol):
    """L^p_t L^q_x norms of exp(itH) applied to each coefficient column, over the active modes only"""
    weighted = coefficients * multiplier[:, None]
    scale = np.abs(weighted).max()
    if scale == 0:
        return np.zeros(coefficients.shape[1])
    active = np.flatnonzero(np.max(np.abs(weighted), axis=1) > ACTIVE_TOLERANCE * scale)
    lams = operator.eigenvalues[active]
    dt = _default_dt(lams, T) if dt is None else dt
    times = time_grid(T, dt)
    norms = np.zeros((len(times), weighted.shape[1]))

    if operator.modes is None:
        for i, t in enumerate(times):
            phases = np.zeros(operator.size, dtype=complex)
            phases[active] = np.exp(1j * t * lams)
            states = operator.synthesize(phases[:, None] * weighted)
            norms[i] = lq_norm(operator.space, states, q)
        return np.array([time_integral(norms[:, j], times, p, rtol) for j in range(weighted.shape[1])])

    modes = operator.modes[:, active]
    weighted = weighted[active]
    for start in range(0, len(times), TIME_CHUNK):
        block = times[start:start + TIME_CHUNK]
        phases = np.exp(1j * np.outer(lams, block))
        for j in range(weighted.shape[1]):
            states = modes @ (phases * weighted[:, j][:, None])
            norms[start:start + len(block), j] = lq_norm(operator.space, states, q)

    return np.array([time_integral(norms[:, j], times, p, rtol) for j in range(weighted.shape[1])])


def _stack(data):
    labels = list(data)
    return labels, np.column_stack([np.asarray(data[label]) for label in labels])


@dataclass(frozen=True)
class StrichartzConstant:
    value: float
    table: pd.DataFrame
    skipped: list


def strichartz_constant(operator, h, ell, p, q, data, T=1.0, dt=None, rtol=0.01):
    """sup over the data of ||exp(itH) psi_{2l}(h^2 H) f||_{L^p L^q} / ||psi_{l,1/2}(h^2 H) f||_{L^2}

    `data` maps labels to states. The value is a lower bound of the supremum over all f.
    """
    AdmissiblePair(p, q, operator.space.dim)
    if np.isinf(q):
        raise ValueError("Strichartz runs need q != inf")
    if ell < 1:
        raise ValueError(f"ell must be at least 1, got {ell}")
    dt = h ** 2 / STEPS_PER_PERIOD if dt is None else dt

    labels, states = _stack(data)
    coefficients = operator.coefficients(states)
    x = h ** 2 * operator.eigenvalues
    numerator_multiplier = psi(2 * ell, 1.0, x)
    denominators = np.sqrt(np.sum(np.abs(coefficients * psi(ell, 0.5, x)[:, None]) ** 2, axis=0))

    keep = denominators >= DENOMINATOR_FLOOR
    skipped = [label for label, kept in zip(labels, keep) if not kept]
    if skipped:
        logger.info(f"Skipping data with vanishing localized norm: {skipped}")
    if not np.any(keep):
        raise ValueError("every datum has a vanishing localized L^2 norm")

    numerators = _flow_mixed_norms(operator, coefficients[:, keep], numerator_multiplier, T, dt, p, q, rtol)
    kept_labels = [label for label, kept in zip(labels, keep) if kept]
    table = pd.DataFrame({
        "datum": kept_labels,
        "numerator": numerators,
        "denominator": denominators[keep],
    })
    table["ratio"] = table["numerator"] / table["denominator"]
    return StrichartzConstant(value=float(table["ratio"].max()), table=table, skipped=skipped)


def loss_exponent(h_grid, constants, min_decades=1.0):
    """beta = -slope of log C(h) against log h"""
    fit = fit_decay_exponent(zip(h_grid, constants), min_decades)
    return -fit.slope, fit


@dataclass(frozen=True)
class StrichartzReport:
    pair: AdmissiblePair
    mode: str
    h_grid: list
    constants: list
    beta: float
    r_squared: float
    target: float
    ceiling: float
    passed: bool
    table: pd.DataFrame

    def to_dict(self):
        return {
            "experiment": f"strichartz_{self.mode}",
            "pair": [self.pair.p, self.pair.q, self.pair.d],
            "h_grid": list(self.h_grid),
            "constants": list(self.constants),
            "beta": self.beta,
            "target": self.target,
            "pass": self.passed,
        }


def loss_sweep(operator, ell, p, q, h_grid, mode="euclidean", gamma=1.2, kinds=("modes", "packets"),
               T=None, seed=0, workers=1, min_decades=1.0, margin=None, ceiling_margin=0.1):
    """Strichartz constants across h and the fitted loss exponent

    euclidean: T = min(1, extent h / 16) keeps propagation inside the wrap budget; target beta <= margin (0.1).
    compact: fixed T (default 1); target beta <= gamma / p + margin (0.15).
    Every run is also held to the Sobolev ceiling beta <= 2 / p + ceiling_margin.
    """
    if mode not in SWEEP_MODES:
        raise ValueError(f"unknown sweep mode {mode!r}, expected one of {SWEEP_MODES}")
    space = operator.space
    pair = AdmissiblePair(p, q, space.dim)
    h_grid = sorted(float(h) for h in h_grid)
    if len(h_grid) < 3:
        raise ValueError(f"loss sweep needs at least 3 h values, got {len(h_grid)}")

    extent = _sweep_extent(space)
    low, high = 8 * space.spacing, extent / 8
    outside = [h for h in h_grid if not (low * (1 - 1e-9) <= h <= high * (1 + 1e-9))]
    if outside:
        raise ValueError(f"h values {outside} outside [{low:.4g}, {high:.4g}]")

    def measure(h):
        window = sweep_window(space, h, mode, T)
        data = data_family(operator, h, kinds, seed)
        result = strichartz_constant(operator, h, ell, p, q, data, T=window)
        result.table.insert(0, "h", h)
        result.table.insert(1, "T", window)
        return result

    if workers > 1:
        results = Parallel(n_jobs=workers, prefer="threads")(delayed(measure)(h) for h in h_grid)
    else:
        results = [measure(h) for h in h_grid]

    constants = [r.value for r in results]
    beta, fit = loss_exponent(h_grid, constants, min_decades)
    if mode == "euclidean":
        target = 0.1 if margin is None else margin
    else:
        target = gamma / p + (0.15 if margin is None else margin)
    ceiling = 2 / p + ceiling_margin
    if beta > ceiling:
        logger.error(f"Loss exponent {beta:.4f} exceeds the Sobolev ceiling {ceiling:.4f}")
    passed = beta <= target and beta <= ceiling
    logger.info(f"Strichartz {mode} sweep {pair.label}: beta={beta:.4f} (target {target:.4f})")

    return StrichartzReport(pair=pair, mode=mode, h_grid=h_grid, constants=constants, beta=float(beta),
                            r_squared=fit.r_squared, target=float(target), ceiling=float(ceiling),
                            passed=bool(passed), table=pd.concat([r.table for r in results], ignore_index=True))


@dataclass(frozen=True)
class SobolevRatio:
    value: float
    half_value: float
    stable: bool
    table: pd.DataFrame


def sobolev_strichartz_ratio(operator, data, gamma, p, q, T=1.0, dt=None, rtol=0.01, stability=STABILITY):
    """max over data of ||exp(itH) u0||_{L^p L^q} / ||u0||_{W^{gamma/p, 2}}

    Stability compares the value over the first half of the family with the full family.
    """
    AdmissiblePair(p, q, operator.space.dim)
    labels, states = _stack(data)
    coefficients = operator.coefficients(states)
    numerators = _flow_mixed_norms(operator, coefficients, np.ones(operator.size), T, dt, p, q, rtol)

    weights = sobolev_function(gamma / p).values(operator)
    denominators = np.sqrt(np.sum(np.abs(coefficients * weights[:, None]) ** 2, axis=0))
    table = pd.DataFrame({"datum": labels, "numerator": numerators, "denominator": denominators})
    table["ratio"] = table["numerator"] / table["denominator"]

    value = float(table["ratio"].max())
    half_value = float(table["ratio"].iloc[:max(1, (len(table) + 1) // 2)].max())
    stable = value <= (1 + stability) * half_value
    return SobolevRatio(value=value, half_value=half_value, stable=bool(stable), table=table)
