import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from dispersive.localized import hm_constant, localize, localized_norm
from geometry.space import ball_members
from kernels.propagation import transmutation_rule
from spectral.calculus import (
    SpectralFunction,
    SpectralOperator,
    complex_function,
    psi,
    psi_function,
    schrodinger_function,
    wave_cos_function,
)
from validation.metrics import fit_decay_exponent

logger = logging.getLogger(__name__)

N_VALUES = (0.5, 1.0, 2.0, 4.0)


def wrap_budget(space):
    """Largest propagation distance treated as non-compact on a periodic grid"""
    if space.geometry == "torus_grid":
        return space.period / 4
    return space.diameter


def _run_cells(function, cells, workers, description):
    """Evaluate independent cells, returned in submission order"""
    if workers > 1:
        return Parallel(n_jobs=workers, prefer="threads")(delayed(function)(cell) for cell in cells)
    return [function(cell) for cell in tqdm(cells, desc=description, disable=None)]


@dataclass(frozen=True)
class NIndependenceReport:
    table: pd.DataFrame
    slopes: dict
    drift: float
    ratio_min: float
    ratio_max: float
    passed: bool


def check_n_independence(operators, operator, m, r, pairs, n_set, drift_tolerance=0.05):
    """A*_{m,n}(t) for each n; fitted t-exponents must agree and raw ratios stay within [1/10, 10]

    `operators` maps the time t to the propagator T_t.
    """
    unknown = [n for n in n_set if n not in N_VALUES]
    if unknown:
        raise ValueError(f"n values {unknown} not in {N_VALUES}")

    rows = []
    for n in n_set:
        for t, T in operators.items():
            rows.append({"n": n, "t": t, "a_star": hm_constant(T, operator, m, r, pairs, n).a_star})
    table = pd.DataFrame(rows)

    slopes = {}
    if len(operators) >= 3:
        for n, group in table.groupby("n", sort=True):
            slopes[n] = fit_decay_exponent(zip(np.abs(group["t"]), group["a_star"])).slope
    drift = float(max(slopes.values()) - min(slopes.values())) if slopes else 0.0

    reference = table[table["n"] == n_set[0]].set_index("t")["a_star"]
    ratios = table.apply(lambda row: row["a_star"] / reference[row["t"]], axis=1)
    passed = drift <= drift_tolerance and ratios.min() >= 0.1 and ratios.max() <= 10
    return NIndependenceReport(table=table, slopes=slopes, drift=drift, ratio_min=float(ratios.min()),
                               ratio_max=float(ratios.max()), passed=bool(passed))


@dataclass(frozen=True)
class MonotonicityReport:
    table: pd.DataFrame
    constants: list
    passed: bool


def check_m_monotonicity(T, operator, m_list, r, pairs, n=1.0, bound=10.0):
    """C_k = A*_{m_{k+1}} / A*_{m_k} for consecutive orders"""
    if list(m_list) != sorted(m_list):
        raise ValueError(f"m_list must be ascending, got {m_list}")
    a_stars = [hm_constant(T, operator, m, r, pairs, n).a_star for m in m_list]
    constants = [1.0 if a == b else b / a for a, b in zip(a_stars[:-1], a_stars[1:])]
    table = pd.DataFrame({"m": list(m_list), "a_star": a_stars})
    return MonotonicityReport(table=table, constants=constants, passed=all(c <= bound for c in constants))


def regime_of(t, h, epsilon):
    if abs(t) <= h ** 2:
        return "trivial"
    if abs(t) <= h ** (1 + epsilon):
        return "intermediate"
    return "beyond"


@dataclass(frozen=True)
class DecayExperiment:
    fit: object
    table: pd.DataFrame
    tolerance: float
    passed: bool
    note: str


def schrodinger_decay_experiment(operator, h, m_prime, m, t_grid, r, pairs, n=1.0, epsilon=0.2,
                                 tolerance=0.1, workers=1):
    """Fit A*(t) for T_t = exp(itH) psi_{m'}(h^2 H) against |t|^(-d/2)"""
    space = operator.space
    d = space.dim
    if m < int(np.ceil(d / 2)):
        raise ValueError(f"m={m} is below ceil(d/2)={int(np.ceil(d / 2))}")

    upper = min(h, wrap_budget(space))
    valid = [float(t) for t in t_grid if h ** 2 * (1 - 1e-9) <= abs(t) <= upper * (1 + 1e-9)]
    if len(valid) < len(t_grid):
        logger.warning(f"{len(t_grid) - len(valid)} time samples outside [h^2, {upper:.4g}] dropped")
    if len(valid) < 3:
        raise ValueError(f"need at least 3 valid time samples, got {len(valid)}")

    cutoff = psi_function(m_prime, 1.0, h ** 2)

    def measure(t):
        T = SpectralOperator(operator, schrodinger_function(t) * cutoff)
        return hm_constant(T, operator, m, r, pairs, n).a_star

    a_stars = _run_cells(measure, valid, workers, "Schrodinger decay")
    table = pd.DataFrame({
        "t": valid,
        "r": r,
        "a_star": a_stars,
        "normalizer": [abs(t) ** (-d / 2) for t in valid],
        "regime": [regime_of(t, h, epsilon) for t in valid],
    })
    table["ratio"] = table["a_star"] / table["normalizer"]

    fit = fit_decay_exponent(zip(np.abs(table["t"]), table["a_star"]))
    passed = abs(fit.slope + d / 2) <= tolerance
    note = "outside theorem hypotheses (d = 1)" if d == 1 else ""
    logger.info(f"Schrodinger decay slope {fit.slope:.4f} (target {-d / 2}), R2={fit.r_squared:.4f}")
    return DecayExperiment(fit=fit, table=table, tolerance=tolerance, passed=bool(passed), note=note)


def wave_envelope(d, r, s, L):
    """(r / (s + r))^((d - 1) / 2) (1 + |L - s| / r)^(-(d + 1) / 2)"""
    return (r / (s + r)) ** ((d - 1) / 2) * (1 + abs(L - s) / r) ** (-(d + 1) / 2)


@dataclass(frozen=True)
class WaveEnvelopeReport:
    table: pd.DataFrame
    c_env: float
    ridge_ok: bool
    cone_max: float


def wave_envelope_experiment(operator, m0, r, s_grid, pairs, workers=1):
    """Localized norms of cos(s sqrt H) psi_{m0}(r^2 H) against the short-time wave envelope"""
    space = operator.space
    d = space.dim
    budget = wrap_budget(space)
    members = [(ball_members(space, p.ball), ball_members(space, p.ball_tilde)) for p in pairs]

    def measure(s):
        if s + max(p.separation for p in pairs) + 2 * r > budget:
            logger.warning(f"s={s:.4g} with the widest pair exceeds the wrap budget")
        bare = SpectralOperator(operator, wave_cos_function(s))
        localized = localize(bare, operator, m0, r)
        rows = []
        for pair, (source, target) in zip(pairs, members):
            L = pair.separation
            D = float(space.distances_from(pair.ball.center)[pair.ball_tilde.center])
            measured = localized_norm(localized, source, target)
            envelope = wave_envelope(d, r, s, L)
            cone = localized_norm(bare, source, target) if L > s + 2 * r else np.nan
            rows.append({"s": s, "r": r, "L": L, "D": D, "measured": measured, "envelope": envelope,
                         "ratio": measured / envelope, "cone_tail": cone})
        return rows

    cells = _run_cells(measure, list(s_grid), workers, "Wave envelope")
    table = pd.DataFrame([row for rows in cells for row in rows])

    ridge_ok = True
    for s, group in table.groupby("s", sort=True):
        if s == 0:
            continue
        ridge = float(group.loc[group["measured"].idxmax(), "D"])
        if abs(ridge - s) > 2 * r + space.spacing:
            ridge_ok = False
            logger.warning(f"Ridge at center distance {ridge:.4g} for s={s:.4g} is off the cone")

    cone = table["cone_tail"].dropna()
    return WaveEnvelopeReport(table=table, c_env=float(table["ratio"].max()), ridge_ok=ridge_ok,
                              cone_max=float(cone.max()) if len(cone) else 0.0)


def smoothstep_cutoff(s, a):
    """1 on [0, a], 0 beyond 2a, cubic in between"""
    x = np.clip((np.asarray(s, dtype=float) - a) / a, 0.0, 1.0)
    return 1.0 - x * x * (3.0 - 2.0 * x)


def _regime_multipliers(operator, z, t, r, m, kappa):
    """Three transmutation pieces of exp(-zH) psi_m(r^2 H), split by chi and kappa"""
    lams = operator.eigenvalues
    localizer = psi(m, 1.0, r ** 2 * lams)
    active = np.abs(localizer) > 1e-16 * np.abs(localizer).max()
    omegas = np.sqrt(lams[active])

    rule = transmutation_rule(z, float(omegas.max()))
    nodes = np.arange(rule.n_points) * rule.step
    weights = np.exp(-nodes ** 2 / (4 * z)) * rule.step / np.sqrt(np.pi * z)
    weights[0] *= 0.5

    chi = smoothstep_cutoff(nodes, abs(t) / r)
    near = weights * chi
    middle = weights * (1 - chi) * (nodes < kappa)
    far = weights * (1 - chi) * (nodes >= kappa)

    waves = np.cos(np.outer(omegas, nodes))
    pieces = {}
    for name, piece in (("near", near), ("middle", middle), ("far", far)):
        values = np.zeros(len(lams), dtype=complex)
        values[active] = (waves @ piece) * localizer[active]
        pieces[name] = values
    return pieces


def _fixed_values(values, label):
    return SpectralFunction(lambda lam, values=values: values, label)


@dataclass(frozen=True)
class RegimeSplit:
    table: pd.DataFrame
    consistency: float
    far_fraction: float


def three_regime_split(operator, h, t, r, m, pairs, kappa=None):
    """Localized norms of the near, middle and far transmutation ranges of exp(-zH) psi_m(r^2 H)"""
    if t == 0:
        raise ValueError("the regime split needs t != 0")
    space = operator.space
    d = space.dim
    z = complex(h ** 2, -t)
    kappa = wrap_budget(space) if kappa is None else kappa

    pieces = _regime_multipliers(operator, z, t, r, m, kappa)
    exact = complex_function(z) * psi_function(m, 1.0, r ** 2)
    total = sum(pieces.values())
    scale = (r ** 2 / abs(t)) ** (d / 2)

    rows = []
    consistency, far_fraction = 0.0, 0.0
    for index, pair in enumerate(pairs):
        source = ball_members(space, pair.ball)
        target = ball_members(space, pair.ball_tilde)
        reference = SpectralOperator(operator, exact).block(source, target)
        summed = SpectralOperator(operator, _fixed_values(total, "sum")).block(source, target)
        reference_norm = np.linalg.norm(reference, 2)
        if reference_norm > 0:
            consistency = max(consistency, np.linalg.norm(summed - reference, 2) / reference_norm)

        norms = {}
        for name, values in pieces.items():
            norms[name] = localized_norm(SpectralOperator(operator, _fixed_values(values, name)), source, target)
            rows.append({"pair": index, "L": pair.separation, "regime": name, "measured": norms[name],
                         "scale": scale, "ratio": norms[name] / scale})
        if reference_norm > 0:
            far_fraction = max(far_fraction, norms["far"] / reference_norm)

    return RegimeSplit(table=pd.DataFrame(rows), consistency=float(consistency), far_fraction=float(far_fraction))
