import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from dispersive.experiments import (
    check_m_monotonicity,
    check_n_independence,
    schrodinger_decay_experiment,
    three_regime_split,
    wave_envelope_experiment,
)
from dispersive.localized import build_pair_family, separation_grid
from experiments.config_loader import (
    ConfigValidationError,
    config_digest,
    load_config,
    nonnegative_int,
    positive_int,
)
from experiments.report_writer import ReportWriter
from geometry.space import Ball, ball_members, check_ahlfors, check_doubling, space_from_descriptor
from hardy.atoms import (
    atom_l1_audit,
    ball_family,
    binomial_atom,
    bmo_dual_norm,
    bmo_norm,
    build_atom_family,
    make_atom,
    minimal_order,
)
from hardy.pairing import l1_linf_exponent, pairing_decay_experiment, regularized_uniformity, sum_bound_constant
from kernels.heat_bounds import (
    check_davies_gaffney,
    check_due,
    check_maximal_domination,
    default_centers,
    fit_gaussian_ue,
    theta_due_constant,
)
from kernels.propagation import check_finite_speed, dalembert_deviation, transmutation, wave_energy_defect
from spectral.calculus import (
    SpectralOperator,
    almost_orthogonality_constant,
    calculus_operator_norm,
    calculus_symmetry_defect,
    complex_semigroup,
    composition_defect,
    empirical_operator_norm,
    heat_function,
    kernel_projector,
    psi,
    psi_function,
    reproducing_residual,
    schrodinger_function,
    semigroup_difference_residual,
    square_function_norm,
)
from spectral.operator import DENSE_CAP, build_operator, gram_defect, l2_norm
from strichartz.clusters import cluster_norm_fit, rho_threshold
from strichartz.estimates import STABILITY, data_family, loss_sweep, sobolev_strichartz_ratio, sweep_window
from validation.metrics import CheckRow, rows_passed

VERSION = "0.1.0"
WORKERS_ENV = "DISPERSIVE_LAB_WORKERS"


@dataclass
class RunReport:
    kind: str
    digest: str
    seed: int
    rows: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    wall_time: float = 0.0
    version: str = VERSION

    @property
    def passed(self):
        return rows_passed(self.rows)


def _format(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_format(v) for v in value) + "]"
    return str(value)


def describe(**parameters):
    """Stable parameter string for a check row"""
    return ";".join(f"{key}={_format(value)}" for key, value in parameters.items())


def _fit_entry(fit, tolerance, passed, **extra):
    entry = {**fit.to_dict(), "tolerance": tolerance, "pass": bool(passed)}
    entry.update(extra)
    return entry


def gaussian_state(space, sigma, seed=0):
    """Gaussian bump of width sigma at point 0, or seeded noise off the grids"""
    if space.is_grid:
        offset = space.displacement(0)
        return np.exp(-np.sum(offset ** 2, axis=1) / (2 * sigma ** 2))
    return np.random.default_rng(seed).standard_normal(space.point_count)


def axis_centers(space, span, stride, axis=0):
    """Point indices shifted from point 0 along `axis` by multiples of `stride` cells up to `span`"""
    cells = int(round(span / space.spacing))
    origin = space.lattice[0]
    centers = []
    for k in range(0, cells + 1, stride):
        target = origin.copy()
        target[axis] += k
        if space.geometry == "torus_grid":
            target[axis] %= space.shape[axis]
        elif target[axis] >= space.shape[axis]:
            break
        centers.append(int(np.ravel_multi_index(tuple(target), space.shape)))
    return centers


def _env_int(text):
    try:
        return int(text)
    except ValueError:
        raise ConfigValidationError(WORKERS_ENV, f"expected an integer, got {text!r}")


def apply_overrides(config, out=None, workers=None, seed=None):
    """CLI flags over the file, then DISPERSIVE_LAB_WORKERS, then one worker"""
    config = dict(config)
    if out is not None:
        config["output"] = {"dir": out}
    if seed is not None:
        config["seed"] = nonnegative_int("seed", seed)
    if workers is not None:
        config["workers"] = positive_int("workers", workers)
    elif config.get("workers") is None:
        config["workers"] = positive_int(WORKERS_ENV, _env_int(os.environ.get(WORKERS_ENV, "1")))
    return config


class ExperimentRunner:
    """Builds the space and operator of a validated config and dispatches its experiment kind"""

    def __init__(self, config):
        self.config = config
        self.logger = logging.getLogger(__name__)
        self.kind = config["experiment"]["kind"]
        self.params = config["experiment"]["params"]
        self.tolerances = config["tolerances"]
        self.seed = int(config.get("seed", 0))
        self.workers = int(config.get("workers") or 1)
        self.space = None
        self.operator = None
        self.report = None

    @property
    def geometry(self):
        space = self.space
        if space.is_grid:
            return f"{space.geometry}_d{space.dim}_n{space.shape[0]}"
        return f"{space.geometry}_{space.point_count}"

    def _check(self, check, measured, bound, passed, parameters="", applicable=True, note=""):
        row = CheckRow(check=check, geometry=self.geometry, parameters=parameters, measured=float(measured),
                       bound=float(bound), passed=bool(passed), applicable=bool(applicable), note=note)
        self.report.rows.append(row)
        if applicable and not passed:
            self.logger.warning(f"Check {check} failed: measured {measured:.6g} against {bound:.6g} ({parameters})")
        return row

    def run(self):
        start = time.perf_counter()
        self.report = RunReport(kind=self.kind, digest=config_digest(self.config), seed=self.seed)

        self.logger.info("Step 1: Building space and operator")
        self.space = space_from_descriptor(self.config["space"])
        self.operator = build_operator(self.space, self.config["operator"])
        self.logger.info(f"{self.operator}")

        self.logger.info(f"Step 2: Running {self.kind}")
        getattr(self, f"_run_{self.kind}")()

        self.report.wall_time = time.perf_counter() - start
        status = "passed" if self.report.passed else "failed"
        self.logger.info(f"{self.kind} {status}: {len(self.report.rows)} checks in {self.report.wall_time:.1f}s")
        return self.report

    def _run_identity_audits(self):
        p, tol = self.params, self.tolerances
        operator = self.operator
        lams = operator.eigenvalues

        functions = [heat_function(t) for t in p["t_values"]]
        functions += [schrodinger_function(t) for t in p["t_values"]]
        functions += [psi_function(m, n, p["r"] ** 2) for m in p["m_values"] for n in p["n_values"]]
        for function in functions:
            if operator.size > DENSE_CAP:
                self._check("calculus_exactness", np.nan, tol["calculus"], False, function.label,
                            applicable=False, note="above dense cap")
                continue
            sup = function.sup_norm(operator)
            defect = abs(calculus_operator_norm(operator, function) - sup) / max(sup, 1e-300)
            self._check("calculus_exactness", defect, tol["calculus"], defect <= tol["calculus"], function.label)

        for t in p["t_values"]:
            defect = abs(empirical_operator_norm(operator, schrodinger_function(t), p["trials"], self.seed) - 1)
            self._check("schrodinger_unitarity", defect, tol["calculus"], defect <= tol["calculus"], describe(t=t))

        x = np.linspace(0.0, 20.0, 401)
        m2, n2 = p["m_values"][0], p["n_values"][0]
        for m in p["m_values"]:
            for n in p["n_values"]:
                for k in (2, 3):
                    power = psi(m, n, x) ** k
                    defect = np.max(np.abs(psi(k * m, k * n, x) - power)) / np.max(power)
                    self._check("psi_power", defect, tol["identity"], defect <= tol["identity"],
                                describe(m=m, n=n, k=k))

                u, v = 0.5, 2.0
                left = psi(m, n, u * x) * psi(m2, n2, v * x)
                rate = n * u + n2 * v
                right = u ** m * v ** m2 / rate ** (m + m2) * psi(m + m2, 1.0, rate * x)
                defect = np.max(np.abs(left - right)) / np.max(np.abs(left))
                self._check("psi_product", defect, tol["identity"], defect <= tol["identity"],
                            describe(m=m, n=n, m2=m2, n2=n2))

                report = reproducing_residual(lams, m, n, tolerance=tol["reproducing"])
                self._check("reproducing_formula", report.residual, tol["reproducing"],
                            report.residual <= tol["reproducing"], describe(m=m, n=n),
                            note=f"kappa=1/c_mn={report.kappa:.6g};widenings={report.widenings}")

        residual = semigroup_difference_residual(lams, p["r"])
        self._check("semigroup_difference", residual, tol["identity"], residual <= tol["identity"],
                    describe(r=p["r"]))

        positive = lams[lams > 0]
        u_grid = np.logspace(-2, 1, 12) / positive[0] if len(positive) else np.logspace(-2, 1, 12)
        for m in p["m_values"]:
            result = almost_orthogonality_constant(lams, m, u_grid, u_grid)
            self._check("almost_orthogonality", result.constant, result.ceiling,
                        np.isfinite(result.constant) and result.constant <= result.ceiling, describe(m=m))

        rng = np.random.default_rng(self.seed)
        v = rng.standard_normal(operator.size)
        projector = kernel_projector(operator)
        once = projector(v)
        defect = l2_norm(self.space, projector(once) - once) / l2_norm(self.space, v)
        self._check("kernel_projector_idempotent", defect, tol["calculus"], defect <= tol["calculus"])

        n_square = p["n_values"][0]
        square_grid = np.logspace(-4, 0, 60)
        for q in (2, 4):
            square = square_function_norm(operator, 2, n_square, q, v, square_grid)
            spread = max(square.ratio, 1 / square.ratio)
            self._check("square_function", spread, tol["square_function"], spread <= tol["square_function"],
                        describe(m=2, n=n_square, q=q), note=f"ratio {square.ratio:.4g}")

        cutoff = psi_function(p["m_values"][0], p["n_values"][0], p["r"] ** 2)
        for t in p["t_values"]:
            defect = composition_defect(operator, heat_function(t), cutoff, p["trials"], self.seed)
            self._check("composition", defect, tol["calculus"], defect <= tol["calculus"], describe(t=t))
        defect = calculus_symmetry_defect(operator, cutoff, p["trials"], self.seed)
        self._check("calculus_symmetry", defect, tol["calculus"], defect <= tol["calculus"])
        defect = gram_defect(operator)
        self._check("mode_gram", defect, tol["calculus"], defect <= tol["calculus"])

    def _run_heat_bounds(self):
        p, tol = self.params, self.tolerances
        operator, space = self.operator, self.space
        centers = default_centers(space, p["centers"])

        due = check_due(operator, p["t_grid"], centers)
        self.report.tables["due"] = due.table
        self._check("due_constant", due.constant, np.inf, np.isfinite(due.constant))
        if space.geometry == "torus_grid":
            factor = tol["due_factor"]
            for row in due.table.itertuples():
                ratio = row.constant / theta_due_constant(space, row.t)
                self._check("due_theta_ratio", ratio, factor, 1 / factor <= ratio <= factor, describe(t=row.t),
                            applicable=not row.flagged, note="flagged t" if row.flagged else "")

        fit = fit_gaussian_ue(operator, heat_function, p["t_grid"], prefactor_cap=tol["gaussian_cap"],
                              centers=centers)
        self.report.tables["gaussian_fit"] = fit.table
        self._check("gaussian_ue", fit.C, tol["gaussian_cap"], fit.C <= tol["gaussian_cap"], describe(c=fit.c))

        if not space.is_grid:
            return
        radii, r = [], 2 * space.spacing
        while r <= space.diameter / 4 * (1 + 1e-12):
            radii.append(r)
            r *= 2
        d = space.dim
        doubling = check_doubling(space, centers, radii)
        doubling_bound = 2 ** d * (1 + 3 * space.spacing / radii[0]) ** d
        note = "" if doubling.dimension_fit is None else f"volume exponent {doubling.dimension_fit:.4g}"
        self._check("doubling", doubling.constant, doubling_bound, doubling.constant <= doubling_bound,
                    describe(radii=radii), note=note)
        ahlfors = check_ahlfors(space, centers, radii, tol["ahlfors"])
        self._check("ahlfors", ahlfors.ratio, tol["ahlfors"], ahlfors.passed, describe(radii=radii))

        point_mass = np.zeros(space.point_count)
        point_mass[0] = 1.0
        ratio = check_maximal_domination(operator, point_mass, 0, p["t_grid"])
        self._check("maximal_domination", ratio, tol["maximal"], ratio <= tol["maximal"], describe(x0=0))

        radius = p["dg_radius"]
        for pair in build_pair_family(space, radius, p["dg_separations"]):
            source, target = ball_members(space, pair.ball), ball_members(space, pair.ball_tilde)
            for t in p["dg_times"]:
                result = check_davies_gaffney(operator, source, target, t, tol["dg_bound"])
                self._check("davies_gaffney", result.ratio, tol["dg_bound"], result.passed,
                            describe(r=radius, L=pair.separation, t=t), applicable=result.within_budget,
                            note="" if result.within_budget else "beyond wrap budget")

    def _run_finite_speed(self):
        p, tol = self.params, self.tolerances
        operator, space = self.operator, self.space

        for pair in build_pair_family(space, p["radius"], p["separations"]):
            source, target = ball_members(space, pair.ball), ball_members(space, pair.ball_tilde)
            for fraction in p["time_fractions"]:
                t = fraction * pair.separation
                result = check_finite_speed(operator, source, target, t, tol["tail"])
                self._check("finite_speed_tail", result.tail, tol["tail"], result.passed,
                            describe(L=result.distance, t=t), applicable=result.applicable,
                            note="" if result.applicable else "inside light cone margin")

        v = gaussian_state(space, p["dalembert_sigma"], self.seed)
        one_dimensional_torus = space.geometry == "torus_grid" and space.dim == 1
        for t in p["dalembert_times"]:
            t = round(t / space.spacing) * space.spacing
            if one_dimensional_torus:
                deviation = dalembert_deviation(operator, v, t)
                self._check("dalembert", deviation, tol["dalembert"], deviation <= tol["dalembert"], describe(t=t))
            defect = wave_energy_defect(operator, t, v)
            self._check("wave_energy", defect, tol["energy"], defect <= tol["energy"], describe(t=t))

    def _run_transmutation(self):
        p, tol = self.params, self.tolerances
        v = gaussian_state(self.space, p["sigma"], self.seed)
        for re, im in p["z_grid"]:
            z = complex(re, im)
            exact = complex_semigroup(self.operator, z, v)
            approx = transmutation(self.operator, z, v)
            error = l2_norm(self.space, approx - exact) / l2_norm(self.space, exact)
            self._check("transmutation", error, tol["relative"], error <= tol["relative"], describe(re=re, im=im))

        if p["regime_t"] is not None:
            pairs = build_pair_family(self.space, p["regime_r"], p["regime_separations"])
            split = three_regime_split(self.operator, p["regime_h"], p["regime_t"], p["regime_r"], p["regime_m"],
                                       pairs)
            self.report.tables["regime_split"] = split.table
            self._check("regime_consistency", split.consistency, tol["regime_consistency"],
                        split.consistency <= tol["regime_consistency"],
                        describe(h=p["regime_h"], t=p["regime_t"], r=p["regime_r"], m=p["regime_m"]),
                        note=f"far fraction {split.far_fraction:.4g}")

    def _pairs(self, r, separation_max):
        return build_pair_family(self.space, r, separation_grid(r, separation_max))

    def _run_hm_decay(self):
        p, tol = self.params, self.tolerances
        operator = self.operator
        pairs = self._pairs(p["r"], p["separation_max"])

        decay = schrodinger_decay_experiment(operator, p["h"], p["m_prime"], p["m"], p["t_grid"], p["r"], pairs,
                                             epsilon=p["epsilon"], tolerance=tol["slope"], workers=self.workers)
        d = self.space.dim
        self.report.tables["hm_decay"] = decay.table
        self.report.fits["schrodinger_decay"] = _fit_entry(decay.fit, tol["slope"], decay.passed, target=-d / 2)
        self._check("schrodinger_decay_slope", abs(decay.fit.slope + d / 2), tol["slope"], decay.passed,
                    describe(h=p["h"], m=p["m"], m_prime=p["m_prime"], r=p["r"]), note=decay.note)

        if p["n_set"]:
            cutoff = psi_function(p["m_prime"], 1.0, p["h"] ** 2)
            operators = {t: SpectralOperator(operator, schrodinger_function(t) * cutoff) for t in decay.table["t"]}
            report = check_n_independence(operators, operator, p["m"], p["r"], pairs, p["n_set"], tol["n_drift"])
            self.report.tables["n_independence"] = report.table
            self._check("n_independence_drift", report.drift, tol["n_drift"], report.passed,
                        describe(n_set=p["n_set"]), note=f"ratio range [{report.ratio_min:.4g}, {report.ratio_max:.4g}]")

        if p["m_list"]:
            heat = SpectralOperator(operator, heat_function(p["r"] ** 2))
            monotone = check_m_monotonicity(heat, operator, p["m_list"], p["r"], pairs, bound=tol["monotonicity"])
            self.report.tables["m_monotonicity"] = monotone.table
            for m, m_next, constant in zip(p["m_list"][:-1], p["m_list"][1:], monotone.constants):
                self._check("m_monotonicity", constant, tol["monotonicity"], constant <= tol["monotonicity"],
                            describe(m=m, m_next=m_next, t=p["r"] ** 2), note="heat semigroup at t = r^2")

    def _run_wave_envelope(self):
        p, tol = self.params, self.tolerances
        pairs = self._pairs(p["r"], p["separation_max"])
        report = wave_envelope_experiment(self.operator, p["m0"], p["r"], p["s_grid"], pairs, self.workers)
        self.report.tables["wave_envelope"] = report.table

        parameters = describe(m0=p["m0"], r=p["r"])
        self._check("wave_envelope_constant", report.c_env, tol["c_env"],
                    np.isfinite(report.c_env) and report.c_env <= tol["c_env"], parameters)
        self._check("wave_ridge", float(report.ridge_ok), 1.0, report.ridge_ok, parameters,
                    note="|D - s| <= 2r + spacing")
        self._check("wave_cone", report.cone_max, tol["cone"], report.cone_max <= tol["cone"], parameters)

    def _run_hardy_pairing(self):
        p, tol = self.params, self.tolerances
        operator, space = self.operator, self.space
        M = p["M"] or minimal_order(space.dim)

        atoms = build_atom_family(operator, p["atom_radii"], p["shapes"], p["center_stride"], M, self.seed)
        audit = atom_l1_audit(operator, atoms, tol["atom_l1"])
        self.report.tables["atom_l1"] = audit.table
        self._check("atom_l1", audit.max_l1, tol["atom_l1"], audit.passed, describe(M=M, atoms=len(atoms)),
                    note="measured sup (lower bound)")
        expanded, bound = binomial_atom(operator, atoms[0])
        l1 = audit.table["l1"].iloc[0]
        self._check("atom_binomial_bound", l1, bound, l1 <= bound * (1 + 1e-12), describe(M=M))

        balls = ball_family(space, p["bmo_radii"], p["center_stride"])
        if operator.kernel_dimension > 0:
            value = bmo_norm(operator, operator.modes[:, 0], balls, M).norm
            self._check("bmo_kernel_zero", value, tol["bmo_zero"], value <= tol["bmo_zero"], describe(M=M))

        rng = np.random.default_rng(self.seed)
        factor = tol["duality_factor"]
        for trial in range(5):
            v = rng.standard_normal(space.point_count)
            duality = bmo_dual_norm(operator, v, balls, M, p["shapes"], seed=self.seed + trial)
            ratio = duality.dual_norm / duality.ball_norm
            self._check("bmo_duality", ratio, factor, 1 / factor <= ratio <= factor, describe(trial=trial),
                        note=f"shape-only ratio {duality.shape_norm / duality.ball_norm:.4g}")

        atoms_a = [make_atom(operator, Ball(0, p["pair_radius"]), M, "indicator")]
        atoms_b = [make_atom(operator, Ball(c, p["pair_radius"]), M, "indicator")
                   for c in axis_centers(space, p["pair_span"], p["pair_stride"])]
        decay = pairing_decay_experiment(operator, p["h"], p["m_prime"], p["t_grid"], atoms_a, atoms_b,
                                         tol["pairing_slope"], self.workers)
        self.report.tables["pairing_decay"] = decay.table
        self.report.fits["pairing_decay"] = _fit_entry(decay.fit, tol["pairing_slope"], decay.passed,
                                                       target=-space.dim / 2)
        self._check("pairing_slope", abs(decay.fit.slope + space.dim / 2), tol["pairing_slope"], decay.passed,
                    describe(h=p["h"], m_prime=p["m_prime"]), note="measured sup (lower bound)")

        t_mid = sorted(p["t_grid"])[len(p["t_grid"]) // 2]
        h_reg = p["regularization_h"] or p["h"]
        if h_reg == p["h"]:
            regular_a, regular_b = atoms_a, atoms_b
        else:
            regular_a = [make_atom(operator, Ball(0, h_reg), M, "indicator")]
            regular_b = [make_atom(operator, Ball(c, h_reg), M, "indicator")
                         for c in axis_centers(space, p["pair_span"], p["pair_stride"])]
        T = SpectralOperator(operator, schrodinger_function(t_mid) * psi_function(p["m_prime"], 1.0, h_reg ** 2))
        uniformity = regularized_uniformity(operator, T, regular_a, regular_b, p["s_grid"],
                                            tol["regularized_factor"])
        self.report.tables["regularized_pairing"] = uniformity.table
        self._check("regularized_uniformity", uniformity.spread, tol["regularized_factor"], uniformity.passed,
                    describe(t=t_mid, h=h_reg), note=f"unregularized sup {uniformity.base:.4g}")

        s_grid = sorted(p["l1_linf_s_grid"])
        T = SpectralOperator(operator, schrodinger_function(s_grid[0]))
        exponent = l1_linf_exponent(operator, T, s_grid, tol["l1_linf_slope"])
        self.report.tables["l1_linf"] = exponent.table
        self.report.fits["l1_linf"] = _fit_entry(exponent.fit, tol["l1_linf_slope"], exponent.passed,
                                                 target=-space.dim / 2)
        self._check("l1_linf_exponent", abs(exponent.fit.slope + space.dim / 2), tol["l1_linf_slope"],
                    exponent.passed, describe(t=s_grid[0]),
                    applicable=bool(exponent.table["within_budget"].all()))

    def _run_strichartz_sweep(self):
        p, tol = self.params, self.tolerances
        report = loss_sweep(self.operator, p["ell"], p["p"], p["q"], p["h_grid"], p["mode"], p["gamma"],
                            p["kinds"], p["T"], self.seed, self.workers, p["min_decades"],
                            margin=tol["loss_margin"], ceiling_margin=tol["ceiling_margin"])
        self.report.tables["strichartz"] = report.table
        fit_entry = {"slope": -report.beta, "r_squared": report.r_squared, "n_samples": len(report.h_grid),
                     "tolerance": tol["loss_margin"], "pass": report.passed}
        self.report.fits["loss_exponent"] = {**report.to_dict(), **fit_entry}

        parameters = describe(p=p["p"], q=p["q"], ell=p["ell"], mode=p["mode"])
        self._check("strichartz_loss", report.beta, report.target, report.beta <= report.target, parameters)
        self._check("sobolev_ceiling", report.beta, report.ceiling, report.beta <= report.ceiling, parameters)

        h = report.h_grid[-1]
        window = sweep_window(self.space, h, p["mode"], p["T"])
        data = data_family(self.operator, h, ("random",), self.seed)
        ratio = sobolev_strichartz_ratio(self.operator, data, p["gamma"], p["p"], p["q"], T=window, dt=h ** 2 / 64)
        self.report.tables["sobolev_strichartz"] = ratio.table
        parameters = describe(p=p["p"], q=p["q"], gamma=p["gamma"], h=h, T=window)
        self._check("sobolev_strichartz", ratio.value, np.inf, bool(np.isfinite(ratio.value)), parameters)
        self._check("sobolev_strichartz_stable", ratio.value / ratio.half_value, 1 + STABILITY, ratio.stable,
                    parameters, note="full family against its first half")

    def _run_cluster_fit(self):
        p, tol = self.params, self.tolerances
        fit = cluster_norm_fit(self.operator, p["q"], p["lam_grid"], tol["slope"], p["min_decades"])
        self.report.tables["cluster_norms"] = fit.table
        self.report.fits["cluster_exponent"] = _fit_entry(fit.fit, tol["slope"], fit.passed, target=fit.predicted)
        self._check("cluster_slope", abs(fit.fit.slope - fit.predicted), tol["slope"], fit.passed,
                    describe(q=p["q"]), note=f"predicted {fit.predicted:.4g}")

        threshold = rho_threshold(p["lam_grid"])
        self._check("rho_window", np.nan if threshold is None else threshold, min(p["lam_grid"]),
                    threshold is not None, note="smallest validated level")

        for N in p["sum_bound_N"]:
            constant = sum_bound_constant(p["sum_bound_d"], N)
            self._check("dyadic_sum_bound", constant, tol["sum_bound"], constant <= tol["sum_bound"],
                        describe(d=p["sum_bound_d"], N=N))


def run(config_path, out=None, workers=None, seed=None):
    """Load, run and persist one experiment; returns the RunReport"""
    config = apply_overrides(load_config(config_path), out, workers, seed)
    report = ExperimentRunner(config).run()
    ReportWriter(config).save(report)
    return report
