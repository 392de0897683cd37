import hashlib
import json
import logging
import math

import yaml

from dispersive.experiments import N_VALUES
from geometry.space import BOUNDARY_CONDITIONS, GEOMETRIES
from spectral.operator import BUILDERS
from strichartz.norms import is_admissible

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
DEFAULT_LOGGING = {"level": "INFO", "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s"}


class ConfigError(Exception):
    """Base class for configuration problems"""


class ConfigParseError(ConfigError):
    """The file is not readable YAML mapping"""


class ConfigValidationError(ConfigError):
    """A field is missing, unknown or out of range"""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


def _number(field, value, low=None, high=None, strict_low=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigValidationError(field, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigValidationError(field, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigValidationError(field, f"expected a finite number, got {value!r}")
    if low is not None and (value <= low if strict_low else value < low):
        raise ConfigValidationError(field, f"must be {'>' if strict_low else '>='} {low}, got {value}")
    if high is not None and value > high:
        raise ConfigValidationError(field, f"must be <= {high}, got {value}")
    return int(value) if integer else float(value)


def positive(field, value):
    return _number(field, value, 0, strict_low=True)


def nonnegative(field, value):
    return _number(field, value, 0)


def real(field, value):
    return _number(field, value)


def positive_int(field, value):
    return _number(field, value, 1, integer=True)


def nonnegative_int(field, value):
    return _number(field, value, 0, integer=True)


def exponent(field, value):
    """Lebesgue exponent >= 1, 'inf' allowed"""
    if value in ("inf", ".inf", "infinity") or (isinstance(value, float) and math.isinf(value) and value > 0):
        return math.inf
    return _number(field, value, 1)


def sequence_of(item, min_length=1):
    def validate(field, value):
        if not isinstance(value, list):
            raise ConfigValidationError(field, f"expected a list, got {value!r}")
        if len(value) < min_length:
            raise ConfigValidationError(field, f"needs at least {min_length} entries, got {len(value)}")
        return [item(f"{field}[{i}]", v) for i, v in enumerate(value)]
    return validate


def choice(*options):
    def validate(field, value):
        if value not in options:
            raise ConfigValidationError(field, f"expected one of {list(options)}, got {value!r}")
        return value
    return validate


def complex_pair(field, value):
    values = sequence_of(real, 2)(field, value)
    if len(values) != 2:
        raise ConfigValidationError(field, f"expected [re, im], got {value!r}")
    if values[0] <= 0:
        raise ConfigValidationError(field, f"Re z must be positive, got {values[0]}")
    return values


REQUIRED = object()

# name -> (validator, default); REQUIRED marks mandatory parameters
KIND_PARAMS = {
    "identity_audits": {
        "m_values": (sequence_of(positive_int), REQUIRED),
        "n_values": (sequence_of(positive), REQUIRED),
        "t_values": (sequence_of(nonnegative), REQUIRED),
        "r": (positive, REQUIRED),
        "trials": (positive_int, 10),
    },
    "heat_bounds": {
        "t_grid": (sequence_of(positive), REQUIRED),
        "dg_radius": (positive, REQUIRED),
        "dg_separations": (sequence_of(nonnegative), REQUIRED),
        "dg_times": (sequence_of(positive), REQUIRED),
        "centers": (positive_int, 16),
    },
    "finite_speed": {
        "radius": (positive, REQUIRED),
        "separations": (sequence_of(positive), REQUIRED),
        "time_fractions": (sequence_of(positive), REQUIRED),
        "dalembert_times": (sequence_of(positive), REQUIRED),
        "dalembert_sigma": (positive, REQUIRED),
    },
    "transmutation": {
        "z_grid": (sequence_of(complex_pair), REQUIRED),
        "sigma": (positive, REQUIRED),
        "regime_t": (positive, None),
        "regime_h": (positive, 0.2),
        "regime_r": (positive, 0.3),
        "regime_m": (positive_int, 2),
        "regime_separations": (sequence_of(nonnegative), [0.0, 0.3, 0.6]),
    },
    "hm_decay": {
        "h": (positive, REQUIRED),
        "m": (positive_int, REQUIRED),
        "m_prime": (positive_int, REQUIRED),
        "r": (positive, REQUIRED),
        "t_grid": (sequence_of(positive, 3), REQUIRED),
        "separation_max": (nonnegative, REQUIRED),
        "n_set": (sequence_of(positive), None),
        "m_list": (sequence_of(positive_int, 2), None),
        "epsilon": (positive, 0.2),
    },
    "wave_envelope": {
        "m0": (positive_int, REQUIRED),
        "r": (positive, REQUIRED),
        "s_grid": (sequence_of(nonnegative), REQUIRED),
        "separation_max": (nonnegative, REQUIRED),
    },
    "hardy_pairing": {
        "atom_radii": (sequence_of(positive), REQUIRED),
        "shapes": (sequence_of(choice("indicator", "bump", "oscillating")), ["indicator", "bump", "oscillating"]),
        "center_stride": (positive_int, REQUIRED),
        "M": (positive_int, None),
        "h": (positive, REQUIRED),
        "m_prime": (positive_int, REQUIRED),
        "t_grid": (sequence_of(positive, 3), REQUIRED),
        "pair_radius": (positive, REQUIRED),
        "pair_span": (positive, REQUIRED),
        "pair_stride": (positive_int, REQUIRED),
        "s_grid": (sequence_of(positive), [1e-4, 1e-3, 1e-2]),
        "regularization_h": (positive, None),
        "l1_linf_s_grid": (sequence_of(positive, 3), REQUIRED),
        "bmo_radii": (sequence_of(positive), REQUIRED),
    },
    "strichartz_sweep": {
        "ell": (positive_int, REQUIRED),
        "p": (exponent, REQUIRED),
        "q": (exponent, REQUIRED),
        "h_grid": (sequence_of(positive, 3), REQUIRED),
        "mode": (choice("euclidean", "compact"), REQUIRED),
        "gamma": (positive, 1.2),
        "kinds": (sequence_of(choice("modes", "packets", "random")), ["modes", "packets"]),
        "T": (positive, None),
        "min_decades": (positive, 1.0),
    },
    "cluster_fit": {
        "q": (exponent, REQUIRED),
        "lam_grid": (sequence_of(nonnegative, 3), REQUIRED),
        "min_decades": (positive, 1.0),
        "sum_bound_d": (nonnegative, REQUIRED),
        "sum_bound_N": (sequence_of(positive_int), [1, 2, 3]),
    },
}

KIND_TOLERANCES = {
    "identity_audits": ("calculus", "identity", "reproducing", "square_function"),
    "heat_bounds": ("due_factor", "dg_bound", "gaussian_cap", "ahlfors", "maximal"),
    "finite_speed": ("tail", "dalembert", "energy"),
    "transmutation": ("relative",),
    "hm_decay": ("slope", "n_drift"),
    "wave_envelope": ("c_env", "cone"),
    "hardy_pairing": ("atom_l1", "bmo_zero", "duality_factor", "pairing_slope", "regularized_factor",
                      "l1_linf_slope"),
    "strichartz_sweep": ("loss_margin", "ceiling_margin"),
    "cluster_fit": ("slope", "sum_bound"),
}

# tolerance -> parameter that enables it; required only when the parameter is set
OPTIONAL_TOLERANCES = {
    "hm_decay": {"monotonicity": "m_list"},
    "transmutation": {"regime_consistency": "regime_t"},
}

KINDS = tuple(KIND_PARAMS)
TOP_LEVEL = ("experiment", "space", "operator", "tolerances", "output", "seed", "workers", "logging")
SPACE_KEYS = {
    "torus_grid": ("geometry", "d", "n", "period"),
    "interval_grid": ("geometry", "d", "n", "length", "bc"),
    "general_graph": ("geometry", "d", "coords", "weights", "edges"),
}
OPERATOR_KEYS = ("builder", "clamp_tol", "dense_cap", "coefficient", "density")


def _mapping(field, value):
    if not isinstance(value, dict):
        raise ConfigValidationError(field, f"expected a mapping, got {type(value).__name__}")
    return value


def _reject_unknown(field, mapping, allowed):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigValidationError(field, f"unknown keys {unknown}")


def _validate_space(space):
    _mapping("space", space)
    geometry = space.get("geometry")
    if geometry not in GEOMETRIES:
        raise ConfigValidationError("space.geometry", f"expected one of {list(GEOMETRIES)}, got {geometry!r}")
    _reject_unknown("space", space, SPACE_KEYS[geometry])

    validated = {"geometry": geometry}
    if geometry == "torus_grid":
        validated["d"] = _number("space.d", space.get("d"), 1, 3, integer=True)
        validated["n"] = _number("space.n", space.get("n"), 4, integer=True)
        validated["period"] = positive("space.period", space.get("period"))
    elif geometry == "interval_grid":
        validated["d"] = _number("space.d", space.get("d", 1), 1, 1, integer=True)
        validated["n"] = _number("space.n", space.get("n"), 4, integer=True)
        validated["length"] = positive("space.length", space.get("length"))
        validated["bc"] = choice(*BOUNDARY_CONDITIONS)("space.bc", str(space.get("bc")).lower())
    else:
        validated["d"] = positive_int("space.d", space.get("d"))
        for key in ("coords", "weights", "edges"):
            if not isinstance(space.get(key), list):
                raise ConfigValidationError(f"space.{key}", "expected a list")
            validated[key] = space[key]
    return validated


def _validate_operator(operator):
    operator = _mapping("operator", operator or {})
    _reject_unknown("operator", operator, OPERATOR_KEYS)
    validated = dict(operator)
    if "builder" in operator:
        validated["builder"] = choice(*BUILDERS)("operator.builder", operator["builder"])
    if "clamp_tol" in operator:
        validated["clamp_tol"] = positive("operator.clamp_tol", operator["clamp_tol"])
    if "dense_cap" in operator:
        validated["dense_cap"] = positive_int("operator.dense_cap", operator["dense_cap"])
    return validated


def _validate_experiment(experiment):
    _mapping("experiment", experiment)
    _reject_unknown("experiment", experiment, ("kind", "params"))
    if "kind" not in experiment:
        raise ConfigValidationError("experiment.kind", "missing")
    kind = choice(*KINDS)("experiment.kind", experiment["kind"])

    params = _mapping("experiment.params", experiment.get("params") or {})
    schema = KIND_PARAMS[kind]
    _reject_unknown("experiment.params", params, schema)
    validated = {}
    for name, (validator, default) in schema.items():
        field = f"experiment.params.{name}"
        if name in params:
            validated[name] = validator(field, params[name])
        elif default is REQUIRED:
            raise ConfigValidationError(field, "missing")
        else:
            validated[name] = default
    return {"kind": kind, "params": validated}


def _validate_tolerances(kind, tolerances, params):
    tolerances = _mapping("tolerances", tolerances)
    optional = OPTIONAL_TOLERANCES.get(kind, {})
    names = KIND_TOLERANCES[kind]
    _reject_unknown("tolerances", tolerances, names + tuple(optional))
    required = list(names) + [name for name, param in optional.items() if params.get(param) is not None]
    validated = {}
    for name in required:
        if name not in tolerances:
            raise ConfigValidationError(f"tolerances.{name}", "missing (tolerances have no defaults)")
        validated[name] = positive(f"tolerances.{name}", tolerances[name])
    return validated


def validate_config(config):
    """Strict validation; returns a normalized copy"""
    config = _mapping("config", config)
    _reject_unknown("config", config, TOP_LEVEL)
    for section in ("experiment", "space", "tolerances", "output"):
        if section not in config:
            raise ConfigValidationError(section, "missing")

    experiment = _validate_experiment(config["experiment"])
    output = _mapping("output", config["output"])
    _reject_unknown("output", output, ("dir",))
    if not isinstance(output.get("dir"), str) or not output["dir"]:
        raise ConfigValidationError("output.dir", "expected a non-empty path")

    logging_section = _mapping("logging", config.get("logging") or {})
    _reject_unknown("logging", logging_section, ("level", "format"))
    logging_section = {**DEFAULT_LOGGING, **logging_section}
    choice(*LOG_LEVELS)("logging.level", logging_section["level"])

    validated = {
        "experiment": experiment,
        "space": _validate_space(config["space"]),
        "operator": _validate_operator(config.get("operator")),
        "tolerances": _validate_tolerances(experiment["kind"], config["tolerances"], experiment["params"]),
        "output": {"dir": output["dir"]},
        "seed": nonnegative_int("seed", config.get("seed", 0)),
        "workers": positive_int("workers", config["workers"]) if config.get("workers") is not None else None,
        "logging": logging_section,
    }
    _cross_validate(validated)
    return validated


def _cross_validate(config):
    kind = config["experiment"]["kind"]
    params = config["experiment"]["params"]
    d = config["space"]["d"]
    if kind == "strichartz_sweep":
        if math.isinf(params["q"]):
            raise ConfigValidationError("experiment.params.q", "Strichartz runs need q != inf")
        if not is_admissible(params["p"], params["q"], d):
            raise ConfigValidationError("experiment.params", f"(p, q) = ({params['p']}, {params['q']}) "
                                                             f"is not admissible in dimension {d}")
    if kind in ("hm_decay", "hardy_pairing") and len(set(params["t_grid"])) < 3:
        raise ConfigValidationError("experiment.params.t_grid", "needs at least 3 distinct times")
    if kind == "hm_decay" and params["n_set"]:
        unknown = [n for n in params["n_set"] if n not in N_VALUES]
        if unknown:
            raise ConfigValidationError("experiment.params.n_set", f"{unknown} not in {list(N_VALUES)}")
    if kind == "hm_decay" and params["m_list"] and params["m_list"] != sorted(params["m_list"]):
        raise ConfigValidationError("experiment.params.m_list", f"must be ascending, got {params['m_list']}")


def load_config(path):
    """Read and validate a YAML experiment file"""
    try:
        with open(path, "r") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigParseError(f"{path}: {e}") from e
    except OSError as e:
        raise ConfigParseError(f"{path}: {e.strerror}") from e
    if not isinstance(raw, dict):
        raise ConfigParseError(f"{path}: expected a mapping at the top level")

    config = validate_config(raw)
    logger.info(f"Loaded {config['experiment']['kind']} config from {path}")
    return config


def _canonical(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, dict):
        return {k: _canonical(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_canonical(v) for v in value]
    return value


def config_digest(config):
    """SHA-256 of the canonical JSON rendering; output, worker and logging settings are left out"""
    scientific = {k: v for k, v in config.items() if k not in ("output", "workers", "logging")}
    text = json.dumps(_canonical(scientific), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
