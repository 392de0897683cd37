import logging
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score

logger = logging.getLogger(__name__)

CHECK_COLUMNS = ["check", "geometry", "parameters", "measured", "bound", "passed", "applicable", "note"]


@dataclass(frozen=True)
class DecayFit:
    """Power-law fit y ~ exp(intercept) * x**slope"""
    slope: float
    intercept: float
    r_squared: float
    n_samples: int

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CheckRow:
    check: str
    geometry: str
    parameters: str
    measured: float
    bound: float
    passed: bool
    applicable: bool = True
    note: str = ""

    def to_dict(self):
        return {name: getattr(self, name) for name in CHECK_COLUMNS}


def loglog_regression(x, y):
    """Least squares on (log x, log y) without sample-count preconditions"""
    log_x = np.log(np.asarray(x, dtype=float)).reshape(-1, 1)
    log_y = np.log(np.asarray(y, dtype=float))

    model = LinearRegression()
    model.fit(log_x, log_y)
    predicted = model.predict(log_x)

    return DecayFit(
        slope=float(model.coef_[0]),
        intercept=float(model.intercept_),
        r_squared=float(r2_score(log_y, predicted)),
        n_samples=int(len(log_y)),
    )


def fit_decay_exponent(samples, min_decades=1.0):
    """Fit the exponent of a power law from (x, y) pairs with x spanning at least one decade"""
    samples = [(float(x), float(y)) for x, y in samples]
    if len(samples) < 3:
        raise ValueError(f"need at least 3 samples for a decay fit, got {len(samples)}")

    x = np.array([s[0] for s in samples])
    y = np.array([s[1] for s in samples])
    if np.any(x <= 0) or np.any(y <= 0):
        bad = [s for s in samples if s[0] <= 0 or s[1] <= 0]
        raise ValueError(f"decay fit requires strictly positive samples, got {bad[0]}")

    decades = np.log10(x.max() / x.min())
    if decades < min_decades - 1e-9:
        raise ValueError(f"x spans {decades:.3f} decades, need at least {min_decades}")

    fit = loglog_regression(x, y)
    logger.debug(f"Decay fit over {fit.n_samples} samples: slope={fit.slope:.4f}, R2={fit.r_squared:.5f}")
    return fit


def rows_passed(rows):
    """True when every applicable row passed"""
    return all(row.passed for row in rows if row.applicable)
