import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import pandas as pd

from geometry.space import Ball, ball_members, set_distance
from spectral.calculus import SpectralOperator, apply_calculus, psi_function

logger = logging.getLogger(__name__)

MEMBER_CAP = 256


@lru_cache(maxsize=8192)
def cached_members(space, ball):
    """ball_members memoized per (space, ball); pair families are reused across every time sample"""
    members = ball_members(space, ball)
    members.setflags(write=False)
    return members


@dataclass(frozen=True)
class BallPair:
    ball: Ball
    ball_tilde: Ball
    separation: float

    @property
    def radius(self):
        return self.ball.radius


def make_ball_pair(space, center, center_tilde, r):
    ball, ball_tilde = Ball(int(center), r), Ball(int(center_tilde), r)
    separation = set_distance(space, ball_members(space, ball), ball_members(space, ball_tilde))
    return BallPair(ball, ball_tilde, separation)


def build_pair_family(space, r, separations, centers=None, axis=0):
    """Pairs at requested separations: the second ball is shifted along `axis` on the lattice

    L = 0 yields coincident balls; L > 0 places the ball edges L apart along the axis.
    """
    if not space.is_grid:
        raise ValueError("deterministic pair families need a grid geometry")
    centers = [0] if centers is None else list(centers)
    r_cells = int(round(r / space.spacing))
    n = space.shape[axis]

    pairs = []
    for center in centers:
        for L in separations:
            offset = 0 if L == 0 else int(round(L / space.spacing)) + 2 * r_cells
            target = space.lattice[center].copy()
            if space.geometry == "torus_grid":
                target[axis] = (target[axis] + offset) % n
            elif target[axis] + offset >= n:
                logger.warning(f"Separation {L} does not fit in the interval from center {center}; skipped")
                continue
            else:
                target[axis] += offset
            center_tilde = int(np.ravel_multi_index(tuple(target), space.shape))
            pair = make_ball_pair(space, center, center_tilde, r)
            if abs(pair.separation - L) > 0.5 * space.spacing:
                logger.warning(f"Requested separation {L:.4g} realized as {pair.separation:.4g}")
            pairs.append(pair)
    return pairs


def separation_grid(r, L_max, step=None):
    """0, step, 2 step, ..., L_max with step defaulting to r"""
    step = r if step is None else step
    count = int(np.floor(L_max / step + 1e-9))
    return [k * step for k in range(count + 1)]


def localized_norm(T, source, target, space=None, cap=MEMBER_CAP):
    """Operator norm of T from L^2(source, mu) to L^2(target, mu)"""
    source = np.asarray(source)
    target = np.asarray(target)
    if len(source) == 0 or len(target) == 0:
        raise ValueError("localized norm needs non-empty balls")

    if isinstance(T, SpectralOperator):
        return float(np.linalg.norm(T.block(source, target), 2))

    if space is None:
        raise ValueError("a space is needed to localize a general operator")
    if len(source) > cap or len(target) > cap:
        raise ValueError(f"balls with {max(len(source), len(target))} members exceed the cap {cap}")

    columns = []
    for x in source:
        indicator = np.zeros(space.point_count)
        indicator[x] = 1.0
        columns.append(np.asarray(T(indicator))[target])
    matrix = np.column_stack(columns)
    weighted = np.sqrt(space.weight[target])[:, None] * matrix / np.sqrt(space.weight[source])[None, :]
    return float(np.linalg.norm(weighted, 2))


def localize(T, operator, m, r, n=1.0):
    """T composed with psi_{m,n}(r^2 H)"""
    cutoff = psi_function(m, n, r ** 2)
    if isinstance(T, SpectralOperator):
        return T.compose(SpectralOperator(operator, cutoff))
    return lambda v: T(apply_calculus(operator, cutoff, v))


@dataclass(frozen=True)
class HmResult:
    a_star: float
    argmax: int
    table: pd.DataFrame


def hm_constant(T, operator, m, r, pairs, n=1.0):
    """A* = max over pairs of ||T psi_{m,n}(r^2 H)||_{B -> B~} / (mu(B) mu(B~))^(1/2)"""
    if not pairs:
        raise ValueError("hm_constant needs at least one ball pair")
    space = operator.space
    localized = localize(T, operator, m, r, n)

    rows = []
    for index, pair in enumerate(pairs):
        source = cached_members(space, pair.ball)
        target = cached_members(space, pair.ball_tilde)
        measured = localized_norm(localized, source, target, space)
        normalizer = float(np.sqrt(space.weight[source].sum() * space.weight[target].sum()))
        rows.append({"pair": index, "center": pair.ball.center, "center_tilde": pair.ball_tilde.center,
                     "r": r, "L": pair.separation, "measured": measured,
                     "normalizer": normalizer, "ratio": measured / normalizer})

    table = pd.DataFrame(rows)
    argmax = int(table["ratio"].to_numpy().argmax())
    return HmResult(a_star=float(table["ratio"].iloc[argmax]), argmax=argmax, table=table)
