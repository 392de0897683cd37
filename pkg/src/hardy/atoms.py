import logging
from dataclasses import dataclass
from math import comb

import numpy as np
import pandas as pd

from geometry.space import Ball, ball_members
from spectral.calculus import SpectralFunction, apply_calculus, heat_function
from strichartz.norms import lq_norm

logger = logging.getLogger(__name__)

SHAPES = ("indicator", "bump", "oscillating")


def minimal_order(d):
    """Smallest admissible M: max(3, ceil(3/4 + 3d/8))"""
    return max(3, int(np.ceil(0.75 + 3 * d / 8)))


def bq_function(r, M):
    """(1 - exp(-r^2 H))^M"""
    return SpectralFunction(lambda lam: (1.0 - np.exp(-r ** 2 * lam)) ** M, f"B_Q(r={r},M={M})")


@dataclass(frozen=True)
class Atom:
    ball: Ball
    order: int
    shape: str
    members: np.ndarray
    pre_function: np.ndarray
    realized: np.ndarray


def atom_shape(space, ball, members, shape, rng=None):
    """Unnormalized profile of the given shape on the ball members"""
    distances = space.distances_from(ball.center)[members]
    if shape == "indicator":
        return np.ones(len(members))
    bump = 1.0 - (distances / (ball.radius + space.spacing)) ** 2
    if shape == "bump":
        return bump
    if shape == "oscillating":
        rng = rng if rng is not None else np.random.default_rng(0)
        phase = rng.uniform(0, 2 * np.pi)
        return bump * np.cos(2 * np.pi * distances / ball.radius + phase)
    raise ValueError(f"unknown atom shape {shape!r}, expected one of {SHAPES}")


def realize_atom(operator, ball, M, pre_function):
    return apply_calculus(operator, bq_function(ball.radius, M), pre_function)


def make_atom(operator, ball, M=None, shape="indicator", seed=None, pre_function=None):
    """Atom (1 - exp(-r^2 H))^M f with f supported in the ball and ||f||_{L^2} = mu(Q)^(-1/2)"""
    space = operator.space
    minimum = minimal_order(space.dim)
    M = minimum if M is None else int(M)
    if M < minimum:
        raise ValueError(f"atom order M={M} is below the admissible minimum {minimum}")

    members = ball_members(space, ball)
    volume = float(space.weight[members].sum())
    bound = volume ** -0.5

    if pre_function is not None:
        pre_function = np.asarray(pre_function, dtype=float)
        outside = np.setdiff1d(np.flatnonzero(pre_function), members)
        if outside.size:
            raise ValueError(f"pre_function is supported outside the ball at {outside.size} points")
        norm = float(np.sqrt(np.sum(space.weight[members] * pre_function[members] ** 2)))
        if norm > bound * (1 + 1e-12):
            raise ValueError(f"pre_function L^2 norm {norm:.6g} exceeds mu(Q)^(-1/2) = {bound:.6g}")
        shape = "explicit"
    else:
        profile = atom_shape(space, ball, members, shape, np.random.default_rng(seed))
        norm = float(np.sqrt(np.sum(space.weight[members] * profile ** 2)))
        if norm == 0:
            raise ValueError(f"{shape} profile vanishes on the ball")
        pre_function = np.zeros(space.point_count)
        pre_function[members] = profile * bound / norm

    realized = realize_atom(operator, ball, M, pre_function)
    return Atom(ball=ball, order=M, shape=shape, members=members, pre_function=pre_function, realized=realized)


def binomial_atom(operator, atom):
    """Binomial expansion sum_k C(M, k) (-1)^k exp(-k r^2 H) f and the L^1 bound it implies"""
    space = operator.space
    r2 = atom.ball.radius ** 2
    expanded = np.zeros(space.point_count)
    l1_bound = 0.0
    for k in range(atom.order + 1):
        term = apply_calculus(operator, heat_function(k * r2), atom.pre_function)
        expanded = expanded + (-1) ** k * comb(atom.order, k) * term
        l1_bound += comb(atom.order, k) * float(lq_norm(space, term, 1))
    return expanded, l1_bound


def build_atom_family(operator, radii, shapes=SHAPES, center_stride=1, M=None, seed=0):
    """Deterministic atoms: shapes x radii x lattice centers every `center_stride` points"""
    rng = np.random.default_rng(seed)
    atoms = []
    for r in radii:
        for shape in shapes:
            for center in range(0, operator.size, center_stride):
                atom_seed = int(rng.integers(0, 2 ** 32))
                atoms.append(make_atom(operator, Ball(center, r), M, shape, seed=atom_seed))
    return atoms


@dataclass(frozen=True)
class AtomAudit:
    max_l1: float
    table: pd.DataFrame
    passed: bool


def atom_l1_audit(operator, atoms, bound=5.0):
    """max ||a||_{L^1(mu)} over the sample; a measured lower bound of the supremum"""
    if len(atoms) < 50:
        logger.warning(f"Atom L^1 audit over only {len(atoms)} atoms")
    space = operator.space
    table = pd.DataFrame([
        {"center": a.ball.center, "r": a.ball.radius, "shape": a.shape, "M": a.order,
         "l1": float(lq_norm(space, a.realized, 1))}
        for a in atoms
    ])
    max_l1 = float(table["l1"].max())
    return AtomAudit(max_l1=max_l1, table=table, passed=bool(max_l1 <= bound))


def ball_family(space, radii, center_stride=1):
    return [Ball(c, r) for r in radii for c in range(0, space.point_count, center_stride)]


@dataclass(frozen=True)
class BmoResult:
    norm: float
    argmax: Ball
    table: pd.DataFrame


def _ball_oscillation(space, projected, members):
    volume = float(space.weight[members].sum())
    return float(np.sqrt(np.sum(space.weight[members] * np.abs(projected[members]) ** 2) / volume))


def bmo_norm(operator, v, balls, M):
    """sup over balls Q of (mu(Q)^(-1) int_Q |B_Q v|^2 dmu)^(1/2)"""
    space = operator.space
    projected = {}
    rows = []
    for ball in balls:
        if ball.radius not in projected:
            projected[ball.radius] = apply_calculus(operator, bq_function(ball.radius, M), v)
        members = ball_members(space, ball)
        rows.append({"center": ball.center, "r": ball.radius,
                     "value": _ball_oscillation(space, projected[ball.radius], members)})

    table = pd.DataFrame(rows)
    best = int(table["value"].to_numpy().argmax())
    return BmoResult(norm=float(table["value"].iloc[best]), argmax=balls[best], table=table)


@dataclass(frozen=True)
class BmoDuality:
    dual_norm: float
    shape_norm: float
    ball_norm: float


def bmo_dual_norm(operator, v, balls, M, shapes=SHAPES, seed=0):
    """sup |<v, a>_mu| over shaped atoms and, per ball, the extremal atom built from B_Q v"""
    space = operator.space
    rng = np.random.default_rng(seed)
    ball_norm = bmo_norm(operator, v, balls, M).norm

    shape_norm, extremal_norm = 0.0, 0.0
    projected = {}
    for ball in balls:
        for shape in shapes:
            atom = make_atom(operator, ball, M, shape, seed=int(rng.integers(0, 2 ** 32)))
            shape_norm = max(shape_norm, abs(np.sum(space.weight * v * np.conj(atom.realized))))

        if ball.radius not in projected:
            projected[ball.radius] = apply_calculus(operator, bq_function(ball.radius, M), v)
        members = ball_members(space, ball)
        local = np.zeros(space.point_count, dtype=projected[ball.radius].dtype)
        local[members] = projected[ball.radius][members]
        local_norm = float(np.sqrt(np.sum(space.weight * np.abs(local) ** 2)))
        if local_norm == 0:
            continue
        pre_function = local * space.weight[members].sum() ** -0.5 / local_norm
        realized = realize_atom(operator, ball, M, pre_function)
        extremal_norm = max(extremal_norm, abs(np.sum(space.weight * v * np.conj(realized))))

    return BmoDuality(dual_norm=float(max(shape_norm, extremal_norm)), shape_norm=float(shape_norm),
                      ball_norm=ball_norm)
