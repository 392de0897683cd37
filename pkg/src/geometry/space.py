import json
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path
from scipy.special import gamma

from validation.metrics import loglog_regression

logger = logging.getLogger(__name__)

GEOMETRIES = ("torus_grid", "interval_grid", "general_graph")
BOUNDARY_CONDITIONS = ("dirichlet", "neumann")
BALL_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class Space:
    """Finite metric measure space: points, weights, declared homogeneous dimension"""
    coords: np.ndarray
    weight: np.ndarray
    dim: int
    geometry: str
    spacing: float
    period: float = None
    length: float = None
    bc: str = None
    shape: tuple = ()
    lattice: np.ndarray = None
    edges: np.ndarray = None
    graph_distances: np.ndarray = field(default=None, repr=False)

    @property
    def point_count(self):
        return len(self.weight)

    @property
    def total_measure(self):
        return float(self.weight.sum())

    @property
    def is_grid(self):
        return self.geometry in ("torus_grid", "interval_grid")

    def domain_volume(self):
        """Volume of the continuum domain the grid discretizes"""
        if self.geometry == "torus_grid":
            return self.period ** self.dim
        if self.geometry == "interval_grid":
            if self.bc == "neumann":
                return self.length
            return self.length - self.spacing
        return self.total_measure

    def lattice_offsets(self, index):
        """Per-axis nonnegative lattice offsets from point `index` to every point"""
        delta = np.abs(self.lattice - self.lattice[index])
        if self.geometry == "torus_grid":
            n = np.asarray(self.shape)
            delta = np.minimum(delta, n - delta)
        return delta

    def displacement(self, index):
        """Signed per-axis displacement from point `index`, wrapped on the torus"""
        if not self.is_grid:
            raise ValueError("signed displacements are only defined on grid geometries")
        delta = self.lattice - self.lattice[index]
        if self.geometry == "torus_grid":
            n = np.asarray(self.shape)
            delta = (delta + n // 2) % n - n // 2
        return delta * self.spacing

    def distances_from(self, index):
        if self.graph_distances is not None:
            return self.graph_distances[index]
        delta = self.lattice_offsets(index)
        return np.sqrt(np.sum(delta.astype(float) ** 2, axis=1)) * self.spacing

    @cached_property
    def distance_matrix(self):
        if self.graph_distances is not None:
            return self.graph_distances
        squared = np.zeros((self.point_count, self.point_count))
        for axis, n in enumerate(self.shape):
            delta = np.abs(self.lattice[:, axis][:, None] - self.lattice[:, axis][None, :])
            if self.geometry == "torus_grid":
                delta = np.minimum(delta, n - delta)
            squared += delta.astype(float) ** 2
        return np.sqrt(squared) * self.spacing

    @cached_property
    def diameter(self):
        if self.geometry == "torus_grid":
            half = np.asarray(self.shape) // 2
            return float(np.sqrt(np.sum(half.astype(float) ** 2)) * self.spacing)
        if self.geometry == "interval_grid":
            return float((self.shape[0] - 1) * self.spacing)
        return float(self.graph_distances.max())


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float

    def dilate(self, factor):
        return Ball(self.center, self.radius * factor)


@dataclass(frozen=True)
class Corona:
    base: Ball
    index: int

    def members(self, space):
        return corona_members(space, self.base, self.index)


def build_torus_grid(d, n_per_axis, period):
    """Uniform periodic grid on [0, period)^d with the geodesic metric"""
    if d not in (1, 2, 3):
        raise ValueError(f"torus dimension must be 1, 2 or 3, got {d}")
    if n_per_axis < 4:
        raise ValueError(f"n_per_axis must be at least 4, got {n_per_axis}")
    if period <= 0:
        raise ValueError(f"period must be positive, got {period}")

    shape = (int(n_per_axis),) * d
    lattice = np.indices(shape).reshape(d, -1).T
    spacing = period / n_per_axis
    weight = np.full(len(lattice), spacing ** d)

    space = Space(
        coords=lattice * spacing, weight=weight, dim=d, geometry="torus_grid",
        spacing=spacing, period=float(period), shape=shape, lattice=lattice,
    )
    logger.debug(f"Built torus grid d={d}, n={n_per_axis}, period={period}")
    return space


def build_interval_grid(n, length, bc):
    """Interior grid on [0, length]: node-centred for Dirichlet, cell-centred for Neumann"""
    bc = bc.lower()
    if bc not in BOUNDARY_CONDITIONS:
        raise ValueError(f"boundary condition must be one of {BOUNDARY_CONDITIONS}, got {bc}")
    if n < 4:
        raise ValueError(f"n must be at least 4, got {n}")
    if length <= 0:
        raise ValueError(f"length must be positive, got {length}")

    lattice = np.arange(n).reshape(-1, 1)
    if bc == "dirichlet":
        spacing = length / (n + 1)
        coords = (lattice + 1) * spacing
    else:
        spacing = length / n
        coords = (lattice + 0.5) * spacing

    return Space(
        coords=coords.astype(float), weight=np.full(n, spacing), dim=1, geometry="interval_grid",
        spacing=spacing, length=float(length), bc=bc, shape=(int(n),), lattice=lattice,
    )


def build_general_graph(coords, weights, edges, dim):
    """Weighted graph with the shortest-path metric; edges are (i, j) or (i, j, length)"""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords.reshape(-1, 1)
    weights = np.asarray(weights, dtype=float)
    n_points = len(weights)

    if len(coords) != n_points:
        raise ValueError(f"{len(coords)} coordinates given for {n_points} weights")
    if np.any(weights <= 0):
        raise ValueError(f"all weights must be positive, minimum is {weights.min()}")

    edge_table = []
    for edge in edges:
        i, j = int(edge[0]), int(edge[1])
        if i == j or not (0 <= i < n_points and 0 <= j < n_points):
            raise ValueError(f"invalid edge ({i}, {j})")
        edge_length = float(edge[2]) if len(edge) > 2 else float(np.linalg.norm(coords[i] - coords[j]))
        if edge_length <= 0:
            raise ValueError(f"edge ({i}, {j}) has nonpositive length {edge_length}")
        edge_table.append((i, j, edge_length))
    edge_table = np.array(edge_table, dtype=float).reshape(-1, 3)

    heads = edge_table[:, 0].astype(int)
    tails = edge_table[:, 1].astype(int)
    adjacency = coo_matrix((edge_table[:, 2], (heads, tails)), shape=(n_points, n_points)).tocsr()
    distances = shortest_path(adjacency, directed=False)
    if not np.all(np.isfinite(distances)):
        raise ValueError("graph is disconnected; the shortest-path metric is undefined")

    logger.info(f"Built general graph with {n_points} points and {len(edge_table)} edges")
    return Space(
        coords=coords, weight=weights, dim=int(dim), geometry="general_graph",
        spacing=float(edge_table[:, 2].min()), shape=(n_points,),
        edges=edge_table, graph_distances=distances,
    )


def with_density(space, density):
    """Reweight the measure by a positive density sampled at the points"""
    density = np.broadcast_to(np.asarray(density, dtype=float), space.weight.shape)
    if np.any(density <= 0):
        raise ValueError(f"density must be positive, minimum is {density.min()}")
    return replace(space, weight=space.weight * density)


def neighbor_pairs(space):
    """Nearest-neighbour edges as (heads, tails, lengths, axes); axis is -1 for graph edges"""
    if space.geometry == "general_graph":
        edges = space.edges
        axes = np.full(len(edges), -1)
        return edges[:, 0].astype(int), edges[:, 1].astype(int), edges[:, 2], axes

    shape = np.asarray(space.shape)
    index = np.arange(space.point_count)
    heads, tails, axes = [], [], []
    for axis in range(space.dim):
        target = space.lattice.copy()
        target[:, axis] += 1
        if space.geometry == "torus_grid":
            target[:, axis] %= shape[axis]
            keep = np.ones(len(index), dtype=bool)
        else:
            keep = target[:, axis] < shape[axis]
        flat = np.ravel_multi_index(target[keep].T, space.shape)
        heads.append(index[keep])
        tails.append(flat)
        axes.append(np.full(keep.sum(), axis))

    heads = np.concatenate(heads)
    return heads, np.concatenate(tails), np.full(len(heads), space.spacing), np.concatenate(axes)


def ball_members(space, ball):
    """Closed-ball membership at grid tolerance"""
    if ball.radius <= 0:
        raise ValueError(f"ball radius must be positive, got {ball.radius}")
    if ball.radius < space.spacing:
        logger.warning(f"Ball radius {ball.radius:.3g} is below the grid spacing {space.spacing:.3g}")
    distances = space.distances_from(ball.center)
    return np.flatnonzero(distances <= ball.radius + BALL_TOLERANCE * space.spacing)


def ball_measure(space, ball):
    return float(space.weight[ball_members(space, ball)].sum())


def corona_members(space, ball, i):
    """Dyadic corona C_i = 2^i B minus 2^(i-1) B, with C_0 = B"""
    if i < 0:
        raise ValueError(f"corona index must be nonnegative, got {i}")
    if i == 0:
        return ball_members(space, ball)
    outer = ball_members(space, ball.dilate(2 ** i))
    inner = ball_members(space, ball.dilate(2 ** (i - 1)))
    return np.setdiff1d(outer, inner, assume_unique=True)


def corona_cover_index(space, ball):
    """Smallest corona index whose dilate covers the space"""
    return max(0, int(np.ceil(np.log2(space.diameter / ball.radius))))


def set_distance(space, source, target):
    """min over member pairs of the metric; zero when the sets intersect"""
    source = np.asarray(source)
    target = np.asarray(target)
    if len(source) == 0 or len(target) == 0:
        raise ValueError("set distance needs two non-empty point sets")
    if np.intersect1d(source, target).size:
        return 0.0
    return float(min(space.distances_from(i)[target].min() for i in source))


def euclidean_ball_volume(d, r):
    return np.pi ** (d / 2) / gamma(d / 2 + 1) * r ** d


def _validate_band(space, radii):
    upper = space.diameter / 4
    lower = space.spacing
    slack = BALL_TOLERANCE * space.spacing
    for r in radii:
        if r < lower - slack or r > upper + slack:
            raise ValueError(f"radius {r} outside the valid band [{lower}, {upper}]")


@dataclass(frozen=True)
class DoublingReport:
    constant: float
    worst_center: int
    worst_radius: float
    dimension_fit: float = None


def check_doubling(space, sample_centers, radii):
    """Worst doubling ratio mu(B(x, 2r)) / mu(B(x, r)) over the samples"""
    radii = [float(r) for r in radii]
    _validate_band(space, radii)

    worst = (0.0, None, None)
    volumes, scales = [], []
    for center in sample_centers:
        for r in radii:
            small = ball_measure(space, Ball(center, r))
            large = ball_measure(space, Ball(center, 2 * r))
            ratio = large / small
            if ratio > worst[0]:
                worst = (ratio, int(center), r)
            scales.append(r)
            volumes.append(small)

    dimension = None
    if len(set(scales)) > 1:
        dimension = loglog_regression(scales, volumes).slope

    return DoublingReport(constant=worst[0], worst_center=worst[1], worst_radius=worst[2],
                          dimension_fit=dimension)


@dataclass(frozen=True)
class AhlforsReport:
    c_low: float
    C_high: float
    ratio: float
    passed: bool


def check_ahlfors(space, sample_centers, radii, bound=None):
    """Two-sided comparison of mu(B(x, r)) with the Euclidean volume of radius r"""
    radii = [float(r) for r in radii]
    _validate_band(space, radii)

    normalized = []
    for center in sample_centers:
        for r in radii:
            normalized.append(ball_measure(space, Ball(center, r)) / euclidean_ball_volume(space.dim, r))

    c_low = float(min(normalized))
    c_high = float(max(normalized))
    ratio = c_high / c_low
    passed = True if bound is None else bool(ratio <= bound)
    if not passed:
        logger.warning(f"Ahlfors ratio {ratio:.4f} exceeds the bound {bound}")
    return AhlforsReport(c_low=c_low, C_high=c_high, ratio=ratio, passed=passed)


def metric_defect(space, n_triples=1000, seed=0):
    """Largest violation of symmetry, positivity or the triangle inequality on random triples"""
    rng = np.random.default_rng(seed)
    triples = rng.integers(0, space.point_count, size=(n_triples, 3))

    worst = 0.0
    for x, y, z in triples:
        dx = space.distances_from(x)
        dy = space.distances_from(y)
        worst = max(worst, abs(dx[y] - dy[x]), dx[z] - dx[y] - dy[z])
        if x == y:
            worst = max(worst, abs(dx[y]))
        elif dx[y] <= 0:
            return float("inf")
    return float(worst)


def space_to_descriptor(space):
    if space.geometry == "torus_grid":
        return {"geometry": "torus_grid", "d": space.dim, "n": space.shape[0], "period": space.period}
    if space.geometry == "interval_grid":
        return {"geometry": "interval_grid", "d": 1, "n": space.shape[0], "length": space.length, "bc": space.bc}
    return {
        "geometry": "general_graph",
        "d": space.dim,
        "coords": space.coords.tolist(),
        "weights": space.weight.tolist(),
        "edges": space.edges.tolist(),
    }


def space_from_descriptor(descriptor):
    geometry = descriptor.get("geometry")
    if geometry == "torus_grid":
        return build_torus_grid(int(descriptor["d"]), int(descriptor["n"]), float(descriptor["period"]))
    if geometry == "interval_grid":
        return build_interval_grid(int(descriptor["n"]), float(descriptor["length"]), descriptor["bc"])
    if geometry == "general_graph":
        return build_general_graph(descriptor["coords"], descriptor["weights"], descriptor["edges"],
                                   int(descriptor["d"]))
    raise ValueError(f"unknown geometry {geometry!r}, expected one of {GEOMETRIES}")


def space_to_json(space):
    return json.dumps(space_to_descriptor(space), sort_keys=True)


def space_from_json(text):
    return space_from_descriptor(json.loads(text))
