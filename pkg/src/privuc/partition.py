"""Data-independent partitions: cube grids and Voronoi cells of packings.

Two families are provided. :class:`GridPartition` splits R^d into half-open
cubes ``[anchor + k r, anchor + (k+1) r)``. :class:`MetricPartition` holds the
centers of a maximal r-packing of a metric space; points belong to the cell
of their nearest center (ties go to the lowest index).

Both serialize to plain JSON-compatible dicts (``to_dict`` / ``from_dict``),
which is the text format used in experiment outputs::

    {"kind": "grid", "dim": 2, "side": 0.25, "anchor": [0, 0],
     "cells_per_axis": 4}
    {"kind": "metric", "metric": "euclidean", "radius": 0.5,
     "centers": [[0.0], [0.5], [1.0]]}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import CapacityError, InvalidInputError, InvalidParameterError

DEFAULT_MAX_CENTERS = 200_000
_CHUNK = 1 << 22
_KD_MIN_CENTERS = 64
_KD_SHORTLIST = 16


def grid_side_length(n: int, d: int) -> float:
    """Cube side used by the grid learners: n ** (-1 / (2 d))."""
    if n < 1 or d < 1:
        raise InvalidParameterError("n and d must be positive")
    return float(n) ** (-1.0 / (2 * d))


def packing_side_length(n: int, d: int) -> float:
    """Packing radius used by the metric learners: n ** (-1 / (4 d))."""
    if n < 1 or d < 1:
        raise InvalidParameterError("n and d must be positive")
    return float(n) ** (-1.0 / (4 * d))


def cells_per_unit_axis(side: float) -> int:
    """Number of grid cells of width ``side`` needed to cover [0, 1]."""
    return max(1, math.ceil(1.0 / side - 1e-9))


def as_points(x, dim: int | None = None) -> np.ndarray:
    """Coerce to a float array of shape (m, dim)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim in (None, 1) else arr.reshape(1, -1)
    if dim is not None and arr.shape[1] != dim:
        raise InvalidParameterError(
            f"expected points of dimension {dim}, got {arr.shape[1]}")
    return arr


@dataclass(frozen=True)
class GridPartition:
    """Axis-aligned cube grid with side ``side`` anchored at ``anchor``.

    With ``cells_per_axis`` set, the grid is restricted to the cells meeting
    the unit cube ``anchor + [0, 1]^d`` and indices are clamped into
    ``[0, cells_per_axis - 1]``; this puts the closed upper face of the cube
    into the last cell.
    """

    dim: int
    side: float
    anchor: tuple = None
    cells_per_axis: int | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidParameterError("dim must be positive")
        if not self.side > 0:
            raise InvalidParameterError("side must be positive")
        if self.anchor is None:
            object.__setattr__(self, "anchor", (0.0,) * self.dim)
        else:
            object.__setattr__(self, "anchor", tuple(float(a) for a in self.anchor))
        if len(self.anchor) != self.dim:
            raise InvalidParameterError("anchor has wrong dimension")

    @classmethod
    def unit_cube(cls, side: float, dim: int) -> "GridPartition":
        return cls(dim, side, None, cells_per_unit_axis(side))

    @property
    def bounded(self) -> bool:
        return self.cells_per_axis is not None

    @property
    def cell_volume(self) -> float:
        return self.side ** self.dim

    def cell_ids(self, points) -> np.ndarray:
        """Integer cell indices, shape (m, dim)."""
        x = as_points(points, self.dim)
        idx = np.floor((x - np.asarray(self.anchor)) / self.side).astype(np.int64)
        if self.bounded:
            np.clip(idx, 0, self.cells_per_axis - 1, out=idx)
        return idx

    def all_cells(self) -> np.ndarray:
        """Every cell of a bounded grid, in lexicographic order."""
        if not self.bounded:
            raise InvalidParameterError("unbounded grid has infinitely many cells")
        axes = [np.arange(self.cells_per_axis)] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def flat_index(self, cells: np.ndarray) -> np.ndarray:
        """Row-major position of bounded-grid cells in :meth:`all_cells`."""
        return np.ravel_multi_index(tuple(np.asarray(cells).T),
                                    (self.cells_per_axis,) * self.dim)

    def cell_box(self, cell) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.anchor) + np.asarray(cell, dtype=float) * self.side
        return lo, lo + self.side

    def to_dict(self) -> dict:
        return {"kind": "grid", "dim": self.dim, "side": self.side,
                "anchor": list(self.anchor), "cells_per_axis": self.cells_per_axis}

    @classmethod
    def from_dict(cls, data: dict) -> "GridPartition":
        return cls(int(data["dim"]), float(data["side"]), tuple(data["anchor"]),
                   data.get("cells_per_axis"))


def cell_of(x, grid: GridPartition) -> tuple:
    """Cell id of a single point."""
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.shape[0] != grid.dim:
        raise InvalidParameterError(
            f"point has dimension {arr.shape[0]}, grid has {grid.dim}")
    return tuple(int(v) for v in grid.cell_ids(arr.reshape(1, -1))[0])


# -- metrics ---------------------------------------------------------------

def euclidean_pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cdist(a, b)


def circle_pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Arc-length distance on the unit circle; points are angles in radians."""
    diff = np.abs(np.mod(a[:, None, 0] - b[None, :, 0], 2 * math.pi))
    return np.minimum(diff, 2 * math.pi - diff)


METRICS: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "euclidean": euclidean_pairwise,
    "circle": circle_pairwise,
}


@dataclass(frozen=True)
class MetricSpaceDescriptor:
    """A bounded metric space represented by a fixed candidate net.

    ``spacing`` is the lattice step of the net. ``refine(spacing)`` returns an
    equivalent descriptor with a finer net, or is ``None`` for fixed nets.
    """

    name: str
    metric: str
    candidate_net: np.ndarray
    doubling_dim: int
    spacing: float
    refine: Callable[[float], "MetricSpaceDescriptor"] | None = field(
        default=None, compare=False, repr=False)
    max_centers: int = DEFAULT_MAX_CENTERS

    @property
    def pairwise(self):
        return METRICS[self.metric]

    @property
    def coord_dim(self) -> int:
        return self.candidate_net.shape[1]

    def distance(self, a, b) -> float:
        a = as_points(a, self.coord_dim)
        b = as_points(b, self.coord_dim)
        return float(self.pairwise(a, b)[0, 0])

    def with_spacing_at_most(self, spacing: float) -> "MetricSpaceDescriptor":
        if self.spacing <= spacing or self.refine is None:
            return self
        return self.refine(spacing)


def euclidean_cube(d: int, spacing: float = 0.01,
                   max_centers: int = DEFAULT_MAX_CENTERS) -> MetricSpaceDescriptor:
    """[0, 1]^d with the Euclidean metric; net = regular lattice incl. both ends."""
    if d < 1 or not spacing > 0:
        raise InvalidParameterError("need d >= 1 and spacing > 0")
    steps = math.ceil(1.0 / spacing - 1e-9)
    axis = np.linspace(0.0, 1.0, steps + 1)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    net = np.stack([m.ravel() for m in mesh], axis=1)
    return MetricSpaceDescriptor(
        f"euclidean_cube_{d}d", "euclidean", net, d, 1.0 / steps,
        refine=lambda s: euclidean_cube(d, s, max_centers), max_centers=max_centers)


def unit_circle(spacing: float = 0.01,
                max_centers: int = DEFAULT_MAX_CENTERS) -> MetricSpaceDescriptor:
    """Unit circle with arc-length metric; points are angles in [0, 2 pi)."""
    if not spacing > 0:
        raise InvalidParameterError("spacing must be positive")
    steps = math.ceil(2 * math.pi / spacing - 1e-9)
    net = (np.arange(steps) * (2 * math.pi / steps)).reshape(-1, 1)
    return MetricSpaceDescriptor(
        "unit_circle", "circle", net, 1, 2 * math.pi / steps,
        refine=lambda s: unit_circle(s, max_centers), max_centers=max_centers)


def bundled_spaces(spacing: float = 0.01) -> list[MetricSpaceDescriptor]:
    return [euclidean_cube(1, spacing), euclidean_cube(2, spacing),
            euclidean_cube(3, spacing), unit_circle(spacing)]


def space_from_spec(spec: dict) -> MetricSpaceDescriptor:
    kind = spec.get("kind", "euclidean_cube")
    spacing = float(spec.get("spacing", 0.01))
    cap = int(spec.get("max_centers", DEFAULT_MAX_CENTERS))
    if kind == "euclidean_cube":
        return euclidean_cube(int(spec.get("d", 1)), spacing, cap)
    if kind == "unit_circle":
        return unit_circle(spacing, cap)
    raise InvalidParameterError(f"unknown metric space kind {kind!r}")


# -- packings ----------------------------------------------------------------

@dataclass(frozen=True)
class MetricPartition:
    """Voronoi partition induced by the centers of an r-packing."""

    centers: np.ndarray
    radius: float
    metric: str = "euclidean"

    def __post_init__(self):
        object.__setattr__(self, "centers", as_points(self.centers))

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def pairwise(self):
        return METRICS[self.metric]

    @cached_property
    def _tree(self):
        return cKDTree(self.centers)

    def _brute_cell_ids(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(len(x), dtype=np.int64)
        step = max(1, _CHUNK // max(1, len(self.centers)))
        for s in range(0, len(x), step):
            out[s:s + step] = np.argmin(self.pairwise(x[s:s + step], self.centers), axis=1)
        return out

    def cell_ids(self, points) -> np.ndarray:
        """Index of the nearest center per point; ties go to the lowest index."""
        x = as_points(points, self.centers.shape[1])
        if self.metric != "euclidean" or len(self.centers) <= _KD_MIN_CENTERS:
            return self._brute_cell_ids(x)
        # KD-tree shortlist, then exact distances to resolve ties by index.
        k = min(_KD_SHORTLIST, len(self.centers))
        _, cand = self._tree.query(x, k=k)
        exact = np.sqrt(((x[:, None, :] - self.centers[cand]) ** 2).sum(axis=2))
        best = exact.min(axis=1, keepdims=True)
        tied = exact == best
        out = np.where(tied, cand, np.iinfo(np.int64).max).min(axis=1)
        # A tie reaching the end of the shortlist may continue past it.
        spill = tied[:, -1]
        if np.any(spill):
            out[spill] = self._brute_cell_ids(x[spill])
        return out

    def to_dict(self) -> dict:
        return {"kind": "metric", "metric": self.metric, "radius": self.radius,
                "centers": self.centers.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "MetricPartition":
        return cls(np.asarray(data["centers"], dtype=float), float(data["radius"]),
                   data.get("metric", "euclidean"))


def build_maximal_packing(space: MetricSpaceDescriptor, r: float) -> MetricPartition:
    """Greedy maximal r-packing of the candidate net.

    Candidates are scanned in net order; a candidate is accepted iff it lies
    at distance >= r from every center accepted so far. The result depends on
    ``(space, r)`` only.
    """
    if not r > 0:
        raise InvalidParameterError(f"packing radius must be positive, got {r}")
    net = space.candidate_net
    if len(net) == 0:
        raise InvalidParameterError("candidate net is empty")
    pairwise = space.pairwise
    blocked = np.zeros(len(net), dtype=bool)
    chosen = []
    i = 0
    while i < len(net):
        j = int(np.argmin(blocked[i:]))
        if blocked[i + j]:
            break
        i += j
        chosen.append(i)
        if len(chosen) > space.max_centers:
            raise CapacityError(
                f"packing of {space.name} at r={r} exceeds {space.max_centers} centers")
        rest = slice(i + 1, None)
        blocked[rest] |= pairwise(net[i:i + 1], net[rest])[0] < r
        i += 1
    return MetricPartition(net[chosen].copy(), float(r), space.metric)


def voronoi_cell(x, partition: MetricPartition) -> int:
    """Index of the Voronoi cell containing ``x``."""
    return int(partition.cell_ids(np.asarray(x, dtype=float).reshape(1, -1))[0])


def partition_from_dict(data: dict):
    if data["kind"] == "grid":
        return GridPartition.from_dict(data)
    if data["kind"] == "metric":
        return MetricPartition.from_dict(data)
    raise InvalidInputError(f"unknown partition kind {data['kind']!r}")


# -- verification oracles (brute force) ---------------------------------------

def min_center_separation(partition: MetricPartition) -> float:
    c = partition.centers
    if len(c) < 2:
        return math.inf
    d = partition.pairwise(c, c)
    np.fill_diagonal(d, np.inf)
    return float(d.min())


def cover_radius(partition: MetricPartition, points) -> float:
    """max over ``points`` of the distance to the nearest center."""
    x = as_points(points, partition.centers.shape[1])
    if partition.metric == "euclidean":
        return float(partition._tree.query(x, k=1)[0].max())
    worst = 0.0
    step = max(1, _CHUNK // max(1, len(partition)))
    for s in range(0, len(x), step):
        worst = max(worst, float(partition.pairwise(x[s:s + step], partition.centers)
                                 .min(axis=1).max()))
    return worst


def max_cell_diameter(partition: MetricPartition, points) -> float:
    """Largest pairwise distance between points sharing a Voronoi cell."""
    x = as_points(points, partition.centers.shape[1])
    ids = partition.cell_ids(x)
    order = np.argsort(ids, kind="stable")
    bounds = np.flatnonzero(np.diff(ids[order])) + 1
    worst = 0.0
    for group in np.split(order, bounds):
        pts = x[group]
        step = max(1, _CHUNK // max(1, len(pts)))
        for s in range(0, len(pts), step):
            worst = max(worst, float(partition.pairwise(pts[s:s + step], pts).max()))
    return worst


def centers_in_ball(partition: MetricPartition, center, theta: float) -> int:
    """Number of packing centers within distance ``theta`` of ``center``."""
    c = as_points(center, partition.centers.shape[1])
    return int(np.count_nonzero(partition.pairwise(c, partition.centers)[0] <= theta))
