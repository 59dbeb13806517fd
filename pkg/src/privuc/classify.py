"""Private partition classifiers: noisy-majority grids, Voronoi variants, plug-in rule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dp import PrivacyBudget, stable_histogram
from .errors import InvalidInputError, InvalidParameterError
from .partition import (
    GridPartition,
    MetricPartition,
    MetricSpaceDescriptor,
    as_points,
    build_maximal_packing,
    grid_side_length,
    packing_side_length,
    partition_from_dict,
)
from .rng import SeededRng


@dataclass
class LabeledSample:
    """Points of shape (n, d) with binary labels of shape (n,)."""

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.points = as_points(self.points)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.points) != len(self.labels):
            raise InvalidInputError("points and labels differ in length")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise InvalidInputError("labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass
class CellVoteTable:
    """Per-cell signed label sums, occupancy counts and the noise added.

    ``signed_sum[j]`` is the sum of ``y - 1/2`` over training points in cell
    ``cells[j]``. This table is fit-time diagnostics: it holds raw statistics
    of the training data and is never part of a released classifier.
    """

    cells: list
    signed_sum: np.ndarray
    count: np.ndarray
    noise: np.ndarray

    def as_dict(self) -> dict:
        return {c: (float(s), int(k), float(w)) for c, s, k, w in
                zip(self.cells, self.signed_sum, self.count, self.noise)}

    def eta_hat(self) -> np.ndarray:
        """Noisy label-frequency estimate per cell, clipped to [0, 1].

        Equals (signed_sum + noise) / count + 1/2, with count replaced by 1 in
        empty cells, so thresholding at 1/2 reproduces the cell decisions.
        """
        denom = np.maximum(self.count, 1)
        return np.clip((self.signed_sum + self.noise) / denom + 0.5, 0.0, 1.0)


def _key(partition, row):
    if isinstance(partition, GridPartition):
        return tuple(int(v) for v in row)
    return int(row)


def _lookup(partition, ids: np.ndarray, table: dict, default):
    if len(ids) == 0:
        return np.zeros(0)
    uniq, inverse = np.unique(ids, axis=0, return_inverse=True)
    vals = np.array([table.get(_key(partition, u), default) for u in uniq])
    return vals[inverse.reshape(-1)]


@dataclass
class PartitionClassifier:
    """A frozen per-cell decision table over a partition."""

    partition: GridPartition | MetricPartition
    decisions: dict
    default_label: int = 0
    eta_table: dict = field(default_factory=dict, repr=False)
    votes: CellVoteTable | None = field(default=None, repr=False)
    occupancy: dict = field(default_factory=dict, repr=False)

    def predict(self, points) -> np.ndarray:
        ids = self.partition.cell_ids(points)
        return _lookup(self.partition, ids, self.decisions, self.default_label).astype(np.int64)

    __call__ = predict

    def eta_hat(self, points) -> np.ndarray:
        """Noisy regression estimate whose plug-in rule is this classifier."""
        ids = self.partition.cell_ids(points)
        return _lookup(self.partition, ids, self.eta_table, 0.0).astype(float)

    def cell_counts(self, points) -> np.ndarray:
        """Training-point count of the cell containing each query (diagnostics)."""
        ids = self.partition.cell_ids(points)
        return _lookup(self.partition, ids, self.occupancy, 0).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "partition": self.partition.to_dict(),
            "default_label": int(self.default_label),
            "decisions": [[list(k) if isinstance(k, tuple) else k, int(v)]
                          for k, v in sorted(self.decisions.items())],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PartitionClassifier":
        part = partition_from_dict(data["partition"])
        table = {(tuple(k) if isinstance(k, list) else int(k)): int(v)
                 for k, v in data["decisions"]}
        return cls(part, table, int(data["default_label"]))


def decide_cell(signed_sum: float, noise: float) -> int:
    """Noisy majority vote of one cell: 1 iff signed_sum + noise > 0."""
    return int(signed_sum + noise > 0)


def _check_unit_cube(points: np.ndarray):
    if np.any(points < 0.0) or np.any(points > 1.0) or not np.all(np.isfinite(points)):
        raise InvalidInputError("all points must lie in [0, 1]^d")


def grid_vote_table(sample: LabeledSample) -> tuple[GridPartition, np.ndarray, np.ndarray]:
    """Grid for ``n`` points and per-cell (signed sum, count) in cell order.

    Cells are the ``cells_per_axis ** d`` cubes meeting [0, 1]^d, ordered as
    in :meth:`GridPartition.all_cells`.
    """
    n, d = len(sample), sample.dim
    if n < 1:
        raise InvalidInputError("cannot fit on an empty sample")
    _check_unit_cube(sample.points)
    grid = GridPartition.unit_cube(grid_side_length(n, d), d)
    flat = grid.flat_index(grid.cell_ids(sample.points))
    k = grid.cells_per_axis ** d
    signed = np.bincount(flat, weights=sample.labels - 0.5, minlength=k)
    counts = np.bincount(flat, minlength=k)
    return grid, signed, counts


def pcl_fit(sample: LabeledSample, epsilon: float, rng: SeededRng) -> PartitionClassifier:
    """Private histogram classifier on [0, 1]^d, epsilon-DP.

    One Lap(1/epsilon) draw per grid cell, empty cells included. The vector
    of signed sums has L1 sensitivity 1 under replacing one example, so a
    single vector Laplace release covers every cell.
    """
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be positive")
    grid, signed, counts = grid_vote_table(sample)
    noise = rng.laplace(1.0 / epsilon, signed.shape)
    return _vote_classifier(grid, [tuple(int(v) for v in c) for c in grid.all_cells()],
                            signed, counts, noise)


def _vote_classifier(partition, cells, signed, counts, noise) -> PartitionClassifier:
    votes = CellVoteTable(cells, signed, counts, noise)
    decisions = (signed + noise > 0).astype(np.int64)
    return PartitionClassifier(
        partition,
        dict(zip(cells, decisions.tolist())),
        0,
        eta_table=dict(zip(cells, votes.eta_hat().tolist())),
        votes=votes,
        occupancy=dict(zip(cells, counts.tolist())),
    )


_PACKING_CACHE: dict = {}


def packing_for(space: MetricSpaceDescriptor, n: int) -> MetricPartition:
    """Maximal packing at radius ``packing_side_length(n, ddim)``.

    The candidate net is refined to spacing <= r / 10 when the descriptor
    allows it. Packings depend only on public parameters and are memoized.
    """
    r = packing_side_length(n, space.doubling_dim)
    space = space.with_spacing_at_most(r / 10)
    key = (space.name, space.metric, space.spacing, len(space.candidate_net), r)
    if key not in _PACKING_CACHE:
        _PACKING_CACHE[key] = build_maximal_packing(space, r)
    return _PACKING_CACHE[key]


def pcl2_fit(sample: LabeledSample, space: MetricSpaceDescriptor, epsilon: float,
             rng: SeededRng) -> PartitionClassifier:
    """Noisy-majority classifier over Voronoi cells of a maximal packing."""
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be positive")
    if len(sample) < 1:
        raise InvalidInputError("cannot fit on an empty sample")
    partition = packing_for(space, len(sample))
    ids = partition.cell_ids(sample.points)
    k = len(partition)
    signed = np.bincount(ids, weights=sample.labels - 0.5, minlength=k)
    counts = np.bincount(ids, minlength=k)
    noise = rng.laplace(1.0 / epsilon, k)
    return _vote_classifier(partition, list(range(k)), signed, counts, noise)


def pcl2b_decide(c_hat: float, y_hat: float) -> int:
    """Cell label from released counts: 1 iff min(y_hat, c_hat) > c_hat / 2."""
    return int(min(y_hat, c_hat) > c_hat / 2)


def pcl2b_fit(sample: LabeledSample, space: MetricSpaceDescriptor, budget: PrivacyBudget,
              rng: SeededRng) -> PartitionClassifier:
    """Voronoi classifier from two stability-based histograms.

    The first histogram counts all points per cell, the second counts label-1
    points. The pair is (2 eps, 2 delta)-DP. Cells with no released count
    predict 0.
    """
    if budget.delta <= 0:
        raise InvalidParameterError("pcl2b_fit requires delta > 0")
    if len(sample) < 1:
        raise InvalidInputError("cannot fit on an empty sample")
    partition = packing_for(space, len(sample))
    ids = partition.cell_ids(sample.points)
    c_hat = stable_histogram(ids, budget, rng)
    y_hat = stable_histogram(ids[sample.labels == 1], budget, rng)
    decisions, eta = {}, {}
    for cell, c in c_hat.entries.items():
        y = min(y_hat[cell], c)
        decisions[cell] = pcl2b_decide(c, y_hat[cell])
        eta[cell] = y / c
    occupancy = dict(zip(*np.unique(ids, return_counts=True)))
    occupancy = {int(k): int(v) for k, v in occupancy.items()}
    return PartitionClassifier(partition, decisions, 0, eta_table=eta, occupancy=occupancy)


# -- plug-in rule ----------------------------------------------------------------

def plugin_classify(eta_hat: Callable, x) -> int:
    """1 iff eta_hat(x) > 1/2."""
    return int(np.asarray(eta_hat(x)).reshape(-1)[0] > 0.5)


@dataclass
class PluginClassifier:
    """Plug-in rule for a vectorized regression estimate."""

    eta: Callable[[np.ndarray], np.ndarray]

    def predict(self, points) -> np.ndarray:
        return (np.asarray(self.eta(as_points(points))) > 0.5).astype(np.int64)

    __call__ = predict

    def eta_hat(self, points) -> np.ndarray:
        return np.asarray(self.eta(as_points(points)), dtype=float)


def empirical_error(classifier, dist, m_test: int, rng: SeededRng) -> float:
    """Monte-Carlo estimate of P(h(x) != y) from ``m_test`` fresh draws."""
    if m_test < 1:
        raise InvalidParameterError("m_test must be positive")
    test = dist.sample(m_test, rng)
    return float(np.mean(classifier.predict(test.points) != test.labels))
