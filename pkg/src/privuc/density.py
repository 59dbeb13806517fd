"""Private piecewise-constant density estimation and exact L1 distances.

Densities serialize to JSON as::

    {"grid": {...grid dict...}, "normalized": false, "degenerate": false,
     "cells": [[[0], 9.87], [[1], 10.2], ...]}

where each entry of ``cells`` is ``[cell-id, density value]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dp import PrivacyBudget, stable_histogram
from .errors import DegenerateEstimateError, InvalidInputError, InvalidParameterError
from .partition import GridPartition, as_points, cells_per_unit_axis, grid_side_length
from .rng import SeededRng

_CHUNK = 1 << 20


@dataclass
class PiecewiseConstantDensity:
    """Density constant on the cells of a grid; absent cells have value 0."""

    grid: GridPartition
    values: dict = field(default_factory=dict)
    normalized: bool = False
    degenerate: bool = False

    def __post_init__(self):
        keys = sorted(self.values)
        self._cells = np.array(keys, dtype=np.int64).reshape(-1, self.grid.dim)
        self._vals = np.array([self.values[k] for k in keys], dtype=float)

    @property
    def cells(self) -> np.ndarray:
        return self._cells

    @property
    def cell_values(self) -> np.ndarray:
        return self._vals

    @property
    def total_mass(self) -> float:
        return float(self._vals.sum() * self.grid.cell_volume)

    @property
    def support_hint(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Bounding box of the nonzero cells, or None if there are none."""
        nz = self._cells[self._vals != 0]
        if len(nz) == 0:
            return None
        lo, _ = self.grid.cell_box(nz.min(axis=0))
        _, hi = self.grid.cell_box(nz.max(axis=0))
        return lo, hi

    def box_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        lo = np.asarray(self.grid.anchor) + self._cells * self.grid.side
        return lo, lo + self.grid.side, self._vals

    def __call__(self, points) -> np.ndarray:
        ids = self.grid.cell_ids(points)
        return np.array([self.values.get(tuple(int(v) for v in row), 0.0) for row in ids])

    def box_mass(self, lo, hi) -> float:
        flo, fhi, fv = self.box_arrays()
        sides = np.clip(np.minimum(fhi, hi) - np.maximum(flo, lo), 0.0, None)
        return float(np.prod(sides, axis=1) @ fv)

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "normalized": self.normalized,
                "degenerate": self.degenerate,
                "cells": [[list(k), float(v)] for k, v in sorted(self.values.items())]}

    @classmethod
    def from_dict(cls, data: dict) -> "PiecewiseConstantDensity":
        grid = GridPartition.from_dict(data["grid"])
        values = {tuple(int(c) for c in k): float(v) for k, v in data["cells"]}
        return cls(grid, values, bool(data["normalized"]), bool(data.get("degenerate", False)))


def histogram_density(points, grid: GridPartition) -> PiecewiseConstantDensity:
    """Non-private histogram estimate: count / (n * r^d) on every occupied cell."""
    x = as_points(points, grid.dim)
    ids, counts = np.unique(grid.cell_ids(x), axis=0, return_counts=True)
    scale = 1.0 / (len(x) * grid.cell_volume)
    return PiecewiseConstantDensity(
        grid, {tuple(int(v) for v in k): c * scale for k, c in zip(ids, counts)})


def pcde_fit(points, budget: PrivacyBudget, rng: SeededRng) -> PiecewiseConstantDensity:
    """Private histogram density over R^d; returns the raw (unnormalized) estimate.

    Cube side is ``n ** (-1/(2d))``; counts go through the stability-based
    histogram, so cells without sample points are exactly zero.
    """
    x = as_points(points)
    n, d = x.shape
    if n < 1:
        raise InvalidInputError("cannot fit on an empty sample")
    if budget.delta <= 0:
        raise InvalidParameterError("pcde_fit requires delta > 0")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("points must be finite")
    grid = GridPartition(d, grid_side_length(n, d))
    hist = stable_histogram(grid.cell_ids(x), budget, rng)
    scale = 1.0 / (n * grid.cell_volume)
    return PiecewiseConstantDensity(grid, {k: v * scale for k, v in hist.entries.items()})


def normalize_density(raw: PiecewiseConstantDensity) -> PiecewiseConstantDensity:
    """Clip negative values to zero and rescale to total mass one."""
    kept = {k: v for k, v in raw.values.items() if v > 0}
    total = math.fsum(kept.values())
    if not total > 0:
        raise DegenerateEstimateError("no positive mass left after clipping")
    # Divide by the value sum before the volume: tiny values keep full precision.
    vol = raw.grid.cell_volume
    return PiecewiseConstantDensity(raw.grid, {k: v / total / vol for k, v in kept.items()},
                                    normalized=True)


def uniform_fallback(grid: GridPartition) -> PiecewiseConstantDensity:
    """Uniform density on the cells covering ``anchor + [0, 1)^d``."""
    k = cells_per_unit_axis(grid.side)
    value = 1.0 / (k ** grid.dim * grid.cell_volume)
    cells = GridPartition.unit_cube(grid.side, grid.dim).all_cells()
    return PiecewiseConstantDensity(grid, {tuple(int(v) for v in c): value for c in cells},
                                    normalized=True, degenerate=True)


def normalize_or_uniform(raw: PiecewiseConstantDensity) -> PiecewiseConstantDensity:
    """:func:`normalize_density`, falling back to a flagged uniform estimate."""
    try:
        return normalize_density(raw)
    except DegenerateEstimateError:
        return uniform_fallback(raw.grid)


def _clip_boxes(lo, hi, vals, region):
    if region is None:
        return lo, hi, vals
    rlo, rhi = (np.asarray(v, dtype=float) for v in region)
    lo = np.maximum(lo, rlo)
    hi = np.minimum(hi, rhi)
    keep = np.all(hi > lo, axis=1)
    return lo[keep], hi[keep], vals[keep]


def l1_distance(f, g, region=None) -> float:
    """Exact integral of |f - g| for piecewise-constant densities.

    ``f`` and ``g`` expose ``box_arrays() -> (lo, hi, value)`` over disjoint
    boxes, with zero density elsewhere. With ``region = (lo, hi)`` the
    integral is restricted to that box. Computed as

        sum over f-boxes B of [ sum over g-boxes G |f_B - g_G| vol(B & G)
                                + |f_B| (vol(B) - sum_G vol(B & G)) ]
        + (mass of g) - sum over B, G of g_G vol(B & G)
    """
    flo, fhi, fv = _clip_boxes(*f.box_arrays(), region)
    glo, ghi, gv = _clip_boxes(*g.box_arrays(), region)
    g_mass = float(np.prod(ghi - glo, axis=1) @ gv) if len(gv) else 0.0
    inside = 0.0
    g_covered = 0.0
    step = max(1, _CHUNK // max(1, len(gv)))
    for s in range(0, len(fv), step):
        blo, bhi, bv = flo[s:s + step], fhi[s:s + step], fv[s:s + step]
        vol_b = np.prod(bhi - blo, axis=1)
        if len(gv):
            sides = np.minimum(bhi[:, None, :], ghi[None]) - np.maximum(blo[:, None, :], glo[None])
            overlap = np.prod(np.clip(sides, 0.0, None), axis=2)
            inside += float(np.sum(overlap * np.abs(bv[:, None] - gv[None])))
            covered = overlap.sum(axis=1)
            g_covered += float(np.sum(overlap @ gv))
        else:
            covered = np.zeros_like(vol_b)
        inside += float(np.sum(np.abs(bv) * (vol_b - covered)))
    return inside + (g_mass - g_covered)
