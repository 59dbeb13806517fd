"""Ground-truth distributions with closed-form density, regression and Bayes error.

Every marginal is piecewise constant on finitely many disjoint boxes, which
makes box masses exact (rational when computed with ``exact=True``) and lets
L1 distances be computed by cell arithmetic.

Distribution specs, as used in harness configs::

    {"kind": "checkerboard", "d": 1, "cells_per_axis": 2, "p": 0.1}
    {"kind": "box_mixture", "d": 1, "eta": 0.0,
     "boxes": [{"lo": [0.1], "hi": [0.4], "weight": 0.6}, ...]}
    {"kind": "threshold", "cut": 0.5, "p": 0.0}
    {"kind": "circle_checkerboard", "arcs": 4, "p": 0.1}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .classify import LabeledSample, PluginClassifier
from .errors import InvalidParameterError
from .partition import as_points
from .rng import SeededRng


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(str(x))


@dataclass
class SyntheticDistribution:
    """Joint distribution of (x, y) with an exactly known marginal and eta.

    ``pieces`` are disjoint boxes ``(lo, hi, density)`` stored as Fractions.
    ``domain`` is ``"euclidean"`` or ``"circle"`` (points are angles).
    """

    name: str
    dim: int
    pieces: list
    eta: Callable[[np.ndarray], np.ndarray]
    bayes_error: float
    domain: str = "euclidean"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self._lo = np.array([[float(v) for v in lo] for lo, _, _ in self.pieces])
        self._hi = np.array([[float(v) for v in hi] for _, hi, _ in self.pieces])
        self._dens = np.array([float(v) for _, _, v in self.pieces])
        self._weights = np.array([float(self._piece_mass(p)) for p in self.pieces])

    @staticmethod
    def _piece_mass(piece) -> Fraction:
        lo, hi, dens = piece
        vol = Fraction(1)
        for a, b in zip(lo, hi):
            vol *= b - a
        return vol * dens

    def box_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(lo, hi, density) float arrays describing the marginal density."""
        return self._lo, self._hi, self._dens

    def density(self, points) -> np.ndarray:
        x = as_points(points, self.dim)
        inside = np.all((x[:, None, :] >= self._lo) & (x[:, None, :] < self._hi), axis=2)
        return inside.astype(float) @ self._dens

    def box_mass(self, lo, hi, exact: bool = False):
        """Marginal probability of the box [lo, hi)."""
        if exact:
            total = Fraction(0)
            for plo, phi, dens in self.pieces:
                vol = Fraction(1)
                for a, b, c, e in zip(plo, phi, lo, hi):
                    side = min(b, _frac(e)) - max(a, _frac(c))
                    vol *= max(side, Fraction(0))
                total += vol * dens
            return total
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        sides = np.clip(np.minimum(self._hi, hi) - np.maximum(self._lo, lo), 0.0, None)
        return float(np.prod(sides, axis=1) @ self._dens)

    def sample_points(self, m: int, rng: SeededRng) -> np.ndarray:
        which = rng.choice_index(self._weights, m)
        u = rng.uniform((m, self.dim))
        return self._lo[which] + u * (self._hi[which] - self._lo[which])

    def sample(self, m: int, rng: SeededRng) -> LabeledSample:
        x = self.sample_points(m, rng)
        y = (rng.uniform(m) < self.eta(x)).astype(np.int64)
        return LabeledSample(x, y)


def _parity_eta(cells_per_axis: int, p: float, period: float = 1.0):
    def eta(points):
        x = as_points(points)
        idx = np.floor(x / period * cells_per_axis).astype(np.int64)
        np.clip(idx, 0, cells_per_axis - 1, out=idx)
        even = idx.sum(axis=1) % 2 == 0
        return np.where(even, 1.0 - p, p)
    return eta


def make_checkerboard(d: int, cells_per_axis: int, p: float) -> SyntheticDistribution:
    """Uniform on [0, 1]^d; eta = 1 - p on even-parity cells and p on odd ones."""
    if d < 1 or cells_per_axis < 1:
        raise InvalidParameterError("d and cells_per_axis must be positive")
    if not 0 <= p < 0.5:
        raise InvalidParameterError(f"p must lie in [0, 1/2), got {p}")
    piece = ((Fraction(0),) * d, (Fraction(1),) * d, Fraction(1))
    return SyntheticDistribution(
        f"checkerboard_d{d}_k{cells_per_axis}_p{p}", d, [piece],
        _parity_eta(cells_per_axis, p), float(p),
        params={"kind": "checkerboard", "d": d, "cells_per_axis": cells_per_axis, "p": p})


def make_box_mixture(boxes, d: int, eta: float = 0.0) -> SyntheticDistribution:
    """Mixture of uniform distributions on disjoint axis-aligned boxes.

    ``boxes`` is a list of ``((lo...), (hi...), weight)``. Labels are
    Bernoulli(eta) everywhere, so the Bayes error is min(eta, 1 - eta).
    """
    if not boxes:
        raise InvalidParameterError("need at least one box")
    if not 0 <= eta <= 1:
        raise InvalidParameterError("eta must lie in [0, 1]")
    pieces = []
    total = Fraction(0)
    for lo, hi, w in boxes:
        lo = tuple(_frac(v) for v in np.atleast_1d(lo).tolist())
        hi = tuple(_frac(v) for v in np.atleast_1d(hi).tolist())
        w = _frac(w)
        if len(lo) != d or len(hi) != d:
            raise InvalidParameterError("box dimension mismatch")
        if w <= 0 or any(b <= a for a, b in zip(lo, hi)):
            raise InvalidParameterError("boxes need positive weight and volume")
        vol = Fraction(1)
        for a, b in zip(lo, hi):
            vol *= b - a
        pieces.append((lo, hi, w / vol))
        total += w
    if abs(total - 1) > Fraction(1, 10**12):
        raise InvalidParameterError(f"weights sum to {float(total)}, not 1")
    for i in range(len(pieces)):
        for j in range(i):
            if all(min(pieces[i][1][k], pieces[j][1][k]) > max(pieces[i][0][k], pieces[j][0][k])
                   for k in range(d)):
                raise InvalidParameterError("boxes overlap")
    spec_boxes = [{"lo": [float(v) for v in lo], "hi": [float(v) for v in hi], "weight": float(w)}
                  for lo, hi, w in boxes]
    return SyntheticDistribution(
        f"box_mixture_{len(pieces)}", d, pieces,
        lambda x: np.full(len(as_points(x)), float(eta)), float(min(eta, 1 - eta)),
        params={"kind": "box_mixture", "d": d, "eta": eta, "boxes": spec_boxes})


def make_threshold(cut: float = 0.5, p: float = 0.0) -> SyntheticDistribution:
    """Uniform on [0, 1] with eta = 1 - p right of ``cut`` and p left of it."""
    if not 0 <= p < 0.5:
        raise InvalidParameterError("p must lie in [0, 1/2)")
    piece = ((Fraction(0),), (Fraction(1),), Fraction(1))

    def eta(points):
        return np.where(as_points(points)[:, 0] >= cut, 1.0 - p, p)

    return SyntheticDistribution(f"threshold_{cut}_p{p}", 1, [piece], eta, float(p),
                                 params={"kind": "threshold", "cut": cut, "p": p})


def make_circle_checkerboard(arcs: int, p: float) -> SyntheticDistribution:
    """Uniform angle on the circle; eta alternates between 1 - p and p on ``arcs`` arcs."""
    if arcs < 1:
        raise InvalidParameterError("arcs must be positive")
    if not 0 <= p < 0.5:
        raise InvalidParameterError("p must lie in [0, 1/2)")
    two_pi = Fraction(2 * math.pi)
    piece = ((Fraction(0),), (two_pi,), 1 / two_pi)
    return SyntheticDistribution(
        f"circle_checkerboard_{arcs}_p{p}", 1, [piece],
        _parity_eta(arcs, p, period=2 * math.pi), float(p), domain="circle",
        params={"kind": "circle_checkerboard", "arcs": arcs, "p": p})


def bayes_classifier(dist: SyntheticDistribution) -> PluginClassifier:
    """Plug-in rule on the true eta (ties predict 0)."""
    return PluginClassifier(dist.eta)


def from_spec(spec: dict) -> SyntheticDistribution:
    kind = spec.get("kind")
    if kind == "checkerboard":
        return make_checkerboard(int(spec.get("d", 1)), int(spec.get("cells_per_axis", 2)),
                                 float(spec.get("p", 0.1)))
    if kind == "box_mixture":
        d = int(spec.get("d", 1))
        boxes = [(b["lo"], b["hi"], b["weight"]) for b in spec["boxes"]]
        return make_box_mixture(boxes, d, float(spec.get("eta", 0.0)))
    if kind == "threshold":
        return make_threshold(float(spec.get("cut", 0.5)), float(spec.get("p", 0.0)))
    if kind == "circle_checkerboard":
        return make_circle_checkerboard(int(spec.get("arcs", 4)), float(spec.get("p", 0.1)))
    raise InvalidParameterError(f"unknown distribution kind {kind!r}")


def bundled() -> list[SyntheticDistribution]:
    """The standard test suite of distributions."""
    out = [make_checkerboard(d, k, p) for d in (1, 2) for k in (2, 4, 8) for p in (0.0, 0.1, 0.3)]
    out += [
        make_box_mixture([((0.0,), (1.0,), 1.0)], 1),
        make_box_mixture([((0.1,), (0.4,), 0.6), ((0.55,), (0.95,), 0.4)], 1),
        make_box_mixture([((0.0, 0.0), (0.5, 0.5), 0.25), ((0.5, 0.0), (1.0, 0.5), 0.25),
                          ((0.0, 0.5), (0.5, 1.0), 0.25), ((0.6, 0.6), (0.9, 0.9), 0.25)], 2,
                         eta=0.2),
        make_threshold(0.5, 0.0),
        make_circle_checkerboard(4, 0.1),
    ]
    return out
