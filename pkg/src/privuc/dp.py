"""Differential-privacy primitives: Laplace noise and sparse histograms."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import InvalidParameterError
from .rng import SeededRng


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) pair. ``delta == 0`` means pure DP."""

    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise InvalidParameterError(f"delta must lie in [0, 1), got {self.delta}")

    def compose(self, other: "PrivacyBudget") -> "PrivacyBudget":
        """Basic sequential composition."""
        return PrivacyBudget(self.epsilon + other.epsilon, self.delta + other.delta)


@dataclass
class NoisyHistogram:
    """Sparse released counts. Keys not in ``entries`` have count exactly 0."""

    entries: dict = field(default_factory=dict)
    total_n: int = 0
    threshold: float | None = None

    def __getitem__(self, key) -> float:
        return self.entries.get(key, 0.0)

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def sample_laplace(scale: float, rng: SeededRng) -> float:
    """One draw from Lap(scale)."""
    if not scale > 0:
        raise InvalidParameterError(f"scale must be positive, got {scale}")
    return float(rng.laplace(scale))


def laplace_mechanism(values, l1_sensitivity: float, epsilon: float,
                      rng: SeededRng) -> np.ndarray:
    """Release ``values`` plus i.i.d. Lap(l1_sensitivity / epsilon) noise."""
    if not l1_sensitivity > 0:
        raise InvalidParameterError("l1_sensitivity must be positive")
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be positive")
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return values.copy()
    return values + rng.laplace(l1_sensitivity / epsilon, values.shape)


def stability_threshold(epsilon: float, delta: float) -> float:
    """Cut-off below which a noisy count is suppressed: (2/eps) ln(2/delta) + 1."""
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be positive")
    if not 0 < delta < 1:
        raise InvalidParameterError(
            "stability-based histogram needs 0 < delta < 1 (pure DP unsupported)")
    return 2.0 / epsilon * math.log(2.0 / delta) + 1.0


def stable_noisy_counts(counts, epsilon: float, delta: float,
                        rng: SeededRng, runs: int | None = None) -> np.ndarray:
    """Vectorized core of the stability-based histogram.

    ``counts`` are the raw counts of the occupied keys, in a fixed order. Each
    gets ``Lap(2/epsilon)`` noise and is zeroed if it falls strictly below the
    threshold. With ``runs`` set, returns a ``(runs, len(counts))`` array of
    independent releases drawn consecutively from ``rng``.
    """
    thr = stability_threshold(epsilon, delta)
    counts = np.asarray(counts, dtype=float)
    if np.any(counts <= 0):
        raise InvalidParameterError("stable_noisy_counts expects occupied keys only")
    shape = counts.shape if runs is None else (runs,) + counts.shape
    noisy = counts + rng.laplace(2.0 / epsilon, shape)
    return np.where(noisy < thr, 0.0, noisy)


def count_keys(keys) -> tuple[list[Hashable], np.ndarray]:
    """Distinct keys in sorted order and their multiplicities.

    Integer arrays of shape (n,) give ``int`` keys; shape (n, d) gives tuple
    keys. Anything else is treated as a sequence of hashables.
    """
    if len(keys) == 0:
        return [], np.zeros(0, dtype=np.int64)
    arr = np.asarray(keys) if not isinstance(keys, np.ndarray) else keys
    if arr.dtype.kind in "iu" and arr.ndim in (1, 2):
        uniq, counts = np.unique(arr, axis=0, return_counts=True)
        if arr.ndim == 1:
            ids = [int(v) for v in uniq]
        else:
            ids = [tuple(int(v) for v in row) for row in uniq]
        return ids, counts
    tally = Counter(keys)
    ids = sorted(tally)
    return ids, np.array([tally[k] for k in ids], dtype=np.int64)


def stable_histogram(keys: Sequence[Hashable], budget: PrivacyBudget,
                     rng: SeededRng) -> NoisyHistogram:
    """Stability-based sparse histogram, (epsilon, delta)-DP.

    Only keys occurring in ``keys`` can receive a nonzero release; noise is
    drawn for the distinct keys in sorted order.
    """
    if budget.delta <= 0:
        raise InvalidParameterError("stable_histogram requires delta > 0")
    thr = stability_threshold(budget.epsilon, budget.delta)
    ids, counts = count_keys(keys)
    hist = NoisyHistogram(total_n=len(keys), threshold=thr)
    if not ids:
        return hist
    noisy = stable_noisy_counts(counts, budget.epsilon, budget.delta, rng)
    hist.entries = {k: float(v) for k, v in zip(ids, noisy) if v != 0.0}
    return hist
