"""Private semi-supervised learning of thresholds on the line.

The pipeline privately estimates the unlabeled marginal with the grid
density estimator, draws a synthetic unlabeled sample from the estimate, and
hands it to a learner that is private with respect to the labeled sample
only (an exponential mechanism over a threshold net built from the
unlabeled points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classify import LabeledSample
from .density import PiecewiseConstantDensity, normalize_or_uniform, pcde_fit
from .dp import PrivacyBudget
from .errors import InvalidInputError, InvalidParameterError
from .partition import as_points
from .rng import SeededRng

THRESHOLD_VC = 2
# Pilot-calibrated constant for the labeled sample size; see SslBudgets.
DEFAULT_K = 0.5


@dataclass(frozen=True)
class ThresholdHypothesis:
    """h(x) = direction XOR [x < cut]; direction 1 predicts 1 right of the cut."""

    cut: float
    direction: int = 1

    def predict(self, points) -> np.ndarray:
        x = as_points(points, 1)[:, 0]
        return (self.direction ^ (x < self.cut)).astype(np.int64)

    __call__ = predict

    def error(self, dist) -> float:
        """Exact error under a 1-d synthetic distribution with piecewise-constant
        marginal and eta constant on each side of the distribution's cut."""
        lo, hi, dens = dist.box_arrays()
        # Break the line at every piece boundary, the hypothesis cut and eta's cut.
        knots = {float(v) for v in lo[:, 0]} | {float(v) for v in hi[:, 0]}
        if math.isfinite(self.cut):
            knots.add(self.cut)
        if "cut" in dist.params:
            knots.add(float(dist.params["cut"]))
        knots = np.array(sorted(knots))
        a, b = knots[:-1], knots[1:]
        mid = (a + b) / 2
        mass = np.array([dist.box_mass([u], [v]) for u, v in zip(a, b)])
        eta = dist.eta(mid.reshape(-1, 1))
        h = self.predict(mid.reshape(-1, 1))
        return float(np.sum(mass * np.where(h == 1, 1 - eta, eta)))


@dataclass(frozen=True)
class SslBudgets:
    """Sample sizes for the private semi-supervised learner.

    ``m_labeled`` is the labeled sample size, ``n_unlabeled`` the number of
    synthetic unlabeled points the learner sees.
    """

    m_labeled: int
    n_unlabeled: int
    alpha: float
    beta: float

    def __post_init__(self):
        if self.m_labeled < 1 or self.n_unlabeled < 1:
            raise InvalidParameterError("sample sizes must be positive")
        if not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise InvalidParameterError("alpha and beta must lie in (0, 1)")

    @classmethod
    def from_rates(cls, epsilon: float, alpha: float, beta: float, vc: int = THRESHOLD_VC,
                   k: float = DEFAULT_K, k_unlabeled: float = 1.0) -> "SslBudgets":
        """m = ceil(k / (eps alpha) * vc * ln(1/(alpha beta))), and
        n = ceil(k_unlabeled / alpha * vc * ln(1/(alpha beta)))."""
        log_term = vc * math.log(1.0 / (alpha * beta))
        m = math.ceil(k / (epsilon * alpha) * log_term)
        n = math.ceil(k_unlabeled / alpha * log_term)
        return cls(m, n, alpha, beta)


def threshold_net(unlabeled) -> list[ThresholdHypothesis]:
    """One cut per gap between consecutive distinct unlabeled points, plus
    cuts at -inf and +inf, each with both directions."""
    cuts = _net_cuts(unlabeled)
    return [ThresholdHypothesis(float(c), dr) for c in cuts for dr in (0, 1)]


def _net_cuts(unlabeled) -> np.ndarray:
    u = np.unique(as_points(unlabeled, 1)[:, 0]) if len(unlabeled) else np.zeros(0)
    mids = (u[:-1] + u[1:]) / 2
    return np.concatenate([[-np.inf], mids, [np.inf]])


def net_error_counts(labeled: LabeledSample, cuts: np.ndarray) -> np.ndarray:
    """Labeled error counts for every (cut, direction) pair, shape (len(cuts), 2)."""
    x = labeled.points[:, 0]
    y = labeled.labels
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    ones_left = np.concatenate([[0], np.cumsum(ys)])
    left = np.searchsorted(xs, cuts, side="left")
    total_ones = int(ys.sum())
    m = len(xs)
    # direction 1: predict 0 left of the cut and 1 right of it.
    err1 = ones_left[left] + (m - left) - (total_ones - ones_left[left])
    err0 = m - err1
    return np.stack([err0, err1], axis=1)


def exponential_mechanism(scores, epsilon: float, rng: SeededRng,
                          sensitivity: float = 1.0, size=None):
    """Pick index i with probability proportional to exp(eps * score_i / (2 sensitivity))."""
    if not epsilon > 0 or not sensitivity > 0:
        raise InvalidParameterError("epsilon and sensitivity must be positive")
    logits = epsilon * np.asarray(scores, dtype=float) / (2.0 * sensitivity)
    probs = np.exp(logits - logits.max())
    out = rng.choice_index(probs, size)
    return out if size is not None else int(out)


def semi_private_learn(labeled: LabeledSample, unlabeled, epsilon: float,
                       rng: SeededRng) -> ThresholdHypothesis:
    """Select a threshold from the unlabeled-data net with the exponential mechanism.

    Score is minus the labeled error count (sensitivity 1), so the output is
    epsilon-DP with respect to ``labeled`` for any fixed ``unlabeled``.
    """
    if len(labeled) == 0:
        raise InvalidInputError("labeled sample is empty")
    if labeled.dim != 1:
        raise InvalidInputError("thresholds need 1-d points")
    cuts = _net_cuts(unlabeled)
    errors = net_error_counts(labeled, cuts).reshape(-1)
    pick = exponential_mechanism(-errors, epsilon, rng)
    return ThresholdHypothesis(float(cuts[pick // 2]), pick % 2)


def sample_from_density(f: PiecewiseConstantDensity, m: int, rng: SeededRng) -> np.ndarray:
    """m i.i.d. points: a cell with probability value * r^d, then uniform inside."""
    if not f.normalized:
        raise InvalidParameterError("sample_from_density needs a normalized density")
    lo, hi, vals = f.box_arrays()
    which = rng.choice_index(vals * f.grid.cell_volume, m)
    u = rng.uniform((m, f.grid.dim))
    return lo[which] + u * (hi[which] - lo[which])


def private_cssl(labeled: LabeledSample, unlabeled, budget: PrivacyBudget,
                 budgets: SslBudgets, rng: SeededRng) -> ThresholdHypothesis:
    """(epsilon, delta)-DP threshold learner using both labeled and unlabeled data.

    The unlabeled points only reach the density estimator; the labeled points
    only reach the exponential mechanism, run on synthetic unlabeled data.
    """
    if budget.delta <= 0:
        raise InvalidParameterError("private_cssl requires delta > 0")
    density = normalize_or_uniform(pcde_fit(unlabeled, budget, rng.spawn("density")))
    synthetic = sample_from_density(density, budgets.n_unlabeled, rng.spawn("resample"))
    return semi_private_learn(labeled, synthetic, budget.epsilon, rng.spawn("select"))
