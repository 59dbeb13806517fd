"""Empirical differential-privacy audits on neighboring datasets.

A mechanism is run ``R`` times on each of two neighboring samples. Its output
is coarsened to a finite event partition (the predicted labels, or the
zero/nonzero pattern of a density, on a probe grid of at most 8 points) and
for every event F the audit checks

    p(F) <= e^eps q(F) + delta

in both directions, allowing 3 binomial standard deviations of slack. A PASS
is statistical evidence of privacy at that resolution, not a proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classify import LabeledSample, grid_vote_table, packing_for
from .dp import stability_threshold
from .errors import InvalidInputError, InvalidParameterError
from .partition import GridPartition, as_points, euclidean_cube, grid_side_length
from .rng import SeededRng

MAX_PROBES = 8


@dataclass
class EventEstimate:
    direction: str
    event: int
    p_hat: float
    q_hat: float
    violation: float
    slack: float


@dataclass
class AuditReport:
    mechanism: str
    pair: str
    epsilon: float
    delta: float
    runs: int
    events: list = field(default_factory=list)
    max_violation: float = -math.inf
    slack_at_max: float = 0.0
    passed: bool = True

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.mechanism} eps={self.epsilon:g} delta={self.delta:g} "
                f"R={self.runs} max_violation={self.max_violation:.3e} "
                f"slack={self.slack_at_max:.3e} ({self.pair})")


def _codes(bits: np.ndarray) -> np.ndarray:
    weights = 1 << np.arange(bits.shape[1], dtype=np.int64)
    return (bits.astype(np.int64) * weights).sum(axis=1)


# -- batched mechanism runners ---------------------------------------------------
# Each returns an (R, n_probes) array of output bits, drawing noise from ``rng``
# in the same order as R consecutive calls of the corresponding fit function.

def _run_pcl(sample, probe, epsilon, delta, rng, runs, noise_factor=1.0, **_):
    grid, signed, _ = grid_vote_table(sample)
    noise = rng.laplace(noise_factor / epsilon, (runs, len(signed)))
    decisions = signed + noise > 0
    return decisions[:, grid.flat_index(grid.cell_ids(probe))]


def _run_pcl_broken(sample, probe, epsilon, delta, rng, runs, **_):
    """Negative control: noise scale 1/(10 eps), far too small for eps-DP."""
    return _run_pcl(sample, probe, epsilon, delta, rng, runs, noise_factor=0.1)


def _run_pcl2(sample, probe, epsilon, delta, rng, runs, space=None, **_):
    part = packing_for(space or euclidean_cube(sample.dim), len(sample))
    ids = part.cell_ids(sample.points)
    k = len(part)
    signed = np.bincount(ids, weights=sample.labels - 0.5, minlength=k)
    noise = rng.laplace(1.0 / epsilon, (runs, k))
    return (signed + noise > 0)[:, part.cell_ids(probe)]


def _occupied(ids: np.ndarray):
    keys, counts = np.unique(ids, return_counts=True)
    return keys, counts


def _run_pcl2b(sample, probe, epsilon, delta, rng, runs, space=None, **_):
    part = packing_for(space or euclidean_cube(sample.dim), len(sample))
    ids = part.cell_ids(sample.points)
    thr = stability_threshold(epsilon, delta)
    ckeys, ccounts = _occupied(ids)
    ykeys, ycounts = _occupied(ids[sample.labels == 1])
    noise = rng.laplace(2.0 / epsilon, (runs, len(ckeys) + len(ykeys)))
    c_hat = ccounts + noise[:, :len(ckeys)]
    y_hat = ycounts + noise[:, len(ckeys):]
    c_hat = np.where(c_hat < thr, 0.0, c_hat)
    y_hat = np.where(y_hat < thr, 0.0, y_hat)
    probe_cells = part.cell_ids(probe)
    out = np.zeros((runs, len(probe_cells)), dtype=bool)
    for j, cell in enumerate(probe_cells):
        ci = np.searchsorted(ckeys, cell)
        if ci == len(ckeys) or ckeys[ci] != cell:
            continue
        c = c_hat[:, ci]
        yi = np.searchsorted(ykeys, cell)
        y = (y_hat[:, yi] if yi < len(ykeys) and ykeys[yi] == cell
             else np.zeros(runs))
        out[:, j] = np.minimum(y, c) > c / 2
    return out


def _run_pcde(sample, probe, epsilon, delta, rng, runs, **_):
    n, d = len(sample), sample.dim
    grid = GridPartition(d, grid_side_length(n, d))
    cells = grid.cell_ids(sample.points)
    keys, counts = np.unique(cells, axis=0, return_counts=True)
    thr = stability_threshold(epsilon, delta)
    noisy = counts + rng.laplace(2.0 / epsilon, (runs, len(counts)))
    nonzero = noisy >= thr
    out = np.zeros((runs, len(probe)), dtype=bool)
    for j, cell in enumerate(grid.cell_ids(probe)):
        match = np.flatnonzero(np.all(keys == cell, axis=1))
        if len(match):
            out[:, j] = nonzero[:, match[0]]
    return out


MECHANISMS = {
    "pcl": (_run_pcl, 0),
    "pcl_broken": (_run_pcl_broken, 0),
    "pcl2": (_run_pcl2, 0),
    "pcl2b": (_run_pcl2b, 2),
    "pcde": (_run_pcde, 1),
}
"""name -> (runner, number of stability histograms; 0 for pure-DP mechanisms)."""


def check_neighbors(s: LabeledSample, s_prime: LabeledSample) -> int:
    """Number of differing records; raises unless the samples are replace-one neighbors."""
    if len(s) != len(s_prime) or s.dim != s_prime.dim:
        raise InvalidInputError("neighboring samples must have equal size and dimension")
    differ = np.any(s.points != s_prime.points, axis=1) | (s.labels != s_prime.labels)
    k = int(np.count_nonzero(differ))
    if k > 1:
        raise InvalidInputError(f"samples differ in {k} records, not at most one")
    return k


def _estimate(bits_a: np.ndarray, bits_b: np.ndarray, epsilon: float, delta: float,
              runs: int) -> list[EventEstimate]:
    ca, cb = _codes(bits_a), _codes(bits_b)
    size = 1 << bits_a.shape[1]
    pa = np.bincount(ca, minlength=size) / runs
    pb = np.bincount(cb, minlength=size) / runs
    e = math.exp(epsilon)
    events = []
    for direction, p, q in (("S>S'", pa, pb), ("S'>S", pb, pa)):
        for code in np.flatnonzero((p > 0) | (q > 0)):
            ph, qh = float(p[code]), float(q[code])
            # Variance at the observed point or its projection onto the
            # boundary p = e^eps q + delta, whichever is larger.
            pv = min(1.0, max(ph, e * qh + delta))
            qv = min(1.0, max(qh, (ph - delta) / e))
            sigma = math.sqrt((pv * (1 - pv) + e * e * qv * (1 - qv)) / runs)
            events.append(EventEstimate(direction, int(code), ph, qh,
                                        ph - e * qh - delta, 3.0 * sigma))
    return events


def audit_privacy(mechanism: str, s: LabeledSample, s_prime: LabeledSample,
                  epsilon: float, delta: float, runs: int, rng: SeededRng,
                  probe=None, space=None) -> AuditReport:
    """Estimate output-event frequencies on a neighboring pair and test the DP inequality.

    ``epsilon`` and ``delta`` are the guarantee being tested. For ``pcl2b``
    (two stability histograms) the mechanism is run at (epsilon/2, delta/2)
    per histogram, so the tested guarantee is the composed one.
    """
    if mechanism not in MECHANISMS:
        raise InvalidParameterError(f"unknown mechanism {mechanism!r}")
    if runs < 1:
        raise InvalidParameterError("runs must be positive")
    runner, n_hist = MECHANISMS[mechanism]
    if n_hist and not delta > 0:
        raise InvalidParameterError(f"{mechanism} needs delta > 0")
    n_diff = check_neighbors(s, s_prime)
    if probe is None:
        probe = (np.arange(4) + 0.5) / 4
    probe = as_points(probe, s.dim)
    if len(probe) > MAX_PROBES:
        raise InvalidParameterError(f"at most {MAX_PROBES} probe points")
    eps_run, delta_run = (epsilon / n_hist, delta / n_hist) if n_hist > 1 else (epsilon, delta)
    bits_a = runner(s, probe, eps_run, delta_run, rng.spawn("S"), runs, space=space)
    bits_b = runner(s_prime, probe, eps_run, delta_run, rng.spawn("S'"), runs, space=space)
    events = _estimate(bits_a, bits_b, epsilon, delta, runs)
    worst = max(events, key=lambda ev: ev.violation - ev.slack)
    return AuditReport(
        mechanism, f"n={len(s)}, differing records={n_diff}", epsilon, delta, runs,
        events, worst.violation, worst.slack,
        passed=all(ev.violation <= ev.slack for ev in events))
