"""Experiment harness and command-line entry point.

Subcommands ``converge``, ``density``, ``ssl`` and ``audit`` each read a YAML
config (``--config``), and write a CSV (``--out``). ``--seed`` and
``--threads`` override the config. Exit status: 0 success, 2 configuration
error, 3 audit FAIL.

Every trial draws from its own stream ``derive_stream_id(seed, n, trial)``,
and results are reduced in (n, trial) order, so outputs are byte-identical
for a given seed whatever the thread count. See ``docs/harness.md`` for the
config and CSV schemas.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import synthetic
from .audit import MECHANISMS, audit_privacy
from .classify import LabeledSample, pcl2_fit, pcl2b_fit, pcl_fit
from .density import histogram_density, l1_distance, normalize_or_uniform, pcde_fit
from .dp import PrivacyBudget
from .errors import ConfigError, InvalidInputError, InvalidParameterError
from .partition import euclidean_cube, space_from_spec, unit_circle
from .rng import SeededRng, derive_stream_id
from .ssl import SslBudgets, private_cssl

CLASSIFIERS = ("pcl", "pcl2", "pcl2b")
NEEDS_DELTA = ("pcl2b", "pcde", "cssl")

CONVERGE_COLUMNS = ["algorithm", "n", "trials", "mean_excess_error", "stderr_excess_error",
                    "mean_error", "bayes_error", "mean_eta_gap", "occupancy_k",
                    "mean_p_occupancy_le_k"]
DENSITY_COLUMNS = ["algorithm", "n", "trials", "delta", "mean_l1", "stderr_l1",
                   "mean_l1_normalized", "stderr_l1_normalized", "mean_inside_error",
                   "stderr_inside_error", "inside_bound_unit", "occupancy_k",
                   "mean_p_occupancy_le_k"]
SSL_COLUMNS = ["m_labeled", "n_unlabeled", "n_synthetic", "trials", "success_rate",
               "stderr", "mean_error"]
AUDIT_COLUMNS = ["direction", "event", "p_hat", "q_hat", "violation", "slack", "ok"]


# -- delta schedules ---------------------------------------------------------------

@dataclass(frozen=True)
class DeltaSchedule:
    """delta(n) from a small family whose asymptotics are known in closed form.

    ``inverse_power``: n ** -power. ``constant``: value. ``exp_root``:
    2 ** -(n ** exponent), which decays slower than 2 ** -sqrt(n) only for
    exponent < 1/2.
    """

    kind: str = "inverse_power"
    power: float = 2.0
    value: float = 1e-6
    exponent: float = 0.25

    def __call__(self, n: int) -> float:
        if self.kind == "inverse_power":
            return float(n) ** -self.power
        if self.kind == "constant":
            return self.value
        return 2.0 ** -(float(n) ** self.exponent)

    def check(self):
        """Raise unless delta(n) is omega(2 ** -sqrt(n)) and below 1 for n > 1."""
        if self.kind == "inverse_power":
            if not self.power > 0:
                raise ConfigError("inverse_power schedule needs power > 0")
        elif self.kind == "constant":
            if not 0 < self.value < 1:
                raise ConfigError("constant delta must lie in (0, 1)")
        elif self.kind == "exp_root":
            if not 0 < self.exponent < 0.5:
                raise ConfigError("exp_root schedule needs 0 < exponent < 1/2 "
                                  "to decay slower than 2^-sqrt(n)")
        else:
            raise ConfigError(f"unknown delta schedule {self.kind!r}")

    @classmethod
    def parse(cls, spec) -> "DeltaSchedule":
        if spec is None or spec == "inverse_square":
            return cls()
        if isinstance(spec, (int, float)):
            return cls("constant", value=float(spec))
        if isinstance(spec, dict):
            kind = spec.get("schedule", "inverse_power")
            return cls(kind, float(spec.get("power", 2.0)), float(spec.get("value", 1e-6)),
                       float(spec.get("exponent", 0.25)))
        raise ConfigError(f"cannot parse delta schedule {spec!r}")


# -- configuration -----------------------------------------------------------------

@dataclass
class ExperimentConfig:
    algorithm: str
    distribution: dict
    n_grid: list = field(default_factory=list)
    trials: int = 30
    epsilon: float = 1.0
    delta: DeltaSchedule = field(default_factory=DeltaSchedule)
    m_test: int = 10_000
    seed: int = 0
    out: str | None = None
    occupancy_k: int = 5
    space: dict | None = None
    threads: int = 1
    # semi-supervised benchmark
    m_grid: list = field(default_factory=list)
    n_unlabeled: int = 10_000
    n_synthetic: int | None = None
    alpha: float = 0.1
    beta: float = 0.1

    def __post_init__(self):
        if self.algorithm not in CLASSIFIERS + ("pcde", "cssl"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.m_test < 1:
            raise ConfigError("m_test must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        grid = self.m_grid if self.algorithm == "cssl" else self.n_grid
        if not grid:
            raise ConfigError("empty sample-size grid")
        if any(int(v) != v or v < 1 for v in grid):
            raise ConfigError("sample sizes must be positive integers")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("sample-size grid must be strictly increasing")
        if self.algorithm == "cssl":
            if not (0 < self.alpha < 1 and 0 < self.beta < 1):
                raise ConfigError("alpha and beta must lie in (0, 1)")
            if self.n_unlabeled < 1:
                raise ConfigError("n_unlabeled must be >= 1")
        if self.algorithm in NEEDS_DELTA:
            self.delta.check()
        try:
            self.dist = synthetic.from_spec(self.distribution)
        except (InvalidParameterError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad distribution spec: {exc}") from exc

    @classmethod
    def from_mapping(cls, data: dict, **overrides) -> "ExperimentConfig":
        data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "algorithm" not in data or "distribution" not in data:
            raise ConfigError("config needs 'algorithm' and 'distribution'")
        data["delta"] = DeltaSchedule.parse(data.get("delta"))
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def metric_space(self):
        if self.space is not None:
            return space_from_spec(self.space)
        if self.dist.domain == "circle":
            return unit_circle()
        return euclidean_cube(self.dist.dim)


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return data


# -- trials ------------------------------------------------------------------------

def trial_rng(seed: int, n: int, trial: int) -> SeededRng:
    return SeededRng(seed, derive_stream_id(seed, n, trial))


def _map(fn, tasks, threads: int):
    if threads <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def classifier_trial(config: ExperimentConfig, n: int, trial: int) -> dict:
    """Fit one classifier on n fresh examples and evaluate it on m_test more."""
    dist = config.dist
    rng = trial_rng(config.seed, n, trial)
    sample = dist.sample(n, rng.spawn("train"))
    fit_rng = rng.spawn("fit")
    if config.algorithm == "pcl":
        clf = pcl_fit(sample, config.epsilon, fit_rng)
    elif config.algorithm == "pcl2":
        clf = pcl2_fit(sample, config.metric_space(), config.epsilon, fit_rng)
    else:
        budget = PrivacyBudget(config.epsilon, config.delta(n))
        clf = pcl2b_fit(sample, config.metric_space(), budget, fit_rng)
    test = dist.sample(config.m_test, rng.spawn("test"))
    wrong = clf.predict(test.points) != test.labels
    gap = np.abs(dist.eta(test.points) - clf.eta_hat(test.points))
    m = config.m_test
    return {
        "n": n, "trial": trial,
        "error": float(wrong.mean()),
        "error_sd": float(wrong.std(ddof=0)) / math.sqrt(m),
        "excess": float(wrong.mean()) - dist.bayes_error,
        "eta_gap": float(gap.mean()),
        "eta_gap_sd": float(gap.std(ddof=0)) / math.sqrt(m),
        "occupancy": float(np.mean(clf.cell_counts(test.points) <= config.occupancy_k)),
    }


def density_trial(config: ExperimentConfig, n: int, trial: int) -> dict:
    """Fit the private density estimator on n points and measure exact L1 errors."""
    dist = config.dist
    rng = trial_rng(config.seed, n, trial)
    points = dist.sample_points(n, rng.spawn("train"))
    delta = config.delta(n)
    raw = pcde_fit(points, PrivacyBudget(config.epsilon, delta), rng.spawn("fit"))
    normalized = normalize_or_uniform(raw)
    d = dist.dim
    cube = (np.zeros(d), np.ones(d))
    inside = l1_distance(raw, histogram_density(points, raw.grid), region=cube)
    test = dist.sample_points(config.m_test, rng.spawn("test"))
    grid = raw.grid
    keys, counts = np.unique(grid.cell_ids(points), axis=0, return_counts=True)
    table = {tuple(k): c for k, c in zip(keys.tolist(), counts.tolist())}
    occ = np.array([table.get(tuple(c), 0) for c in grid.cell_ids(test).tolist()])
    return {
        "n": n, "trial": trial, "delta": delta,
        "l1": l1_distance(raw, dist),
        "l1_normalized": l1_distance(normalized, dist),
        "inside": inside,
        "inside_bound_unit": math.log(1.0 / delta) / (config.epsilon * math.sqrt(n)),
        "occupancy": float(np.mean(occ <= config.occupancy_k)),
        "degenerate": normalized.degenerate,
    }


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(v.mean()), se


def convergence_trials(config: ExperimentConfig) -> list[dict]:
    fn = density_trial if config.algorithm == "pcde" else classifier_trial
    tasks = [(n, t) for n in config.n_grid for t in range(config.trials)]
    if config.algorithm in ("pcl2", "pcl2b"):
        # Build packings up front; the cache is not written concurrently then.
        for n in config.n_grid:
            from .classify import packing_for
            packing_for(config.metric_space(), n)
    return _map(lambda nt: fn(config, *nt), tasks, config.threads)


def run_convergence(config: ExperimentConfig, trials: list[dict] | None = None) -> list[dict]:
    """One CSV row per n, averaging independent fit/evaluate trials."""
    if config.algorithm == "cssl":
        raise ConfigError("use run_ssl_benchmark for algorithm 'cssl'")
    trials = trials if trials is not None else convergence_trials(config)
    rows = []
    for n in config.n_grid:
        group = [t for t in trials if t["n"] == n]
        if config.algorithm == "pcde":
            l1, l1_se = _mean_se([t["l1"] for t in group])
            l1n, l1n_se = _mean_se([t["l1_normalized"] for t in group])
            ins, ins_se = _mean_se([t["inside"] for t in group])
            rows.append({
                "algorithm": "pcde", "n": n, "trials": len(group), "delta": group[0]["delta"],
                "mean_l1": l1, "stderr_l1": l1_se,
                "mean_l1_normalized": l1n, "stderr_l1_normalized": l1n_se,
                "mean_inside_error": ins, "stderr_inside_error": ins_se,
                "inside_bound_unit": group[0]["inside_bound_unit"],
                "occupancy_k": config.occupancy_k,
                "mean_p_occupancy_le_k": _mean_se([t["occupancy"] for t in group])[0],
            })
        else:
            ex, ex_se = _mean_se([t["excess"] for t in group])
            rows.append({
                "algorithm": config.algorithm, "n": n, "trials": len(group),
                "mean_excess_error": ex, "stderr_excess_error": ex_se,
                "mean_error": _mean_se([t["error"] for t in group])[0],
                "bayes_error": config.dist.bayes_error,
                "mean_eta_gap": _mean_se([t["eta_gap"] for t in group])[0],
                "occupancy_k": config.occupancy_k,
                "mean_p_occupancy_le_k": _mean_se([t["occupancy"] for t in group])[0],
            })
    return rows


def ssl_trial(config: ExperimentConfig, m: int, trial: int) -> dict:
    dist = config.dist
    rng = trial_rng(config.seed, m, trial)
    labeled = dist.sample(m, rng.spawn("labeled"))
    unlabeled = dist.sample_points(config.n_unlabeled, rng.spawn("unlabeled"))
    n_syn = config.n_synthetic or SslBudgets.from_rates(
        config.epsilon, config.alpha, config.beta).n_unlabeled
    budgets = SslBudgets(m, n_syn, config.alpha, config.beta)
    budget = PrivacyBudget(config.epsilon, config.delta(config.n_unlabeled))
    h = private_cssl(labeled, unlabeled, budget, budgets, rng.spawn("fit"))
    err = h.error(dist)
    return {"m": m, "trial": trial, "n_synthetic": n_syn, "error": err,
            "success": err <= config.alpha}


def run_ssl_benchmark(config: ExperimentConfig) -> list[dict]:
    """Success rate (error <= alpha) of the private semi-supervised learner per m."""
    if config.algorithm != "cssl":
        raise ConfigError("run_ssl_benchmark needs algorithm 'cssl'")
    if config.dist.dim != 1:
        raise ConfigError("the threshold learner needs a 1-d distribution")
    tasks = [(m, t) for m in config.m_grid for t in range(config.trials)]
    results = _map(lambda mt: ssl_trial(config, *mt), tasks, config.threads)
    rows = []
    for m in config.m_grid:
        group = [r for r in results if r["m"] == m]
        rate, se = _mean_se([float(r["success"]) for r in group])
        rows.append({"m_labeled": m, "n_unlabeled": config.n_unlabeled,
                     "n_synthetic": group[0]["n_synthetic"], "trials": len(group),
                     "success_rate": rate, "stderr": se,
                     "mean_error": _mean_se([r["error"] for r in group])[0]})
    return rows


# -- audits ------------------------------------------------------------------------

def _sample_from(data) -> LabeledSample:
    return LabeledSample(np.asarray(data["points"], dtype=float), data["labels"])


def audit_from_mapping(data: dict, seed: int | None = None):
    """Run the audit described by a config mapping; returns the report."""
    try:
        mechanism = data["mechanism"]
        s = _sample_from(data["sample"])
        if "sample_prime" in data:
            s_prime = _sample_from(data["sample_prime"])
        else:
            nb = data["neighbor"]
            points, labels = s.points.copy(), s.labels.copy()
            i = int(nb["index"])
            if "point" in nb:
                points[i] = np.asarray(nb["point"], dtype=float)
            if "label" in nb:
                labels[i] = int(nb["label"])
            s_prime = LabeledSample(points, labels)
        epsilon = float(data.get("epsilon", 1.0))
        delta = float(data.get("delta", 0.0))
        runs = int(data.get("runs", 200_000))
        probe = data.get("probe")
        space = space_from_spec(data["space"]) if "space" in data else None
        seed = int(seed if seed is not None else data.get("seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad audit config: {exc}") from exc
    if mechanism not in MECHANISMS:
        raise ConfigError(f"unknown mechanism {mechanism!r}")
    try:
        return audit_privacy(mechanism, s, s_prime, epsilon, delta, runs,
                             SeededRng(seed, derive_stream_id("audit")), probe, space)
    except (InvalidInputError, InvalidParameterError) as exc:
        raise ConfigError(str(exc)) from exc


# -- CSV -----------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- CLI -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privuc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("converge", "classifier consistency sweep"),
                        ("density", "density-estimation L1 sweep"),
                        ("ssl", "private semi-supervised benchmark"),
                        ("audit", "empirical privacy audit")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (u64)")
        p.add_argument("--out", default=None, help="CSV output path (default stdout)")
        p.add_argument("--threads", type=int, default=None, help="worker threads")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = load_config(args.config)
        if args.command == "audit":
            report = audit_from_mapping(data, args.seed)
            rows = [{"direction": e.direction, "event": e.event, "p_hat": e.p_hat,
                     "q_hat": e.q_hat, "violation": e.violation, "slack": e.slack,
                     "ok": e.violation <= e.slack} for e in report.events]
            _emit(to_csv(rows, AUDIT_COLUMNS), args.out or data.get("out"))
            print(report.summary(), file=sys.stderr)
            return 0 if report.passed else 3
        config = ExperimentConfig.from_mapping(data, seed=args.seed, out=args.out,
                                               threads=args.threads)
        expected = {"converge": CLASSIFIERS, "density": ("pcde",), "ssl": ("cssl",)}
        if config.algorithm not in expected[args.command]:
            raise ConfigError(f"algorithm {config.algorithm!r} does not belong to "
                              f"'{args.command}'")
        if args.command == "ssl":
            text = to_csv(run_ssl_benchmark(config), SSL_COLUMNS)
        else:
            columns = DENSITY_COLUMNS if args.command == "density" else CONVERGE_COLUMNS
            text = to_csv(run_convergence(config), columns)
        _emit(text, config.out)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
