import numpy as np
import pytest
import yaml

from privuc.errors import ConfigError
from privuc.harness import (
    CONVERGE_COLUMNS,
    DENSITY_COLUMNS,
    DeltaSchedule,
    ExperimentConfig,
    audit_from_mapping,
    main,
    run_convergence,
    run_ssl_benchmark,
    to_csv,
)

CB = {"kind": "checkerboard", "d": 1, "cells_per_axis": 2, "p": 0.1}
UNIFORM = {"kind": "box_mixture", "d": 1, "boxes": [{"lo": [0.0], "hi": [1.0], "weight": 1.0}]}


def cfg(**kw):
    base = {"algorithm": "pcl", "distribution": CB, "n_grid": [100, 1000], "trials": 3,
            "m_test": 1000, "seed": 5}
    base.update(kw)
    return ExperimentConfig.from_mapping(base)


def write(tmp_path, data, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


@pytest.mark.parametrize("bad", [
    {"trials": 0},
    {"n_grid": [100, 100]},
    {"n_grid": [1000, 100]},
    {"n_grid": []},
    {"epsilon": 0.0},
    {"algorithm": "knn"},
    {"bogus": 1},
    {"distribution": {"kind": "checkerboard", "p": 0.7}},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        cfg(**bad)


def test_ssl_config_rejects_zero_m():
    with pytest.raises(ConfigError):
        cfg(algorithm="cssl", distribution={"kind": "threshold"}, m_grid=[0, 10])


def test_delta_schedule_validation():
    DeltaSchedule.parse({"schedule": "inverse_power", "power": 2}).check()
    DeltaSchedule.parse({"schedule": "exp_root", "exponent": 0.3}).check()
    for spec in ({"schedule": "exp_root", "exponent": 0.5}, {"schedule": "constant", "value": 0},
                 {"schedule": "inverse_power", "power": 0}, {"schedule": "other"}):
        with pytest.raises(ConfigError):
            DeltaSchedule.parse(spec).check()
    assert DeltaSchedule()(100) == pytest.approx(1e-4)
    # Accepted for pcde even though 1/n^2 < 2^-sqrt(n) at n = 100.
    assert DeltaSchedule()(100) < 2 ** -10
    cfg(algorithm="pcde", distribution=UNIFORM)
    with pytest.raises(ConfigError):
        cfg(algorithm="pcde", distribution=UNIFORM, delta={"schedule": "exp_root", "exponent": 1})


def test_convergence_is_deterministic_across_threads():
    a = to_csv(run_convergence(cfg()), CONVERGE_COLUMNS)
    b = to_csv(run_convergence(cfg(threads=3)), CONVERGE_COLUMNS)
    c = to_csv(run_convergence(cfg(trials=1)), CONVERGE_COLUMNS)
    d = to_csv(run_convergence(cfg(trials=1)), CONVERGE_COLUMNS)
    assert a == b
    assert c == d
    assert a.splitlines()[0] == ",".join(CONVERGE_COLUMNS)
    assert len(a.splitlines()) == 3


def test_seed_changes_output():
    a = to_csv(run_convergence(cfg()), CONVERGE_COLUMNS)
    b = to_csv(run_convergence(cfg(seed=6)), CONVERGE_COLUMNS)
    assert a != b


@pytest.mark.parametrize("algorithm", ["pcl2", "pcl2b"])
def test_voronoi_algorithms_run(algorithm):
    rows = run_convergence(cfg(algorithm=algorithm))
    assert [r["n"] for r in rows] == [100, 1000]
    assert all(0 <= r["mean_error"] <= 1 for r in rows)


def test_density_rows():
    rows = run_convergence(cfg(algorithm="pcde", distribution=UNIFORM, n_grid=[100, 10_000]))
    assert rows[0]["delta"] == pytest.approx(1e-4)
    assert rows[1]["mean_l1"] < rows[0]["mean_l1"]
    text = to_csv(rows, DENSITY_COLUMNS)
    assert text.splitlines()[0] == ",".join(DENSITY_COLUMNS)


def test_pcde_l1_non_increasing_on_uniform():
    rows = run_convergence(cfg(algorithm="pcde", distribution=UNIFORM,
                               n_grid=[100, 1000, 10_000], trials=30))
    for a, b in zip(rows, rows[1:]):
        ci = 1.96 * np.hypot(a["stderr_l1"], b["stderr_l1"])
        assert b["mean_l1"] <= a["mean_l1"] + ci


def test_ssl_success_non_decreasing_in_m():
    c = cfg(algorithm="cssl", distribution={"kind": "threshold"}, m_grid=[10, 40, 160],
            trials=100, delta={"schedule": "constant", "value": 1e-4}, n_unlabeled=5000)
    rows = run_ssl_benchmark(c)
    for a, b in zip(rows, rows[1:]):
        ci = 1.96 * np.hypot(a["stderr"], b["stderr"])
        assert b["success_rate"] >= a["success_rate"] - ci
    assert rows[-1]["success_rate"] >= 0.9


def test_cli_converge_writes_csv(tmp_path):
    out = tmp_path / "o.csv"
    path = write(tmp_path, {"algorithm": "pcl", "distribution": CB, "n_grid": [100],
                            "trials": 2, "m_test": 500})
    assert main(["converge", "--config", path, "--out", str(out), "--seed", "9"]) == 0
    first = out.read_text()
    assert main(["converge", "--config", path, "--out", str(out), "--seed", "9",
                 "--threads", "2"]) == 0
    assert out.read_text() == first
    assert first.startswith("algorithm,n,")


def test_cli_config_errors(tmp_path, capsys):
    bad = write(tmp_path, {"algorithm": "pcl", "distribution": CB, "n_grid": [10, 5]})
    assert main(["converge", "--config", bad]) == 2
    assert main(["converge", "--config", str(tmp_path / "missing.yaml")]) == 2
    wrong = write(tmp_path, {"algorithm": "pcde", "distribution": UNIFORM, "n_grid": [10]}, "w.yaml")
    assert main(["converge", "--config", wrong]) == 2
    not_map = tmp_path / "x.yaml"
    not_map.write_text("- 1\n- 2\n")
    assert main(["density", "--config", str(not_map)]) == 2
    assert "config error" in capsys.readouterr().err


AUDIT = {"mechanism": "pcl",
         "sample": {"points": [[0.25], [0.25], [0.75], [0.75]], "labels": [1, 0, 1, 1]},
         "neighbor": {"index": 1, "label": 1}, "epsilon": 1.0, "runs": 50_000, "seed": 1}


def test_cli_audit_exit_codes(tmp_path):
    good = write(tmp_path, AUDIT, "a.yaml")
    out = tmp_path / "a.csv"
    assert main(["audit", "--config", good, "--out", str(out)]) == 0
    assert out.read_text().startswith("direction,event,p_hat")
    broken = write(tmp_path, {**AUDIT, "mechanism": "pcl_broken"}, "b.yaml")
    assert main(["audit", "--config", broken, "--out", str(out)]) == 3
    far = write(tmp_path, {**AUDIT, "sample_prime": {"points": [[0.25]] * 4, "labels": [0] * 4}},
                "c.yaml")
    assert main(["audit", "--config", far]) == 2
    unknown = write(tmp_path, {**AUDIT, "mechanism": "nope"}, "d.yaml")
    assert main(["audit", "--config", unknown]) == 2


def test_audit_point_replacement():
    rep = audit_from_mapping({**AUDIT, "neighbor": {"index": 0, "point": [0.9]}})
    assert rep.passed


def test_bundled_configs_parse():
    import pathlib
    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    for path in sorted(root.glob("*.yaml")):
        data = yaml.safe_load(path.read_text())
        if "mechanism" in data:
            continue
        ExperimentConfig.from_mapping(data)


@pytest.mark.parametrize("algorithm", ["pcl", "pcl2"])
def test_occupancy_decreases_along_grid(algorithm):
    rows = run_convergence(cfg(algorithm=algorithm, n_grid=[30, 300, 3000], trials=10,
                               distribution={"kind": "checkerboard", "d": 2,
                                             "cells_per_axis": 2, "p": 0.1}))
    occ = [r["mean_p_occupancy_le_k"] for r in rows]
    assert occ[0] > occ[1] >= occ[2]
