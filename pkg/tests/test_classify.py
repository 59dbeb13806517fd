import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from privuc.classify import (
    LabeledSample,
    PartitionClassifier,
    PluginClassifier,
    decide_cell,
    empirical_error,
    grid_vote_table,
    pcl2_fit,
    pcl2b_decide,
    pcl2b_fit,
    pcl_fit,
    plugin_classify,
)
from privuc.dp import PrivacyBudget
from privuc.errors import InvalidInputError, InvalidParameterError
from privuc.partition import euclidean_cube, unit_circle
from privuc.rng import SeededRng
from privuc.synthetic import bayes_classifier, make_box_mixture, make_checkerboard


def signed(labels):
    return float(np.sum(np.asarray(labels) - 0.5))


def test_decide_cell_examples():
    assert decide_cell(signed([1, 1, 1, 0]), 0.0) == 1
    assert decide_cell(signed([1, 1, 0, 0]), 0.0) == 0
    assert decide_cell(signed([0, 0, 0, 0]), 3.0) == 1
    assert decide_cell(0.0, 0.0) == 0


def test_labeled_sample_validation():
    with pytest.raises(InvalidInputError):
        LabeledSample(np.zeros((3, 1)), [0, 1])
    with pytest.raises(InvalidInputError):
        LabeledSample(np.zeros((2, 1)), [0, 2])


def test_pcl_uses_four_cells_at_n16():
    s = LabeledSample(np.linspace(0, 1, 16).reshape(-1, 1), [0, 1] * 8)
    clf = pcl_fit(s, 1.0, SeededRng(0))
    assert clf.partition.side == pytest.approx(0.25)
    assert len(clf.decisions) == 4
    assert len(clf.votes.noise) == 4


def test_pcl_rejects_points_outside_cube():
    with pytest.raises(InvalidInputError):
        pcl_fit(LabeledSample([[1.2]], [1]), 1.0, SeededRng(0))
    with pytest.raises(InvalidParameterError):
        pcl_fit(LabeledSample([[0.2]], [1]), 0.0, SeededRng(0))


def test_pcl_matches_manual_computation():
    x = np.array([[0.1], [0.2], [0.3], [0.6], [0.9]])
    s = LabeledSample(x, [1, 1, 0, 0, 1])
    w = SeededRng(4).laplace(1.0, 3)  # n=5 -> r = 5**-0.5, three cells
    clf = pcl_fit(s, 1.0, SeededRng(4))
    # cells: [0, .447) holds 0.1, 0.2, 0.3; [.447, .894) holds 0.6; the last holds 0.9
    sums = np.array([0.5 + 0.5 - 0.5, -0.5, 0.5])
    expected = (sums + w > 0).astype(int)
    assert [clf.decisions[(k,)] for k in range(3)] == expected.tolist()
    np.testing.assert_array_equal(clf.votes.signed_sum, sums)


def test_empty_cell_is_a_coin_flip():
    s = LabeledSample(np.full((16, 1), 0.1), [1] * 16)
    hits = sum(pcl_fit(s, 1.0, SeededRng(i)).decisions[(3,)] for i in range(100_000))
    assert hits / 100_000 == pytest.approx(0.5, abs=0.01)


def test_vote_table_invariant():
    dist = make_checkerboard(2, 4, 0.2)
    s = dist.sample(500, SeededRng(1))
    _, sums, counts = grid_vote_table(s)
    assert np.all(np.abs(sums) <= counts / 2)
    assert counts.sum() == 500


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), moved=st.lists(st.floats(0.0, 0.2499), min_size=1, max_size=5),
       labels=st.lists(st.integers(0, 1), min_size=5, max_size=5))
def test_pcl_locality(seed, moved, labels):
    # n = 16 so cells have width 1/4; changing points inside cell 0 must not
    # affect decisions in cells 1..3.
    base = np.concatenate([np.full(5, 0.1), np.linspace(0.3, 0.99, 11)]).reshape(-1, 1)
    y = np.array([1, 0, 1, 0, 1] + [1] * 11)
    a = pcl_fit(LabeledSample(base, y), 1.0, SeededRng(seed))
    pts = base.copy()
    pts[:len(moved), 0] = moved
    y2 = y.copy()
    y2[:5] = labels
    b = pcl_fit(LabeledSample(pts, y2), 1.0, SeededRng(seed))
    for k in (1, 2, 3):
        assert a.decisions[(k,)] == b.decisions[(k,)]


def test_classifier_round_trip():
    s = make_checkerboard(2, 2, 0.1).sample(300, SeededRng(0))
    clf = pcl_fit(s, 1.0, SeededRng(1))
    back = PartitionClassifier.from_dict(json.loads(json.dumps(clf.to_dict())))
    q = np.random.default_rng(0).random((500, 2))
    np.testing.assert_array_equal(back.predict(q), clf.predict(q))
    clf2 = pcl2b_fit(s, euclidean_cube(2), PrivacyBudget(1.0, 0.01), SeededRng(2))
    back2 = PartitionClassifier.from_dict(json.loads(json.dumps(clf2.to_dict())))
    np.testing.assert_array_equal(back2.predict(q), clf2.predict(q))


def test_eta_hat_reproduces_decisions():
    s = make_checkerboard(1, 4, 0.2).sample(2000, SeededRng(3))
    clf = pcl_fit(s, 1.0, SeededRng(4))
    q = np.linspace(0, 1, 101).reshape(-1, 1)
    np.testing.assert_array_equal(clf.predict(q), (clf.eta_hat(q) > 0.5).astype(int))


# -- Voronoi variants ----------------------------------------------------------------

def test_pcl2_worked_example():
    s = LabeledSample(np.linspace(0, 1, 16).reshape(-1, 1), [1] * 16)
    clf = pcl2_fit(s, euclidean_cube(1), 1.0, SeededRng(0))
    assert clf.partition.radius == pytest.approx(0.5)
    np.testing.assert_allclose(clf.partition.centers[:, 0], [0.0, 0.5, 1.0])
    assert len(clf.votes.noise) == 3


@pytest.mark.parametrize("b", [0, 1])
def test_pcl2_unanimous_with_small_noise(b):
    s = LabeledSample(np.linspace(0, 1, 16).reshape(-1, 1), [b] * 16)
    for seed in range(1000):
        if np.all(np.abs(SeededRng(seed).laplace(0.1, 3)) < 0.5):
            break
    clf = pcl2_fit(s, euclidean_cube(1), 10.0, SeededRng(seed))
    occupied = [k for k, c in clf.occupancy.items() if c > 0]
    assert occupied and all(clf.decisions[k] == b for k in occupied)


def test_pcl2_single_point():
    for seed in range(20):
        s = LabeledSample([[0.3]], [1])
        clf = pcl2_fit(s, euclidean_cube(1), 1.0, SeededRng(seed))
        (cell,) = clf.partition.cell_ids([[0.3]])
        w = clf.votes.noise[cell]
        assert clf.decisions[int(cell)] == int(0.5 + w > 0)


def test_pcl2_on_circle():
    from privuc.synthetic import make_circle_checkerboard
    dist = make_circle_checkerboard(2, 0.0)
    s = dist.sample(10_000, SeededRng(0))
    clf = pcl2_fit(s, unit_circle(), 1.0, SeededRng(1))
    assert empirical_error(clf, dist, 10_000, SeededRng(2)) < 0.15


def test_pcl2b_decision_rule():
    assert pcl2b_decide(10.0, 12.0) == 1
    assert pcl2b_decide(10.0, 4.0) == 0
    assert pcl2b_decide(0.0, 0.0) == 0


def test_pcl2b_absent_cell_predicts_zero():
    s = LabeledSample(np.full((64, 1), 0.05), [1] * 64)
    clf = pcl2b_fit(s, euclidean_cube(1), PrivacyBudget(1.0, 0.01), SeededRng(0))
    assert clf.predict([[0.95]])[0] == 0
    cell = int(clf.partition.cell_ids([[0.95]])[0])
    assert cell not in clf.decisions


def test_pcl2b_requires_delta():
    s = LabeledSample([[0.1]], [1])
    with pytest.raises(InvalidParameterError):
        pcl2b_fit(s, euclidean_cube(1), PrivacyBudget(1.0, 0.0), SeededRng(0))


def test_pcl2b_eta_is_clamped_ratio():
    s = make_checkerboard(1, 2, 0.0).sample(5000, SeededRng(5))
    clf = pcl2b_fit(s, euclidean_cube(1), PrivacyBudget(1.0, 1e-6), SeededRng(6))
    assert all(0.0 <= v <= 1.0 for v in clf.eta_table.values())


# -- plug-in rule -----------------------------------------------------------------

def test_plugin_examples():
    assert plugin_classify(lambda x: np.full(len(np.atleast_1d(x)), 0.9), [0.3]) == 1
    assert plugin_classify(lambda x: np.full(len(np.atleast_1d(x)), 0.5), [0.3]) == 0
    h = PluginClassifier(lambda x: np.full(len(x), 0.9))
    assert np.all(h.predict(np.linspace(0, 1, 5)) == 1)


def test_empirical_error_extremes():
    zero = PluginClassifier(lambda x: np.zeros(len(x)))
    d0 = make_box_mixture([((0.0,), (1.0,), 1.0)], 1, eta=0.0)
    d1 = make_box_mixture([((0.0,), (1.0,), 1.0)], 1, eta=1.0)
    assert empirical_error(zero, d0, 1000, SeededRng(0)) == 0.0
    assert empirical_error(zero, d1, 1000, SeededRng(0)) == 1.0
    with pytest.raises(InvalidParameterError):
        empirical_error(zero, d0, 0, SeededRng(0))


def test_bayes_rule_error_on_checkerboard():
    dist = make_checkerboard(1, 2, 0.1)
    err = empirical_error(bayes_classifier(dist), dist, 10_000, SeededRng(7))
    assert err == pytest.approx(0.1, abs=0.01)


def test_plugin_bound_single_fit():
    dist = make_checkerboard(1, 4, 0.1)
    m = 20_000
    for seed in range(10):
        clf = pcl_fit(dist.sample(500, SeededRng(seed)), 1.0, SeededRng(seed, 1))
        test = dist.sample(m, SeededRng(seed, 2))
        wrong = clf.predict(test.points) != test.labels
        gap = np.abs(dist.eta(test.points) - clf.eta_hat(test.points))
        sigma = math.sqrt(wrong.var() / m + 4 * gap.var() / m)
        assert wrong.mean() - dist.bayes_error <= 2 * gap.mean() + 3 * sigma
