import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scentree import InputError, TrajectoryFan, grow_adaptive, kmeans, nested_cluster
from scentree.clustering import weighted_median
from scentree.processes import ConstantSampler

import oracles


# ------------------------------------------------------------------ k-means


def test_single_mean_is_centroid():
    res = kmeans([0.0, 2.0], 1)
    assert res.means[0, 0] == 1.0


def test_two_clusters_against_enumeration():
    pts = [0.0, 0.1, 5.0, 5.1]
    res = kmeans(pts, 2, seed=0)
    assert sorted(res.means[:, 0]) == pytest.approx([0.05, 5.05])
    want = oracles.kmeans_brute(pts, 2)
    assert want == pytest.approx(0.0025)
    assert res.objective == pytest.approx(want, abs=1e-12)


def test_one_mean_per_point_has_zero_objective():
    pts = np.array([3.0, -1.0, 7.5, 2.0])
    assert kmeans(pts, 4, seed=1).objective == 0.0


def test_more_means_than_distinct_points_is_flagged():
    res = kmeans([1.0, 1.0, 2.0], 3, seed=0)
    assert "duplicate_means" in res.flags
    assert res.objective == 0.0


def test_weights_shift_the_centroid():
    res = kmeans([0.0, 1.0], 1, weights=[3.0, 1.0])
    assert res.means[0, 0] == pytest.approx(0.25)


def test_r1_uses_weighted_median():
    res = kmeans([0.0, 1.0, 10.0], 1, r=1)
    assert res.means[0, 0] == 1.0
    assert weighted_median(np.array([0.0, 1.0, 2.0]), np.array([1.0, 1.0, 5.0])) == 2.0


def test_kmeans_deterministic_given_seed():
    pts = np.random.default_rng(0).normal(size=(200, 2))
    a, b = kmeans(pts, 4, seed=7), kmeans(pts, 4, seed=7)
    assert np.array_equal(a.means, b.means)
    assert np.array_equal(a.assignment, b.assignment)


def test_kmeans_input_errors():
    with pytest.raises(InputError):
        kmeans([1.0], 0)
    with pytest.raises(InputError):
        kmeans([1.0, 2.0], 1, weights=[-1.0, 1.0])


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=2, max_size=7),
    st.integers(1, 3),
    st.sampled_from([1.0, 2.0]),
    st.integers(0, 1000),
)
def test_kmeans_objective_monotone_and_not_below_optimum(pts, k, r, seed):
    res = kmeans(pts, k, r=r, seed=seed)
    hist = np.array(res.history)
    assert np.all(np.diff(hist) <= 1e-12 * np.maximum(1.0, hist[:-1]))
    assert res.objective >= oracles.kmeans_brute(pts, k, r) - 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_kmeans_monotone_multidimensional_r1(seed):
    pts = np.random.default_rng(seed).normal(size=(40, 3))
    hist = np.array(kmeans(pts, 4, r=1, seed=seed).history)
    assert np.all(np.diff(hist) <= 1e-12 * np.maximum(1.0, hist[:-1]))


def test_assignment_ties_go_to_smaller_index():
    res = kmeans([0.0, 1.0, 2.0], 2, init=[[0.0], [2.0]], max_iter=0)
    assert res.assignment.tolist() == [0, 0, 1]


# ------------------------------------------------------------------ nested clustering


def fan_instance(copies=1):
    paths = np.array([[0, 10, 28], [0, 10, 22], [0, 10, 21], [0, 10, 20]], dtype=float)
    return TrajectoryFan(np.repeat(paths, copies, axis=0))


def test_one_then_four_means():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tree = nested_cluster(fan_instance(), (1, 1, 4))
    assert tree.state[1, 0] == 10.0
    assert sorted(tree.state[2:, 0]) == [20.0, 21.0, 22.0, 28.0]
    assert np.all(tree.prob[2:] == 0.25)


def test_four_then_one_gives_duplicate_stage_two_means():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tree, rep = nested_cluster(fan_instance(), (1, 4, 1), return_report=True)
    assert any(f["flag"] == "duplicate_means" for f in rep.flags)
    assert tree.validate().ok


def test_identical_trajectories_collapse():
    fan = TrajectoryFan(np.tile([1.0, 2.0, 3.0, 4.0], (30, 1)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tree = nested_cluster(fan, (1, 2, 2, 2))
    for i in range(tree.n):
        assert tree.state[i, 0] == fan.data[0, tree.stage[i] - 1, 0]
    inner = np.flatnonzero(tree.n_children > 0)
    for i in inner:
        kids = tree.children(int(i))
        assert sorted(tree.prob[kids])[-1] == 1.0
    assert tree.validate().ok


def test_two_modes_recover_mixture_weights():
    rng = np.random.default_rng(12)
    N = 200
    first = rng.random(N) < 0.3
    second = rng.random(N) < 0.6
    x2 = np.where(first, -10.0, 10.0) + rng.normal(0, 0.3, N)
    x3 = x2 + np.where(second, -5.0, 5.0) + rng.normal(0, 0.3, N)
    fan = TrajectoryFan(np.column_stack([np.zeros(N), x2, x3]))
    tree = nested_cluster(fan, (1, 2, 2), seed=3)
    stage2 = list(tree.stage_nodes(2))
    low = min(stage2, key=lambda i: tree.state[i, 0])
    assert tree.prob[low] == pytest.approx(first.mean(), abs=1e-12)
    assert abs(tree.prob[low] - 0.3) < 0.1
    for node in stage2:
        kids = tree.children(node)
        down = min(kids, key=lambda i: tree.state[i, 0])
        mask = (x2 < 0) == (tree.state[node, 0] < 0)
        assert tree.prob[down] == pytest.approx(second[mask].mean(), abs=1e-12)
        assert abs(tree.prob[down] - 0.6) < 0.1


def test_discrete_fan_reproduced_exactly():
    rng = np.random.default_rng(2)
    # conditional supports: 3 values at stage 2, 2 per node at stage 3
    s2 = np.array([-4.0, 0.0, 5.0])
    s3 = {0: [-6.0, -3.0], 1: [1.0, 2.0], 2: [4.0, 9.0]}
    rows = []
    for _ in range(120):
        i = int(rng.integers(3))
        rows.append([1.0, s2[i], s3[i][int(rng.integers(2))]])
    data = np.array(rows)
    tree, rep = nested_cluster(TrajectoryFan(data), (1, 3, 2), return_report=True)
    assert np.all(rep.objectives() == 0.0)
    for node in tree.stage_nodes(2):
        v = tree.state[node, 0]
        at = data[:, 1] == v
        assert tree.prob[node] == at.mean()
        for c in tree.children(node):
            assert tree.prob[c] == (data[at, 2] == tree.state[c, 0]).mean()


def test_assignment_conserves_mass():
    rng = np.random.default_rng(1)
    fan = TrajectoryFan(rng.normal(size=(300, 4)).cumsum(axis=1))
    tree, rep = nested_cluster(fan, (1, 3, 3, 3), seed=1, return_report=True)
    by_stage = {}
    for d in rep.nodes:
        by_stage[d["stage"]] = by_stage.get(d["stage"], 0) + d["samples"]
    assert all(v == 300 for v in by_stage.values())
    assert tree.validate().ok


def test_few_samples_warn_and_empty_nodes_flagged():
    fan = TrajectoryFan(np.array([[0.0, 1.0, 2.0], [0.0, 1.0, 3.0]]))
    with pytest.warns(UserWarning):
        tree, rep = nested_cluster(fan, (1, 3, 2), return_report=True)
    flags = {f["flag"] for f in rep.flags}
    assert "empty_node_seeded" in flags
    assert tree.validate().ok


def test_stage_mismatch():
    with pytest.raises(InputError):
        nested_cluster(fan_instance(), (1, 2))


# ------------------------------------------------------------------ adaptive


def test_infinite_budget_gives_binary_tree():
    fan = TrajectoryFan(np.random.default_rng(0).normal(size=(100, 3)))
    tree, rep = grow_adaptive(fan, np.inf)
    assert all(tree.n_children[i] == 2 for i in np.flatnonzero(tree.n_children))


def test_degenerate_data_binary_with_zero_sibling():
    fan = TrajectoryFan(np.ones((50, 3)))
    tree, rep = grow_adaptive(fan, 0.5)
    inner = np.flatnonzero(tree.n_children > 0)
    assert all(tree.n_children[i] == 2 for i in inner)
    reached = tree.unconditional_prob() > 0
    for i in inner[reached[inner]]:
        assert sorted(tree.prob[tree.children(int(i))].tolist()) == [0.0, 1.0]
    assert np.all(rep.objectives() == 0.0)


def test_three_atoms_need_three_children():
    fan = TrajectoryFan(np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 2.0]] * 10))
    tree, rep = grow_adaptive(fan, 0.1, r=1)
    assert tree.n_children[0] == 3
    k2 = kmeans(fan.data[:, 1], 2, r=1, seed=0).objective
    assert k2 == pytest.approx(oracles.kmeans_brute([0.0, 1.0, 2.0], 2, r=1))
    assert k2 == pytest.approx(1 / 3) and k2 > 0.1
    assert rep.objectives()[0] == 0.0


def test_budget_miss_is_flagged_and_best_kept():
    fan = TrajectoryFan(np.random.default_rng(3).normal(size=(200, 2)))
    tree, rep = grow_adaptive(fan, 1e-9, max_branching=3)
    assert any(f["flag"] == "budget_missed" for f in rep.flags)
    assert tree.n_children[0] == 3


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 2.0))
def test_adaptive_budgets_met_unless_flagged(seed, eps):
    fan = TrajectoryFan(np.random.default_rng(seed).normal(size=(60, 3)).cumsum(axis=1))
    tree, rep = grow_adaptive(fan, eps, max_branching=5, seed=seed)
    flagged = {f["node"] for f in rep.flags}
    for d in rep.nodes:
        if d["objective"] is not None and d["node"] not in flagged:
            assert d["objective"] <= eps


def test_adaptive_accepts_sampler():
    tree, _ = grow_adaptive(ConstantSampler([0.0, 1.0, 2.0]), 0.1, n_samples=20)
    assert tree.T == 3 and tree.validate().ok
