from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scentree import (
    DiscreteMeasure,
    InputError,
    ScenarioLattice,
    ScenarioTree,
    TrajectoryFan,
    aberration,
    nested_distance,
    nested_vs_wasserstein_check,
    transport,
    tree_from_branching,
    wasserstein,
)
from scentree.distance import closest_nodes_lattice, closest_paths_tree, path_cost, path_measure

import oracles
from conftest import random_tree, tree_tuple


def grid_masses(rng, n, D=12):
    cuts = np.sort(rng.choice(np.arange(1, D), n - 1, replace=False))
    return [Fraction(int(x), D) for x in np.diff(np.concatenate([[0], cuts, [D]]))]


# ------------------------------------------------------------------ transport


def test_identical_measures_give_zero_with_diagonal_plan():
    P = DiscreteMeasure([0.0, 1.0, 3.0], [0.2, 0.3, 0.5])
    d, plan = wasserstein(P, P)
    assert d == 0.0
    assert np.allclose(plan.matrix, np.diag(P.masses))


@pytest.mark.parametrize("r", [1, 2, 3])
def test_dirac_to_dirac(r):
    d, _ = wasserstein(DiscreteMeasure([0.0], [1.0]), DiscreteMeasure([2.5], [1.0]), r)
    assert d == pytest.approx(2.5, abs=1e-12)


def test_two_point_example_against_vertex_enumeration():
    a, b = [0.5, 0.5], [0.25, 0.75]
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    expected = oracles.transport_oracle([Fraction(1, 2)] * 2, [Fraction(1, 4), Fraction(3, 4)], C)
    assert expected == 0.25
    d, _ = wasserstein(DiscreteMeasure([0.0, 1.0], a), DiscreteMeasure([0.0, 1.0], b), 1)
    assert d == pytest.approx(expected, abs=1e-12)


def test_mass_mismatch_is_input_error():
    with pytest.raises(InputError):
        transport([0.5, 0.5], [0.5, 0.6], np.zeros((2, 2)))


def test_zero_mass_atoms_are_dropped():
    plan, cost = transport([0.5, 0.0, 0.5], [1.0], np.array([[1.0], [100.0], [3.0]]))
    assert cost == pytest.approx(2.0)
    assert plan[1, 0] == 0.0


def test_degenerate_transport_terminates(each_backend):
    # all-equal masses and costs force degenerate pivots
    n = 6
    a = np.full(n, 1.0 / n)
    C = np.ones((n, n))
    C[np.arange(n), np.arange(n)[::-1]] = 0.0
    plan, cost = transport(a, a, C)
    assert cost == pytest.approx(0.0, abs=1e-12)


def test_random_pairs_match_lp_oracle(each_backend):
    rng = np.random.default_rng(11)
    for _ in range(60):
        n1, n2 = rng.integers(1, 7, 2)
        a = rng.random(n1)
        a /= a.sum()
        b = rng.random(n2)
        b /= b.sum()
        C = rng.random((n1, n2)) * 3
        plan, cost = transport(a, b, C)
        assert cost == pytest.approx(oracles.transport_lp(a, b, C), abs=1e-9)
        ra, rb = plan.sum(axis=1), plan.sum(axis=0)
        assert np.max(np.abs(ra - a)) < 1e-12 and np.max(np.abs(rb - b)) < 1e-12
        assert float(np.sum(plan * C)) == pytest.approx(cost, abs=1e-9)
        assert np.count_nonzero(plan > 0) <= n1 + n2 - 1


def test_random_pairs_match_vertex_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n1, n2 = rng.integers(1, 5, 2)
        a, b = grid_masses(rng, n1), grid_masses(rng, n2)
        C = rng.random((n1, n2))
        _, cost = transport([float(x) for x in a], [float(x) for x in b], C)
        assert cost == pytest.approx(oracles.transport_oracle(a, b, C), abs=1e-10)


measures = st.integers(1, 5).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-5, 5), min_size=n, max_size=n),
        st.lists(st.floats(0.01, 1), min_size=n, max_size=n),
    )
)


def to_measure(pair):
    atoms, w = pair
    w = np.array(w) / np.sum(w)
    return DiscreteMeasure(atoms, w)


@settings(max_examples=60, deadline=None)
@given(measures, measures, measures, st.sampled_from([1, 2]))
def test_wasserstein_metric_axioms(p, q, s, r):
    P, Q, S = to_measure(p), to_measure(q), to_measure(s)
    dpq, _ = wasserstein(P, Q, r)
    dqp, _ = wasserstein(Q, P, r)
    dqs, _ = wasserstein(Q, S, r)
    dps, _ = wasserstein(P, S, r)
    assert dpq >= 0
    assert dpq == pytest.approx(dqp, abs=1e-9)
    assert dps <= dpq + dqs + 1e-9
    assert wasserstein(P, P, r)[0] == pytest.approx(0.0, abs=1e-12)


def test_wasserstein_zero_iff_equal_after_merging():
    P = DiscreteMeasure([0.0, 0.0, 1.0], [0.25, 0.25, 0.5])
    Q = DiscreteMeasure([1.0, 0.0], [0.5, 0.5])
    assert wasserstein(P, Q)[0] == pytest.approx(0.0, abs=1e-12)
    R = DiscreteMeasure([1.0, 0.0], [0.4, 0.6])
    assert wasserstein(P, R)[0] > 0


def test_wasserstein_multidimensional():
    P = DiscreteMeasure([[0.0, 0.0]], [1.0])
    Q = DiscreteMeasure([[3.0, 4.0]], [1.0])
    assert wasserstein(P, Q)[0] == pytest.approx(5.0)


# ------------------------------------------------------------------ closest paths / aberration


def test_closest_path_on_own_path_has_zero_distance(each_backend):
    tree = random_tree(np.random.default_rng(3), T=4)
    xs = tree.state[tree.path_to(int(tree.leaves()[-1]))][None]
    nodes, dists, total = closest_paths_tree(tree, xs, 1.0)
    assert total == 0.0
    assert list(nodes[0]) == list(tree.path_to(int(tree.leaves()[-1])))


def test_closest_path_picks_nearer_child(each_backend):
    tree = ScenarioTree([-1, 0, 0], [1, 0.5, 0.5], [0.0, -1.0, 1.0])
    nodes, _, _ = closest_paths_tree(tree, np.array([[0.0, 0.2]]), 1.0)
    assert nodes[0, 1] == 2


def test_closest_path_tie_goes_to_smaller_index(each_backend):
    tree = ScenarioTree([-1, 0, 0], [1, 0.5, 0.5], [0.0, -1.0, 1.0])
    nodes, _, _ = closest_paths_tree(tree, np.array([[0.0, 0.0]]), 1.0)
    assert nodes[0, 1] == 1


def test_closest_path_matches_greedy_oracle(each_backend):
    rng = np.random.default_rng(8)
    for _ in range(20):
        tree = random_tree(rng, T=4, m=2)
        xs = rng.normal(size=(10, 4, 2)) * 2
        nodes, _, _ = closest_paths_tree(tree, xs, 2.0)
        for k in range(10):
            want = oracles.greedy_path_oracle(list(tree.pred), list(tree.state), xs[k])
            assert list(nodes[k]) == want


def test_aberration_of_own_paths_is_zero():
    tree = random_tree(np.random.default_rng(1), T=3)
    _, paths, _ = tree_paths_of(tree)
    fan = TrajectoryFan(tree.state[paths])
    assert aberration(fan, tree) == 0.0


def tree_paths_of(tree):
    from scentree.core import tree_paths

    return tree_paths(tree)


def test_aberration_single_path_tree():
    tree = tree_from_branching((1, 1, 1)).copy_with(state=np.array([[0.0], [1.0], [2.0]]))
    xi = np.array([[0.5, 0.0, 4.0]])
    assert aberration(TrajectoryFan(xi), tree, r=1) == pytest.approx(0.5 + 1.0 + 2.0)


def test_aberration_permutation_invariant():
    rng = np.random.default_rng(4)
    tree = random_tree(rng, T=3)
    data = rng.normal(size=(50, 3))
    a = aberration(TrajectoryFan(data), tree, r=2)
    b = aberration(TrajectoryFan(data[rng.permutation(50)]), tree, r=2)
    assert a == pytest.approx(b, rel=1e-12)


def test_lattice_closest_nodes(each_backend):
    lat = ScenarioLattice(
        [[[0.0]], [[-1.0], [1.0]], [[-2.0], [0.0], [2.0]]],
        [[[0.5, 0.5]], [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5]]],
    )
    xs = np.array([[[0.0], [0.9], [-1.7]], [[0.0], [0.0], [1.0]]])
    nodes, dists, _ = closest_nodes_lattice(lat, xs, 1.0)
    assert nodes.tolist() == [[0, 1, 0], [0, 0, 1]]
    assert dists[0] == pytest.approx(0.1 + 0.3)


# ------------------------------------------------------------------ nested distance


def test_nested_identical_is_exactly_zero(each_backend):
    rng = np.random.default_rng(0)
    for _ in range(10):
        tree = random_tree(rng, m=2)
        assert nested_distance(tree, tree) == 0.0


def test_nested_single_path_trees():
    a = tree_from_branching((1, 1, 1)).copy_with(state=np.array([[0.0], [1.0], [2.0]]))
    b = tree_from_branching((1, 1, 1)).copy_with(state=np.array([[1.0], [1.0], [5.0]]))
    assert nested_distance(a, b, 1) == pytest.approx(1.0 + 0.0 + 3.0)
    assert nested_distance(a, b, 2) == pytest.approx(np.sqrt(1.0 + 9.0))


def test_nested_height_mismatch():
    with pytest.raises(InputError):
        nested_distance(tree_from_branching((1, 2)), tree_from_branching((1, 2, 2)))


def test_binary_vs_fan_nested_matches_brute_force(binary_tree, fan_tree, each_backend):
    want = oracles.nested_oracle(oracles.binary_instance(), oracles.fan_instance(), 1.0)
    got = nested_distance(binary_tree, fan_tree, 1.0)
    assert got == pytest.approx(want, abs=1e-8)
    assert got == pytest.approx(1.75, abs=1e-12)


def test_binary_vs_fan_nested_matches_path_coupling_lp(binary_tree, fan_tree):
    want = oracles.nested_path_lp(oracles.binary_instance(), oracles.fan_instance(), 1.0)
    assert nested_distance(binary_tree, fan_tree, 1.0) == pytest.approx(want, abs=1e-8)


def test_binary_vs_fan_nested_exceeds_wasserstein(binary_tree, fan_tree):
    nd, wd = nested_vs_wasserstein_check(binary_tree, fan_tree, 1.0)
    assert wd == pytest.approx(0.0, abs=1e-12)
    assert nd > wd


def test_nested_matches_recursive_oracle_on_random_trees(each_backend):
    rng = np.random.default_rng(21)
    for _ in range(25):
        T = int(rng.integers(2, 4))
        A = random_tree(rng, T=T, zero_prob=True)
        B = random_tree(rng, T=T, zero_prob=True)
        for r in (1.0, 2.0):
            want = oracles.nested_oracle(tree_tuple(A), tree_tuple(B), r, oracles.transport_lp)
            assert nested_distance(A, B, r) == pytest.approx(want, abs=1e-9)


def test_nested_matches_path_lp_on_random_trees():
    rng = np.random.default_rng(22)
    for _ in range(10):
        A = random_tree(rng, T=3)
        B = random_tree(rng, T=3)
        want = oracles.nested_path_lp(tree_tuple(A), tree_tuple(B), 1.0)
        assert nested_distance(A, B, 1.0) == pytest.approx(want, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from([1.0, 2.0]))
def test_nested_symmetric_and_dominates_wasserstein(seed, r):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(2, 4))
    A, B = random_tree(rng, T=T, m=2), random_tree(rng, T=T, m=2)
    assert nested_distance(A, B, r) == pytest.approx(nested_distance(B, A, r), abs=1e-9)
    nested_vs_wasserstein_check(A, B, r)


def test_two_stage_nested_equals_wasserstein():
    rng = np.random.default_rng(9)
    for _ in range(20):
        A, B = random_tree(rng, T=2), random_tree(rng, T=2)
        nd, wd = nested_vs_wasserstein_check(A, B, 1.0)
        assert nd == pytest.approx(wd, abs=1e-9)


def test_fans_nested_equals_wasserstein():
    rng = np.random.default_rng(10)
    for _ in range(10):
        trees = []
        for _ in range(2):
            n = int(rng.integers(2, 5))
            pred = [-1] + [0] * n + list(range(1, n + 1))
            w = rng.random(n) + 0.1
            prob = [1.0] + list(w / w.sum()) + [1.0] * n
            state = rng.normal(size=2 * n + 1)
            state[0] = 0.0
            trees.append(ScenarioTree(pred, prob, state))
        nd, wd = nested_vs_wasserstein_check(*trees, r=1.0)
        assert nd == pytest.approx(wd, abs=1e-9)


def test_path_measure_and_cost():
    tree = tree_from_branching((1, 2)).copy_with(state=np.array([[0.0], [1.0], [-1.0]]))
    x, p = path_measure(tree)
    assert x.shape == (2, 2, 1) and np.allclose(p, 0.5)
    assert path_cost(x, x, 1.0)[0, 1] == pytest.approx(2.0)
