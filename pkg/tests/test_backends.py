"""The numba kernels and their numpy fallbacks must agree."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import scentree
from scentree import (
    KernelSpec,
    TrajectoryFan,
    lattice_approximation,
    nested_distance,
    transport,
    tree_approximation,
    tree_from_branching,
)
from scentree.distance import closest_nodes_lattice, closest_paths_tree
from scentree.kernels import generate
from scentree.processes import ProcessSampler, ProcessSpec

from conftest import random_tree


def both(fn):
    with scentree.backend("numba"):
        a = fn()
    with scentree.backend("numpy"):
        b = fn()
    return a, b


def test_backend_switch_and_env_name():
    assert scentree.get_backend() in ("numba", "numpy")
    with scentree.backend("numpy"):
        assert scentree.get_backend() == "numpy"
    with pytest.raises(ValueError):
        scentree.set_backend("fortran")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_transport_identical(seed):
    rng = np.random.default_rng(seed)
    a = rng.random(int(rng.integers(1, 8)))
    b = rng.random(int(rng.integers(1, 8)))
    a, b = a / a.sum(), b / b.sum()
    C = rng.random((a.size, b.size))
    (pa, va), (pb, vb) = both(lambda: transport(a, b, C))
    assert va == vb
    assert np.array_equal(pa, pb)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from([1.0, 2.0]))
def test_nested_distance_identical(seed, r):
    rng = np.random.default_rng(seed)
    A = random_tree(rng, T=3, zero_prob=True)
    B = random_tree(rng, T=3)
    da, db = both(lambda: nested_distance(A, B, r))
    assert da == pytest.approx(db, rel=1e-12, abs=1e-14)


def test_closest_paths_identical():
    rng = np.random.default_rng(0)
    tree = random_tree(rng, T=4, m=2)
    xs = rng.normal(size=(500, 4, 2)) * 2
    (na, _, ta), (nb, _, tb) = both(lambda: closest_paths_tree(tree, xs, 2.0))
    assert np.array_equal(na, nb)
    assert ta == pytest.approx(tb, rel=1e-12)


def test_tree_sa_identical():
    spec = ProcessSpec("running_maximum", T=4, seed=4, start="zero")
    init = tree_from_branching((1, 3, 3, 3))
    (ta, ra), (tb, rb) = both(lambda: tree_approximation(init, ProcessSampler(spec), 20_000))
    assert np.array_equal(ra.visits[0], rb.visits[0])
    np.testing.assert_allclose(ta.state, tb.state, rtol=1e-12, atol=1e-12)
    assert ra.distance == pytest.approx(rb.distance, rel=1e-10)


def test_lattice_sa_identical():
    spec = ProcessSpec("gaussian_walk", T=4, seed=5, start="zero")
    (la, _), (lb, _) = both(
        lambda: lattice_approximation((1, 3, 4, 5), ProcessSampler(spec), 10_000, seed=1)
    )
    for p, q in zip(la.trans, lb.trans):
        np.testing.assert_allclose(p, q, rtol=1e-12, atol=1e-15)
    for s, u in zip(la.states, lb.states):
        np.testing.assert_allclose(s, u, rtol=1e-12, atol=1e-12)
    xs = ProcessSampler(spec).draw(200)
    (na, _, _), (nb, _, _) = both(lambda: closest_nodes_lattice(la, xs, 1.0))
    assert np.array_equal(na, nb)


@pytest.mark.parametrize("family", ["gaussian", "epanechnikov", "logistic"])
@pytest.mark.parametrize("markovian", [False, True])
def test_kernel_generator_identical(family, markovian):
    rng = np.random.default_rng(1)
    fan = TrajectoryFan(rng.normal(size=(80, 4, 2)).cumsum(axis=1))
    spec = KernelSpec(family=family, m=2)
    U = rng.random((300, 4))
    Z = rng.random((300, 4, 2))
    (oa, fa), (ob, fb) = both(lambda: generate(fan, spec, U, Z, markovian))
    np.testing.assert_allclose(oa, ob, rtol=1e-10, atol=1e-12)
    assert np.array_equal(fa, fb)
