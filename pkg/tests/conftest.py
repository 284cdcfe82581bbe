import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

import scentree
from scentree import ScenarioTree

import oracles


@pytest.fixture(params=["numba", "numpy"])
def each_backend(request):
    """Run a test once per backend."""
    with scentree.backend(request.param):
        yield request.param


def as_tree(t) -> ScenarioTree:
    pred, prob, state = t
    return ScenarioTree(pred, prob, np.asarray(state, dtype=float))


def random_tree(rng, T=None, max_children=3, m=1, zero_prob=False) -> ScenarioTree:
    """Small random layered tree in breadth-first order."""
    T = T or int(rng.integers(2, 4))
    pred, prob = [-1], [1.0]
    frontier = [0]
    for _ in range(T - 1):
        new = []
        for node in frontier:
            k = int(rng.integers(1, max_children + 1))
            w = rng.random(k) + 0.05
            if zero_prob and k > 1 and rng.random() < 0.3:
                w[-1] = 0.0
            w = w / w.sum()
            for p in w:
                pred.append(node)
                prob.append(float(p))
                new.append(len(pred) - 1)
        frontier = new
    state = rng.normal(size=(len(pred), m)) * 2.0
    return ScenarioTree(pred, prob, state)


def tree_tuple(tree: ScenarioTree):
    return list(tree.pred), list(tree.prob), list(tree.state)


@pytest.fixture
def binary_tree():
    return as_tree(oracles.binary_instance())


@pytest.fixture
def fan_tree():
    return as_tree(oracles.fan_instance())


ACCEPTANCE: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=int):
        terminalreporter.write_line(ACCEPTANCE[key])
