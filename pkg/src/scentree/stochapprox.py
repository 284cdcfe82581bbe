"""Stochastic approximation of scenario trees and scenario lattices.

Each iteration takes one fresh trajectory ``xi``, finds the closest path of the
model, accumulates the path distance and moves the selected states towards
``xi`` with step ``alpha_k = a / (c + k)``.  Probabilities are visit-count
ratios.  The distance estimate is ``(c_E / K)^(1/r)`` with
``c_E = sum_k (sum_t d_t)^r``, distances measured before the update.

Trajectories are drawn by the sampler in blocks and handed to a compiled
kernel, so both backends see exactly the same inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._accel import njit
from .clustering import kmeans, nested_cluster, node_seed
from .core import (
    BranchingStructure,
    ScenarioLattice,
    ScenarioTree,
    TrajectoryFan,
    build_tree_skeleton,
)
from .distance import _as_batch, closest_paths_tree, pack_lattice_states
from .errors import InputError, NumericalError

BLOCK = 16384


@dataclass(frozen=True)
class StepSizeSchedule:
    """Harmonic step sizes ``alpha_k = a / (c + k)``, ``k = 1, 2, ...``."""

    a: float = 1.0
    c: float = 30.0

    def __post_init__(self):
        if not self.a > 0 or not self.c >= 0:
            raise InputError("step sizes need a > 0 and c >= 0")
        if self.a / (self.c + 1.0) > 1.0:
            raise InputError(f"alpha_1 = {self.a / (self.c + 1.0)!r} exceeds 1")

    def __call__(self, k):
        return self.a / (self.c + np.asarray(k, dtype=float))

    def to_dict(self) -> dict:
        return {"a": float(self.a), "c": float(self.c)}


@dataclass
class FitReport:
    K: int
    r: float
    cost_accum: float
    schedule: StepSizeSchedule
    seed: int | None = None
    visits: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    K_requested: int | None = None

    @property
    def distance(self) -> float:
        if self.K == 0:
            return float("nan")
        return max(self.cost_accum / self.K, 0.0) ** (1.0 / self.r)

    def to_dict(self) -> dict:
        return {
            "K": int(self.K),
            "r": float(self.r),
            "cost_accum": float(self.cost_accum),
            "distance": float(self.distance),
            "schedule": self.schedule.to_dict(),
            "seed": self.seed,
            "flags": list(self.flags),
            "K_requested": int(self.K_requested if self.K_requested is not None else self.K),
            "visits": [np.asarray(v).tolist() for v in self.visits],
        }


# --------------------------------------------------------------------------- #
# Trees


def closest_path_tree(tree: ScenarioTree, xi, r: float = 1.0) -> np.ndarray:
    """Sequentially closest path ``(i_1, ..., i_T)`` for one trajectory."""
    nodes, _, _ = closest_paths_tree(tree, _as_batch(xi, tree.T, tree.m)[:1], r)
    return nodes[0]


def sa_update_tree(tree: ScenarioTree, xi, k: int, schedule=StepSizeSchedule()) -> ScenarioTree:
    """One convex update ``x <- (1 - alpha_k) x + alpha_k xi_t`` along the closest path."""
    alpha = float(schedule(k)) if callable(schedule) else float(schedule)
    if not 0 <= alpha <= 1:
        raise InputError("alpha must lie in [0, 1]")
    x = _as_batch(xi, tree.T, tree.m)[0]
    path = closest_path_tree(tree, x)
    state = np.array(tree.state)
    state[path] = (1.0 - alpha) * state[path] + alpha * x
    return tree.copy_with(state=state)


@njit
def _sa_tree_nb(state, first_child, n_children, xs, alphas, r, visits, count_from):
    K, T, m = xs.shape
    cost = 0.0
    path = np.empty(T, dtype=np.int64)
    for k in range(K):
        node = 0
        acc = 0.0
        for t in range(T):
            if t > 0:
                best = np.inf
                f = first_child[node]
                bi = f
                for c in range(f, f + n_children[node]):
                    d2 = 0.0
                    for q in range(m):
                        diff = state[c, q] - xs[k, t, q]
                        d2 += diff * diff
                    if d2 < best:
                        best = d2
                        bi = c
                node = bi
            d2 = 0.0
            for q in range(m):
                diff = state[node, q] - xs[k, t, q]
                d2 += diff * diff
            acc += np.sqrt(d2)
            path[t] = node
        cost += acc**r
        a = alphas[k]
        for t in range(T):
            node = path[t]
            for q in range(m):
                state[node, q] = (1.0 - a) * state[node, q] + a * xs[k, t, q]
            if k >= count_from:
                visits[node] += 1
    return cost


def _sa_tree_np(state, first_child, n_children, xs, alphas, r, visits, count_from):
    K, T, m = xs.shape
    cost = 0.0
    path = np.empty(T, dtype=np.int64)
    for k in range(K):
        x = xs[k]
        node = 0
        acc = 0.0
        for t in range(T):
            if t > 0:
                f = first_child[node]
                kids = state[f : f + n_children[node]]
                d2 = np.sum((kids - x[t]) ** 2, axis=1)
                node = f + int(np.argmin(d2))
            diff = state[node] - x[t]
            acc += np.sqrt(np.sum(diff * diff))
            path[t] = node
        cost += acc**r
        a = alphas[k]
        state[path] = (1.0 - a) * state[path] + a * x
        if k >= count_from:
            visits[path] += 1
    return cost


def _draw(sampler, n: int) -> np.ndarray:
    if n <= 0:
        return np.empty((0, sampler.T, sampler.m))
    return np.ascontiguousarray(np.asarray(sampler.draw(n), dtype=float))


def tree_approximation(
    initial: ScenarioTree,
    sampler,
    K: int,
    r: float = 2.0,
    schedule: StepSizeSchedule = StepSizeSchedule(),
    burn_in: bool = False,
    seed: int | None = None,
) -> tuple[ScenarioTree, FitReport]:
    """Refine a tree by ``K`` stochastic-approximation steps.

    Parameters
    ----------
    initial : ScenarioTree
        Topology and starting states; never modified.
    sampler : object with ``T``, ``m`` and ``draw(n)``
    K : int
        Iterations.  A finite sampler that runs dry stops the run early; the
        report then holds the actual count and a ``sampler_exhausted`` flag.
    burn_in : bool
        Exclude the first 10% of iterations from the visit counts.
    seed : int, optional
        Recorded in the report only; randomness lives in the sampler.

    Returns
    -------
    tree, report
        Conditional probabilities are ``visits(j) / visits(pred(j))``; groups
        under unvisited parents get probability 0 and are flagged.
    """
    if K < 1:
        raise InputError("K must be >= 1")
    if r < 1:
        raise InputError("r must be >= 1")
    if (sampler.T, sampler.m) != (initial.T, initial.m):
        raise InputError(
            f"sampler yields T={sampler.T}, m={sampler.m}; tree has T={initial.T}, m={initial.m}"
        )
    state = np.array(initial.state)
    visits = np.zeros(initial.n, dtype=np.int64)
    count_from = K // 10 if burn_in else 0
    kernel = _sa_tree_nb if _accel.use_numba() else _sa_tree_np
    fc = np.ascontiguousarray(initial.first_child)
    nc = np.ascontiguousarray(initial.n_children)
    done, cost, flags = 0, 0.0, []
    while done < K:
        want = min(BLOCK, K - done)
        xs = _draw(sampler, want)
        if xs.shape[0] == 0:
            flags.append("sampler_exhausted")
            break
        xs = _as_batch(xs, initial.T, initial.m)
        alphas = schedule(np.arange(done + 1, done + xs.shape[0] + 1))
        cost += kernel(state, fc, nc, xs, alphas, float(r), visits, count_from - done)
        done += xs.shape[0]
        if xs.shape[0] < want:
            flags.append("sampler_exhausted")
            break
    if done == 0:
        raise InputError("the sampler produced no trajectories")
    if not (np.isfinite(cost) and np.all(np.isfinite(state))):
        raise NumericalError("non-finite states or cost during tree approximation")

    prob = np.zeros(initial.n)
    prob[0] = 1.0
    parent_visits = visits[initial.pred[1:]]
    with np.errstate(invalid="ignore", divide="ignore"):
        prob[1:] = np.where(parent_visits > 0, visits[1:] / np.maximum(parent_visits, 1), 0.0)
    unvisited = [int(i) for i in np.flatnonzero((initial.n_children > 0) & (visits == 0))]
    if unvisited:
        flags.append({"unvisited_parents": unvisited})
    if burn_in:
        flags.append({"burn_in": int(count_from)})
    tree = initial.copy_with(prob=prob, state=state)
    report = FitReport(done, float(r), float(cost), schedule, seed, [visits], flags, K)
    return tree, report


# --------------------------------------------------------------------------- #
# Lattices


@njit
def _sa_lattice_nb(states, sizes, xs, alphas, r, fixed, counts, trans):
    K, T, m = xs.shape
    cost = 0.0
    sel = np.empty(T, dtype=np.int64)
    dist = np.empty(T)
    for k in range(K):
        acc = 0.0
        for t in range(T):
            best = np.inf
            bi = 0
            for i in range(sizes[t]):
                d2 = 0.0
                for q in range(m):
                    diff = states[t, i, q] - xs[k, t, q]
                    d2 += diff * diff
                if d2 < best:
                    best = d2
                    bi = i
            sel[t] = bi
            dist[t] = np.sqrt(best)
            acc += dist[t]
        cost += acc**r
        a = alphas[k]
        for t in range(T):
            i = sel[t]
            counts[t, i] += 1
            if t > 0:
                trans[t - 1, sel[t - 1], i] += 1
            if not fixed:
                step = min(a * r * dist[t] ** (r - 1.0), 1.0)
                for q in range(m):
                    states[t, i, q] -= step * (states[t, i, q] - xs[k, t, q])
    return cost


def _sa_lattice_np(states, sizes, xs, alphas, r, fixed, counts, trans):
    K, T, m = xs.shape
    cost = 0.0
    stages = np.arange(T)
    mask = np.arange(states.shape[1])[None, :] >= sizes[:, None]
    for k in range(K):
        x = xs[k]
        d2 = np.sum((states - x[:, None, :]) ** 2, axis=2)
        d2 = np.where(mask, np.inf, d2)
        sel = np.argmin(d2, axis=1)
        dist = np.sqrt(d2[stages, sel])
        cost += np.sum(dist) ** r
        counts[stages, sel] += 1
        trans[stages[:-1], sel[:-1], sel[1:]] += 1
        if not fixed:
            step = np.minimum(alphas[k] * r * dist ** (r - 1.0), 1.0)
            states[stages, sel] -= step[:, None] * (states[stages, sel] - x)
    return cost


def initial_lattice(b, pilot, seed: int = 0, method: str = "kmeans") -> ScenarioLattice:
    """Lattice whose stage-``t`` states summarise pilot trajectories.

    ``method="kmeans"`` uses k-means centres, ``"quantile"`` the per-dimension
    quantiles at levels ``(i + 1/2) / b_t``.  States are sorted by their first
    coordinate; transitions start uniform.
    """
    b = BranchingStructure(b)
    pilot = np.asarray(pilot.data if isinstance(pilot, TrajectoryFan) else pilot, dtype=float)
    if pilot.ndim == 2:
        pilot = pilot[:, :, None]
    if pilot.shape[1] != b.T:
        raise InputError(f"pilot has {pilot.shape[1]} stages, branching structure {b.T}")
    if method not in ("kmeans", "quantile"):
        raise InputError(f"unknown initialisation {method!r}")
    states = []
    for t, bt in enumerate(b):
        x = pilot[:, t]
        if bt == 1:
            c = x.mean(axis=0, keepdims=True)
        elif method == "quantile":
            c = np.quantile(x, (np.arange(bt) + 0.5) / bt, axis=0)
        else:
            c = kmeans(x, bt, r=2, seed=node_seed(seed, t, 2)).means
        c = c[np.lexsort(c.T[::-1])]
        states.append(c)
    trans = [np.full((b[t], b[t + 1]), 1.0 / b[t + 1]) for t in range(b.T - 1)]
    return ScenarioLattice(states, trans)


def lattice_approximation(
    initial,
    sampler,
    K: int,
    r: float = 2.0,
    schedule: StepSizeSchedule = StepSizeSchedule(),
    fixed_states: bool = False,
    seed: int = 0,
    n_pilot: int = 2000,
    init_method: str = "kmeans",
) -> tuple[ScenarioLattice, FitReport]:
    """Fit a scenario lattice by stochastic approximation.

    At every stage the closest node over the whole stage is selected (ties to
    the smaller index) and moved by ``x <- x - min(alpha_k r d^(r-1), 1)(x - xi_t)``
    unless ``fixed_states`` is set.  Transition probabilities are the
    transition counts normalised per row; rows never left stay zero and are
    flagged.

    ``initial`` is either a :class:`ScenarioLattice` or a branching structure;
    in the latter case the first ``n_pilot`` sampler draws seed the states via
    :func:`initial_lattice` and are not used as iterations.
    """
    if K < 1:
        raise InputError("K must be >= 1")
    if r < 1:
        raise InputError("r must be >= 1")
    flags = []
    if not isinstance(initial, ScenarioLattice):
        b = BranchingStructure(initial)
        pilot = _draw(sampler, n_pilot)
        if pilot.shape[0] == 0:
            raise InputError("the sampler produced no pilot trajectories")
        initial = initial_lattice(b, pilot, seed, init_method)
        flags.append({"pilot": int(pilot.shape[0])})
    if (sampler.T, sampler.m) != (initial.T, initial.m):
        raise InputError(
            f"sampler yields T={sampler.T}, m={sampler.m}; lattice has T={initial.T}, m={initial.m}"
        )
    states, sizes = pack_lattice_states(initial)
    T, bmax = states.shape[0], states.shape[1]
    counts = np.zeros((T, bmax), dtype=np.int64)
    trans = np.zeros((max(T - 1, 1), bmax, bmax), dtype=np.int64)
    kernel = _sa_lattice_nb if _accel.use_numba() else _sa_lattice_np
    done, cost = 0, 0.0
    while done < K:
        want = min(BLOCK, K - done)
        xs = _draw(sampler, want)
        if xs.shape[0] == 0:
            flags.append("sampler_exhausted")
            break
        xs = _as_batch(xs, T, initial.m)
        alphas = schedule(np.arange(done + 1, done + xs.shape[0] + 1))
        cost += kernel(states, sizes, xs, alphas, float(r), bool(fixed_states), counts, trans)
        done += xs.shape[0]
        if xs.shape[0] < want:
            flags.append("sampler_exhausted")
            break
    if done == 0:
        raise InputError("the sampler produced no trajectories")
    if not (np.isfinite(cost) and np.all(np.isfinite(states[~np.isnan(states)]))):
        raise NumericalError("non-finite states or cost during lattice approximation")

    out_states = [states[t, : sizes[t]].copy() for t in range(T)]
    out_trans, unvisited = [], []
    for t in range(T - 1):
        c = trans[t, : sizes[t], : sizes[t + 1]].astype(float)
        rows = c.sum(axis=1)
        p = np.divide(c, rows[:, None], out=np.zeros_like(c), where=rows[:, None] > 0)
        unvisited.extend([t + 1, int(i)] for i in np.flatnonzero(rows == 0))
        out_trans.append(p)
    if unvisited:
        flags.append({"unvisited_rows": unvisited})
    visits = [counts[t, : sizes[t]].copy() for t in range(T)]
    lattice = ScenarioLattice(out_states, out_trans, visits)
    report = FitReport(done, float(r), float(cost), schedule, seed, visits, flags, K)
    return lattice, report


def initial_tree(b, pilot, seed: int = 0, method: str = "cluster", r: float = 2.0) -> ScenarioTree:
    """Starting tree for :func:`tree_approximation` from pilot trajectories.

    ``"cluster"`` runs nested clustering on the pilot; ``"skeleton"`` writes
    randomly drawn pilot trajectories into the tree.
    """
    fan = pilot if isinstance(pilot, TrajectoryFan) else TrajectoryFan(pilot)
    if method == "cluster":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            return nested_cluster(fan, b, r=r, seed=seed)
    if method == "skeleton":
        return build_tree_skeleton(b, fan, seed=seed)
    raise InputError(f"unknown initialisation {method!r}")
