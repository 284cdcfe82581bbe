"""Nested clustering of trajectory fans and adaptive branching growth.

The building block is a weighted Lloyd k-means with k-means++ seeding.  The
objective of a set of means ``x_1..x_k`` is the weighted average
``sum_j w_j min_i d(xi_j, x_i)^r / sum_j w_j`` with Euclidean ``d``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import BranchingStructure, ScenarioTree, TrajectoryFan
from .errors import InputError

MAX_LLOYD_ITER = 50
REL_TOL = 1e-6


def node_seed(seed: int, node: int, salt: int = 0) -> np.random.SeedSequence:
    """Independent per-node seed, so results do not depend on visiting order."""
    return np.random.SeedSequence([int(seed), int(salt), int(node)])


# --------------------------------------------------------------------------- #
# k-means


@dataclass
class KMeansResult:
    means: np.ndarray
    assignment: np.ndarray
    objective: float
    n_iter: int
    history: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def counts(self, weights=None) -> np.ndarray:
        w = np.ones(self.assignment.shape[0]) if weights is None else weights
        return np.bincount(self.assignment, weights=w, minlength=self.means.shape[0])


def _dist_r(points: np.ndarray, means: np.ndarray, r: float) -> np.ndarray:
    diff = points[:, None, :] - means[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    if r == 2:
        return d2
    return np.sqrt(d2) ** r


def weighted_median(x: np.ndarray, w: np.ndarray) -> float:
    """Smallest value whose cumulative weight reaches half the total."""
    order = np.argsort(x, kind="stable")
    cw = np.cumsum(w[order])
    return float(x[order][np.searchsorted(cw, 0.5 * cw[-1], side="left")])


def _center(points: np.ndarray, w: np.ndarray, r: float) -> np.ndarray:
    if r == 2:
        return (w @ points) / w.sum()
    return np.array([weighted_median(points[:, q], w) for q in range(points.shape[1])])


def _plusplus(points, w, k, r, rng) -> np.ndarray:
    n = points.shape[0]
    first = rng.choice(n, p=w / w.sum())
    means = [points[first]]
    best = _dist_r(points, points[first][None], r)[:, 0]
    for _ in range(1, k):
        score = w * best
        total = score.sum()
        # all remaining mass sits on existing means: duplicate the heaviest point
        idx = rng.choice(n, p=score / total) if total > 0 else int(np.argmax(w))
        means.append(points[idx])
        best = np.minimum(best, _dist_r(points, points[idx][None], r)[:, 0])
    return np.array(means)


def kmeans(
    points,
    k: int,
    weights=None,
    r: float = 2.0,
    seed=0,
    max_iter: int = MAX_LLOYD_ITER,
    tol: float = REL_TOL,
    init=None,
) -> KMeansResult:
    """Weighted Lloyd k-means with k-means++ seeding.

    Parameters
    ----------
    points : array, shape (n, m) or (n,)
    k : int
        Number of means.
    weights : array, shape (n,), optional
        Nonnegative sample weights (default 1).
    r : float
        Distance order.  ``r=2`` updates by weighted centroids, any other value
        by component-wise weighted medians (exact for ``r=1`` in one dimension).
    seed : int or SeedSequence
    init : array, shape (k, m), optional
        Starting means instead of k-means++.

    Notes
    -----
    Assignment ties go to the smaller mean index.  An empty cluster is reseeded
    at the sample farthest from its mean.  A mean update is only accepted if it
    does not increase its cluster's cost, so the objective never increases.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if n == 0 or w.shape != (n,):
        raise InputError("need at least one point and one weight per point")
    if k < 1:
        raise InputError("k must be >= 1")
    if np.any(w < 0) or w.sum() <= 0:
        raise InputError("weights must be nonnegative with positive sum")
    if r < 1:
        raise InputError("r must be >= 1")
    flags = []
    distinct = np.unique(x[w > 0], axis=0).shape[0]
    if k > distinct:
        flags.append("duplicate_means")
    rng = np.random.default_rng(seed)
    means = _plusplus(x, w, k, r, rng) if init is None else np.array(init, dtype=float).reshape(k, -1)
    wsum = w.sum()

    D = _dist_r(x, means, r)
    assign = np.argmin(D, axis=1)
    obj = float(w @ D[np.arange(n), assign]) / wsum
    history = [obj]
    it = 0
    for it in range(1, max_iter + 1):
        new = means.copy()
        cluster_w = np.bincount(assign, weights=w, minlength=k)
        for i in range(k):
            sel = assign == i
            if cluster_w[i] > 0:
                cand = _center(x[sel], w[sel], r)
                old_cost = w[sel] @ _dist_r(x[sel], means[i][None], r)[:, 0]
                new_cost = w[sel] @ _dist_r(x[sel], cand[None], r)[:, 0]
                if new_cost <= old_cost:
                    new[i] = cand
        # reseed empty clusters at the farthest sample
        cluster_w = np.bincount(assign, weights=w, minlength=k)
        for i in np.flatnonzero(cluster_w == 0):
            Dn = _dist_r(x, new, r)
            near = Dn[np.arange(n), np.argmin(Dn, axis=1)]
            near = np.where(w > 0, near, -1.0)
            far = int(np.argmax(near))
            if near[far] > 0:
                new[i] = x[far]
                if "empty_cluster_reseeded" not in flags:
                    flags.append("empty_cluster_reseeded")
        means = new
        D = _dist_r(x, means, r)
        assign = np.argmin(D, axis=1)
        new_obj = float(w @ D[np.arange(n), assign]) / wsum
        history.append(new_obj)
        improvement = obj - new_obj
        obj = new_obj
        if improvement <= tol * max(abs(history[-2]), 1e-300):
            break
    return KMeansResult(means, assign, obj, it, history, flags)


# --------------------------------------------------------------------------- #
# Nested clustering


@dataclass
class BuildReport:
    """Per-node record of a tree construction."""

    nodes: list[dict] = field(default_factory=list)
    flags: list[dict] = field(default_factory=list)

    def flag(self, node: int, kind: str) -> None:
        self.flags.append({"node": int(node), "flag": kind})

    def objectives(self) -> np.ndarray:
        return np.array([d["objective"] for d in self.nodes if d.get("objective") is not None])

    def to_dict(self) -> dict:
        return {"nodes": self.nodes, "flags": self.flags}


class _TreeBuilder:
    """Accumulates nodes in breadth-first order."""

    def __init__(self, root_state):
        self.pred = [-1]
        self.prob = [1.0]
        self.state = [np.asarray(root_state, dtype=float)]

    def add(self, parent: int, prob: float, state) -> int:
        self.pred.append(parent)
        self.prob.append(float(prob))
        self.state.append(np.asarray(state, dtype=float))
        return len(self.pred) - 1

    def build(self) -> ScenarioTree:
        return ScenarioTree(self.pred, self.prob, np.array(self.state))


def _seed_from_nearest(fan: TrajectoryFan, t: int, target: np.ndarray) -> int:
    d = np.sum((fan.data[:, t] - target) ** 2, axis=1)
    return int(np.argmin(d))


def _grow(fan, branch_at, r, seed, report, salt):
    """Shared stage-wise driver; ``branch_at(t, node, samples)`` returns
    ``(child_states, child_probs, child_owner_labels or None, info)``."""
    data = fan.data
    N, T, _ = data.shape
    builder = _TreeBuilder(data[:, 0].mean(axis=0))
    owner = np.zeros(N, dtype=np.int64)
    frontier = [0]
    for t in range(T - 1):
        new_frontier = []
        new_owner = np.full(N, -1, dtype=np.int64)
        for node in frontier:
            samples = np.flatnonzero(owner == node)
            info = {"node": int(node), "stage": t + 1, "samples": int(samples.size)}
            if samples.size == 0:
                j = _seed_from_nearest(fan, t, builder.state[node])
                report.flag(node, "empty_node_seeded")
                states, probs = branch_at(t, node, None, j)
                labels = None
                info["objective"] = None
            else:
                states, probs, labels, obj, extra = branch_at(t, node, samples, None)
                info["objective"] = obj
                info.update(extra)
            report.nodes.append(info)
            children = [builder.add(node, p, s) for p, s in zip(probs, states)]
            new_frontier.extend(children)
            if labels is not None:
                new_owner[samples] = np.asarray(children)[labels]
        owner = new_owner
        frontier = new_frontier
    return builder.build()


def nested_cluster(
    fan: TrajectoryFan,
    b,
    r: float = 2.0,
    seed: int = 0,
    return_report: bool = False,
):
    """Scenario tree from a fan by stage-wise conditional k-means.

    At every node the samples whose nearest-mean history leads to the node are
    clustered at the next stage into ``b_{t+1}`` means; conditional
    probabilities are relative counts.  Assignments are frozen stage by stage.
    The root takes the fan's stage-1 mean.

    A node without samples has its subtree seeded from the sample nearest to
    the node's state, with all probability on the first child; this is flagged
    in the build report.
    """
    b = BranchingStructure(b)
    if fan.T != b.T:
        raise InputError(f"fan has {fan.T} stages, branching structure {b.T}")
    if fan.N < 10 * b.leaves():
        warnings.warn(
            f"{fan.N} trajectories for {b.leaves()} leaves; clustering needs N >> leaves",
            stacklevel=2,
        )
    report = BuildReport()

    def branch_at(t, node, samples, nearest):
        k = b[t + 1]
        if samples is None:
            states = np.repeat(fan.data[nearest, t + 1][None], k, axis=0)
            return states, [1.0] + [0.0] * (k - 1)
        res = kmeans(fan.data[samples, t + 1], k, r=r, seed=node_seed(seed, node))
        counts = np.bincount(res.assignment, minlength=k)
        for f in res.flags:
            report.flag(node, f)
        return res.means, counts / samples.size, res.assignment, res.objective, {"k": k}

    tree = _grow(fan, branch_at, r, seed, report, 0)
    return (tree, report) if return_report else tree


def grow_adaptive(
    source,
    eps,
    max_branching: int = 10,
    r: float = 2.0,
    seed: int = 0,
    n_samples: int = 10_000,
    T: int | None = None,
    return_report: bool = True,
):
    """Tree without a predefined branching structure.

    Every node starts with two children and gains one at a time until its
    conditional k-means objective is at most ``eps_t`` or ``max_branching`` is
    reached (then the best attempt is kept and the node flagged).

    Parameters
    ----------
    source : TrajectoryFan or sampler
        A sampler is asked for ``n_samples`` trajectories once.
    eps : float or sequence
        Budget per transition; a sequence has one entry per stage ``2..T``.
    """
    if isinstance(source, TrajectoryFan):
        fan = source
    elif callable(getattr(source, "draw", None)):
        fan = TrajectoryFan(source.draw(int(n_samples)))
    else:
        raise TypeError("source must be a TrajectoryFan or a sampler")
    if max_branching < 2:
        raise InputError("max_branching must be >= 2")
    eps_t = np.broadcast_to(np.asarray(eps, dtype=float), (fan.T - 1,))
    if np.any(~(eps_t > 0)):
        raise InputError("distance budgets must be positive")
    report = BuildReport()

    def branch_at(t, node, samples, nearest):
        if samples is None:
            states = np.repeat(fan.data[nearest, t + 1][None], 2, axis=0)
            return states, [1.0, 0.0]
        best = None
        for k in range(2, max_branching + 1):
            res = kmeans(fan.data[samples, t + 1], k, r=r, seed=node_seed(seed, node, k))
            if best is None or res.objective < best[1].objective:
                best = (k, res)
            if res.objective <= eps_t[t]:
                break
        k, res = best
        if res.objective > eps_t[t]:
            report.flag(node, "budget_missed")
        counts = np.bincount(res.assignment, minlength=k)
        return res.means, counts / samples.size, res.assignment, res.objective, {"k": k}

    tree = _grow(fan, branch_at, r, seed, report, 1)
    return (tree, report) if return_report else tree
