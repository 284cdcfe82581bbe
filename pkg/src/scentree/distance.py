"""Transportation distances: Wasserstein, average aberration and nested distance.

The workhorse is an exact transportation simplex (MODI / u-v method) on the
spanning-tree basis of the bipartite transport graph.  It is written once as
plain loop code; the numba backend compiles it, the numpy backend runs the same
source interpreted.  Nested distances call it for every pair of subtrees, stage
by stage backwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit, prange
from .core import ScenarioLattice, ScenarioTree, TrajectoryFan, path_count, tree_paths
from .errors import ContractError, InputError, NumericalError, PathEnumerationRefused

MASS_TOL = 1e-9


# --------------------------------------------------------------------------- #
# Transportation simplex


def _transport_simplex(a, b, C):
    """Solve ``min <C, X>`` s.t. ``X 1 = a``, ``X^T 1 = b``, ``X >= 0``.

    Returns ``(X, cost, status)`` with status 0 on success, 1 if the pivot cap
    was hit.  ``a`` and ``b`` must be positive with equal sums.
    """
    n1 = a.shape[0]
    n2 = b.shape[0]
    X = np.zeros((n1, n2))
    basic = np.zeros((n1, n2), dtype=np.bool_)

    # north-west corner start; ties advance the row so the basis stays a tree
    ra = a.copy()
    rb = b.copy()
    i = 0
    j = 0
    while True:
        basic[i, j] = True
        q = min(ra[i], rb[j])
        X[i, j] = q
        ra[i] -= q
        rb[j] -= q
        if i == n1 - 1 and j == n2 - 1:
            break
        if i == n1 - 1:
            j += 1
        elif j == n2 - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1

    nl = n1 + n2
    u = np.zeros(n1)
    v = np.zeros(n2)
    parent = np.empty(nl, dtype=np.int64)
    depth = np.empty(nl, dtype=np.int64)
    seen = np.zeros(nl, dtype=np.bool_)
    queue = np.empty(nl, dtype=np.int64)
    path_a = np.empty(nl, dtype=np.int64)
    path_b = np.empty(nl, dtype=np.int64)
    cyc_i = np.empty(nl + 1, dtype=np.int64)
    cyc_j = np.empty(nl + 1, dtype=np.int64)

    cmax = 0.0
    for i in range(n1):
        for j in range(n2):
            if abs(C[i, j]) > cmax:
                cmax = abs(C[i, j])
    tol = 1e-12 * cmax + 1e-300
    max_pivots = 100 * (nl * nl + 10)
    degenerate_run = 0
    status = 0

    for _ in range(max_pivots + 1):
        # dual potentials and a rooted view of the basis tree (lines: rows, then cols)
        seen[:] = False
        seen[0] = True
        parent[0] = -1
        depth[0] = 0
        u[0] = 0.0
        head = 0
        tail = 1
        queue[0] = 0
        while head < tail:
            line = queue[head]
            head += 1
            if line < n1:
                for j in range(n2):
                    if basic[line, j] and not seen[n1 + j]:
                        seen[n1 + j] = True
                        v[j] = C[line, j] - u[line]
                        parent[n1 + j] = line
                        depth[n1 + j] = depth[line] + 1
                        queue[tail] = n1 + j
                        tail += 1
            else:
                col = line - n1
                for i in range(n1):
                    if basic[i, col] and not seen[i]:
                        seen[i] = True
                        u[i] = C[i, col] - v[col]
                        parent[i] = line
                        depth[i] = depth[line] + 1
                        queue[tail] = i
                        tail += 1

        # pricing: Dantzig, or Bland after a run of degenerate pivots
        bland = degenerate_run > nl
        best = -tol
        ei = -1
        ej = -1
        for i in range(n1):
            for j in range(n2):
                if basic[i, j]:
                    continue
                red = C[i, j] - u[i] - v[j]
                if red < best:
                    best = red
                    ei = i
                    ej = j
                    if bland:
                        break
            if bland and ei >= 0:
                break
        if ei < 0:
            break
        if _ == max_pivots:
            status = 1
            break

        # tree path from column ej up to row ei: climb to the common ancestor
        la = n1 + ej
        lb = ei
        na = 0
        nb = 0
        while depth[la] > depth[lb]:
            path_a[na] = la
            na += 1
            la = parent[la]
        while depth[lb] > depth[la]:
            path_b[nb] = lb
            nb += 1
            lb = parent[lb]
        while la != lb:
            path_a[na] = la
            na += 1
            la = parent[la]
            path_b[nb] = lb
            nb += 1
            lb = parent[lb]
        path_a[na] = la
        na += 1
        # full line sequence ej -> ... -> ei
        for k in range(nb - 1, -1, -1):
            path_a[na] = path_b[k]
            na += 1
        # cycle cells: entering (+), then alternate -, +, ... along the path
        nc = 0
        cyc_i[nc] = ei
        cyc_j[nc] = ej
        nc += 1
        for k in range(na - 1):
            l1 = path_a[k]
            l2 = path_a[k + 1]
            if l1 < n1:
                cyc_i[nc] = l1
                cyc_j[nc] = l2 - n1
            else:
                cyc_i[nc] = l2
                cyc_j[nc] = l1 - n1
            nc += 1

        theta = np.inf
        li = -1
        lj = -1
        for k in range(1, nc, 2):
            f = X[cyc_i[k], cyc_j[k]]
            cell = cyc_i[k] * n2 + cyc_j[k]
            if f < theta or (f == theta and cell < li * n2 + lj):
                theta = f
                li = cyc_i[k]
                lj = cyc_j[k]
        for k in range(nc):
            if k % 2 == 0:
                X[cyc_i[k], cyc_j[k]] += theta
            else:
                X[cyc_i[k], cyc_j[k]] -= theta
        X[li, lj] = 0.0
        basic[li, lj] = False
        basic[ei, ej] = True
        if theta <= 0.0:
            degenerate_run += 1
        else:
            degenerate_run = 0

    for i in range(n1):
        for j in range(n2):
            if X[i, j] < 0.0:
                X[i, j] = 0.0
    cost = 0.0
    for i in range(n1):
        for j in range(n2):
            cost += X[i, j] * C[i, j]
    return X, cost, status


_transport_simplex_nb = njit(_transport_simplex)


def transport(a, b, C) -> tuple[np.ndarray, float]:
    """Optimal transport plan and cost between mass vectors ``a`` and ``b``.

    Zero-mass atoms are dropped before solving and restored as zero rows or
    columns of the plan.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    if C.shape != (a.shape[0], b.shape[0]):
        raise InputError(f"cost matrix shape {C.shape} does not match masses")
    if np.any(a < 0) or np.any(b < 0):
        raise InputError("masses must be nonnegative")
    if abs(a.sum() - b.sum()) > MASS_TOL * max(1.0, a.sum()):
        raise InputError(f"total masses differ: {a.sum()!r} vs {b.sum()!r}")
    if not np.all(np.isfinite(C)):
        raise InputError("cost matrix must be finite")
    ia = np.flatnonzero(a > 0)
    ib = np.flatnonzero(b > 0)
    plan = np.zeros(C.shape)
    if ia.size == 0 or ib.size == 0:
        return plan, 0.0
    sub = np.ascontiguousarray(C[np.ix_(ia, ib)])
    solve = _transport_simplex_nb if _accel.use_numba() else _transport_simplex
    X, cost, status = solve(np.ascontiguousarray(a[ia]), np.ascontiguousarray(b[ib]), sub)
    if status != 0:
        raise NumericalError("transportation simplex hit its pivot cap")
    plan[np.ix_(ia, ib)] = X
    return plan, float(cost)


# --------------------------------------------------------------------------- #
# Discrete measures and Wasserstein


class DiscreteMeasure:
    """Finitely supported probability measure on R^m."""

    def __init__(self, atoms, masses):
        x = np.asarray(atoms, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        p = np.asarray(masses, dtype=float)
        if x.ndim != 2 or p.shape != (x.shape[0],):
            raise InputError("atoms must be (n, m) with one mass per atom")
        if x.shape[0] == 0:
            raise InputError("a measure needs at least one atom")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12 * max(1, x.shape[0]):
            raise InputError(f"masses must be nonnegative and sum to 1 (sum {p.sum()!r})")
        self.atoms = x
        self.masses = p

    @property
    def m(self) -> int:
        return self.atoms.shape[1]

    def __len__(self) -> int:
        return self.atoms.shape[0]


@dataclass
class TransportPlan:
    matrix: np.ndarray

    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        return self.matrix.sum(axis=1), self.matrix.sum(axis=0)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.matrix > 0))

    def check(self, a, b, tol: float = 1e-9) -> None:
        ra, rb = self.marginals()
        if np.any(self.matrix < 0) or np.max(np.abs(ra - a)) > tol or np.max(np.abs(rb - b)) > tol:
            raise ContractError("transport plan violates its marginals")


def pairwise_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix between rows of ``x`` and ``y``."""
    diff = x[:, None, :] - y[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def wasserstein(P: DiscreteMeasure, Q: DiscreteMeasure, r: float = 1.0):
    """Kantorovich/Wasserstein distance of order ``r`` with Euclidean ground cost.

    Returns ``(distance, TransportPlan)``.
    """
    if r < 1:
        raise InputError("r must be >= 1")
    if P.m != Q.m:
        raise InputError("measures live in different dimensions")
    cost = pairwise_distance(P.atoms, Q.atoms) ** r
    plan, value = transport(P.masses, Q.masses, cost)
    return max(value, 0.0) ** (1.0 / r), TransportPlan(plan)


def wasserstein_from_cost(a, b, cost, r: float = 1.0) -> tuple[float, TransportPlan]:
    """Wasserstein-type distance for a precomputed ``cost = d^r`` matrix."""
    plan, value = transport(a, b, cost)
    return max(value, 0.0) ** (1.0 / r), TransportPlan(plan)


# --------------------------------------------------------------------------- #
# Closest-path transport maps and average aberration


@njit
def _closest_paths_tree_nb(state, first_child, n_children, xs, r, nodes_out, dist_out):
    K = xs.shape[0]
    T = xs.shape[1]
    m = xs.shape[2]
    total = 0.0
    for k in range(K):
        node = 0
        acc = 0.0
        for t in range(T):
            if t > 0:
                best = np.inf
                bi = -1
                f = first_child[node]
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
            nodes_out[k, t] = node
        dist_out[k] = acc
        total += acc**r
    return total


def _closest_paths_tree_np(state, first_child, n_children, xs, r, nodes_out, dist_out):
    K, T, _ = xs.shape
    node = np.zeros(K, dtype=np.int64)
    acc = np.zeros(K)
    rows = np.arange(K)
    for t in range(T):
        if t > 0:
            kmax = int(n_children[node].max())
            cand = first_child[node][:, None] + np.arange(kmax)[None, :]
            valid = np.arange(kmax)[None, :] < n_children[node][:, None]
            cand = np.where(valid, cand, first_child[node][:, None])
            d2 = np.sum((state[cand] - xs[:, t, None, :]) ** 2, axis=2)
            d2 = np.where(valid, d2, np.inf)
            node = cand[rows, np.argmin(d2, axis=1)]
        acc += np.sqrt(np.sum((state[node] - xs[:, t, :]) ** 2, axis=1))
        nodes_out[:, t] = node
    dist_out[:] = acc
    return float(np.sum(acc**r))


def closest_paths_tree(tree: ScenarioTree, xs: np.ndarray, r: float = 1.0):
    """Sequentially closest tree path for every trajectory in ``xs`` (K, T, m).

    Returns ``(nodes (K, T), path distances (K,), sum of distance**r)``.
    Exact ties go to the smaller node index.
    """
    xs = _as_batch(xs, tree.T, tree.m)
    nodes = np.empty(xs.shape[:2], dtype=np.int64)
    dists = np.empty(xs.shape[0])
    args = (tree.state, tree.first_child, tree.n_children, xs, float(r), nodes, dists)
    if _accel.use_numba():
        total = _closest_paths_tree_nb(*args)
    else:
        total = _closest_paths_tree_np(*args)
    return nodes, dists, float(total)


@njit
def _closest_nodes_lattice_nb(states, sizes, xs, r, nodes_out, dist_out):
    K = xs.shape[0]
    T = xs.shape[1]
    m = xs.shape[2]
    total = 0.0
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
            nodes_out[k, t] = bi
            acc += np.sqrt(best)
        dist_out[k] = acc
        total += acc**r
    return total


def _closest_nodes_lattice_np(states, sizes, xs, r, nodes_out, dist_out):
    d2 = np.sum((states[None, :, :, :] - xs[:, :, None, :]) ** 2, axis=3)
    mask = np.arange(states.shape[1])[None, :] >= sizes[:, None]
    d2 = np.where(mask[None], np.inf, d2)
    idx = np.argmin(d2, axis=2)
    nodes_out[:] = idx
    acc = np.sqrt(np.take_along_axis(d2, idx[:, :, None], axis=2)[:, :, 0]).sum(axis=1)
    dist_out[:] = acc
    return float(np.sum(acc**r))


def pack_lattice_states(lattice: ScenarioLattice) -> tuple[np.ndarray, np.ndarray]:
    """Pad per-stage state arrays into one ``(T, b_max, m)`` block (NaN padded)."""
    sizes = np.array([s.shape[0] for s in lattice.states], dtype=np.int64)
    packed = np.full((lattice.T, int(sizes.max()), lattice.m), np.nan)
    for t, s in enumerate(lattice.states):
        packed[t, : s.shape[0]] = s
    return packed, sizes


def closest_nodes_lattice(lattice: ScenarioLattice, xs: np.ndarray, r: float = 1.0):
    """Closest lattice node per stage, chosen independently over the whole stage."""
    xs = _as_batch(xs, lattice.T, lattice.m)
    states, sizes = pack_lattice_states(lattice)
    nodes = np.empty(xs.shape[:2], dtype=np.int64)
    dists = np.empty(xs.shape[0])
    if _accel.use_numba():
        total = _closest_nodes_lattice_nb(states, sizes, xs, float(r), nodes, dists)
    else:
        total = _closest_nodes_lattice_np(states, sizes, xs, float(r), nodes, dists)
    return nodes, dists, float(total)


def _as_batch(xs, T: int, m: int) -> np.ndarray:
    if isinstance(xs, TrajectoryFan):
        xs = xs.data
    a = np.asarray(xs, dtype=float)
    if a.ndim == 1:
        a = a[None, :, None] if m == 1 else a.reshape(1, T, m)
    elif a.ndim == 2:
        a = a[:, :, None] if m == 1 and a.shape[1] == T else a[None]
    if a.ndim != 3 or a.shape[1:] != (T, m):
        raise InputError(f"trajectories must have shape (K, {T}, {m}), got {a.shape}")
    return np.ascontiguousarray(a)


def aberration(source, model, r: float = 1.0, n_samples: int | None = None) -> float:
    """Average aberration ``(E (sum_t d_t(xi_t, T_t(xi)))^r)^(1/r)``.

    ``source`` is a fan, an array of trajectories or a sampler (then
    ``n_samples`` trajectories are drawn).  ``model`` is a tree (sequentially
    closest path) or a lattice (closest node per stage).
    """
    if r < 1:
        raise InputError("r must be >= 1")
    if hasattr(source, "draw") and not isinstance(source, (TrajectoryFan, np.ndarray)):
        if not n_samples:
            raise InputError("n_samples is required with a sampler")
        xs = source.draw(int(n_samples))
    else:
        xs = source
    if model.T != _as_batch(xs, model.T, model.m).shape[1]:
        raise InputError("stage counts differ")
    if isinstance(model, ScenarioTree):
        _, _, total = closest_paths_tree(model, xs, r)
    elif isinstance(model, ScenarioLattice):
        _, _, total = closest_nodes_lattice(model, xs, r)
    else:
        raise TypeError(f"cannot compute aberration against {type(model).__name__}")
    if not np.isfinite(total):
        raise NumericalError("aberration overflowed")
    K = _as_batch(xs, model.T, model.m).shape[0]
    return (total / K) ** (1.0 / r)


# --------------------------------------------------------------------------- #
# Nested distance


@njit(parallel=True)
def _nested_sweep_nb(
    sa, pa, fa, ca, ba, sb, pb, fb, cb, bb, r, T
):
    """Backward recursion; returns the root subtree distance dd(root, root)."""
    m = sa.shape[1]
    nxt = np.zeros((ba[T] - ba[T - 1], bb[T] - bb[T - 1]))
    for t in range(T - 1, 0, -1):
        # stage t is 1-based; nodes of stage t are [ba[t-1], ba[t])
        a0 = ba[t - 1]
        na = ba[t] - a0
        b0 = bb[t - 1]
        nbn = bb[t] - b0
        a1 = ba[t]
        b1 = bb[t]
        cur = np.zeros((na, nbn))
        status_bad = 0
        for pair in prange(na * nbn):
            i = a0 + pair // nbn
            j = b0 + pair % nbn
            # children with positive probability
            ka = 0
            for c in range(fa[i], fa[i] + ca[i]):
                if pa[c] > 0.0:
                    ka += 1
            kb = 0
            for c in range(fb[j], fb[j] + cb[j]):
                if pb[c] > 0.0:
                    kb += 1
            ia = np.empty(ka, dtype=np.int64)
            ib = np.empty(kb, dtype=np.int64)
            q = 0
            for c in range(fa[i], fa[i] + ca[i]):
                if pa[c] > 0.0:
                    ia[q] = c
                    q += 1
            q = 0
            for c in range(fb[j], fb[j] + cb[j]):
                if pb[c] > 0.0:
                    ib[q] = c
                    q += 1
            wa = np.empty(ka)
            wb = np.empty(kb)
            for x in range(ka):
                wa[x] = pa[ia[x]]
            for y in range(kb):
                wb[y] = pb[ib[y]]
            sa_ = wa.sum()
            sb_ = wb.sum()
            for y in range(kb):
                wb[y] *= sa_ / sb_
            C = np.empty((ka, kb))
            for x in range(ka):
                for y in range(kb):
                    d2 = 0.0
                    for k in range(m):
                        diff = sa[ia[x], k] - sb[ib[y], k]
                        d2 += diff * diff
                    C[x, y] = np.sqrt(d2) ** r + nxt[ia[x] - a1, ib[y] - b1]
            X, cost, status = _transport_simplex_nb(wa, wb, C)
            cur[pair // nbn, pair % nbn] = cost / sa_
            if status != 0:
                status_bad += 1
        if status_bad > 0:
            return -1.0
        nxt = cur
    return nxt[0, 0]


def _nested_sweep_np(sa, pa, fa, ca, ba, sb, pb, fb, cb, bb, r, T):
    nxt = np.zeros((ba[T] - ba[T - 1], bb[T] - bb[T - 1]))
    for t in range(T - 1, 0, -1):
        a0, a1 = ba[t - 1], ba[t]
        b0, b1 = bb[t - 1], bb[t]
        cur = np.zeros((a1 - a0, b1 - b0))
        for i in range(a0, a1):
            ia = np.arange(fa[i], fa[i] + ca[i])
            ia = ia[pa[ia] > 0]
            for j in range(b0, b1):
                ib = np.arange(fb[j], fb[j] + cb[j])
                ib = ib[pb[ib] > 0]
                wa, wb = pa[ia], pb[ib]
                wb = wb * (wa.sum() / wb.sum())
                C = pairwise_distance(sa[ia], sb[ib]) ** r + nxt[np.ix_(ia - a1, ib - b1)]
                X, cost, status = _transport_simplex(wa, wb, C)
                if status != 0:
                    return -1.0
                cur[i - a0, j - b0] = cost / wa.sum()
        nxt = cur
    return nxt[0, 0]


def _renormalised_prob(tree: ScenarioTree) -> np.ndarray:
    p = tree.prob.copy()
    sums = np.bincount(tree.pred[1:], weights=p[1:], minlength=tree.n)
    bad = [int(i) for i in np.flatnonzero(tree.n_children > 0) if sums[i] <= 0]
    if bad:
        raise InputError(f"nodes {bad[:5]} have children without probability mass")
    p[1:] = p[1:] / sums[tree.pred[1:]]
    return p


def nested_distance(A: ScenarioTree, B: ScenarioTree, r: float = 1.0) -> float:
    """Nested (process) distance between two trees of equal height.

    Backward recursion: leaf pairs have subtree distance 0; a pair of stage-t
    nodes gets the optimal transport cost between their children with unit
    cost ``d(x_k, y_l)^r + dd(k, l)``.  The result is
    ``(d(root_A, root_B)^r + dd(root_A, root_B))^(1/r)``.
    """
    if A.T != B.T:
        raise InputError(f"tree heights differ: {A.T} vs {B.T}")
    if A.m != B.m:
        raise InputError(f"tree dimensions differ: {A.m} vs {B.m}")
    if r < 1:
        raise InputError("r must be >= 1")
    pa, pb = _renormalised_prob(A), _renormalised_prob(B)
    args = (
        A.state, pa, A.first_child, A.n_children, A.stage_bounds,
        B.state, pb, B.first_child, B.n_children, B.stage_bounds,
        float(r), A.T,
    )
    dd = _nested_sweep_nb(*args) if _accel.use_numba() else _nested_sweep_np(*args)
    if dd < 0:
        raise NumericalError("transportation simplex hit its pivot cap")
    root = float(np.linalg.norm(A.state[0] - B.state[0])) ** r
    return max(root + dd, 0.0) ** (1.0 / r)


def path_measure(tree: ScenarioTree) -> tuple[np.ndarray, np.ndarray]:
    """Scenario states ``(L, T, m)`` and scenario probabilities of a tree."""
    _, paths, probs = tree_paths(tree)
    return tree.state[paths], probs


def path_cost(xa: np.ndarray, xb: np.ndarray, r: float) -> np.ndarray:
    """``sum_t d_t(x_t, y_t)^r`` for all pairs of paths."""
    diff = xa[:, None, :, :] - xb[None, :, :, :]
    return np.sum(np.sqrt(np.sum(diff * diff, axis=3)) ** r, axis=2)


def nested_vs_wasserstein_check(
    A: ScenarioTree, B: ScenarioTree, r: float = 1.0, cap: int = 20_000
) -> tuple[float, float]:
    """Nested distance and the Wasserstein distance of the path measures.

    Both use the path cost ``sum_t d_t^r``; the nested distance restricts the
    couplings to those respecting both filtrations, hence it dominates.
    """
    nd = nested_distance(A, B, r)
    for tree in (A, B):
        if path_count(tree) > cap:
            raise PathEnumerationRefused(path_count(tree), cap)
    xa, pa = path_measure(A)
    xb, pb = path_measure(B)
    pb = pb * (pa.sum() / pb.sum())
    wd, _ = wasserstein_from_cost(pa, pb, path_cost(xa, xb, r), r)
    if nd < wd - 1e-9 * max(1.0, wd):
        raise ContractError(f"nested distance {nd!r} below Wasserstein {wd!r}")
    return nd, wd
