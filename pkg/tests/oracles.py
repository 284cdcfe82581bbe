"""Reference implementations used only by the tests.

Written independently of the package: no shared code paths with the
transportation simplex, the nested sweep or the closest-path kernels.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache

import numpy as np


# --------------------------------------------------------------------------- #
# Transport: exhaustive enumeration of basic feasible solutions


def transport_oracle(a, b, C) -> float:
    """Minimal cost over every basic feasible plan of the transport polytope.

    A basic plan has a forest support, so it can be peeled one leaf cell at a
    time: pick an open cell and give it ``min(row rest, column rest)``, which
    closes its row or its column.  Every order of picks yields a vertex and
    every vertex arises this way, so minimising over all orders (memoised on
    the remaining margins) is exhaustive over the vertices.  Margins are kept
    as exact fractions so the memo keys are exact.
    """
    a = tuple(Fraction(x) for x in a)
    b = tuple(Fraction(x) for x in b)
    C = np.asarray(C, dtype=float)
    n1, n2 = len(a), len(b)

    @lru_cache(maxsize=None)
    def rec(ra, rb):
        rows = [i for i in range(n1) if ra[i] > 0]
        cols = [j for j in range(n2) if rb[j] > 0]
        if not rows or not cols:
            return 0.0
        best = np.inf
        for i in rows:
            for j in cols:
                q = min(ra[i], rb[j])
                na = list(ra)
                nb = list(rb)
                na[i] -= q
                nb[j] -= q
                best = min(best, float(q) * C[i, j] + rec(tuple(na), tuple(nb)))
        return best

    return rec(a, b)


def transport_lp(a, b, C) -> float:
    """Same problem through scipy's HiGHS LP, a second independent route."""
    from scipy.optimize import linprog

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n2 = len(a), len(b)
    A = []
    for i in range(n1):
        row = np.zeros((n1, n2))
        row[i, :] = 1
        A.append(row.ravel())
    for j in range(n2):
        col = np.zeros((n1, n2))
        col[:, j] = 1
        A.append(col.ravel())
    res = linprog(np.asarray(C, dtype=float).ravel(), A_eq=np.array(A),
                  b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    assert res.status == 0
    return float(res.fun)


# --------------------------------------------------------------------------- #
# Trees given as plain (pred, prob, state) lists


def children_lists(pred):
    kids = [[] for _ in pred]
    for i, p in enumerate(pred):
        if p >= 0:
            kids[p].append(i)
    return kids


def nested_oracle(A, B, r=1.0, transport=transport_oracle) -> float:
    """Nested distance by plain recursion over node pairs.

    ``A`` and ``B`` are ``(pred, prob, state)`` with scalar or vector states.
    Zero-probability children are skipped; child masses are renormalised.
    """
    pa, qa, xa = A
    pb, qb, xb = B
    ka, kb = children_lists(pa), children_lists(pb)
    xa = [np.atleast_1d(np.asarray(v, dtype=float)) for v in xa]
    xb = [np.atleast_1d(np.asarray(v, dtype=float)) for v in xb]

    def d(u, v):
        return float(np.linalg.norm(xa[u] - xb[v])) ** r

    memo = {}

    def dd(u, v):
        if (u, v) in memo:
            return memo[(u, v)]
        cu = [c for c in ka[u] if qa[c] > 0]
        cv = [c for c in kb[v] if qb[c] > 0]
        if not cu:
            memo[(u, v)] = 0.0
            return 0.0
        wa = [Fraction(qa[c]).limit_denominator(10**9) for c in cu]
        wb = [Fraction(qb[c]).limit_denominator(10**9) for c in cv]
        sa, sb = sum(wa), sum(wb)
        wa = [w / sa for w in wa]
        wb = [w / sb for w in wb]
        C = np.array([[d(i, j) + dd(i, j) for j in cv] for i in cu])
        memo[(u, v)] = transport(wa, wb, C)
        return memo[(u, v)]

    return (d(0, 0) + dd(0, 0)) ** (1.0 / r)


def paths_of(T):
    """Root-to-leaf node lists of a ``(pred, prob, state)`` tree."""
    pred = T[0]
    kids = children_lists(pred)
    leaves = [i for i in range(len(pred)) if not kids[i]]
    out = []
    for leaf in leaves:
        p = [leaf]
        while pred[p[-1]] >= 0:
            p.append(pred[p[-1]])
        out.append(p[::-1])
    return out


def nested_path_lp(A, B, r=1.0) -> float:
    """Nested distance as one LP over couplings of scenario pairs.

    Variables are ``pi(i, j)`` on leaf pairs; for every pair of same-stage
    nodes ``(u, v)`` and every child ``u'`` of ``u`` the conditional mass of
    ``u'`` given ``(u, v)`` must equal ``P(u' | u)`` (and symmetrically for
    ``B``).  Uses scipy's HiGHS solver.
    """
    from scipy.optimize import linprog

    pa_paths, pb_paths = paths_of(A), paths_of(B)
    qa, qb = A[1], B[1]
    xa = [np.atleast_1d(np.asarray(v, dtype=float)) for v in A[2]]
    xb = [np.atleast_1d(np.asarray(v, dtype=float)) for v in B[2]]
    L1, L2 = len(pa_paths), len(pb_paths)
    T = len(pa_paths[0])
    cost = np.zeros((L1, L2))
    for i, P in enumerate(pa_paths):
        for j, Q in enumerate(pb_paths):
            cost[i, j] = sum(float(np.linalg.norm(xa[P[t]] - xb[Q[t]])) ** r for t in range(T))
    rows, rhs = [], []
    # root marginals
    for i, P in enumerate(pa_paths):
        row = np.zeros((L1, L2))
        row[i, :] = 1
        rows.append(row.ravel())
        rhs.append(float(np.prod([qa[n] for n in P])))
    for j, Q in enumerate(pb_paths):
        row = np.zeros((L1, L2))
        row[:, j] = 1
        rows.append(row.ravel())
        rhs.append(float(np.prod([qb[n] for n in Q])))
    # conditional constraints
    for t in range(T - 1):
        for u in sorted({P[t] for P in pa_paths}):
            for v in sorted({Q[t] for Q in pb_paths}):
                in_uv = np.zeros((L1, L2))
                for i, P in enumerate(pa_paths):
                    for j, Q in enumerate(pb_paths):
                        if P[t] == u and Q[t] == v:
                            in_uv[i, j] = 1
                kids_u = sorted({P[t + 1] for P in pa_paths if P[t] == u})
                for c in kids_u:
                    row = np.zeros((L1, L2))
                    for i, P in enumerate(pa_paths):
                        for j, Q in enumerate(pb_paths):
                            if P[t + 1] == c and Q[t] == v:
                                row[i, j] = 1
                    rows.append((row - qa[c] * in_uv).ravel())
                    rhs.append(0.0)
                kids_v = sorted({Q[t + 1] for Q in pb_paths if Q[t] == v})
                for c in kids_v:
                    row = np.zeros((L1, L2))
                    for i, P in enumerate(pa_paths):
                        for j, Q in enumerate(pb_paths):
                            if Q[t + 1] == c and P[t] == u:
                                row[i, j] = 1
                    rows.append((row - qb[c] * in_uv).ravel())
                    rhs.append(0.0)
    res = linprog(cost.ravel(), A_eq=np.array(rows), b_eq=np.array(rhs),
                  bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun) ** (1.0 / r)


def greedy_path_oracle(pred, state, xi):
    """Sequentially closest path by walking explicit children lists."""
    kids = children_lists(pred)
    node, path = 0, [0]
    for t in range(1, len(xi)):
        best, bd = None, np.inf
        for c in kids[node]:
            dist = float(np.linalg.norm(np.atleast_1d(state[c]) - np.atleast_1d(xi[t])))
            if dist < bd:
                best, bd = c, dist
        node = best
        path.append(node)
    return path


# --------------------------------------------------------------------------- #
# k-means by enumeration


def kmeans_brute(points, k, r=2.0):
    """Optimal ``k``-partition objective of 1-d points (all labelings)."""
    x = np.asarray(points, dtype=float)
    best = np.inf
    for labels in itertools.product(range(k), repeat=len(x)):
        total = 0.0
        for c in range(k):
            pts = x[np.array(labels) == c]
            if pts.size == 0:
                continue
            if r == 2:
                centre = pts.mean()
                total += np.sum((pts - centre) ** 2)
            else:
                total += min(np.sum(np.abs(pts - z) ** r) for z in pts)
        best = min(best, total / len(x))
    return best


# --------------------------------------------------------------------------- #
# Small reference instances: a binary tree and a fan with equal path measures


def binary_instance():
    """Two stage-2 nodes (value 10), each with two leaves, all 1/2."""
    pred = [-1, 0, 0, 1, 1, 2, 2]
    prob = [1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]
    state = [0, 10, 10, 28, 22, 21, 20]
    return pred, prob, state


def fan_instance():
    """Four stage-2 nodes (value 10), one leaf each."""
    pred = [-1, 0, 0, 0, 0, 1, 2, 3, 4]
    prob = [1.0, 0.25, 0.25, 0.25, 0.25, 1.0, 1.0, 1.0, 1.0]
    state = [0, 10, 10, 10, 10, 28, 22, 21, 20]
    return pred, prob, state
