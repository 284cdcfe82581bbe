"""Scenario trees, scenario lattices and trajectory fans.

Conventions
-----------
* Nodes are numbered from 0 in breadth-first stage order, so every stage
  occupies a contiguous index range.  The root has predecessor ``-1``.
* Stages are numbered from 1 (``stage[root] == 1``).
* States are stored as ``(n, m)`` float arrays even for univariate processes.

All containers are immutable once built: their arrays are flagged read-only.
Algorithms that refine a tree work on copies and return a new object.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import InputError, PathEnumerationRefused, StructureError

FORMAT_VERSION = 1
PROB_TOL = 1e-9
DEFAULT_PATH_CAP = 1_000_000


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _as_states(state, n: int | None = None) -> np.ndarray:
    s = np.asarray(state, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.ndim != 2 or (n is not None and s.shape[0] != n):
        raise StructureError(f"state must have shape (n, m), got {s.shape}")
    return s


# --------------------------------------------------------------------------- #
# Branching structure


class BranchingStructure(tuple):
    """Per-stage branching ``(b_1, ..., b_T)``.

    For trees ``b_t`` is the number of children of every stage ``t-1`` node;
    for lattices it is the number of nodes at stage ``t``.  ``b_1`` must be 1.
    """

    def __new__(cls, values: Sequence[int] | str):
        if isinstance(values, str):
            try:
                values = [int(v) for v in values.replace(" ", "").split(",") if v]
            except ValueError as exc:
                raise StructureError(f"cannot parse branching structure {values!r}") from exc
        vals = tuple(int(v) for v in values)
        if not vals:
            raise StructureError("branching structure must have at least one stage")
        if any(v < 1 for v in vals):
            raise StructureError(f"branching factors must be >= 1, got {vals}")
        if vals[0] != 1:
            raise StructureError(f"b_1 must be 1 (deterministic root), got {vals[0]}")
        return super().__new__(cls, vals)

    @property
    def T(self) -> int:
        return len(self)

    def tree_stage_sizes(self) -> list[int]:
        sizes = [1]
        for b in self[1:]:
            sizes.append(sizes[-1] * b)
        return sizes

    def tree_node_count(self) -> int:
        return sum(self.tree_stage_sizes())

    def leaves(self) -> int:
        return self.tree_stage_sizes()[-1]

    def __repr__(self) -> str:
        return f"BranchingStructure({tuple(self)})"


def node_count_lattice(b: Sequence[int], T: int | None = None) -> int:
    """Number of lattice nodes, ``1 + sum(b_2..b_T)``.

    ``b`` may be a full branching structure, or a single integer used for every
    stage after the root (then ``T`` is required).
    """
    if isinstance(b, (int, np.integer)):
        if T is None:
            raise InputError("T is required when b is a scalar")
        if T < 1:
            raise InputError("T must be >= 1")
        if b < 1:
            raise StructureError("nodes per stage must be >= 1")
        return 1 + int(b) * (T - 1)
    b = BranchingStructure(b)
    if T is not None and T != b.T:
        raise InputError(f"T={T} does not match branching structure of length {b.T}")
    return 1 + sum(b[1:])


# --------------------------------------------------------------------------- #
# Validation report


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    zero_mass_groups: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "errors": list(self.errors),
            "warnings": list(self.warnings),
            "zero_mass_groups": [list(g) if isinstance(g, tuple) else g for g in self.zero_mass_groups],
        }


# --------------------------------------------------------------------------- #
# Scenario tree


class ScenarioTree:
    """A layered scenario tree given by predecessor, probability and state lists.

    Parameters
    ----------
    pred : array of int, shape (n,)
        Predecessor of each node, ``-1`` for the root (node 0).
    prob : array of float, shape (n,)
        Conditional probability of reaching a node from its predecessor.
    state : array of float, shape (n, m) or (n,)
        Process value at each node.
    stage : array of int, optional
        1-based stage of every node.  Derived from ``pred`` when omitted and
        checked for consistency otherwise.
    """

    def __init__(self, pred, prob, state, stage=None):
        pred = np.asarray(pred, dtype=np.int64)
        n = pred.shape[0]
        if pred.ndim != 1 or n == 0:
            raise StructureError("pred must be a non-empty 1-d array")
        prob = np.asarray(prob, dtype=float)
        if prob.shape != (n,):
            raise StructureError(f"prob must have length {n}")
        state = _as_states(state, n)

        if pred[0] != -1 or np.count_nonzero(pred == -1) != 1:
            raise StructureError("node 0 must be the unique root (pred == -1)")
        idx = np.arange(n)
        if np.any(pred[1:] >= idx[1:]) or np.any(pred[1:] < 0):
            raise StructureError("nodes must be in breadth-first order: pred[i] < i")
        computed = np.empty(n, dtype=np.int64)
        computed[0] = 1
        for i in range(1, n):
            computed[i] = computed[pred[i]] + 1
        if stage is not None:
            stage = np.asarray(stage, dtype=np.int64)
            if stage.shape != (n,) or np.any(stage != computed):
                raise StructureError("stage is inconsistent with pred")
        stage = computed
        if np.any(np.diff(stage) < 0):
            raise StructureError("nodes must be sorted by stage")
        if np.any(np.diff(pred[1:]) < 0):
            raise StructureError("children must be grouped by predecessor in index order")
        if np.any(~np.isfinite(prob)) or np.any(prob < -PROB_TOL) or np.any(prob > 1 + PROB_TOL):
            raise StructureError("probabilities must lie in [0, 1]")
        if not np.all(np.isfinite(state)):
            raise StructureError("states must be finite")

        n_children = np.bincount(pred[1:], minlength=n)
        T = int(stage[-1])
        leaves = np.flatnonzero(n_children == 0)
        if np.any(stage[leaves] != T):
            raise StructureError("every leaf must sit at the final stage")
        if abs(prob[0] - 1.0) > PROB_TOL:
            raise StructureError("the root probability must be 1")

        self.pred = _frozen(pred)
        self.prob = _frozen(np.clip(prob, 0.0, 1.0))
        self.state = _frozen(state)
        self.stage = _frozen(stage)
        self.n_children = _frozen(n_children)
        # children are grouped by predecessor, so pred[1:] is sorted
        first = np.searchsorted(pred[1:], idx) + 1
        first[n_children == 0] = -1
        self.first_child = _frozen(first)
        bounds = np.searchsorted(stage, np.arange(1, T + 2))
        self.stage_bounds = _frozen(bounds.astype(np.int64))

    # ------------------------------------------------------------------ basics
    @property
    def n(self) -> int:
        return self.pred.shape[0]

    @property
    def T(self) -> int:
        return int(self.stage[-1])

    @property
    def m(self) -> int:
        return self.state.shape[1]

    def stage_nodes(self, t: int) -> range:
        """Index range of stage ``t`` (1-based)."""
        return range(int(self.stage_bounds[t - 1]), int(self.stage_bounds[t]))

    def children(self, i: int) -> range:
        f = int(self.first_child[i])
        if f < 0:
            return range(0)
        return range(f, f + int(self.n_children[i]))

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.n_children == 0)

    def path_to(self, i: int) -> np.ndarray:
        """Node indices from the root to node ``i`` inclusive."""
        path = []
        while i >= 0:
            path.append(i)
            i = int(self.pred[i])
        return np.array(path[::-1], dtype=np.int64)

    def unconditional_prob(self) -> np.ndarray:
        """Probability of reaching each node from the root."""
        p = self.prob.copy()
        for i in range(1, self.n):
            p[i] *= p[self.pred[i]]
        return p

    def copy_with(self, prob=None, state=None) -> "ScenarioTree":
        return ScenarioTree(
            self.pred,
            self.prob if prob is None else prob,
            self.state if state is None else state,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScenarioTree):
            return NotImplemented
        return (
            np.array_equal(self.pred, other.pred)
            and np.array_equal(self.prob, other.prob)
            and np.array_equal(self.state, other.state)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"ScenarioTree(n={self.n}, T={self.T}, m={self.m})"

    # -------------------------------------------------------------- validation
    def validate(self) -> ValidationReport:
        """Check the probabilistic invariants.

        Sibling groups summing to 0 under an unreachable parent are reported as
        zero-mass groups (a warning), every other deviation from 1 is an error.
        """
        rep = ValidationReport()
        sums = np.bincount(self.pred[1:], weights=self.prob[1:], minlength=self.n)
        reach = self.unconditional_prob()
        for i in np.flatnonzero(self.n_children > 0):
            s = sums[i]
            if abs(s - 1.0) <= PROB_TOL:
                continue
            if s == 0.0:
                rep.zero_mass_groups.append(int(i))
                msg = f"node {i}: children carry no probability"
                (rep.warnings if reach[i] == 0.0 else rep.errors).append(msg)
            else:
                rep.errors.append(f"node {i}: children probabilities sum to {s!r}")
        total = reach[self.leaves()].sum()
        if abs(total - 1.0) > 1e-8 and not rep.errors:
            rep.errors.append(f"scenario probabilities sum to {total!r}")
        return rep

    # ---------------------------------------------------------- serialization
    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "T": self.T,
            "m": self.m,
            "pred": self.pred.tolist(),
            "prob": self.prob.tolist(),
            "stage": self.stage.tolist(),
            "state": self.state.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioTree":
        _check_version(d)
        try:
            tree = cls(d["pred"], d["prob"], d["state"], d.get("stage"))
        except KeyError as exc:
            raise InputError(f"tree JSON lacks field {exc}") from None
        if "T" in d and int(d["T"]) != tree.T or "m" in d and int(d["m"]) != tree.m:
            raise StructureError("header T/m does not match the tree arrays")
        return tree


def _check_version(d: dict) -> None:
    if not isinstance(d, dict):
        raise InputError("expected a JSON object")
    v = d.get("format_version", FORMAT_VERSION)
    if v != FORMAT_VERSION:
        raise InputError(f"unsupported format_version {v!r}")


def tree_from_branching(b: Sequence[int], m: int = 1) -> ScenarioTree:
    """Layered tree with the given branching, zero states and uniform probabilities."""
    b = BranchingStructure(b)
    pred = [-1]
    prob = [1.0]
    start, size = 0, 1
    for bt in b[1:]:
        for i in range(start, start + size):
            pred.extend([i] * bt)
            prob.extend([1.0 / bt] * bt)
        start, size = start + size, size * bt
    return ScenarioTree(pred, prob, np.zeros((len(pred), m)))


def build_tree_skeleton(
    b: Sequence[int],
    init=0.0,
    seed: int | None = 0,
) -> ScenarioTree:
    """Initial tree for stochastic approximation.

    ``init`` is either a constant (scalar or length-``m`` vector) placed at every
    node, or a :class:`TrajectoryFan`.  With a fan, every leaf draws one
    trajectory at random and writes it along its root path; ancestors keep the
    value written by their first descendant, so each stage of the tree is
    populated by genuine observations.  The root takes the fan's stage-1 mean.
    """
    b = BranchingStructure(b)
    if isinstance(init, TrajectoryFan):
        fan = init
        if fan.T != b.T:
            raise InputError(f"fan has {fan.T} stages, branching structure {b.T}")
        tree = tree_from_branching(b, fan.m)
        rng = np.random.default_rng(seed)
        leaves = tree.leaves()
        picks = rng.integers(0, fan.N, size=leaves.shape[0])
        state = np.full((tree.n, fan.m), np.nan)
        for leaf, j in zip(leaves, picks):
            for t, node in enumerate(tree.path_to(int(leaf))):
                if np.isnan(state[node, 0]):
                    state[node] = fan.data[j, t]
        state[0] = fan.data[:, 0].mean(axis=0)
        return tree.copy_with(state=state)
    const = np.atleast_1d(np.asarray(init, dtype=float))
    tree = tree_from_branching(b, const.shape[0])
    return tree.copy_with(state=np.broadcast_to(const, (tree.n, const.shape[0])))


def scenario_probability(tree: ScenarioTree, leaf: int) -> float:
    """Product of conditional probabilities along the root-to-leaf path."""
    if not 0 <= leaf < tree.n:
        raise InputError(f"node {leaf} does not exist")
    if tree.n_children[leaf] != 0:
        raise InputError(f"node {leaf} is not a leaf")
    return float(np.prod(tree.prob[tree.path_to(leaf)]))


# --------------------------------------------------------------------------- #
# Scenario lattice


class ScenarioLattice:
    """Recombining layered graph for Markovian processes.

    Parameters
    ----------
    states : sequence of arrays
        ``states[t]`` has shape ``(b_t, m)``; ``b_1`` must be 1.
    trans : sequence of arrays
        ``trans[t]`` is the ``b_t x b_{t+1}`` matrix of transition probabilities.
    counts : sequence of arrays, optional
        Visit counters per node.
    """

    def __init__(self, states, trans, counts=None):
        states = [_as_states(s) for s in states]
        if not states:
            raise StructureError("a lattice needs at least one stage")
        m = states[0].shape[1]
        if states[0].shape[0] != 1:
            raise StructureError("the first lattice stage must hold a single node")
        if any(s.shape[1] != m for s in states):
            raise StructureError("all stages must share the dimension m")
        trans = [np.asarray(p, dtype=float) for p in trans]
        if len(trans) != len(states) - 1:
            raise StructureError("need exactly T-1 transition matrices")
        for t, p in enumerate(trans):
            if p.shape != (states[t].shape[0], states[t + 1].shape[0]):
                raise StructureError(f"transition matrix {t} has shape {p.shape}")
            if np.any(~np.isfinite(p)) or np.any(p < -PROB_TOL) or np.any(p > 1 + PROB_TOL):
                raise StructureError("transition probabilities must lie in [0, 1]")
        if counts is None:
            counts = [np.zeros(s.shape[0]) for s in states]
        counts = [np.asarray(c, dtype=float) for c in counts]
        if len(counts) != len(states) or any(
            c.shape != (s.shape[0],) for c, s in zip(counts, states)
        ):
            raise StructureError("counts must hold one entry per node")
        self.states = tuple(_frozen(s) for s in states)
        self.trans = tuple(_frozen(np.clip(p, 0.0, 1.0)) for p in trans)
        self.counts = tuple(_frozen(c) for c in counts)

    @property
    def T(self) -> int:
        return len(self.states)

    @property
    def m(self) -> int:
        return self.states[0].shape[1]

    @property
    def branching(self) -> BranchingStructure:
        return BranchingStructure([s.shape[0] for s in self.states])

    @property
    def n_nodes(self) -> int:
        return sum(s.shape[0] for s in self.states)

    def path_count(self) -> int:
        return math.prod(s.shape[0] for s in self.states)

    def marginal_probs(self) -> list[np.ndarray]:
        """Unconditional probability of each node, stage by stage."""
        out = [np.ones(1)]
        for p in self.trans:
            out.append(out[-1] @ p)
        return out

    def validate(self) -> ValidationReport:
        rep = ValidationReport()
        marg = self.marginal_probs()
        for t, p in enumerate(self.trans):
            rows = p.sum(axis=1)
            for i, s in enumerate(rows):
                if abs(s - 1.0) <= PROB_TOL:
                    continue
                if s == 0.0:
                    msg = f"stage {t + 1} node {i}: unvisited row"
                    rep.zero_mass_groups.append((t + 1, i))
                    (rep.warnings if marg[t][i] == 0.0 else rep.errors).append(msg)
                else:
                    rep.errors.append(f"stage {t + 1} node {i}: row sums to {s!r}")
        return rep

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScenarioLattice):
            return NotImplemented
        return (
            self.T == other.T
            and all(np.array_equal(a, b) for a, b in zip(self.states, other.states))
            and all(np.array_equal(a, b) for a, b in zip(self.trans, other.trans))
            and all(np.array_equal(a, b) for a, b in zip(self.counts, other.counts))
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"ScenarioLattice(branching={tuple(self.branching)}, m={self.m})"

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "T": self.T,
            "m": self.m,
            "states": [s.tolist() for s in self.states],
            "trans": [p.tolist() for p in self.trans],
            "counts": [c.tolist() for c in self.counts],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioLattice":
        _check_version(d)
        try:
            lat = cls(d["states"], d["trans"], d.get("counts"))
        except KeyError as exc:
            raise InputError(f"lattice JSON lacks field {exc}") from None
        if "T" in d and int(d["T"]) != lat.T or "m" in d and int(d["m"]) != lat.m:
            raise StructureError("header T/m does not match the lattice arrays")
        return lat


# --------------------------------------------------------------------------- #
# Trajectory fan


class TrajectoryFan:
    """``N`` observed trajectories over ``T`` stages in ``m`` dimensions."""

    def __init__(self, data, m: int | None = None):
        a = np.asarray(data, dtype=float)
        if a.ndim == 2:
            if m is None or m == 1:
                a = a[:, :, None]
            else:
                if a.shape[1] % m:
                    raise InputError(f"{a.shape[1]} columns are not a multiple of m={m}")
                a = a.reshape(a.shape[0], a.shape[1] // m, m)
        if a.ndim != 3:
            raise InputError(f"fan data must be N x T x m, got shape {a.shape}")
        N, T, mm = a.shape
        if N < 1 or T < 2 or mm < 1:
            raise InputError(f"fan needs N >= 1, T >= 2, m >= 1; got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InputError("fan contains non-finite values")
        self.data = _frozen(a)

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def T(self) -> int:
        return self.data.shape[1]

    @property
    def m(self) -> int:
        return self.data.shape[2]

    def has_common_start(self) -> bool:
        return bool(np.all(self.data[:, 0] == self.data[0, 0]))

    def check_start(self) -> bool:
        """Warn if the trajectories do not share their first-stage value."""
        ok = self.has_common_start()
        if not ok:
            warnings.warn("fan trajectories do not share a common first-stage value", stacklevel=2)
        return ok

    def __len__(self) -> int:
        return self.N

    def __repr__(self) -> str:
        return f"TrajectoryFan(N={self.N}, T={self.T}, m={self.m})"


# --------------------------------------------------------------------------- #
# Paths


def path_count(obj) -> int:
    if isinstance(obj, ScenarioTree):
        return int(obj.leaves().shape[0])
    if isinstance(obj, ScenarioLattice):
        return obj.path_count()
    raise TypeError(f"cannot count paths of {type(obj).__name__}")


def enumerate_paths(obj, cap: int = DEFAULT_PATH_CAP) -> list[tuple[np.ndarray, float]]:
    """All scenarios of a tree or lattice as ``(states (T, m), probability)``.

    Lattices recombine, so their path count ``prod(b_t)`` explodes quickly;
    enumeration is refused with :class:`PathEnumerationRefused` above ``cap``.
    """
    count = path_count(obj)
    if count > cap:
        raise PathEnumerationRefused(count, cap)
    return list(_iter_paths(obj))


def _iter_paths(obj) -> Iterator[tuple[np.ndarray, float]]:
    if isinstance(obj, ScenarioTree):
        for leaf in obj.leaves():
            nodes = obj.path_to(int(leaf))
            yield obj.state[nodes].copy(), float(np.prod(obj.prob[nodes]))
        return
    T = obj.T
    idx = [0] * T

    def rec(t, p):
        if t == T:
            yield np.stack([obj.states[s][idx[s]] for s in range(T)]), p
            return
        for j in range(obj.states[t].shape[0]):
            idx[t] = j
            yield from rec(t + 1, p * obj.trans[t - 1][idx[t - 1], j])

    yield from rec(1, 1.0)


def tree_paths(tree: ScenarioTree) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised path view: ``(leaf_nodes, node_paths (L, T), probabilities)``."""
    leaves = tree.leaves()
    paths = np.empty((leaves.shape[0], tree.T), dtype=np.int64)
    paths[:, -1] = leaves
    for t in range(tree.T - 2, -1, -1):
        paths[:, t] = tree.pred[paths[:, t + 1]]
    probs = np.prod(tree.prob[paths], axis=1)
    return leaves, paths, probs


# --------------------------------------------------------------------------- #
# JSON / CSV


def format_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise InputError(f"cannot serialise non-finite value {x!r}")
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def dumps(obj, indent: int | None = None) -> str:
    """Deterministic JSON with every float written to 17 significant digits."""

    def enc(o, level):
        pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
        end = "" if indent is None else "\n" + " " * (indent * level)
        sep = "," if indent is None else ","
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return format_float(o)
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, np.ndarray):
            return enc(o.tolist(), level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{" + sep.join(items) + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            # numeric rows stay on one line
            if indent is not None and all(
                isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)
                for v in o
            ):
                return "[" + ", ".join(enc(v, level) for v in o) + "]"
            return "[" + sep.join(f"{pad}{enc(v, level + 1)}" for v in o) + end + "]"
        raise TypeError(f"cannot serialise {type(o).__name__}")

    return enc(obj, 0)


def save_json(obj, path) -> None:
    data = obj.to_dict() if hasattr(obj, "to_dict") else obj
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(data, indent=1))
        fh.write("\n")


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def load_tree(path) -> ScenarioTree:
    return ScenarioTree.from_dict(_read_json(path))


def load_lattice(path) -> ScenarioLattice:
    return ScenarioLattice.from_dict(_read_json(path))


def load_model(path):
    """Load either a tree or a lattice JSON, detected by its fields."""
    d = _read_json(path)
    if "pred" in d:
        return ScenarioTree.from_dict(d)
    if "trans" in d:
        return ScenarioLattice.from_dict(d)
    raise InputError(f"{path}: neither a tree nor a lattice")


def read_fan_csv(path, m: int = 1) -> TrajectoryFan:
    """Read a trajectory CSV (one row per trajectory, stage-major columns).

    A first row that does not parse as numbers is treated as a header.
    """
    import csv

    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1 and not rows:
                    continue
                for col, c in enumerate(row, start=1):
                    try:
                        float(c)
                    except ValueError:
                        raise InputError(
                            f"{path}: row {lineno}, column {col}: cannot parse {c!r}"
                        ) from None
                raise  # pragma: no cover
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise InputError(f"{path}: row {lineno} has {len(vals)} columns, expected {width}")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return TrajectoryFan(np.array(rows), m=m)


def fan_to_csv(data, fh, header: bool = False) -> None:
    a = data.data if isinstance(data, TrajectoryFan) else np.asarray(data, dtype=float)
    if a.ndim == 2:
        a = a[:, :, None]
    N, T, m = a.shape
    if header:
        if m == 1:
            names = [f"stage{t + 1}" for t in range(T)]
        else:
            names = [f"stage{t + 1}_dim{d + 1}" for t in range(T) for d in range(m)]
        fh.write(",".join(names) + "\n")
    for row in a.reshape(N, T * m):
        fh.write(",".join(format_float(v) for v in row) + "\n")


def write_fan_csv(path, data, header: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fan_to_csv(data, fh, header=header)
