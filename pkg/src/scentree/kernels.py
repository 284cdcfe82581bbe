"""Kernel conditional density estimation and trajectory generation.

Given a fan ``xi_1..xi_N`` a new trajectory is built stage by stage: normalise
the sample weights, set the bandwidth ``h_t = sigma_t N_t^(-1/(m+4))`` from the
effective sample size ``N_t``, pick a sample ``j*`` by the composition method,
draw ``x_t = xi_{j*,t} + h_t K_t`` and reweight the samples by their kernel
proximity to ``x_t`` (multiplicatively for the full history, replacing the
weights in the Markovian variant).

Weights are kept up to a positive factor: the ``h^-m`` normalisation of the
scaled kernel cancels on normalisation and is only applied where a density
value is returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit, prange
from .clustering import kmeans
from .core import BranchingStructure, ScenarioTree, TrajectoryFan
from .errors import InputError
from .processes import philox

FAMILIES = ("epanechnikov", "logistic", "gaussian")
_CODES = {name: i for i, name in enumerate(FAMILIES)}
H_FLOOR = 1e-12
UNDERFLOW = 1e-300
_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class KernelSpec:
    """Univariate kernel family; multivariate kernels are products.

    ``weighted_sigma`` computes the stage standard deviation with the current
    sample weights (off: plain variance over all samples).  ``per_dim`` uses
    one bandwidth per dimension instead of a pooled scalar.
    """

    family: str = "epanechnikov"
    m: int = 1
    weighted_sigma: bool = True
    per_dim: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown kernel {self.family!r}; expected one of {FAMILIES}")
        if self.m < 1:
            raise InputError("m must be >= 1")

    @property
    def code(self) -> int:
        return _CODES[self.family]

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "m": self.m,
            "weighted_sigma": self.weighted_sigma,
            "per_dim": self.per_dim,
        }


# --------------------------------------------------------------------------- #
# Kernels and their inverse CDFs


@njit
def _k1(code, x):
    if code == 0:
        return 0.75 * (1.0 - x * x) if abs(x) < 1.0 else 0.0
    if code == 1:
        e = np.exp(-abs(x))
        # 2 / (e^x + e^-x)^2 written to avoid overflow
        return 2.0 * e * e / (1.0 + e * e) ** 2
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def _k1_np(code: int, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if code == 0:
        return np.where(np.abs(x) < 1.0, 0.75 * (1.0 - x * x), 0.0)
    if code == 1:
        e = np.exp(-np.abs(x))
        return 2.0 * e * e / (1.0 + e * e) ** 2
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def kernel_eval(spec: KernelSpec, u) -> float:
    """Product kernel ``prod_q k(u_q)`` at an m-vector (or scalar for m=1)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (spec.m,):
        raise InputError(f"expected a vector of length {spec.m}")
    return float(np.prod(_k1_np(spec.code, u)))


def kernel_variates(family: str, size, rng: np.random.Generator) -> np.ndarray:
    """Draws from the standardised kernel density (inverse CDF where closed)."""
    if family == "gaussian":
        return rng.standard_normal(size)
    u = rng.random(size)
    if family == "epanechnikov":
        # root of -x^3 + 3x + 2 = 4u in [-1, 1]
        return 2.0 * np.sin(np.arcsin(2.0 * u - 1.0) / 3.0)
    if family == "logistic":
        # CDF (1 + tanh x) / 2
        return np.arctanh(np.clip(2.0 * u - 1.0, -1.0 + 1e-16, 1.0 - 1e-16))
    raise InputError(f"unknown kernel {family!r}")


def bandwidth(sigma: float, n_eff: float, m: int = 1) -> float:
    """``sigma * n_eff^(-1/(m+4))``; a zero ``sigma`` returns the 1e-12 floor."""
    if sigma < 0 or n_eff < 1 - 1e-12:
        raise InputError("need sigma >= 0 and n_eff >= 1")
    if sigma == 0:
        return H_FLOOR
    return max(float(sigma) * float(n_eff) ** (-1.0 / (m + 4)), H_FLOOR)


def effective_sample_size(w) -> float:
    """``(sum w)^2 / sum w^2``."""
    w = np.asarray(w, dtype=float)
    s2 = float(np.sum(w * w))
    if s2 == 0:
        raise InputError("all weights are zero")
    return float(np.sum(w)) ** 2 / s2


def composition_sample(w, U: float) -> int:
    """Smallest index ``j`` (0-based) with ``sum_{i<=j} w_i >= U``."""
    w = np.asarray(w, dtype=float)
    cum = np.cumsum(w)
    pos = np.flatnonzero(w > 0)
    if pos.size == 0:
        raise InputError("all weights are zero")
    if U <= 0:
        return int(pos[0])
    j = int(np.searchsorted(cum, U * cum[-1] if abs(cum[-1] - 1) > 1e-12 else U, side="left"))
    return int(min(j, pos[-1]))


# --------------------------------------------------------------------------- #
# Stage statistics shared by both backends


@njit
def _stage_var(w, xt, q, weighted):
    N = xt.shape[0]
    mu = 0.0
    var = 0.0
    if weighted:
        for j in range(N):
            mu += w[j] * xt[j, q]
        for j in range(N):
            d = xt[j, q] - mu
            var += w[j] * d * d
    else:
        for j in range(N):
            mu += xt[j, q]
        mu /= N
        for j in range(N):
            d = xt[j, q] - mu
            var += d * d
        var /= N
    return max(var, 0.0)


@njit
def _stage_bandwidth(w, xt, weighted, per_dim, h_out):
    """Fill ``h_out`` (length m) for stage values ``xt`` (N, m).

    Returns 0, or 1 if the 1e-12 floor was used, or 2 if the weighted spread
    vanished (a single effective sample) and the plain stage spread was used.
    """
    N, m = xt.shape
    s2 = 0.0
    for j in range(N):
        s2 += w[j] * w[j]
    neff = max(1.0 / s2, 1.0)
    fac = neff ** (-1.0 / (m + 4))
    var = np.empty(m)
    for q in range(m):
        var[q] = _stage_var(w, xt, q, weighted)
    code = 0
    if per_dim:
        for q in range(m):
            if var[q] == 0.0 and weighted:
                var[q] = _stage_var(w, xt, q, False)
                if var[q] > 0.0:
                    code = 2
            h = np.sqrt(var[q]) * fac
            if h < 1e-12 or var[q] == 0.0:
                h = 1e-12
                code = 1
            h_out[q] = h
        return code
    pooled = 0.0
    for q in range(m):
        pooled += var[q]
    if pooled == 0.0 and weighted:
        for q in range(m):
            pooled += _stage_var(w, xt, q, False)
        if pooled > 0.0:
            code = 2
    h = np.sqrt(pooled / m) * fac
    if h < 1e-12 or pooled == 0.0:
        h = 1e-12
        code = 1
    for q in range(m):
        h_out[q] = h
    return code


def _seqsum(a, axis=0):
    # sequential summation, matching the compiled loops bit for bit
    return np.cumsum(a, axis=axis).take(-1, axis=axis)


def _stage_bandwidth_np(w, xt, weighted, per_dim):
    """numpy twin of :func:`_stage_bandwidth`; returns ``(h, code)``."""
    N, m = xt.shape
    neff = max(1.0 / float(_seqsum(w * w)), 1.0)
    fac = neff ** (-1.0 / (m + 4))
    mu0 = _seqsum(xt) / N
    plain = np.maximum(_seqsum((xt - mu0) * (xt - mu0)) / N, 0.0)
    if weighted:
        mu = _seqsum(w[:, None] * xt)
        var = np.maximum(_seqsum(w[:, None] * (xt - mu) * (xt - mu)), 0.0)
    else:
        var = plain
    code = 0
    if per_dim:
        if weighted and np.any((var == 0.0) & (plain > 0.0)):
            code = 2
        var = np.where(var == 0.0, plain, var) if weighted else var
        h = np.sqrt(var) * fac
        bad = (h < H_FLOOR) | (var == 0.0)
        return np.where(bad, H_FLOOR, h), 1 if bad.any() else code
    pooled = float(_seqsum(var))
    if pooled == 0.0 and weighted and _seqsum(plain) > 0.0:
        pooled, code = float(_seqsum(plain)), 2
    h = np.sqrt(pooled / m) * fac
    if h < H_FLOOR or pooled == 0.0:
        return np.full(m, H_FLOOR), 1
    return np.full(m, h), code


def markov_bandwidths(fan: TrajectoryFan, spec: KernelSpec) -> np.ndarray:
    """Per-stage bandwidths ``(T, m)`` from uniform weights.

    The Markovian weight update uses these, so the weights after stage ``t``
    are a function of ``x_t`` alone.
    """
    uniform = np.full(fan.N, 1.0 / fan.N)
    return np.array([_stage_bandwidth_np(uniform, fan.data[:, t, :], spec.weighted_sigma,
                                         spec.per_dim)[0] for t in range(fan.T)])


# --------------------------------------------------------------------------- #
# Batch trajectory generation


@njit(parallel=True)
def _generate_nb(data, U, Z, code, markovian, weighted, per_dim, hmark, out, flags):
    n = out.shape[0]
    N, T, m = data.shape
    for s in prange(n):
        w = np.full(N, 1.0)
        h = np.empty(m)
        xt = np.empty((N, m))
        for t in range(T):
            tot = 0.0
            for j in range(N):
                tot += w[j]
            if tot < 1e-300:
                for j in range(N):
                    w[j] = 1.0 / N
                flags[s, 0] += 1
            else:
                for j in range(N):
                    w[j] /= tot
            for j in range(N):
                for q in range(m):
                    xt[j, q] = data[j, t, q]
            status = _stage_bandwidth(w, xt, weighted, per_dim, h)
            if status > 0:
                flags[s, status] += 1
            # composition method
            u = U[s, t]
            acc = 0.0
            js = -1
            last = 0
            for j in range(N):
                if w[j] > 0.0:
                    last = j
                    acc += w[j]
                    if acc >= u:
                        js = j
                        break
            if js < 0:
                js = last
            for q in range(m):
                out[s, t, q] = data[js, t, q] + h[q] * Z[s, t, q]
            for j in range(N):
                k = 1.0
                for q in range(m):
                    if markovian:
                        k *= _k1(code, (out[s, t, q] - data[j, t, q]) / hmark[t, q])
                    else:
                        k *= _k1(code, (out[s, t, q] - data[j, t, q]) / h[q])
                if markovian:
                    w[j] = k
                else:
                    w[j] *= k


def _generate_np(data, U, Z, code, markovian, weighted, per_dim, hmark, out, flags):
    n = out.shape[0]
    N, T, m = data.shape
    w = np.ones((n, N))
    for t in range(T):
        tot = np.cumsum(w, axis=1)[:, -1]
        low = tot < UNDERFLOW
        flags[low, 0] += 1
        w = np.where(low[:, None], 1.0 / N, w / np.where(low, 1.0, tot)[:, None])
        xt = data[:, t, :]
        h = np.empty((n, m))
        for s in range(n):
            h[s], status = _stage_bandwidth_np(w[s], xt, weighted, per_dim)
            if status:
                flags[s, status] += 1
        cum = np.cumsum(w, axis=1)
        hit = (cum >= U[:, t, None]) & (w > 0)
        last = N - 1 - np.argmax((w > 0)[:, ::-1], axis=1)
        js = np.where(hit.any(axis=1), np.argmax(hit, axis=1), last)
        out[:, t, :] = data[js, t, :] + h * Z[:, t, :]
        hk = hmark[t][None, None, :] if markovian else h[:, None, :]
        k = np.prod(_k1_np(code, (out[:, t, None, :] - xt[None, :, :]) / hk), axis=2)
        w = k if markovian else w * k


def generate(fan: TrajectoryFan, spec: KernelSpec, U, Z, markovian: bool = False):
    """Trajectories for prescribed uniforms ``U`` (n, T) and kernel draws ``Z`` (n, T, m).

    Returns ``(out (n, T, m), flags (n, 3))`` where the flag columns count, per
    trajectory, weight underflow resets, bandwidth floors and stages where the
    weighted spread vanished and the plain stage spread was used instead.
    With ``markovian`` the weights are replaced at every stage by the kernel
    proximity to ``x_t`` under the uniform-weight bandwidth of
    :func:`markov_bandwidths`.
    """
    data = np.ascontiguousarray(fan.data)
    if spec.m != fan.m:
        raise InputError(f"kernel dimension {spec.m} differs from fan dimension {fan.m}")
    n = U.shape[0]
    out = np.empty((n, fan.T, fan.m))
    flags = np.zeros((n, 3), dtype=np.int64)
    args = (
        data, np.ascontiguousarray(U), np.ascontiguousarray(Z), spec.code,
        bool(markovian), bool(spec.weighted_sigma), bool(spec.per_dim),
        markov_bandwidths(fan, spec), out, flags,
    )
    if _accel.use_numba():
        _generate_nb(*args)
    else:
        _generate_np(*args)
    return out, flags


class KernelSampler:
    """Unlimited trajectories from the kernel conditional density of a fan.

    Randomness is drawn per block of trajectories from a Philox stream keyed
    by ``(seed, stream, block)``, so the sequence of trajectories depends only on the
    seed, never on how ``draw`` calls are split or on the thread count.
    """

    block = 4096

    def __init__(self, fan: TrajectoryFan, spec: KernelSpec | None = None,
                 markovian: bool = False, seed: int = 0, stream: int = 0):
        if fan.N < 2:
            raise InputError("kernel generation needs at least 2 trajectories")
        self.fan = fan
        self.spec = spec or KernelSpec(m=fan.m)
        if self.spec.m != fan.m:
            raise InputError(f"kernel dimension {self.spec.m} differs from fan dimension {fan.m}")
        self.markovian = bool(markovian)
        self.seed = int(seed)
        self.stream = int(stream)
        self.T, self.m = fan.T, fan.m
        self._block_id = 0
        self._buf = np.empty((0, self.T, self.m))
        self.flags = np.zeros(3, dtype=np.int64)

    def _next_block(self) -> np.ndarray:
        g = philox(self.seed, 0x6B65726E, self.stream, self._block_id)
        self._block_id += 1
        U = g.random((self.block, self.T))
        Z = kernel_variates(self.spec.family, (self.block, self.T, self.m), g)
        out, flags = generate(self.fan, self.spec, U, Z, self.markovian)
        self.flags += flags.sum(axis=0)
        return out

    def draw(self, n: int) -> np.ndarray:
        out, need = [], int(n)
        while need > 0:
            if self._buf.shape[0] == 0:
                self._buf = self._next_block()
            take = self._buf[:need]
            self._buf = self._buf[need:]
            out.append(take)
            need -= take.shape[0]
        if not out:
            return np.empty((0, self.T, self.m))
        return np.concatenate(out) if len(out) > 1 else out[0]

    def flag_list(self) -> list:
        out = []
        if self.flags[0]:
            out.append({"weight_underflow_resets": int(self.flags[0])})
        if self.flags[1]:
            out.append({"bandwidth_floor": int(self.flags[1])})
        if self.flags[2]:
            out.append({"sigma_fallback": int(self.flags[2])})
        return out

    def describe(self) -> dict:
        return {"kind": "kernel", "N": self.fan.N, "markovian": self.markovian,
                "seed": self.seed, "stream": self.stream, **self.spec.to_dict()}


def kernel_trajectory(fan: TrajectoryFan, spec: KernelSpec | None = None,
                      markovian: bool = False, seed: int = 0) -> np.ndarray:
    """One trajectory ``(T, m)``; the first draw of ``KernelSampler(.., seed)``."""
    return KernelSampler(fan, spec, markovian, seed).draw(1)[0]


def kernel_trajectories(fan, count: int, spec=None, markovian=False, seed=0) -> np.ndarray:
    if count < 0:
        raise InputError("count must be >= 0")
    return KernelSampler(fan, spec, markovian, seed).draw(count)


# --------------------------------------------------------------------------- #
# Densities


def history_weights(fan: TrajectoryFan, spec: KernelSpec, history, markovian: bool = False):
    """Normalised weights and last-stage bandwidth after conditioning on ``history``.

    ``history`` holds ``x_1..x_t``.  The recursion is the generator's: weights
    start uniform and are multiplied (or, Markovian, replaced) by the kernel
    proximity at every stage of the history; the Markovian update uses the
    uniform-weight bandwidth, so it depends on the last value only.
    Returns ``(w, flags)``.
    """
    x = np.asarray(history, dtype=float).reshape(-1, fan.m)
    t = x.shape[0]
    if t < 1 or t >= fan.T + 1:
        raise InputError(f"history length must be in 1..{fan.T}")
    N = fan.N
    w = np.full(N, 1.0 / N)
    flags = []
    hmark = markov_bandwidths(fan, spec) if markovian else None
    for s in range(t):
        xt = fan.data[:, s, :]
        h, code = _stage_bandwidth_np(w, xt, spec.weighted_sigma, spec.per_dim)
        if code == 1:
            flags.append({"bandwidth_floor": s + 1})
        elif code == 2:
            flags.append({"sigma_fallback": s + 1})
        if markovian:
            h = hmark[s]
        k = np.prod(_k1_np(spec.code, (x[s][None, :] - xt) / h[None, :]), axis=1)
        w = k if markovian else w * k
        tot = w.sum()
        if tot < UNDERFLOW:
            w = np.full(N, 1.0 / N)
            flags.append({"weight_underflow": s + 1})
        else:
            w = w / tot
    return w, flags


def conditional_density(fan: TrajectoryFan, spec: KernelSpec, history, query,
                        markovian: bool = False) -> float:
    """``sum_j w_j(x_[t]) k_h(x_{t+1} - xi_{j,t+1})`` with ``k_h(u) = h^-m k(u/h)``."""
    x = np.asarray(history, dtype=float).reshape(-1, fan.m)
    t = x.shape[0]
    if t >= fan.T:
        raise InputError("the history must leave at least one stage to query")
    w, _ = history_weights(fan, spec, x, markovian)
    return _density_at(fan, spec, w, t, query)


def _density_at(fan, spec, w, t, query) -> float:
    xt = fan.data[:, t, :]
    h, _ = _stage_bandwidth_np(w, xt, spec.weighted_sigma, spec.per_dim)
    q = np.asarray(query, dtype=float).reshape(fan.m)
    k = np.prod(_k1_np(spec.code, (q[None, :] - xt) / h[None, :]) / h[None, :], axis=1)
    return float(w @ k)


def unconditional_density(fan: TrajectoryFan, spec: KernelSpec, t: int, query) -> float:
    """Kernel density of stage ``t`` (1-based) with uniform weights."""
    return _density_at(fan, spec, np.full(fan.N, 1.0 / fan.N), t - 1, query)


# --------------------------------------------------------------------------- #
# Direct tree construction


def direct_tree_from_densities(
    fan: TrajectoryFan,
    b,
    spec: KernelSpec | None = None,
    M: int = 1000,
    seed: int = 0,
    markovian: bool = False,
    return_report: bool = False,
):
    """Scenario tree built node by node from conditional kernel densities.

    At each node ``M`` samples of the next-stage conditional density are drawn
    by the composition method and reduced by k-means to ``b_{t+1}`` children
    with relative-count probabilities.  The root is the fan's stage-1 mean.
    If the conditional weights underflow the node falls back to the stage's
    unconditional density and is flagged.
    """
    b = BranchingStructure(b)
    spec = spec or KernelSpec(m=fan.m)
    if fan.N < 2:
        raise InputError("kernel estimation needs at least 2 trajectories")
    if fan.T != b.T or spec.m != fan.m:
        raise InputError("fan, branching structure and kernel dimension disagree")
    if M < 1:
        raise InputError("M must be >= 1")
    N = fan.N
    pred, prob, state = [-1], [1.0], [fan.data[:, 0].mean(axis=0)]
    weights = {}
    flags = []
    hmark = markov_bandwidths(fan, spec)
    w0, f0 = history_weights(fan, spec, state[0][None], markovian)
    weights[0] = w0
    flags.extend({"node": 0, **f} for f in f0)
    frontier = [0]
    for t in range(b.T - 1):
        new = []
        for node in frontier:
            w = weights.pop(node)
            g = philox(seed, 0x74726565, node)
            xt = fan.data[:, t + 1, :]
            h, _ = _stage_bandwidth_np(w, xt, spec.weighted_sigma, spec.per_dim)
            cum = np.cumsum(w)
            js = np.minimum(np.searchsorted(cum, g.random(M) * cum[-1], side="left"), N - 1)
            draws = xt[js] + h[None, :] * kernel_variates(spec.family, (M, fan.m), g)
            res = kmeans(draws, b[t + 1], r=2, seed=np.random.SeedSequence([seed, node]))
            counts = np.bincount(res.assignment, minlength=b[t + 1])
            for mean, c in zip(res.means, counts):
                child = len(pred)
                pred.append(node)
                prob.append(c / M)
                state.append(mean)
                new.append(child)
                hk = hmark[t + 1] if markovian else h
                k = np.prod(_k1_np(spec.code, (mean[None, :] - xt) / hk[None, :]), axis=1)
                wc = k if markovian else w * k
                tot = wc.sum()
                if tot < UNDERFLOW:
                    wc = np.ones(N)
                    flags.append({"node": child, "weight_underflow": True})
                weights[child] = wc / wc.sum()
        frontier = new
    tree = ScenarioTree(pred, prob, np.array(state))
    return (tree, {"flags": flags, "M": M}) if return_report else tree
