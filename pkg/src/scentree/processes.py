"""Reference stochastic processes and trajectory samplers.

Stage-1 convention
------------------
``start="random"`` (the default) draws the first increment at stage 1, so
``M_1 = xi_1`` for the running maximum and ``X_1 = Y_1`` for the random walk.
``start="zero"`` pins the first stage to 0 and starts the increments at stage 2,
which is the deterministic-root setting used when a tree or lattice is fitted
to the process.  Roots fitted to a random first stage take its mean.

Randomness is counter based: trajectory ``j`` of a fan is drawn from a Philox
stream keyed by ``(seed, j)``, so fans are reproducible and independent of the
order in which trajectories are generated.  Streaming samplers key one Philox
stream per block of trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import TrajectoryFan
from .errors import InputError

FAMILIES = ("running_maximum", "gaussian_walk", "constant", "custom")
STARTS = ("random", "zero")


def philox(*key: int) -> np.random.Generator:
    """Counter-based generator keyed by a tuple of non-negative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def _increments(z: np.ndarray, start: str) -> np.ndarray:
    if start not in STARTS:
        raise InputError(f"start must be one of {STARTS}, got {start!r}")
    if start == "zero":
        z = z.copy()
        z[:, 0] = 0.0
    return z


def running_maximum_from_increments(z: np.ndarray) -> np.ndarray:
    """Running maximum of the partial sums along axis 1."""
    return np.maximum.accumulate(np.cumsum(z, axis=1), axis=1)


def sample_running_maximum(T: int, seed: int = 0, start: str = "random") -> np.ndarray:
    """One running-maximum trajectory ``M_t = max_{t' <= t} sum_{i <= t'} xi_i``."""
    if T < 1:
        raise InputError("T must be >= 1")
    z = _increments(philox(seed).standard_normal((1, T)), start)
    return running_maximum_from_increments(z)[0]


def sample_gaussian_walk(T: int, seed: int = 0, start: str = "random") -> np.ndarray:
    """One Gaussian random walk trajectory ``X_t = sum_{k <= t} Y_k``."""
    if T < 1:
        raise InputError("T must be >= 1")
    z = _increments(philox(seed).standard_normal((1, T)), start)
    return np.cumsum(z, axis=1)[0]


@dataclass(frozen=True)
class ProcessSpec:
    """Parametric description of a reference process.

    ``custom`` is a random walk with per-stage ``drift`` and volatility ``vol``;
    ``constant`` repeats ``level`` at every stage.
    """

    family: str = "running_maximum"
    T: int = 4
    m: int = 1
    seed: int = 0
    start: str = "random"
    drift: float = 0.0
    vol: float = 1.0
    level: float = 0.0
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown process family {self.family!r}; expected {FAMILIES}")
        if self.T < 2:
            raise InputError("a process needs T >= 2 stages")
        if self.m < 1:
            raise InputError("m must be >= 1")
        if self.start not in STARTS:
            raise InputError(f"start must be one of {STARTS}")

    def transform(self, z: np.ndarray) -> np.ndarray:
        """Map standard normal increments ``(n, T, m)`` to trajectories."""
        if self.family == "constant":
            return np.full(z.shape, float(self.level))
        z = _increments(z, self.start)
        if self.family == "running_maximum":
            return running_maximum_from_increments(z)
        if self.family == "gaussian_walk":
            return np.cumsum(z, axis=1)
        inc = self.drift + self.vol * z
        if self.start == "zero":
            inc[:, 0] = 0.0
        return np.cumsum(inc, axis=1)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "T": self.T,
            "m": self.m,
            "seed": self.seed,
            "start": self.start,
            "drift": self.drift,
            "vol": self.vol,
            "level": self.level,
        }


def fan_from_process(spec: ProcessSpec, N: int) -> TrajectoryFan:
    """``N`` independent trajectories, trajectory ``j`` keyed by ``(spec.seed, j)``."""
    if N < 1:
        raise InputError("N must be >= 1")
    z = np.empty((N, spec.T, spec.m))
    for j in range(N):
        z[j] = philox(spec.seed, j).standard_normal((spec.T, spec.m))
    return TrajectoryFan(spec.transform(z))


# --------------------------------------------------------------------------- #
# Samplers: objects with ``T``, ``m`` and ``draw(n) -> (k <= n, T, m)``


class ProcessSampler:
    """Unlimited i.i.d. trajectories of a :class:`ProcessSpec`."""

    block = 8192

    def __init__(self, spec: ProcessSpec, stream: int = 1):
        self.spec = spec
        self.T, self.m = spec.T, spec.m
        self._stream = stream
        self._block_id = 0
        self._buf = np.empty((0, spec.T, spec.m))

    def draw(self, n: int) -> np.ndarray:
        out = []
        need = n
        while need > 0:
            if self._buf.shape[0] == 0:
                g = philox(self.spec.seed, self._stream, self._block_id)
                self._block_id += 1
                self._buf = self.spec.transform(g.standard_normal((self.block, self.T, self.m)))
            take = self._buf[:need]
            self._buf = self._buf[need:]
            out.append(take)
            need -= take.shape[0]
        return np.concatenate(out) if len(out) > 1 else out[0]

    def describe(self) -> dict:
        return {"kind": "process", **self.spec.to_dict(), "stream": self._stream}


class ConstantSampler:
    """Emits the same trajectory forever."""

    def __init__(self, path):
        p = np.asarray(path, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        self.path = p
        self.T, self.m = p.shape

    def draw(self, n: int) -> np.ndarray:
        return np.broadcast_to(self.path, (n, self.T, self.m)).copy()

    def describe(self) -> dict:
        return {"kind": "constant", "path": self.path.tolist()}


class FanSampler:
    """Replays the trajectories of a fan in order; finite unless ``cycle``."""

    def __init__(self, fan: TrajectoryFan, cycle: bool = False):
        self.fan = fan
        self.T, self.m = fan.T, fan.m
        self.cycle = cycle
        self._pos = 0

    def draw(self, n: int) -> np.ndarray:
        if self.cycle:
            idx = (self._pos + np.arange(n)) % self.fan.N
            self._pos = (self._pos + n) % self.fan.N
            return self.fan.data[idx].copy()
        out = self.fan.data[self._pos : self._pos + n].copy()
        self._pos += out.shape[0]
        return out

    def describe(self) -> dict:
        return {"kind": "fan", "N": self.fan.N, "cycle": self.cycle}


def as_sampler(obj):
    if isinstance(obj, ProcessSpec):
        return ProcessSampler(obj)
    if isinstance(obj, TrajectoryFan):
        return FanSampler(obj)
    if callable(getattr(obj, "draw", None)):
        return obj
    raise TypeError(f"cannot use {type(obj).__name__} as a trajectory sampler")


# --------------------------------------------------------------------------- #
# Synthetic weekly load data


def weekly_load_fan(n_weeks: int = 52, seed: int = 0) -> TrajectoryFan:
    """Hourly weekly load profiles (MW) with a day/night and weekday/weekend shape.

    A synthetic stand-in for a year of hourly electricity load: 168 stages per
    week, a seasonal level, AR(1) hourly noise and a few Monday holidays.
    """
    rng = philox(seed, 168)
    hours = np.arange(168)
    day, hour = hours // 24, hours % 24
    daily = 0.5 - 0.5 * np.cos(2 * np.pi * (hour - 3) / 24)
    profile = 42000.0 + 22000.0 * daily * np.where(day < 5, 1.0, 0.62)
    weeks = np.arange(n_weeks)
    season = 1.0 + 0.08 * np.cos(2 * np.pi * weeks / 52)
    data = profile[None, :] * season[:, None]
    eps = rng.standard_normal((n_weeks, 168))
    noise = np.zeros_like(eps)
    for h in range(168):
        noise[:, h] = (0.9 * noise[:, h - 1] if h else 0.0) + 900.0 * eps[:, h]
    data = data + noise
    holidays = rng.choice(n_weeks, size=min(4, n_weeks), replace=False)
    data[holidays, :24] = 0.78 * data[holidays, :24]
    return TrajectoryFan(data)
