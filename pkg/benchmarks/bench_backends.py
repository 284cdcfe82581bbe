"""Compare the numba kernels with their numpy fallbacks.

Usage::

    python benchmarks/bench_backends.py [--repeat 3] [--quick]

Every kernel is run once per backend to warm up (numba compiles on first use),
then timed ``--repeat`` times; the best time is reported.  Results are checked
for agreement before the timings are printed.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

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
from scentree.distance import closest_paths_tree
from scentree.kernels import generate
from scentree.processes import ProcessSampler, ProcessSpec


def cases(quick: bool):
    rng = np.random.default_rng(0)
    scale = 10 if quick else 1

    n = 60 // (2 if quick else 1)
    a, b = rng.random(n), rng.random(n)
    a, b = a / a.sum(), b / b.sum()
    C = rng.random((n, n))
    yield "transport simplex", lambda: transport(a, b, C)[1]

    A = tree_from_branching((1, 4, 4, 4)).copy_with(state=rng.normal(size=(85, 1)).cumsum(0))
    B = tree_from_branching((1, 3, 5, 4)).copy_with(state=rng.normal(size=(79, 1)).cumsum(0))
    yield "nested distance", lambda: nested_distance(A, B, 2.0)

    xs = rng.normal(size=(200_000 // scale, 4, 1)).cumsum(axis=1)
    yield "closest paths", lambda: closest_paths_tree(A, xs, 2.0)[2]

    spec = ProcessSpec("running_maximum", T=4, seed=1, start="zero")
    init = tree_from_branching((1, 3, 3, 3))
    k_sa = 200_000 // scale
    yield "tree SA", lambda: tree_approximation(init, ProcessSampler(spec), k_sa)[1].distance

    walk = ProcessSpec("gaussian_walk", T=5, seed=1, start="zero")
    yield "lattice SA", lambda: lattice_approximation(
        (1, 3, 4, 5, 6), ProcessSampler(walk), k_sa, n_pilot=2000)[1].distance

    fan = TrajectoryFan(rng.normal(size=(100, 24)).cumsum(axis=1))
    kspec = KernelSpec()
    U = rng.random((20_000 // scale, 24))
    Z = rng.random((20_000 // scale, 24, 1))
    yield "kernel generator", lambda: generate(fan, kspec, U, Z, False)[0]
    yield "kernel generator (markov)", lambda: generate(fan, kspec, U, Z, True)[0]


def best_of(fn, repeat: int) -> tuple[float, object]:
    out = fn()  # warm-up / compile
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)

    print(f"{'kernel':<28}{'numba [s]':>12}{'numpy [s]':>12}{'speed-up':>10}  agree")
    for name, fn in cases(args.quick):
        with scentree.backend("numba"):
            t_nb, r_nb = best_of(fn, args.repeat)
        with scentree.backend("numpy"):
            t_np, r_np = best_of(fn, args.repeat)
        agree = np.allclose(np.asarray(r_nb, dtype=float), np.asarray(r_np, dtype=float),
                            rtol=1e-9, atol=1e-12)
        print(f"{name:<28}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x  {agree}")


if __name__ == "__main__":
    main()
