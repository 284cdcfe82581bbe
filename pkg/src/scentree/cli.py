"""``scentree`` command line interface.

Subcommands: simulate, tree-approx, lattice-approx, kernel-gen, distance,
render, validate.  Reports are JSON with every float written to 17
significant digits and embed the resolved run configuration.  The thread count
is deliberately left out of reports: results never depend on it.

Exit codes: 0 success, 2 input error, 3 contract violation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field

from . import _accel, core
from .clustering import nested_cluster
from .core import (
    BranchingStructure,
    ScenarioLattice,
    ScenarioTree,
    TrajectoryFan,
    dumps,
    load_model,
    read_fan_csv,
)
from .distance import (
    DiscreteMeasure,
    aberration,
    nested_distance,
    wasserstein,
)
from .errors import ContractError, InputError, ScenTreeError
from .kernels import FAMILIES, KernelSampler, KernelSpec
from .processes import FAMILIES as PROCESSES
from .processes import FanSampler, ProcessSampler, ProcessSpec, fan_from_process
from .stochapprox import (
    StepSizeSchedule,
    initial_lattice,
    initial_tree,
    lattice_approximation,
    tree_approximation,
)
from .svg import render_svg


@dataclass
class RunConfig:
    """Resolved settings of one run, embedded in every report."""

    subcommand: str
    inputs: list = field(default_factory=list)
    output: str | None = None
    branching: list | None = None
    iters: int | None = None
    r: float | None = None
    schedule: dict | None = None
    kernel: str | None = None
    markovian: bool = False
    fixed_states: bool = False
    seed: int = 0
    process: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------- #
# helpers


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _emit_report(args, report: dict) -> None:
    text = dumps(report, indent=1) + "\n"
    if getattr(args, "report", None):
        _write_text(args.report, text)
    if not getattr(args, "quiet", False):
        sys.stdout.write(text)


def _branching(args, T: int | None) -> BranchingStructure:
    if args.branching is None:
        raise InputError("--branching is required")
    parts = [p for p in args.branching.replace(" ", "").split(",") if p]
    if len(parts) == 1:
        # a single number means that many nodes/children at every stage after the root
        if T is None:
            raise InputError("a scalar --branching needs the stage count (--T or input data)")
        return BranchingStructure([1] + [int(parts[0])] * (T - 1))
    b = BranchingStructure(args.branching)
    if T is not None and b.T != T:
        raise InputError(f"--branching has {b.T} stages but the data has {T}")
    return b


def _process_spec(args, T: int | None = None) -> ProcessSpec:
    return ProcessSpec(
        family=args.process,
        T=int(args.T if args.T is not None else (T or 4)),
        m=args.m,
        seed=args.seed,
        start=args.start,
        drift=args.drift,
        vol=args.vol,
        level=args.level,
    )


def _schedule(args) -> StepSizeSchedule:
    return StepSizeSchedule(args.alpha_a, args.alpha_c)


def _kernel_spec(args, m: int) -> KernelSpec:
    return KernelSpec(args.kernel or "epanechnikov", m=m, weighted_sigma=not args.unweighted_sigma)


def _read_fan(path, m: int) -> TrajectoryFan:
    if not os.path.exists(path):
        raise InputError(f"{path}: no such file")
    return read_fan_csv(path, m=m)


def _sampler_and_pilot(args, T_hint=None):
    """Sampler for SA runs and a pilot fan drawn from an independent stream."""
    if args.process:
        if args.input:
            raise InputError("give either --input or --process, not both")
        parts = [p for p in (args.branching or "").split(",") if p.strip()]
        if T_hint is None and len(parts) > 1:
            T_hint = len(parts)
        spec = _process_spec(args, T_hint)
        sampler = ProcessSampler(spec, stream=1)
        pilot = ProcessSampler(spec, stream=2).draw(args.pilot)
        return sampler, pilot, {"kind": "process", **spec.to_dict()}
    if not args.input:
        raise InputError("--input or --process is required")
    fan = _read_fan(args.input, args.m)
    if args.kernel:
        spec = _kernel_spec(args, fan.m)
        sampler = KernelSampler(fan, spec, args.markovian, seed=args.seed, stream=1)
        pilot = KernelSampler(fan, spec, args.markovian, seed=args.seed, stream=2).draw(args.pilot)
        return sampler, pilot, sampler.describe()
    sampler = FanSampler(fan, cycle=True)
    return sampler, fan.data, sampler.describe()


def _config(args, **kw) -> RunConfig:
    cfg = RunConfig(subcommand=args.command, seed=args.seed)
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


def _check(report: core.ValidationReport) -> None:
    if not report.ok:
        raise ContractError("; ".join(report.errors[:5]))


# --------------------------------------------------------------------------- #
# subcommands


def cmd_simulate(args) -> int:
    spec = _process_spec(args)
    if args.count < 0:
        raise InputError("--count must be >= 0")
    buf = io.StringIO()
    if args.count:
        core.fan_to_csv(fan_from_process(spec, args.count), buf, header=args.header)
    _write_text(args.output, buf.getvalue())
    return 0


def cmd_tree_approx(args) -> int:
    schedule = _schedule(args)
    fan_only = args.input and not args.kernel and not args.process
    if fan_only:
        fan = _read_fan(args.input, args.m)
        b = _branching(args, fan.T)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            tree, build = nested_cluster(fan, b, r=args.r, seed=args.seed, return_report=True)
        dist = aberration(fan, tree, r=args.r)
        report = {
            "mode": "nested_cluster",
            "K": fan.N,
            "r": args.r,
            "distance": dist,
            "seed": args.seed,
            "flags": build.flags + [{"warning": str(w.message)} for w in caught],
            "build": build.to_dict(),
        }
        source = {"kind": "fan", "N": fan.N}
    else:
        sampler, pilot, source = _sampler_and_pilot(args)
        b = _branching(args, sampler.T)
        init = initial_tree(b, pilot, seed=args.seed, method=args.init, r=args.r)
        tree, fit = tree_approximation(init, sampler, args.iters, args.r, schedule,
                                       burn_in=args.burn_in, seed=args.seed)
        report = {"mode": "stochastic_approximation", **fit.to_dict()}
        if isinstance(sampler, KernelSampler):
            report["flags"] = report["flags"] + sampler.flag_list()
    rep = tree.validate()
    report["validation"] = rep.to_dict()
    report["nodes"] = tree.n
    report["source"] = source
    report["config"] = _config(
        args, inputs=[args.input] if args.input else [], output=args.output,
        branching=list(b), iters=args.iters, r=args.r, schedule=schedule.to_dict(),
        kernel=args.kernel, markovian=args.markovian,
        process=source if args.process else None,
        extra={"init": args.init, "pilot": args.pilot, "burn_in": args.burn_in},
    ).to_dict()
    if args.output:
        core.save_json(tree, args.output)
    if args.svg:
        render_svg(tree, args.svg)
    _emit_report(args, report)
    _check(rep)
    return 0


def cmd_lattice_approx(args) -> int:
    schedule = _schedule(args)
    if args.input and args.kernel:
        args.markovian = True  # lattices model Markov processes
    sampler, pilot, source = _sampler_and_pilot(args)
    b = _branching(args, sampler.T)
    method = "quantile" if args.fixed_states else "kmeans"
    init = initial_lattice(b, pilot, seed=args.seed, method=method)
    lattice, fit = lattice_approximation(init, sampler, args.iters, args.r, schedule,
                                         fixed_states=args.fixed_states, seed=args.seed)
    report = {"mode": "lattice", **fit.to_dict()}
    if isinstance(sampler, KernelSampler):
        report["flags"] = report["flags"] + sampler.flag_list()
    rep = lattice.validate()
    report["validation"] = rep.to_dict()
    report["nodes"] = lattice.n_nodes
    report["paths"] = f"{float(lattice.path_count()):.6e}"
    report["source"] = source
    report["config"] = _config(
        args, inputs=[args.input] if args.input else [], output=args.output,
        branching=list(b), iters=args.iters, r=args.r, schedule=schedule.to_dict(),
        kernel=args.kernel, markovian=args.markovian, fixed_states=args.fixed_states,
        process=source if args.process else None, extra={"pilot": args.pilot},
    ).to_dict()
    if args.output:
        core.save_json(lattice, args.output)
    if args.svg:
        render_svg(lattice, args.svg)
    _emit_report(args, report)
    # unvisited rows are flagged by the fit report, not treated as violations
    errors = [e for e in rep.errors if "unvisited" not in e]
    if errors:
        raise ContractError("; ".join(errors[:5]))
    return 0


def cmd_kernel_gen(args) -> int:
    if not args.input:
        raise InputError("--input is required")
    if args.count < 0:
        raise InputError("--count must be >= 0")
    fan = _read_fan(args.input, args.m)
    sampler = KernelSampler(fan, _kernel_spec(args, fan.m), args.markovian, seed=args.seed)
    buf = io.StringIO()
    if args.count:
        core.fan_to_csv(sampler.draw(args.count), buf, header=args.header)
    _write_text(args.output, buf.getvalue())
    return 0


def _load_measure(path) -> DiscreteMeasure:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
    if "atoms" not in d or "masses" not in d:
        raise InputError(f"{path}: a measure needs 'atoms' and 'masses'")
    return DiscreteMeasure(d["atoms"], d["masses"])


def cmd_distance(args) -> int:
    files = args.files
    for f in files:
        if not os.path.exists(f):
            raise InputError(f"{f}: no such file")
    r = args.r
    out = {"metric": args.metric, "r": r}
    if args.metric == "wasserstein":
        if len(files) != 2:
            raise InputError("wasserstein needs two measure files")
        value, plan = wasserstein(_load_measure(files[0]), _load_measure(files[1]), r)
        out.update(value=value, plan_nnz=plan.nnz)
    elif args.metric == "nested":
        if len(files) != 2:
            raise InputError("nested needs two tree files")
        A, B = load_model(files[0]), load_model(files[1])
        if not isinstance(A, ScenarioTree) or not isinstance(B, ScenarioTree):
            raise InputError("nested distances are defined between trees")
        out["value"] = nested_distance(A, B, r)
    else:
        if len(files) != 1:
            raise InputError("aberration needs one tree or lattice file")
        model = load_model(files[0])
        if args.input:
            value = aberration(_read_fan(args.input, model.m), model, r)
        elif args.process:
            spec = _process_spec(args, model.T)
            value = aberration(ProcessSampler(spec, stream=3), model, r, n_samples=args.samples)
        else:
            raise InputError("aberration needs --input fan.csv or --process")
        out["value"] = value
    out["config"] = _config(args, inputs=list(files) + ([args.input] if args.input else []),
                            r=r, process=None).to_dict()
    _emit_report(args, out)
    return 0


def cmd_render(args) -> int:
    path = args.files[0] if args.files else args.input
    if not path or not os.path.exists(path):
        raise InputError(f"{path}: no such file")
    obj = _read_fan(path, args.m) if path.lower().endswith(".csv") else load_model(path)
    text = render_svg(obj)
    _write_text(args.output or args.svg, text)
    return 0


def cmd_validate(args) -> int:
    path = args.files[0] if args.files else args.input
    if not path or not os.path.exists(path):
        raise InputError(f"{path}: no such file")
    if path.lower().endswith(".csv"):
        fan = _read_fan(path, args.m)
        report = {"kind": "fan", "N": fan.N, "T": fan.T, "m": fan.m,
                  "common_start": fan.has_common_start(), "ok": True}
        _emit_report(args, report)
        return 0
    obj = load_model(path)
    rep = obj.validate()
    report = {"kind": "tree" if isinstance(obj, ScenarioTree) else "lattice", **rep.to_dict()}
    if isinstance(obj, ScenarioLattice):
        report["nodes"] = obj.n_nodes
    else:
        report["nodes"] = obj.n
    _emit_report(args, report)
    _check(rep)
    return 0


# --------------------------------------------------------------------------- #
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scentree", description="Scenario trees and lattices.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--input", help="trajectory CSV")
        sp.add_argument("--output", help="output file (default: stdout for text outputs)")
        sp.add_argument("--report", help="also write the JSON report here")
        sp.add_argument("--quiet", action="store_true", help="do not print the report")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $SCENTREE_THREADS or all cores)")
        sp.add_argument("--m", type=int, default=1, help="dimension of CSV data")
        sp.add_argument("--r", type=float, default=2.0)
        sp.add_argument("--svg")
        return sp

    def process(sp):
        sp.add_argument("--process", choices=PROCESSES)
        sp.add_argument("--T", type=int)
        sp.add_argument("--start", choices=("random", "zero"), default="random")
        sp.add_argument("--drift", type=float, default=0.0)
        sp.add_argument("--vol", type=float, default=1.0)
        sp.add_argument("--level", type=float, default=0.0)
        return sp

    def kernel(sp):
        sp.add_argument("--kernel", choices=FAMILIES)
        sp.add_argument("--markovian", action="store_true")
        sp.add_argument("--unweighted-sigma", action="store_true",
                        help="plain stage variance instead of the weighted one")
        return sp

    def sa(sp):
        sp.add_argument("--branching", help="e.g. 1,3,3,3, or a single per-stage count")
        sp.add_argument("--iters", type=int, default=100_000)
        sp.add_argument("--alpha-a", type=float, default=1.0)
        sp.add_argument("--alpha-c", type=float, default=30.0)
        sp.add_argument("--pilot", type=int, default=10_000,
                        help="pilot trajectories used to initialise the model")
        return sp

    s = process(common(sub.add_parser("simulate", help="sample a reference process")))
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--header", action="store_true")
    s.set_defaults(func=cmd_simulate, process="running_maximum")

    s = sa(kernel(process(common(sub.add_parser("tree-approx", help="fit a scenario tree")))))
    s.add_argument("--init", choices=("cluster", "skeleton"), default="cluster")
    s.add_argument("--burn-in", action="store_true")
    s.set_defaults(func=cmd_tree_approx)

    s = sa(kernel(process(common(sub.add_parser("lattice-approx", help="fit a scenario lattice")))))
    s.add_argument("--fixed-states", action="store_true")
    s.set_defaults(func=cmd_lattice_approx)

    s = kernel(common(sub.add_parser("kernel-gen", help="generate trajectories by kernel density")))
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--header", action="store_true")
    s.set_defaults(func=cmd_kernel_gen)

    s = process(common(sub.add_parser("distance", help="Wasserstein, nested or aberration")))
    s.add_argument("--metric", choices=("wasserstein", "nested", "aberration"), default="nested")
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("files", nargs="*")
    s.set_defaults(func=cmd_distance, r=1.0)

    s = common(sub.add_parser("render", help="draw a tree, lattice or fan as SVG"))
    s.add_argument("files", nargs="*")
    s.set_defaults(func=cmd_render)

    s = common(sub.add_parser("validate", help="check tree/lattice invariants"))
    s.add_argument("files", nargs="*")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = args.threads
    if threads is None and os.environ.get("SCENTREE_THREADS"):
        try:
            threads = int(os.environ["SCENTREE_THREADS"])
        except ValueError:
            print("scentree: SCENTREE_THREADS must be an integer", file=sys.stderr)
            return 2
    _accel.set_threads(threads)
    try:
        return int(args.func(args) or 0)
    except ScenTreeError as exc:
        print(f"scentree: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"scentree: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
