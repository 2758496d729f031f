"""Command-line entry point: ``groundgap {generate,gapscan,sweep,hybrid,fit}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .encoding import FixedPointEncoding, compile_problem, encoding_for_values
from .hybrid import SAMPLERS, HybridConfig, run_benchmark
from .problems import EnsembleSpec, generate, load_ensemble, save_ensemble
from .spectral import DEFAULT_MAX_QUBITS, Schedule, final_gap, scan_gap
from .sweeps import (FAMILIES, FIGURE_FAMILIES, PRESET_NAMES, SweepConfig, fit_curve, read_sweep_csv,
                     run_sweep, unscaled_rows, write_fits_json, write_sweep_csv)
from ._rng import STAGE_EIGENSOLVER, child_seed

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class Run:
    """Collects outputs and notes for one command; always leaves a manifest behind."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.out_dir = Path(args.out_dir)
        self.seed = args.seed
        self.config = {k: v for k, v in vars(args).items() if k != "func"}
        self.outputs: list[str] = []
        self.skipped: list[dict] = []
        self.status = "ok"
        self.error = None
        self.started = time.time()

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(str(p))
        return p

    def manifest(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "version": __version__,
            "outputs": self.outputs,
            "skipped": self.skipped,
            "status": self.status,
            "error": self.error,
            "started": datetime.fromtimestamp(self.started, timezone.utc).isoformat(),
            "duration_s": time.time() - self.started,
        }

    def write_manifest(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        p = self.out_dir / f"{self.command}.manifest.json"
        p.write_text(json.dumps(self.manifest(), indent=2, default=str) + "\n", encoding="utf-8")
        return p


def _range(text: str) -> tuple:
    try:
        lo, hi = (int(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI integers, got {text!r}")
    if lo >= hi:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return lo, hi


def _values(text: str) -> tuple:
    try:
        return tuple(float(t) if "." in t else int(t) for t in text.split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def cmd_generate(args, run: Run) -> None:
    if args.kind == "lse" and args.m is not None and args.m != args.n:
        raise SystemExit(_usage_error(args, "--m must equal --n for --kind lse"))
    m = args.n if args.kind == "lse" else (args.m if args.m is not None else 100)
    spec = EnsembleSpec(args.count, m, args.n, args.range, args.kappa, seed=args.seed,
                        kind=args.kind.upper())
    run.out_dir.mkdir(parents=True, exist_ok=True)
    save_ensemble(run.path(args.output), generate(spec), spec)


def _encoding_for(spec, bits):
    if bits is not None:
        return FixedPointEncoding.with_bits(bits)
    if spec is not None:
        return encoding_for_values(*spec.value_range)
    return FixedPointEncoding.with_bits(2)


def cmd_gapscan(args, run: Run) -> None:
    problems, spec = load_ensemble(args.ensemble)
    enc = _encoding_for(spec, args.bits)
    schedule = Schedule.uniform(args.grid)
    run.out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["problem,qubits,g_min,s_min,final_gap,scale,degenerate"]
    for i, problem in enumerate(problems):
        nq = problem.n * enc.bits_per_var
        if nq > args.max_qubits:
            run.skipped.append({"problem": i, "reason": f"{nq} qubits exceeds {args.max_qubits}"})
            continue
        _, _, ising = compile_problem(problem, enc, scaled=not args.unscaled)
        scan = scan_gap(ising, schedule, seed=child_seed(args.seed, STAGE_EIGENSOLVER, i),
                        max_qubits=args.max_qubits)
        scan.to_csv(run.path(f"gapscan_{i:04d}.csv"))
        lines.append(f"{i},{nq},{scan.g_min!r},{scan.s_min!r},{final_gap(ising)!r},"
                     f"{float(ising.scale)!r},{int(scan.degenerate.any())}")
    run.path("gapscan_summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if run.skipped:
        run.status = "partial"


def cmd_sweep(args, run: Run) -> None:
    overrides = {k: getattr(args, k) for k in ("m", "n", "c") if getattr(args, k) is not None}
    if args.values:
        overrides["values"] = args.values
    config = SweepConfig.preset(args.name, per_value=args.per_value, scaled=not args.unscaled,
                                grid_points=args.grid, **overrides)
    run.config["resolved"] = config.to_dict()
    rows = run_sweep(config, seed=args.seed, jobs=args.jobs)
    run.out_dir.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(run.path(f"sweep_{args.name}.csv"), rows)
    for row in rows:
        for rec in row.failures:
            run.skipped.append({"value": row.value, "problem": rec.index, "reason": rec.error})
    sets = [(f"fits_{args.name}.json", rows)]
    if config.parameter == "condition_kappa":
        other = unscaled_rows(config, rows)
        if config.scaled:
            write_sweep_csv(run.path(f"sweep_{args.name}_unscaled.csv"), other)
            sets.append((f"fits_{args.name}_unscaled.json", other))
    for name, data in sets:
        xs = np.array([float(r.value) for r in data if r.n_samples])
        ys = np.array([r.median_gmin for r in data if r.n_samples])
        fits = [fit_curve(f, xs, ys) for f in FIGURE_FAMILIES[config.parameter]
                if xs.size >= FAMILIES[f][0]]
        write_fits_json(run.path(name), fits)
    if run.skipped:
        run.status = "partial"


def cmd_hybrid(args, run: Run) -> None:
    problems, spec = load_ensemble(args.ensemble)
    enc = FixedPointEncoding.with_bits(args.bits) if args.bits else (
        encoding_for_values(*spec.value_range) if spec else FixedPointEncoding.with_bits(4))
    config = HybridConfig(enc, args.sampler, args.reads, args.sweeps, args.post_process, args.seed,
                          resample_loops=args.resample_loops)
    run.config["resolved"] = config.to_dict()
    run.config["tag"] = args.sampler + ("+PP" if args.post_process else "")
    bench = run_benchmark(problems, config, jobs=args.jobs)
    run.out_dir.mkdir(parents=True, exist_ok=True)
    bench.to_csv(run.path("benchmark.csv"))
    bench.save_summary(run.path("summary.json"))
    for i, err in bench.failures.items():
        run.skipped.append({"problem": i, "reason": err})
    if bench.failures:
        run.status = "partial"
    if not bench.comparisons:
        raise RuntimeError("no problem completed")


def cmd_fit(args, run: Run) -> None:
    xs, ys = read_sweep_csv(args.csv)
    # Without --family, try every family the data can support.
    families = args.family or [f for f in sorted(FAMILIES) if xs.size >= FAMILIES[f][0]]
    fits = [fit_curve(f, xs, ys) for f in families]
    run.out_dir.mkdir(parents=True, exist_ok=True)
    write_fits_json(run.path(args.output), fits)


def _usage_error(args, message: str) -> int:
    args._parser.error(message)  # exits with status 2
    return EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    common.add_argument("--jobs", type=_positive, default=argparse.SUPPRESS, help="worker processes (default 1)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS,
                        help="output directory (default $GROUNDGAP_OUT or the current directory)")

    parser = argparse.ArgumentParser(prog="groundgap", parents=[common],
                                     description="Minimum-gap scans and sampler-seeded Krylov solves.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a random problem ensemble")
    p.add_argument("--kind", choices=("lls", "lse"), default="lls")
    p.add_argument("--m", type=_positive, help="rows (LLS only; default 100)")
    p.add_argument("--n", type=_positive, required=True, help="columns")
    p.add_argument("--count", type=_positive, default=50)
    p.add_argument("--range", type=_range, default=(-8, 8), help="planted entries in [LO, HI) (default -8:8)")
    p.add_argument("--kappa", type=float, help="prescribed condition number")
    p.add_argument("--output", default="ensemble.json")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("gapscan", parents=[common], help="scan the minimum gap of each problem")
    p.add_argument("ensemble")
    p.add_argument("--grid", type=_positive, default=100, help="schedule points (default 100)")
    p.add_argument("--bits", type=_positive, help="bits per variable (default: fit the ensemble range)")
    p.add_argument("--unscaled", action="store_true", help="skip coefficient scaling")
    p.add_argument("--max-qubits", type=_positive, default=DEFAULT_MAX_QUBITS)
    p.set_defaults(func=cmd_gapscan)

    p = sub.add_parser("sweep", parents=[common], help="run a preset parameter sweep")
    p.add_argument("name", choices=sorted(PRESET_NAMES))
    p.add_argument("--per-value", type=_positive, default=100)
    p.add_argument("--values", type=_values, help="comma-separated override of the swept values")
    p.add_argument("--m", type=_positive)
    p.add_argument("--n", type=_positive)
    p.add_argument("--c", type=_positive)
    p.add_argument("--grid", type=_positive, default=100)
    p.add_argument("--unscaled", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("hybrid", parents=[common], help="benchmark sampler-seeded solves")
    p.add_argument("ensemble")
    p.add_argument("--sampler", choices=SAMPLERS, default="exhaustive")
    p.add_argument("--reads", type=_positive, default=1000)
    p.add_argument("--sweeps", type=_positive, default=100)
    p.add_argument("--post-process", action="store_true", help="greedy descent on the best read")
    p.add_argument("--bits", type=_positive, help="bits per variable (default: fit the ensemble range)")
    p.add_argument("--resample-loops", type=_positive, default=1)
    p.set_defaults(func=cmd_hybrid)

    p = sub.add_parser("fit", parents=[common], help="fit curve families to a sweep CSV")
    p.add_argument("csv")
    p.add_argument("--family", action="append", choices=sorted(FAMILIES))
    p.add_argument("--output", default="fits.json")
    p.set_defaults(func=cmd_fit)
    return parser


def _join_range(argv: list) -> list:
    # "--range -8:8" would otherwise be read as an unknown option.
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--range":
            out.append(f"--range={next(it, '')}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_range(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.seed = getattr(args, "seed", 0)
    args.jobs = getattr(args, "jobs", 1)
    args.out_dir = getattr(args, "out_dir", None) or os.environ.get("GROUNDGAP_OUT") or "."
    args._parser = parser
    run = Run(args.command, args)
    run.config.pop("_parser", None)
    code = EXIT_OK
    try:
        args.func(args, run)
    except SystemExit as exc:
        return int(exc.code or EXIT_USAGE)
    except Exception as exc:
        run.status = "failed"
        run.error = f"{type(exc).__name__}: {exc}"
        print(f"groundgap {args.command}: {run.error}", file=sys.stderr)
        code = EXIT_FAILURE
    run.write_manifest()
    return code


if __name__ == "__main__":
    sys.exit(main())
