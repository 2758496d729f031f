"""Sampler-seeded Krylov solves compared against the zero initial guess."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._parallel import ordered_map
from ._rng import STAGE_ANNEALER, child_seed
from .encoding import FixedPointEncoding, QuboModel, build_qubo, decode
from .krylov import SolveReport, StoppingRule, solve
from .problems import Problem
from .samplers import MAX_EXHAUSTIVE_BITS, SampleSet, greedy_descent, sample_sa, solve_exhaustive

TIE_TOL = 1e-12
SAMPLERS = ("exhaustive", "sa")


class HybridError(RuntimeError):
    """A pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class HybridConfig:
    encoding: FixedPointEncoding = field(default_factory=lambda: FixedPointEncoding.with_bits(4))
    sampler: str = "exhaustive"
    reads: int = 1000
    sweeps: int = 100
    post_process: bool = False
    seed: int = 0
    top_k: int = 16
    resample_loops: int = 1
    stop: StoppingRule = StoppingRule()

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if self.reads < 1 or self.sweeps < 1:
            raise ValueError("reads and sweeps must be at least 1")
        if self.resample_loops < 1:
            raise ValueError("resample_loops must be at least 1")

    def check(self, n: int) -> None:
        bits = n * self.encoding.bits_per_var
        if self.sampler == "exhaustive" and bits > MAX_EXHAUSTIVE_BITS:
            raise ValueError(f"{bits} bits exceeds the exhaustive limit of {MAX_EXHAUSTIVE_BITS}")

    def to_dict(self) -> dict:
        return {
            "encoding": self.encoding.to_dict(),
            "sampler": self.sampler,
            "reads": self.reads,
            "sweeps": self.sweeps,
            "post_process": self.post_process,
            "seed": self.seed,
            "top_k": self.top_k,
            "resample_loops": self.resample_loops,
            "stop": {"atol": self.stop.atol, "btol": self.stop.btol, "conlim": self.stop.conlim,
                     "rtol": self.stop.rtol, "max_iters": self.stop.max_iters},
        }


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except HybridError:
        raise
    except Exception as exc:
        raise HybridError(name, exc) from exc


def _sample(q: QuboModel, config: HybridConfig, seed: int) -> SampleSet:
    if config.sampler == "exhaustive":
        return solve_exhaustive(q, config.top_k)
    return sample_sa(q, config.reads, config.sweeps, seed)


def seed_state(q: QuboModel, samples: SampleSet, post_process: bool) -> np.ndarray:
    """Bits used for decoding: the best read, optionally polished by greedy descent."""
    bits = samples.best
    return greedy_descent(q, bits) if post_process else bits


def quantum_guess(problem: Problem, config: HybridConfig, index: int = 0):
    """Approximate solution ``x^(q)`` from the sampler, plus the first sample set.

    With ``resample_loops > 1`` each further loop samples the residual system
    ``A d = b - A x`` on an encoding shifted ``c - 1`` exponents finer and
    keeps the correction when it lowers the residual.
    """
    config.check(problem.n)
    enc = config.encoding
    x = np.zeros(problem.n)
    first = None
    for loop in range(config.resample_loops):
        shift = loop * (enc.bits_per_var - 1)
        loop_enc = FixedPointEncoding(tuple(t - shift for t in enc.theta), enc.has_sign)
        target = Problem(problem.a, problem.b - problem.a @ x, None, problem.kind)
        q = _stage("qubo", build_qubo, target, loop_enc)
        seed = child_seed(config.seed, STAGE_ANNEALER, index, loop)
        samples = _stage("sampler", _sample, q, config, seed)
        bits = _stage("post_process", seed_state, q, samples, config.post_process)
        step = _stage("decode", decode, bits, loop_enc, problem.n)
        if first is None:
            first = samples
            x = step
        elif problem.residual_norm(x + step) < problem.residual_norm(x):
            x = x + step
    return x, first


def run_hybrid(problem: Problem, config: HybridConfig, index: int = 0) -> tuple[SolveReport, SampleSet]:
    """Sample, decode and warm-start the solver that matches the problem kind."""
    x_q, samples = quantum_guess(problem, config, index)
    report = _stage("solver", solve, problem.kind, problem.a, problem.b, x_q, config.stop, "quantum")
    return report, samples


@dataclass
class Comparison:
    """Head-to-head numbers for one problem; verdicts are derived, never stored."""

    problem_id: int
    iterations_quantum: int
    iterations_zero: int
    residual_quantum_at_fixed: float
    residual_zero_at_fixed: float
    baseline_converged: bool = True

    @property
    def verdict_iters(self) -> str:
        if self.iterations_quantum < self.iterations_zero:
            return "quantum"
        if self.iterations_quantum > self.iterations_zero:
            return "classical"
        return "tie"

    @property
    def verdict_residual(self) -> str:
        if not self.baseline_converged:
            return "unusable"
        diff = self.residual_zero_at_fixed - self.residual_quantum_at_fixed
        if abs(diff) <= TIE_TOL:
            return "tie"
        return "quantum" if diff > 0 else "classical"

    @property
    def improvement_pct(self) -> float:
        if self.iterations_zero == 0:
            return 0.0
        return 100.0 * (self.iterations_zero - self.iterations_quantum) / self.iterations_zero


def compare(problem: Problem, config: HybridConfig, problem_id: int = 0) -> Comparison:
    """Iterations to converge, and residual after the zero-guess iteration budget."""
    report_q, _ = run_hybrid(problem, config, problem_id)
    report_z = _stage("baseline", solve, problem.kind, problem.a, problem.b, None, config.stop, "zero")
    budget = config.stop.with_max_iters(report_z.iterations)
    fixed_q = _stage("solver", solve, problem.kind, problem.a, problem.b, report_q.x_initial, budget,
                     "quantum")
    return Comparison(
        problem_id,
        report_q.iterations,
        report_z.iterations,
        fixed_q.final_residual,
        report_z.final_residual,
        report_z.converged,
    )


@dataclass
class Benchmark:
    comparisons: list
    failures: dict
    n_problems: int

    @property
    def summary(self) -> dict:
        s = {
            "wins_iters": 0, "ties_iters": 0, "losses_iters": 0,
            "wins_resid": 0, "ties_resid": 0, "losses_resid": 0,
        }
        key = {"quantum": "wins", "tie": "ties", "classical": "losses"}
        unusable = 0
        for c in self.comparisons:
            s[key[c.verdict_iters] + "_iters"] += 1
            if c.verdict_residual == "unusable":
                unusable += 1
            else:
                s[key[c.verdict_residual] + "_resid"] += 1
        gains = [c.improvement_pct for c in self.comparisons if c.verdict_iters == "quantum"]
        s["median_improvement_pct"] = float(np.median(gains)) if gains else None
        s["unusable_resid"] = unusable
        s["n_problems"] = self.n_problems
        s["n_success"] = len(self.comparisons)
        s["valid"] = bool(self.comparisons)
        return s

    def to_csv(self, path) -> None:
        lines = ["problem_id,iters_quantum,iters_zero,res_quantum,res_zero,verdict_iters,verdict_residual"]
        for c in self.comparisons:
            lines.append(
                f"{c.problem_id},{c.iterations_quantum},{c.iterations_zero},"
                f"{float(c.residual_quantum_at_fixed)!r},{float(c.residual_zero_at_fixed)!r},"
                f"{c.verdict_iters},{c.verdict_residual}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def save_summary(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary, indent=2) + "\n", encoding="utf-8")


def _compare_task(item, config):
    pid, problem = item
    try:
        return compare(problem, config, pid), None
    except Exception as exc:
        return None, str(exc)


def run_benchmark(problems: Sequence[Problem], config: HybridConfig, jobs: int = 1) -> Benchmark:
    """Compare every problem; failures are kept by index and excluded from the counts."""
    if not problems:
        raise ValueError("benchmark needs at least one problem")
    results = ordered_map(partial(_compare_task, config=config), list(enumerate(problems)), jobs)
    comparisons = [c for c, _ in results if c is not None]
    failures = {i: err for i, (_, err) in enumerate(results) if err is not None}
    return Benchmark(comparisons, failures, len(problems))
