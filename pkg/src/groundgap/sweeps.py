"""Parameter sweeps of the minimum gap, median/MAD aggregation and decay-curve fits."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from ._parallel import ordered_map
from ._rng import STAGE_FIT, STAGE_SWEEP, child_seed, stream
from .encoding import FixedPointEncoding, compile_problem
from .problems import EnsembleSpec, generate
from .spectral import DEFAULT_MAX_QUBITS, Schedule, final_gap, scan_gap

PARAMETERS = ("precision_c", "variables_n", "rows_m", "condition_kappa")

PRESET_NAMES = {
    "precision": "precision_c",
    "variables": "variables_n",
    "rows": "rows_m",
    "condition": "condition_kappa",
}


@dataclass(frozen=True)
class SweepConfig:
    """One sweep axis plus the dimensions held fixed along it.

    ``m``, ``n`` and ``c`` are the base values; the swept one is overridden
    by each entry of ``values``.
    """

    parameter: str
    values: tuple
    per_value: int = 100
    m: int = 40
    n: int = 2
    c: int = 2
    value_range: tuple = (-2, 1)
    scaled: bool = True
    grid_points: int = 100
    max_qubits: int = DEFAULT_MAX_QUBITS

    def __post_init__(self):
        if self.parameter not in PARAMETERS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}; expected one of {PARAMETERS}")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "value_range", tuple(self.value_range))
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.per_value < 1:
            raise ValueError("per_value must be positive")
        for v in self.values:
            nq = self.dims(v)[1] * self.dims(v)[2]
            if nq > self.max_qubits:
                raise ValueError(f"{self.parameter}={v} needs {nq} qubits (limit {self.max_qubits})")

    @classmethod
    def preset(cls, name: str, **overrides) -> "SweepConfig":
        """Paper-default configuration for ``precision``, ``variables``, ``rows`` or ``condition``."""
        parameter = PRESET_NAMES.get(name, name)
        if parameter == "precision_c":
            base = dict(values=tuple(range(2, 7)), m=40, n=2, c=2)
        elif parameter == "variables_n":
            base = dict(values=tuple(range(2, 7)), m=40, n=2, c=2)
        elif parameter == "rows_m":
            base = dict(values=tuple(range(10, 301, 10)), m=40, n=4, c=2)
        elif parameter == "condition_kappa":
            base = dict(values=tuple(range(1, 11)) + tuple(range(20, 301, 10)), m=40, n=4, c=2)
        else:
            raise ValueError(f"unknown sweep preset {name!r}")
        return cls(parameter=parameter, **{**base, **overrides})

    def dims(self, value) -> tuple:
        """``(m, n, c, kappa)`` for one sweep value."""
        m, n, c, kappa = self.m, self.n, self.c, None
        if self.parameter == "precision_c":
            c = int(value)
        elif self.parameter == "variables_n":
            n = int(value)
        elif self.parameter == "rows_m":
            m = int(value)
        else:
            kappa = float(value)
        return m, n, c, kappa

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "values": list(self.values),
            "per_value": self.per_value,
            "m": self.m,
            "n": self.n,
            "c": self.c,
            "value_range": list(self.value_range),
            "scaled": self.scaled,
            "grid_points": self.grid_points,
            "max_qubits": self.max_qubits,
        }


@dataclass
class ProblemRecord:
    """Gap measurements for one problem of a sweep value."""

    index: int
    g_min: float = math.nan
    g_min_unscaled: float = math.nan
    final_gap_scaled: float = math.nan
    final_gap_unscaled: float = math.nan
    scale_factor: float = math.nan
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class SweepRow:
    parameter: str
    value: float
    median_gmin: float
    mad_gmin: float
    n_samples: int
    median_unscaled_gap: Optional[float] = None
    median_scale_factor: Optional[float] = None
    records: list = field(default_factory=list, repr=False)

    @property
    def failures(self) -> list:
        return [r for r in self.records if not r.ok]


def median_and_mad(values: Sequence[float]) -> tuple[float, float]:
    """Median and median absolute deviation."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("median of an empty list")
    med = float(np.median(x))
    return med, float(np.median(np.abs(x - med)))


def _measure(task, config: SweepConfig, seed: int) -> list:
    vi, value = task
    m, n, c, kappa = config.dims(value)
    spec = EnsembleSpec(config.per_value, m, n, config.value_range, kappa,
                        seed=child_seed(seed, STAGE_SWEEP, vi))
    enc = FixedPointEncoding.with_bits(c)
    schedule = Schedule.uniform(config.grid_points)
    both = config.parameter == "condition_kappa"
    records = []
    for pi, problem in enumerate(generate(spec)):
        rec = ProblemRecord(pi)
        scan_seed = child_seed(seed, STAGE_SWEEP, vi, pi)
        try:
            _, raw, scaled = compile_problem(problem, enc, scaled=True)
            scan = partial(scan_gap, schedule=schedule, seed=scan_seed, max_qubits=config.max_qubits)
            if both:
                g_scaled, rec.g_min_unscaled = scan(scaled).g_min, scan(raw).g_min
                rec.g_min = g_scaled if config.scaled else rec.g_min_unscaled
            else:
                rec.g_min = scan(scaled if config.scaled else raw).g_min
                if not config.scaled:
                    rec.g_min_unscaled = rec.g_min
            rec.final_gap_scaled = final_gap(scaled)
            rec.final_gap_unscaled = final_gap(raw)
            rec.scale_factor = scaled.scale
        except Exception as exc:  # recorded against (value, problem index)
            rec.error = f"{type(exc).__name__}: {exc}"
        records.append(rec)
    return records


def _row(config: SweepConfig, value, records: list) -> SweepRow:
    good = [r for r in records if r.ok]
    med, mad = median_and_mad([r.g_min for r in good]) if good else (math.nan, math.nan)
    row = SweepRow(config.parameter, value, med, mad, len(good), records=records)
    if config.parameter == "condition_kappa" and good:
        row.median_unscaled_gap = float(np.median([r.final_gap_unscaled for r in good]))
        row.median_scale_factor = float(np.median([r.scale_factor for r in good]))
    return row


def run_sweep(config: SweepConfig, seed: int = 0, jobs: int = 1) -> list[SweepRow]:
    """Measure ``g_min`` over an ensemble at every sweep value.

    Value ``i`` draws its ensemble from a seed derived from ``(seed, i)`` so
    rows are reproducible independently of each other and of ``jobs``.  For
    the condition sweep each problem is scanned both scaled and unscaled.
    """
    tasks = list(enumerate(config.values))
    per_value = ordered_map(partial(_measure, config=config, seed=seed), tasks, jobs)
    return [_row(config, value, recs) for (_, value), recs in zip(tasks, per_value)]


def unscaled_rows(config: SweepConfig, rows: Sequence[SweepRow]) -> list[SweepRow]:
    """Condition-sweep rows re-aggregated on the unscaled ``g_min`` recorded in the same pass."""
    if config.parameter != "condition_kappa":
        raise ValueError("only the condition sweep records both scalings")
    out = []
    for row in rows:
        good = [r for r in row.records if r.ok]
        med, mad = median_and_mad([r.g_min_unscaled for r in good]) if good else (math.nan, math.nan)
        out.append(replace(row, median_gmin=med, mad_gmin=mad))
    return out


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2 ** 53 else repr(x)


def write_sweep_csv(path, rows: Sequence[SweepRow]) -> None:
    extra = any(r.median_scale_factor is not None for r in rows)
    header = "param,value,median_gmin,mad_gmin,n_samples"
    if extra:
        header += ",median_unscaled_gap,median_scale_factor"
    lines = [header]
    for r in rows:
        cells = [r.parameter, _fmt(r.value), repr(float(r.median_gmin)), repr(float(r.mad_gmin)),
                 str(r.n_samples)]
        if extra:
            cells += [repr(float(r.median_unscaled_gap if r.median_unscaled_gap is not None else math.nan)),
                      repr(float(r.median_scale_factor if r.median_scale_factor is not None else math.nan))]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_sweep_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """``(values, median_gmin)`` columns of a sweep CSV."""
    rows = [ln.split(",") for ln in Path(path).read_text(encoding="utf-8").splitlines()
            if ln and not ln.startswith("#")]
    if not rows or rows[0][:3] != ["param", "value", "median_gmin"]:
        raise ValueError(f"{path}: not a sweep CSV")
    data = np.array([[float(r[1]), float(r[2])] for r in rows[1:]]).reshape(-1, 2)
    return data[:, 0], data[:, 1]


# --- curve fitting -----------------------------------------------------------

FAMILIES = {
    "exp_decay": (2, lambda p, x: p[0] * np.exp(-p[1] * x)),
    "poly_decay": (2, lambda p, x: p[0] * x ** (-p[1])),
    "plateau": (2, lambda p, x: p[0] * x / (p[1] + x)),
    "plateau_offset": (3, lambda p, x: p[0] * x / (p[1] + x) + p[2]),
}

FIT_STARTS = 24


@dataclass
class CurveFit:
    family: str
    params: np.ndarray
    relative_error: float

    def __call__(self, x):
        return FAMILIES[self.family][1](self.params, np.asarray(x, dtype=np.float64))

    def to_dict(self) -> dict:
        return {"family": self.family, "params": [float(p) for p in self.params],
                "relative_error": float(self.relative_error)}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def _starts(family: str, xs: np.ndarray, ys: np.ndarray, count: int) -> np.ndarray:
    """Deterministic start points scattered around data-derived magnitudes."""
    rng = stream(0, STAGE_FIT, list(FAMILIES).index(family))
    amp = max(float(np.max(np.abs(ys))), 1e-12)
    span = max(float(np.ptp(xs)), 1e-12)
    xmid = max(float(np.median(np.abs(xs))), 1e-12)
    if family == "exp_decay":
        a0, b0 = amp * math.exp(min(xs.min(), 50.0) / span), 1.0 / span
        scale = np.array([a0, b0])
    elif family == "poly_decay":
        scale = np.array([amp * max(xs.min(), 1e-12), 1.0])
    elif family == "plateau":
        scale = np.array([amp, xmid])
    else:
        scale = np.array([amp, xmid, amp])
    logs = rng.uniform(-2.0, 2.0, size=(count, scale.size))
    signs = np.ones_like(logs)
    if family == "plateau_offset":
        signs[:, 2] = rng.choice([-1.0, 1.0], size=count)
    starts = signs * scale * np.exp(logs)
    starts[0] = scale
    return starts


def fit_curve(family: str, xs, ys, starts: int = FIT_STARTS) -> CurveFit:
    """Least-squares fit of one curve family by multi-start Nelder-Mead.

    ``relative_error`` is ``||fit - ys|| / ||ys||``.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}")
    if starts < 16:
        raise ValueError("at least 16 starts are required")
    k, f = FAMILIES[family]
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    if xs.shape != ys.shape or xs.size < k:
        raise ValueError(f"{family} needs at least {k} paired points")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValueError("non-finite data")
    if family != "exp_decay" and np.any(xs <= 0):
        raise ValueError(f"{family} requires positive x")
    ynorm = float(np.linalg.norm(ys))
    denom = ynorm if ynorm > 0 else 1.0

    def loss(p):
        with np.errstate(all="ignore"):
            r = f(p, xs) - ys
        val = float(r @ r)
        return val if math.isfinite(val) else math.inf

    best = None
    for p0 in _starts(family, xs, ys, starts):
        res = minimize(loss, p0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-16 * max(ynorm, 1.0) ** 2,
                                "maxiter": 4000 * k, "maxfev": 4000 * k})
        # A restart from the optimum tightens simplex collapse on stiff valleys.
        res = minimize(loss, res.x, method="Nelder-Mead",
                       options={"xatol": 1e-14, "fatol": 0.0, "maxiter": 2000 * k})
        if math.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None or not np.all(np.isfinite(best.x)):
        raise RuntimeError(f"every {family} fit diverged")
    return CurveFit(family, np.asarray(best.x), math.sqrt(best.fun) / denom)


FIGURE_FAMILIES = {
    "precision_c": ("exp_decay", "poly_decay"),
    "variables_n": ("exp_decay", "poly_decay"),
    "rows_m": ("plateau",),
    "condition_kappa": ("plateau", "plateau_offset"),
}


def write_fits_json(path, fits: Sequence[CurveFit]) -> None:
    payload = [f.to_dict() for f in fits]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
