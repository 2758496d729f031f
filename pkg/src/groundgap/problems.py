"""Linear-system problem instances, random ensembles and their JSON files."""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._rng import STAGE_CONDITIONED, STAGE_PLANTED, stream


class ProblemKind(str, enum.Enum):
    LSE = "LSE"
    LLS = "LLS"


class EnsembleFormatError(ValueError):
    """Raised when an ensemble file cannot be parsed or violates an invariant."""

    def __init__(self, message: str, record: Optional[int] = None, line: Optional[int] = None):
        where = []
        if record is not None:
            where.append(f"record {record}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.record = record
        self.line = line


class DegenerateConditioningWarning(UserWarning):
    pass


def _infer_kind(m: int, n: int, kind) -> ProblemKind:
    if kind is None:
        if m == n:
            return ProblemKind.LSE
        if m > n:
            return ProblemKind.LLS
        raise ValueError(f"underdetermined shape m={m} < n={n} is not supported")
    kind = ProblemKind(kind.upper() if isinstance(kind, str) else kind)
    if kind is ProblemKind.LSE and m != n:
        raise ValueError(f"LSE requires a square matrix, got m={m}, n={n}")
    if kind is ProblemKind.LLS and m <= n:
        raise ValueError(f"LLS requires m > n, got m={m}, n={n}")
    return kind


@dataclass(eq=False)
class Problem:
    """A linear system ``A x = b`` (square) or least-squares problem (tall).

    ``x_star`` is the planted integer solution when the instance was
    generated from one.
    """

    a: np.ndarray
    b: np.ndarray
    x_star: Optional[np.ndarray] = None
    kind: Optional[ProblemKind] = None

    def __post_init__(self):
        self.a = np.array(self.a, dtype=np.float64, ndmin=2)
        self.b = np.array(self.b, dtype=np.float64).reshape(-1)
        m, n = self.a.shape
        if self.b.shape[0] != m:
            raise ValueError(f"b has length {self.b.shape[0]}, expected {m}")
        self.kind = _infer_kind(m, n, self.kind)
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise ValueError("A and b must be finite")
        if self.x_star is not None:
            x = np.asarray(self.x_star)
            if x.shape != (n,):
                raise ValueError(f"x_star has shape {x.shape}, expected ({n},)")
            if not np.all(np.equal(np.round(x), x)):
                raise ValueError("x_star must be integer valued")
            self.x_star = x.astype(np.int64)

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[1]

    def residual_norm(self, x) -> float:
        return float(np.linalg.norm(self.a @ np.asarray(x, dtype=np.float64) - self.b))

    def __eq__(self, other):
        if not isinstance(other, Problem):
            return NotImplemented
        if self.kind != other.kind or self.a.shape != other.a.shape:
            return False
        if (self.x_star is None) != (other.x_star is None):
            return False
        same_x = self.x_star is None or np.array_equal(self.x_star, other.x_star)
        return same_x and np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "m": self.m,
            "n": self.n,
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "x_star": None if self.x_star is None else [int(v) for v in self.x_star],
        }


@dataclass(frozen=True)
class EnsembleSpec:
    count: int
    m: int
    n: int
    value_range: tuple = (-2, 1)
    kappa_target: Optional[float] = None
    seed: int = 0
    kind: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "value_range", tuple(int(v) for v in self.value_range))
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be positive")
        lo, hi = self.value_range
        if lo >= hi:
            raise ValueError(f"empty value range [{lo}, {hi})")
        if self.kappa_target is not None and not self.kappa_target >= 1:
            raise ValueError(f"kappa_target must be >= 1, got {self.kappa_target}")
        object.__setattr__(self, "kind", _infer_kind(self.m, self.n, self.kind).value)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["value_range"] = list(self.value_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSpec":
        return cls(**{**d, "value_range": tuple(d.get("value_range", (-2, 1)))})


def _planted_solution(rng: np.random.Generator, spec: EnsembleSpec) -> np.ndarray:
    lo, hi = spec.value_range
    x = rng.integers(lo, hi, size=spec.n)
    # A zero plant carries no information once count > 1; resample unless 0 is all we can draw.
    if spec.count > 1 and (lo, hi) != (0, 1):
        while not x.any():
            x = rng.integers(lo, hi, size=spec.n)
    return x.astype(np.int64)


def generate_planted(spec: EnsembleSpec) -> list[Problem]:
    """Dense standard-normal matrices with integer planted solutions, ``b = A x*``."""
    if spec.kappa_target is not None:
        raise ValueError("spec has kappa_target set; use generate_conditioned")
    problems = []
    for i in range(spec.count):
        rng = stream(spec.seed, STAGE_PLANTED, i)
        a = rng.standard_normal((spec.m, spec.n))
        x = _planted_solution(rng, spec)
        problems.append(Problem(a, a @ x.astype(np.float64), x, spec.kind))
    return problems


def _orthonormal_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    # Sign fix makes the factor a deterministic function of the Gaussian draw.
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def generate_conditioned(spec: EnsembleSpec) -> list[Problem]:
    """Matrices ``U diag(sigma) V^T`` with singular values geometric in [1, kappa]."""
    if spec.kappa_target is None:
        raise ValueError("spec has no kappa_target")
    if spec.n == 1 and spec.kappa_target != 1:
        warnings.warn(
            "n=1 has a single singular value; condition number is 1 regardless of target",
            DegenerateConditioningWarning,
            stacklevel=2,
        )
    sigma = np.geomspace(spec.kappa_target, 1.0, spec.n) if spec.n > 1 else np.ones(1)
    problems = []
    for i in range(spec.count):
        rng = stream(spec.seed, STAGE_CONDITIONED, i)
        u = _orthonormal_columns(rng, spec.m, spec.n)
        v = _orthonormal_columns(rng, spec.n, spec.n)
        a = (u * sigma) @ v.T
        x = _planted_solution(rng, spec)
        problems.append(Problem(a, a @ x.astype(np.float64), x, spec.kind))
    return problems


def generate(spec: EnsembleSpec) -> list[Problem]:
    if spec.kappa_target is None:
        return generate_planted(spec)
    return generate_conditioned(spec)


def singular_values(a, tol: float = 1e-15, max_sweeps: int = 60) -> np.ndarray:
    """Singular values by one-sided (Hestenes) Jacobi rotations, descending."""
    g = np.array(a, dtype=np.float64, ndmin=2)
    if g.shape[0] < g.shape[1]:
        g = g.T
    g = g.copy()
    n = g.shape[1]
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = g[:, i] @ g[:, i]
                beta = g[:, j] @ g[:, j]
                gamma = g[:, i] @ g[:, j]
                if abs(gamma) <= tol * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                gi = g[:, i].copy()
                g[:, i] = c * gi - s * g[:, j]
                g[:, j] = s * gi + c * g[:, j]
        if not rotated:
            break
    return np.sort(np.linalg.norm(g, axis=0))[::-1]


def condition_number(a) -> float:
    """Ratio of extreme singular values; ``inf`` when numerically rank deficient."""
    sv = singular_values(a)
    if sv[0] == 0.0:
        raise ValueError("condition number of a zero matrix is undefined")
    if sv[-1] < 1e-12 * sv[0]:
        return math.inf
    return float(sv[0] / sv[-1])


def save_ensemble(path, problems: Sequence[Problem], spec: Optional[EnsembleSpec] = None) -> None:
    doc = {
        "spec": None if spec is None else spec.to_dict(),
        "problems": [p.to_dict() for p in problems],
    }
    Path(path).write_text(json.dumps(doc, allow_nan=False) + "\n", encoding="utf-8")


def _reject_constant(name):
    raise ValueError(f"non-finite number {name}")


def load_ensemble(path) -> tuple[list[Problem], Optional[EnsembleSpec]]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise EnsembleFormatError(f"malformed JSON: {exc.msg}", line=exc.lineno) from exc
    except ValueError as exc:
        raise EnsembleFormatError(str(exc)) from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("problems"), list):
        raise EnsembleFormatError("expected an object with a 'problems' list")
    spec = None
    if doc.get("spec") is not None:
        try:
            spec = EnsembleSpec.from_dict(doc["spec"])
        except (TypeError, ValueError) as exc:
            raise EnsembleFormatError(f"invalid spec: {exc}") from exc
    problems = []
    for idx, rec in enumerate(doc["problems"]):
        try:
            p = Problem(
                np.array(rec["a"], dtype=np.float64),
                np.array(rec["b"], dtype=np.float64),
                rec.get("x_star"),
                rec.get("kind"),
            )
            if p.m != rec.get("m", p.m) or p.n != rec.get("n", p.n):
                raise ValueError("declared m/n disagree with matrix shape")
        except (KeyError, TypeError, ValueError) as exc:
            raise EnsembleFormatError(f"invalid problem: {exc}", record=idx) from exc
        problems.append(p)
    return problems, spec
