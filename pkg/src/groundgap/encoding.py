"""Fixed-point QUBO compilation of ``min ||Ax - b||^2`` and the Ising form.

Bits are ordered variable-major; within a variable the sign bit comes first,
followed by the magnitude bits in descending exponent order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .problems import Problem


@dataclass(frozen=True)
class FixedPointEncoding:
    """Two's-complement style encoding with exponents ``theta`` and an optional sign bit.

    A variable is ``-2**(p+1) * q_sign + sum(2**t * q_t for t in theta)`` where
    ``p = max(theta)``.
    """

    theta: tuple
    has_sign: bool = True

    def __post_init__(self):
        theta = tuple(sorted({int(t) for t in self.theta}, reverse=True))
        if not theta:
            raise ValueError("encoding needs at least one exponent")
        if theta[0] - theta[-1] + 1 != len(theta):
            raise ValueError(f"exponent set must be a contiguous integer interval, got {theta}")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_range(cls, low: int, high: int, has_sign: bool = True) -> "FixedPointEncoding":
        return cls(tuple(range(low, high + 1)), has_sign)

    @classmethod
    def with_bits(cls, c: int, low: int = 0) -> "FixedPointEncoding":
        """Signed encoding with ``c`` bits per variable and lowest exponent ``low``."""
        if c < 2:
            raise ValueError("a signed encoding needs at least 2 bits")
        return cls.from_range(low, low + c - 2, True)

    @property
    def bits_per_var(self) -> int:
        return len(self.theta) + int(self.has_sign)

    @property
    def weights(self) -> np.ndarray:
        w = [2.0 ** t for t in self.theta]
        if self.has_sign:
            w.insert(0, -(2.0 ** (self.theta[0] + 1)))
        return np.array(w)

    def representable(self) -> np.ndarray:
        """Sorted set of values a single variable can take."""
        c = self.bits_per_var
        codes = (np.arange(2 ** c)[:, None] >> np.arange(c - 1, -1, -1)) & 1
        return np.unique(codes @ self.weights)

    def to_dict(self) -> dict:
        return {"theta": list(self.theta), "has_sign": self.has_sign}


def _batched_energy(x, linear, quadratic):
    # Always evaluate as a 2-D batch so a state's energy does not depend on batch shape.
    rows = np.atleast_2d(x)
    return np.einsum("zi,i->z", rows, linear) + np.einsum("zi,ij,zj->z", rows, quadratic, rows)


@dataclass
class QuboModel:
    """``F'(q) = linear . q + q^T quadratic q`` with ``quadratic`` strictly upper triangular.

    ``offset`` is added back by :meth:`objective` so that, for a compiled
    problem, the objective equals the squared residual norm.
    """

    linear: np.ndarray
    quadratic: np.ndarray
    offset: float = 0.0
    bit_map: list = field(default_factory=list)

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=np.float64).reshape(-1)
        nb = self.linear.shape[0]
        q = np.asarray(self.quadratic, dtype=np.float64)
        if q.shape != (nb, nb):
            raise ValueError(f"quadratic must be {nb}x{nb}, got {q.shape}")
        if np.any(np.tril(q) != 0):
            raise ValueError("quadratic coefficients must be strictly upper triangular")
        self.quadratic = q
        self.offset = float(self.offset)

    @property
    def num_bits(self) -> int:
        return self.linear.shape[0]

    def symmetric_couplings(self) -> np.ndarray:
        return self.quadratic + self.quadratic.T

    def energy(self, bits) -> np.ndarray | float:
        """Offset-free energy ``F'(q)``; accepts one bit vector or a batch (rows)."""
        q = np.asarray(bits, dtype=np.float64)
        e = _batched_energy(q, self.linear, self.quadratic)
        return float(e[0]) if q.ndim == 1 else e

    def objective(self, bits):
        return self.energy(bits) + self.offset

    def to_matrix(self) -> np.ndarray:
        """Upper-triangular ``Q`` with ``F'(q) = q^T Q q`` for binary ``q``."""
        return self.quadratic + np.diag(self.linear)

    def to_dict(self) -> dict:
        return _model_dict(self.linear, self.quadratic, self.offset, 1.0)

    @classmethod
    def from_dict(cls, d: dict) -> "QuboModel":
        lin, quad = _parse_model_dict(d)
        return cls(lin, quad, d.get("offset", 0.0))


@dataclass
class IsingModel:
    """``F(sigma) = h . sigma + sigma^T j sigma`` over spins in {-1, +1}."""

    h: np.ndarray
    j: np.ndarray
    offset: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.float64).reshape(-1)
        nq = self.h.shape[0]
        j = np.asarray(self.j, dtype=np.float64)
        if j.shape != (nq, nq):
            raise ValueError(f"j must be {nq}x{nq}, got {j.shape}")
        if np.any(np.tril(j) != 0):
            raise ValueError("couplings must be strictly upper triangular")
        self.j = j

    @property
    def num_spins(self) -> int:
        return self.h.shape[0]

    def energy(self, spins) -> np.ndarray | float:
        s = np.asarray(spins, dtype=np.float64)
        e = _batched_energy(s, self.h, self.j)
        return float(e[0]) if s.ndim == 1 else e

    def to_dict(self) -> dict:
        return _model_dict(self.h, self.j, self.offset, self.scale)

    @classmethod
    def from_dict(cls, d: dict) -> "IsingModel":
        lin, quad = _parse_model_dict(d)
        return cls(lin, quad, d.get("offset", 0.0), d.get("scale", 1.0))


def _model_dict(lin, quad, offset, scale) -> dict:
    rows, cols = np.nonzero(quad)
    return {
        "num_bits": int(lin.shape[0]),
        "linear": lin.tolist(),
        "quadratic": [[int(r), int(c), float(quad[r, c])] for r, c in zip(rows, cols)],
        "offset": float(offset),
        "scale": float(scale),
    }


def _parse_model_dict(d: dict):
    nb = int(d["num_bits"])
    lin = np.asarray(d["linear"], dtype=np.float64)
    if lin.shape != (nb,):
        raise ValueError("linear coefficient count does not match num_bits")
    quad = np.zeros((nb, nb))
    for r, c, val in d.get("quadratic", []):
        r, c = int(r), int(c)
        if not 0 <= r < c < nb:
            raise ValueError(f"coupler index ({r}, {c}) must satisfy 0 <= i < j < {nb}")
        quad[r, c] += float(val)
    return lin, quad


def save_model(path, model) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), allow_nan=False) + "\n", encoding="utf-8")


def load_qubo(path) -> QuboModel:
    return QuboModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_ising(path) -> IsingModel:
    return IsingModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_qubo(problem: Problem, enc: FixedPointEncoding) -> QuboModel:
    """Compile ``||A x - b||^2`` over fixed-point variables into a QUBO.

    For bits with weights ``s`` (variable ``j``) and ``t`` (variable ``k``)::

        v[j,s]     = sum_i s A_ij (s A_ij - 2 b_i)
        w[j,s,k,t] = 2 s t sum_i A_ij A_ik

    Pairs of bits belonging to the same variable use the same coupling rule.
    The dropped constant ``||b||^2`` is kept as ``offset``.
    """
    weights = enc.weights
    c = weights.shape[0]
    var_of_bit = np.repeat(np.arange(problem.n), c)
    weight_of_bit = np.tile(weights, problem.n)
    # Column a of the expanded matrix is A[:, j(a)] scaled by the bit weight.
    expanded = problem.a[:, var_of_bit] * weight_of_bit
    gram = expanded.T @ expanded
    linear = np.einsum("ia,ia->a", expanded, expanded) - 2.0 * (expanded.T @ problem.b)
    quadratic = np.triu(2.0 * gram, k=1)
    bit_map = list(zip(var_of_bit.tolist(), weight_of_bit.tolist()))
    return QuboModel(linear, quadratic, float(problem.b @ problem.b), bit_map)


def qubo_to_ising(q: QuboModel) -> IsingModel:
    """Substitute ``q = (sigma + 1) / 2``; constants move into the offset."""
    w = q.quadratic
    h = q.linear / 2.0 + (w.sum(axis=0) + w.sum(axis=1)) / 4.0
    j = w / 4.0
    const = q.linear.sum() / 2.0 + w.sum() / 4.0
    return IsingModel(h, j, q.offset + const, 1.0)


def scale_ising(model: IsingModel, h_max: float = 2.0, j_max: float = 1.0) -> IsingModel:
    """Rescale uniformly so that ``|h| <= h_max`` and ``|J| <= j_max`` with one bound tight."""
    hm = np.max(np.abs(model.h), initial=0.0)
    jm = np.max(np.abs(model.j), initial=0.0)
    bounds = [lim / mag for lim, mag in ((h_max, hm), (j_max, jm)) if mag > 0]
    if not bounds:
        return replace(model, h=model.h.copy(), j=model.j.copy(), scale=1.0)
    k = min(bounds)
    return IsingModel(model.h * k, model.j * k, model.offset * k, model.scale * k)


def _as_bits(bits, expected: int) -> np.ndarray:
    arr = np.asarray(bits)
    if arr.shape[-1] != expected:
        raise ValueError(f"expected {expected} bits, got {arr.shape[-1]}")
    if np.any((arr != 0) & (arr != 1)):
        raise ValueError("bits must be 0 or 1")
    return arr.astype(np.float64)


def decode(bits, enc: FixedPointEncoding, n: int) -> np.ndarray:
    """Real vector(s) encoded by ``bits``; a 2-D input decodes row by row."""
    c = enc.bits_per_var
    arr = _as_bits(bits, n * c)
    return (arr.reshape(arr.shape[:-1] + (n, c)) * enc.weights).sum(axis=-1)


def spins_from_bits(bits) -> np.ndarray:
    return 2 * np.asarray(bits, dtype=np.int8) - 1


def bits_from_spins(spins) -> np.ndarray:
    return ((np.asarray(spins) + 1) // 2).astype(np.int8)


def compile_problem(
    problem: Problem, enc: FixedPointEncoding, scaled: bool = True
) -> tuple[QuboModel, IsingModel, IsingModel]:
    """QUBO, raw Ising and (optionally) scaled Ising for one problem."""
    qubo = build_qubo(problem, enc)
    raw = qubo_to_ising(qubo)
    return qubo, raw, scale_ising(raw) if scaled else raw


def all_assignments(num_bits: int) -> np.ndarray:
    """Every bit vector of length ``num_bits``; row ``r`` is ``r`` written MSB first."""
    if num_bits > 24:
        raise ValueError(f"refusing to enumerate 2**{num_bits} assignments")
    idx = np.arange(2 ** num_bits, dtype=np.int64)
    return ((idx[:, None] >> np.arange(num_bits - 1, -1, -1)) & 1).astype(np.int8)


def encoding_for_values(lo: int, hi: int) -> FixedPointEncoding:
    """Smallest signed encoding (lowest exponent 0) that covers integers in ``[lo, hi)``."""
    c = 2
    while True:
        enc = FixedPointEncoding.with_bits(c)
        vals = enc.representable()
        if vals[0] <= lo and vals[-1] >= hi - 1:
            return enc
        c += 1

