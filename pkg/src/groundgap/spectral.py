"""Matrix-free annealing Hamiltonian and its two lowest eigenvalues.

The Hamiltonian at normalised time ``s`` is::

    H(s) = -A(s)/2 * sum_a X_a + B(s)/2 * (sum_a h_a Z_a + sum_{a<b} J_ab Z_a Z_b)

Basis states are indexed with qubit 0 as the most significant bit, and the
computational state |0> carries spin +1.  The problem part is diagonal in
this basis, so it is cached once per Ising model; the transverse part is a
sum of single-bit flips.  Neither is ever materialised as a matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.linalg.lapack import dstemr

from ._rng import STAGE_EIGENSOLVER, stream
from .encoding import IsingModel

DEFAULT_MAX_QUBITS = 16
DEGENERACY_TOL = 1e-9
# Upper bound on lanes * dimension processed together by the batched eigensolver.
_LANE_BUDGET = 1 << 15


class EigensolverError(RuntimeError):
    def __init__(self, message: str, s: Optional[float] = None):
        super().__init__(message if s is None else f"{message} (s={s!r})")
        self.s = s


def annealing_a(s):
    return 2.0 * (1.0 - np.asarray(s, dtype=np.float64))


def annealing_b(s):
    return 2.0 * np.asarray(s, dtype=np.float64)


@dataclass(frozen=True)
class Schedule:
    a_of_s: Callable = annealing_a
    b_of_s: Callable = annealing_b
    grid: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 100))

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64).reshape(-1)
        if grid.size == 0 or np.any(np.diff(grid) < 0) or grid[0] < 0 or grid[-1] > 1:
            raise ValueError("grid must be a non-empty sorted subset of [0, 1]")
        object.__setattr__(self, "grid", grid)

    @classmethod
    def uniform(cls, points: int = 100) -> "Schedule":
        if points < 1:
            raise ValueError("need at least one grid point")
        return cls(grid=np.linspace(0.0, 1.0, points))


def basis_spins(nq: int) -> np.ndarray:
    """Spin values (rows = basis states, cols = qubits); |0> -> +1, |1> -> -1."""
    idx = np.arange(2 ** nq, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(nq - 1, -1, -1)) & 1
    return (1 - 2 * bits).astype(np.float64)


def ising_diagonal(ising: IsingModel) -> np.ndarray:
    """Offset-free Ising energy of every computational basis state."""
    spins = basis_spins(ising.num_spins)
    return spins @ ising.h + np.einsum("za,ab,zb->z", spins, ising.j, spins)


def transverse_sum(v: np.ndarray, nq: int) -> np.ndarray:
    """``sum_a X_a v`` along the last axis (which must have length 2**nq)."""
    lead = v.shape[:-1]
    out = np.zeros_like(v)
    for a in range(nq):
        view = v.reshape(lead + (2 ** a, 2, 2 ** (nq - a - 1)))
        out += view[..., ::-1, :].reshape(v.shape)
    return out


class AnnealOperator:
    """``H(s)`` for one Ising model and one schedule point; immutable."""

    def __init__(self, ising: IsingModel, s: float, schedule: Optional[Schedule] = None,
                 diagonal: Optional[np.ndarray] = None):
        schedule = schedule or Schedule()
        self.ising = ising
        self.s = float(s)
        self.nq = ising.num_spins
        self.field_coef = float(schedule.a_of_s(self.s)) / 2.0
        self.problem_coef = float(schedule.b_of_s(self.s)) / 2.0
        diag = ising_diagonal(ising) if diagonal is None else np.asarray(diagonal, dtype=np.float64)
        if diag.shape != (2 ** self.nq,):
            raise ValueError("diagonal cache has the wrong length")
        diag.setflags(write=False)
        self.diagonal = diag

    @property
    def dim(self) -> int:
        return 2 ** self.nq

    def apply(self, v) -> np.ndarray:
        return apply(self, v)

    def norm_bound(self) -> float:
        return abs(self.field_coef) * self.nq + abs(self.problem_coef) * float(np.max(np.abs(self.diagonal)))


def apply(op: AnnealOperator, v) -> np.ndarray:
    """``H(s) v`` in O(nq 2**nq) without forming the matrix."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != op.dim:
        raise ValueError(f"state has length {v.shape[-1]}, operator dimension is {op.dim}")
    return op.problem_coef * op.diagonal * v - op.field_coef * transverse_sum(v, op.nq)


def _lowest_ritz(diags, offdiags):
    """Lowest eigenpair of each symmetric tridiagonal matrix in the batch."""
    n_lanes, size = diags.shape
    evals = np.empty(n_lanes)
    evecs = np.empty((n_lanes, size))
    for lane in range(n_lanes):
        e = np.zeros(size)
        e[: size - 1] = offdiags[lane]
        m, w, z, info = dstemr(diags[lane], e, 2, 0.0, 0.0, 1, 1)
        if info != 0 or m != 1:
            w, z = eigh_tridiagonal(diags[lane], offdiags[lane], select="i", select_range=(0, 0))
        evals[lane] = w[0]
        evecs[lane] = z[:, 0]
    return evals, evecs


def _lanczos_lowest(matvec, start, deflate=None, tol=1e-11, scale=None, max_iter=None,
                    check_every=2):
    """Lowest eigenpair for a batch of symmetric operators ("lanes").

    ``matvec(v, lanes)`` applies the operators selected by the index array
    ``lanes`` to the rows of ``v``.  Full reorthogonalisation (two classical
    Gram-Schmidt passes) is used throughout.  If ``deflate`` is given, each
    lane runs in the orthogonal complement of the corresponding row, which
    turns its lowest eigenvalue into the second-lowest of the full operator.

    Returns ``(theta, vectors, iterations)``; lanes that fail to converge
    within ``max_iter`` steps have ``theta = nan``.
    """
    n_lanes, dim = start.shape
    max_iter = dim if max_iter is None else min(max_iter, dim)
    scale = np.ones(n_lanes) if scale is None else np.maximum(1.0, np.asarray(scale, dtype=np.float64))

    theta = np.full(n_lanes, np.nan)
    vectors = np.zeros((n_lanes, dim))
    iterations = np.zeros(n_lanes, dtype=np.int64)

    active = np.arange(n_lanes)
    defl = None if deflate is None else deflate.copy()

    def project(w):
        if defl is not None:
            w -= np.einsum("ln,ln->l", w, defl)[:, None] * defl
        return w

    q = project(start.astype(np.float64, copy=True))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    cap = min(max_iter, 32)
    basis = np.empty((n_lanes, cap, dim))
    alphas = np.empty((n_lanes, cap))
    betas = np.empty((n_lanes, cap))
    q_prev = np.zeros_like(q)
    beta_prev = np.zeros(n_lanes)
    next_check = check_every

    for k in range(max_iter):
        if k == cap:
            cap = min(2 * cap, max_iter)
            basis = np.concatenate([basis, np.empty((len(active), cap - k, dim))], axis=1)
            alphas = np.concatenate([alphas, np.empty((len(active), cap - k))], axis=1)
            betas = np.concatenate([betas, np.empty((len(active), cap - k))], axis=1)
        basis[:, k] = q
        w = matvec(q, active)
        alpha = np.einsum("ln,ln->l", q, w)
        w -= alpha[:, None] * q + beta_prev[:, None] * q_prev
        v_k = basis[:, : k + 1]
        norm_before = np.linalg.norm(w, axis=1)
        w -= np.matmul(np.matmul(v_k, w[:, :, None]).transpose(0, 2, 1), v_k)[:, 0]
        project(w)
        beta = np.linalg.norm(w, axis=1)
        # Second Gram-Schmidt pass only where cancellation was severe (DGKS criterion).
        again = beta < 0.7071 * norm_before
        if again.any():
            wa = w[again]
            va = v_k[again]
            wa -= np.matmul(np.matmul(va, wa[:, :, None]).transpose(0, 2, 1), va)[:, 0]
            if defl is not None:
                wa -= np.einsum("ln,ln->l", wa, defl[again])[:, None] * defl[again]
            w[again] = wa
            beta[again] = np.linalg.norm(wa, axis=1)
        alphas[:, k] = alpha
        betas[:, k] = beta

        exhausted = beta <= 1e-13 * scale[active]
        last = k + 1 == max_iter
        if not (last or exhausted.any() or k + 1 >= next_check):
            q_prev, q, beta_prev = q, w / np.where(beta > 0, beta, 1.0)[:, None], beta
            continue

        size = k + 1
        # Ritz checks thin out as the basis grows; overshoot is at most size/8 steps.
        next_check = size + max(check_every, size // 8)
        evals, y = _lowest_ritz(alphas[:, :size], betas[:, : size - 1])
        residual = beta * np.abs(y[:, -1])
        done = exhausted | (residual <= tol * scale[active])
        if done.any():
            sel = np.nonzero(done)[0]
            lanes = active[sel]
            theta[lanes] = evals[sel]
            vec = np.matmul(y[sel, None, :], v_k[sel])[:, 0]
            vectors[lanes] = vec / np.linalg.norm(vec, axis=1, keepdims=True)
            iterations[lanes] = size
            keep = ~done
            active = active[keep]
            if active.size == 0:
                break
            basis, alphas, betas = basis[keep], alphas[keep], betas[keep]
            w, beta, q = w[keep], beta[keep], q[keep]
            if defl is not None:
                defl = defl[keep]
        q_prev, q, beta_prev = q, w / np.where(beta > 0, beta, 1.0)[:, None], beta
    iterations[active] = max_iter
    return theta, vectors, iterations


def _start_vectors(seed: int, indices, dim: int) -> tuple[np.ndarray, np.ndarray]:
    first = np.empty((len(indices), dim))
    second = np.empty((len(indices), dim))
    for row, i in enumerate(indices):
        rng = stream(seed, STAGE_EIGENSOLVER, i)
        first[row] = rng.standard_normal(dim)
        second[row] = rng.standard_normal(dim)
    return first, second


def _lowest_two_batch(diagonal, field_coef, problem_coef, nq, start0, start1, tol, max_matvecs):
    """Two lowest eigenvalues for several schedule points sharing one diagonal."""

    def matvec(v, lanes):
        return problem_coef[lanes, None] * diagonal * v - field_coef[lanes, None] * transverse_sum(v, nq)

    scale = np.abs(field_coef) * nq + np.abs(problem_coef) * np.max(np.abs(diagonal))
    e0, ground, it0 = _lanczos_lowest(matvec, start0, tol=tol, scale=scale, max_iter=max_matvecs)
    if np.isnan(e0).any():
        return e0, np.full_like(e0, np.nan), it0
    e1, _, it1 = _lanczos_lowest(matvec, start1, deflate=ground, tol=tol, scale=scale,
                                 max_iter=max_matvecs)
    return e0, e1, it0 + it1


def _check_qubits(nq: int, max_qubits: int) -> None:
    if nq > max_qubits:
        raise ValueError(f"{nq} qubits exceeds the configured limit of {max_qubits}")
    if nq < 1:
        raise ValueError("model has no spins")


def lowest_two(op: AnnealOperator, seed: int = 0, index: int = 0, tol: float = 1e-11,
               max_matvecs: Optional[int] = None, max_qubits: int = DEFAULT_MAX_QUBITS):
    """Ground and first excited energies of ``op``.

    The ground state comes from Lanczos with full reorthogonalisation; the
    excited energy from a second Lanczos run deflated against the converged
    ground vector, so exact degeneracies are resolved.  The start vectors
    are drawn from the stream keyed by ``(seed, index)``.
    """
    _check_qubits(op.nq, max_qubits)
    max_matvecs = 10 * op.dim if max_matvecs is None else max_matvecs
    s0, s1 = _start_vectors(seed, [index], op.dim)
    e0, e1, _ = _lowest_two_batch(op.diagonal, np.array([op.field_coef]),
                                  np.array([op.problem_coef]), op.nq, s0, s1, tol, max_matvecs)
    if np.isnan(e0[0]) or np.isnan(e1[0]):
        raise EigensolverError("Lanczos did not converge", op.s)
    return float(e0[0]), float(max(e1[0], e0[0]))


@dataclass
class GapScan:
    s: np.ndarray
    e0: np.ndarray
    e1: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return self.e1 - self.e0

    @property
    def argmin(self) -> int:
        return int(np.argmin(self.gap))

    @property
    def g_min(self) -> float:
        return float(self.gap[self.argmin])

    @property
    def s_min(self) -> float:
        return float(self.s[self.argmin])

    @property
    def degenerate(self) -> np.ndarray:
        """Grid points whose two lowest levels coincide within ``DEGENERACY_TOL``."""
        return self.gap <= DEGENERACY_TOL

    def to_csv(self, path) -> None:
        lines = ["s,e0,e1,gap"]
        for s, e0, e1, g in zip(self.s, self.e0, self.e1, self.gap):
            lines.append(f"{float(s)!r},{float(e0)!r},{float(e1)!r},{float(g)!r}")
        lines.append(f"# g_min={self.g_min!r} at s={self.s_min!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "GapScan":
        rows = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
                if ln and not ln.startswith("#")]
        if not rows or rows[0].strip() != "s,e0,e1,gap":
            raise ValueError("missing 's,e0,e1,gap' header")
        data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]]).reshape(-1, 4)
        return cls(data[:, 0], data[:, 1], data[:, 2])


def scan_gap(ising: IsingModel, schedule: Optional[Schedule] = None, seed: int = 0,
             tol: float = 1e-11, max_matvecs: Optional[int] = None,
             max_qubits: int = DEFAULT_MAX_QUBITS) -> GapScan:
    """Lowest two energies of ``H(s)`` at every schedule grid point.

    Grid point ``i`` uses the same start vectors as ``lowest_two(..., index=i)``.
    Points are solved together in lane batches.
    """
    schedule = schedule or Schedule()
    nq = ising.num_spins
    _check_qubits(nq, max_qubits)
    dim = 2 ** nq
    max_matvecs = 10 * dim if max_matvecs is None else max_matvecs
    diagonal = ising_diagonal(ising)
    grid = schedule.grid
    field_coef = np.array([float(schedule.a_of_s(s)) for s in grid]) / 2.0
    problem_coef = np.array([float(schedule.b_of_s(s)) for s in grid]) / 2.0
    e0 = np.empty(grid.size)
    e1 = np.empty(grid.size)
    width = max(1, _LANE_BUDGET // dim)
    for lo in range(0, grid.size, width):
        sl = slice(lo, min(lo + width, grid.size))
        s0, s1 = _start_vectors(seed, range(sl.start, sl.stop), dim)
        a, b, _ = _lowest_two_batch(diagonal, field_coef[sl], problem_coef[sl], nq, s0, s1,
                                    tol, max_matvecs)
        bad = np.nonzero(np.isnan(a) | np.isnan(b))[0]
        if bad.size:
            raise EigensolverError("Lanczos did not converge", float(grid[sl][bad[0]]))
        e0[sl] = a
        e1[sl] = np.maximum(a, b)
    return GapScan(grid.copy(), e0, e1)


def final_gap(ising: IsingModel) -> float:
    """Gap between the two lowest classical energies (the ``s = 1`` problem gap)."""
    diag = np.sort(ising_diagonal(ising))
    return float(diag[1] - diag[0]) if diag.size > 1 else math.inf
