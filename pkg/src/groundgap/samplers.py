"""Classical stand-ins for an annealer: exhaustive search, simulated annealing, greedy descent."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import STAGE_ANNEALER, stream
from .encoding import QuboModel, all_assignments

MAX_EXHAUSTIVE_BITS = 24
_CHUNK_BITS = 16


@dataclass
class SampleSet:
    """Bit vectors ordered by energy (ties: lexicographic bits), energies offset-free."""

    bits: np.ndarray
    energies: np.ndarray
    reads: int
    sampler: str

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.int8).reshape(len(self.energies), -1)
        self.energies = np.asarray(self.energies, dtype=np.float64)
        order = _energy_order(self.energies, self.bits)
        self.bits, self.energies = self.bits[order], self.energies[order]

    def __len__(self):
        return len(self.energies)

    @property
    def best(self) -> np.ndarray:
        return self.bits[0].copy()

    @property
    def best_energy(self) -> float:
        return float(self.energies[0])

    @property
    def samples(self) -> list:
        return [(b.copy(), float(e)) for b, e in zip(self.bits, self.energies)]

    def to_csv(self, path) -> None:
        lines = ["rank,energy,bits"]
        for rank, (b, e) in enumerate(zip(self.bits, self.energies)):
            lines.append(f"{rank},{float(e)!r},{''.join(map(str, b.tolist()))}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _energy_order(energies, bits):
    # lexsort: last key is primary; bit columns give MSB-first lexicographic ties.
    keys = [bits[:, i] for i in range(bits.shape[1] - 1, -1, -1)] + [energies]
    return np.lexsort(keys) if len(energies) else np.arange(0)


def solve_exhaustive(q: QuboModel, top_k: int = 16) -> SampleSet:
    """Enumerate every assignment; keep the ``top_k`` lowest (first entry is the exact optimum)."""
    nb = q.num_bits
    if nb > MAX_EXHAUSTIVE_BITS:
        raise ValueError(f"{nb} bits is too many to enumerate (limit {MAX_EXHAUSTIVE_BITS})")
    if top_k < 1:
        raise ValueError("top_k must be positive")
    chunk_bits = min(nb, _CHUNK_BITS)
    n_high = nb - chunk_bits
    w = q.quadratic
    low = all_assignments(chunk_bits).astype(np.float64)
    low_energy = low @ q.linear[n_high:] + np.einsum("ci,ij,cj->c", low, w[n_high:, n_high:], low)
    best_bits = np.empty((0, nb), dtype=np.int8)
    best_e = np.empty(0)
    for hi in range(2 ** n_high):
        prefix = ((hi >> np.arange(n_high - 1, -1, -1)) & 1).astype(np.float64)
        # Energy = prefix-only part + cross terms + suffix-only part (precomputed).
        e_prefix = prefix @ q.linear[:n_high] + prefix @ w[:n_high, :n_high] @ prefix
        cross = prefix @ w[:n_high, n_high:]
        energies = low_energy + e_prefix + low @ cross
        keep = np.argsort(energies, kind="stable")[:top_k]
        chunk = np.hstack([np.broadcast_to(prefix, (keep.size, n_high)), low[keep]]).astype(np.int8)
        best_bits = np.vstack([best_bits, chunk])
        best_e = np.concatenate([best_e, energies[keep]])
        order = _energy_order(best_e, best_bits)[:top_k]
        best_bits, best_e = best_bits[order], best_e[order]
    # Recompute the survivors directly so stored energies are exact re-evaluations.
    return SampleSet(best_bits, q.energy(best_bits), 2 ** nb, "exhaustive")


def _flip_bounds(q: QuboModel) -> tuple[float, float]:
    w = np.abs(q.symmetric_couplings())
    max_delta = float(np.max(np.abs(q.linear) + w.sum(axis=1), initial=0.0))
    coeffs = np.concatenate([np.abs(q.linear), w[np.triu_indices(q.num_bits, 1)]])
    nonzero = coeffs[coeffs > 0]
    min_delta = float(nonzero.min()) if nonzero.size else max_delta
    return max_delta, max(min_delta, 1e-6 * max_delta)


def beta_schedule(q: QuboModel, sweeps: int) -> np.ndarray:
    """Geometric inverse temperatures from hot to cold.

    Hot end: the largest possible single-flip change is accepted with
    probability ``e**-0.1``.  Cold end: the smallest coefficient-sized change
    is accepted with probability ``e**-10``.
    """
    max_delta, min_delta = _flip_bounds(q)
    if max_delta == 0:
        return np.ones(sweeps)
    return np.geomspace(0.1 / max_delta, 10.0 / min_delta, sweeps)


def sample_sa(q: QuboModel, reads: int = 1000, sweeps: int = 100, seed: int = 0) -> SampleSet:
    """Single-bit-flip Metropolis annealing, ``reads`` independent restarts.

    Read ``r`` draws all its randomness from its own stream keyed by
    ``(seed, r)``, so the first ``r`` reads do not depend on how many reads
    are requested.  Each read contributes its final state.
    """
    if reads < 1 or sweeps < 1:
        raise ValueError("reads and sweeps must be at least 1")
    nb = q.num_bits
    gens = [stream(seed, STAGE_ANNEALER, r) for r in range(reads)]
    state = np.stack([g.integers(0, 2, nb) for g in gens]).astype(np.float64)
    if nb == 0:
        return SampleSet(state, np.zeros(reads), reads, "sa")
    couplings = q.symmetric_couplings()
    local = q.linear + state @ couplings
    for beta in beta_schedule(q, sweeps):
        u = np.stack([g.random(nb) for g in gens])
        for a in range(nb):
            direction = 1.0 - 2.0 * state[:, a]
            delta = direction * local[:, a]
            accept = (delta <= 0) | (u[:, a] < np.exp(-beta * np.maximum(delta, 0.0)))
            step = np.where(accept, direction, 0.0)
            state[:, a] += step
            local += step[:, None] * couplings[a]
    return SampleSet(state, q.energy(state), reads, "sa")


def flip_deltas(q: QuboModel, bits) -> np.ndarray:
    """Energy change of flipping each bit individually."""
    x = np.asarray(bits, dtype=np.float64)
    return (1.0 - 2.0 * x) * (q.linear + q.symmetric_couplings() @ x)


def greedy_descent(q: QuboModel, bits) -> np.ndarray:
    """Steepest single-flip descent to a 1-flip local optimum (ties: lowest index)."""
    x = np.array(bits, dtype=np.float64).reshape(-1)
    if x.shape[0] != q.num_bits:
        raise ValueError(f"expected {q.num_bits} bits, got {x.shape[0]}")
    couplings = q.symmetric_couplings()
    for _ in range(10 * max(1, q.num_bits) ** 2):
        delta = (1.0 - 2.0 * x) * (q.linear + couplings @ x)
        a = int(np.argmin(delta))
        if not delta[a] < 0:
            break
        x[a] = 1.0 - x[a]
    return x.astype(np.int8)
