import itertools

import numpy as np
import pytest

from groundgap.encoding import IsingModel, QuboModel

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


def kron_site(op, site, nq):
    """``op`` acting on qubit ``site`` (qubit 0 is the leftmost kron factor)."""
    out = np.eye(1)
    for a in range(nq):
        out = np.kron(out, op if a == site else np.eye(2))
    return out


def dense_hamiltonian(ising: IsingModel, s: float) -> np.ndarray:
    """Explicit ``-(1-s) sum X + s (sum h Z + sum J Z Z)`` built from Kronecker products."""
    nq = ising.num_spins
    dim = 2 ** nq
    hx = sum(kron_site(PAULI_X, a, nq) for a in range(nq))
    hp = np.zeros((dim, dim))
    for a in range(nq):
        hp += ising.h[a] * kron_site(PAULI_Z, a, nq)
        for b in range(a + 1, nq):
            if ising.j[a, b]:
                hp += ising.j[a, b] * kron_site(PAULI_Z, a, nq) @ kron_site(PAULI_Z, b, nq)
    return -(1.0 - s) * hx + s * hp


def dense_lowest_two(ising, s):
    w = np.linalg.eigvalsh(dense_hamiltonian(ising, s))
    return w[0], w[1]


def brute_force_residuals(a, b, values):
    """``||A x - b||^2`` for every x in ``values**n`` (itertools order, first variable slowest)."""
    n = a.shape[1]
    xs = np.array(list(itertools.product(values, repeat=n)), dtype=float)
    return xs, np.sum((xs @ a.T - b) ** 2, axis=1)


def random_ising(rng, nq, density=1.0):
    h = rng.normal(size=nq)
    j = np.triu(rng.normal(size=(nq, nq)), 1)
    j *= np.triu(rng.random((nq, nq)) < density, 1)
    return IsingModel(h, j)


def random_qubo(rng, nb):
    return QuboModel(rng.normal(size=nb), np.triu(rng.normal(size=(nb, nb)), 1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
