import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import dense_hamiltonian, dense_lowest_two, random_ising
from groundgap.encoding import FixedPointEncoding, IsingModel, compile_problem
from groundgap.problems import EnsembleSpec, generate_planted
from groundgap.spectral import (
    AnnealOperator,
    EigensolverError,
    GapScan,
    Schedule,
    apply,
    basis_spins,
    final_gap,
    ising_diagonal,
    lowest_two,
    scan_gap,
)


def one_qubit(h=1.0):
    return IsingModel([h], [[0.0]])


def test_default_schedule():
    sch = Schedule()
    assert sch.grid.size == 100 and sch.grid[0] == 0.0 and sch.grid[-1] == 1.0
    assert np.allclose(np.diff(sch.grid), 1 / 99)
    assert sch.a_of_s(0.25) == 1.5 and sch.b_of_s(0.25) == 0.5


def test_apply_pauli_examples():
    assert apply(AnnealOperator(one_qubit(), 0.0), [1.0, 0.0]).tolist() == [0.0, -1.0]
    assert apply(AnnealOperator(one_qubit(), 1.0), [1.0, 0.0]).tolist() == [1.0, 0.0]


def test_apply_rejects_wrong_length():
    with pytest.raises(ValueError):
        apply(AnnealOperator(one_qubit(), 0.5), np.ones(3))


def test_basis_convention():
    spins = basis_spins(2)
    assert spins.tolist() == [[1, 1], [1, -1], [-1, 1], [-1, -1]]


@pytest.mark.parametrize("nq", [1, 2, 3, 5, 6])
def test_apply_matches_dense_and_is_symmetric(rng, nq):
    ising = random_ising(rng, nq)
    for s in (0.0, 0.3, 0.77, 1.0):
        op = AnnealOperator(ising, s)
        dense = dense_hamiltonian(ising, s)
        u, v = rng.normal(size=(2, op.dim))
        assert np.allclose(op.apply(v), dense @ v, atol=1e-12)
        assert abs(u @ op.apply(v) - op.apply(u) @ v) <= 1e-12 * max(1.0, np.abs(u).sum() * np.abs(v).sum())


def test_apply_batched_rows(rng):
    ising = random_ising(rng, 4)
    op = AnnealOperator(ising, 0.4)
    vs = rng.normal(size=(3, 16))
    assert np.allclose(op.apply(vs), np.array([op.apply(v) for v in vs]))


def test_diagonal_cache_is_read_only(rng):
    op = AnnealOperator(random_ising(rng, 3), 0.5)
    with pytest.raises(ValueError):
        op.diagonal[0] = 1.0


def test_single_qubit_closed_form():
    e0, e1 = lowest_two(AnnealOperator(one_qubit(), 0.5))
    assert e0 == pytest.approx(-math.sqrt(0.5), abs=1e-12)
    assert e1 == pytest.approx(math.sqrt(0.5), abs=1e-12)


def test_gap_two_at_s0(rng):
    for nq in (1, 3, 6):
        e0, e1 = lowest_two(AnnealOperator(random_ising(rng, nq), 0.0))
        assert e1 - e0 == pytest.approx(2.0, abs=1e-9)


def test_s1_gap_from_diagonal(rng):
    ising = random_ising(rng, 5)
    e0, e1 = lowest_two(AnnealOperator(ising, 1.0))
    diag = np.sort(ising_diagonal(ising))
    assert e0 == pytest.approx(diag[0], abs=1e-9)
    assert e1 == pytest.approx(diag[1], abs=1e-9)
    assert e1 - e0 == pytest.approx(final_gap(ising), abs=1e-9)


def test_degenerate_ground_state_resolved():
    # J-only model: global spin flip symmetry makes the s=1 ground state doubly degenerate.
    ising = IsingModel(np.zeros(3), np.triu(np.ones((3, 3)), 1) * -1.0)
    e0, e1 = lowest_two(AnnealOperator(ising, 1.0))
    assert e1 - e0 == pytest.approx(0.0, abs=1e-9)
    assert e1 >= e0


def test_lowest_two_deterministic(rng):
    op = AnnealOperator(random_ising(rng, 6), 0.6)
    assert lowest_two(op, seed=3, index=5) == lowest_two(op, seed=3, index=5)


def test_lowest_two_qubit_limit(rng):
    with pytest.raises(ValueError):
        lowest_two(AnnealOperator(random_ising(rng, 5), 0.5), max_qubits=4)


def test_lowest_two_failure_is_explicit(rng):
    op = AnnealOperator(random_ising(rng, 7), 0.5)
    with pytest.raises(EigensolverError) as err:
        lowest_two(op, max_matvecs=3)
    assert err.value.s == 0.5


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), nq=st.integers(1, 7), s=st.floats(0.0, 1.0))
def test_dense_oracle_agreement(seed, nq, s):
    ising = random_ising(np.random.default_rng(seed), nq, density=0.7)
    e0, e1 = lowest_two(AnnealOperator(ising, s), seed=seed)
    d0, d1 = dense_lowest_two(ising, s)
    assert e0 == pytest.approx(d0, abs=1e-9)
    assert e1 == pytest.approx(d1, abs=1e-9)


def test_scan_single_qubit():
    scan = scan_gap(one_qubit(), Schedule.uniform(101))
    assert scan.s_min == 0.5
    assert scan.g_min == pytest.approx(math.sqrt(2.0), abs=1e-9)
    assert scan.gap[0] == pytest.approx(2.0, abs=1e-12)


def test_scan_zero_model():
    scan = scan_gap(IsingModel(np.zeros(3), np.zeros((3, 3))), Schedule.uniform(11))
    assert np.allclose(scan.gap, 2 * (1 - scan.s), atol=1e-9)
    assert scan.g_min == pytest.approx(0.0, abs=1e-9)
    assert scan.degenerate[-1]


def test_scan_planted_problem_matches_dense():
    (p,) = generate_planted(EnsembleSpec(1, 40, 2, (-2, 1), seed=8))
    _, _, ising = compile_problem(p, FixedPointEncoding.with_bits(2))
    scan = scan_gap(ising)
    dense = np.array([np.subtract(*dense_lowest_two(ising, s)[::-1]) for s in scan.s])
    assert np.max(np.abs(scan.gap - dense)) <= 1e-8
    assert scan.g_min == pytest.approx(dense.min(), abs=1e-8)


def test_scan_invariants_and_continuity(rng):
    ising = random_ising(rng, 6)
    scan = scan_gap(ising, Schedule.uniform(40))
    assert np.all(scan.e1 >= scan.e0) and scan.g_min >= 0
    # ||H(s') - H(s)|| <= |ds| (nq + max|E|) for the default schedule.
    bound = np.diff(scan.s) * (ising.num_spins + np.max(np.abs(ising_diagonal(ising))))
    assert np.all(np.abs(np.diff(scan.e0)) <= 10 * bound)


def test_scan_batches_match_pointwise(rng):
    ising = random_ising(rng, 5)
    sch = Schedule.uniform(7)
    scan = scan_gap(ising, sch, seed=4)
    for i, s in enumerate(sch.grid):
        e0, e1 = lowest_two(AnnealOperator(ising, s), seed=4, index=i)
        assert scan.e0[i] == pytest.approx(e0, abs=1e-10)
        assert scan.e1[i] == pytest.approx(e1, abs=1e-10)


def test_custom_schedule():
    sch = Schedule(lambda s: 1.0 - s, lambda s: s, np.array([0.0, 0.5]))
    scan = scan_gap(one_qubit(), sch)
    # H(0.5) = -0.25 X + 0.25 Z has eigenvalues +-0.25 sqrt(2).
    assert scan.gap[1] == pytest.approx(0.5 * math.sqrt(2.0), abs=1e-12)


def test_gapscan_csv_roundtrip(tmp_path, rng):
    scan = scan_gap(random_ising(rng, 3), Schedule.uniform(9))
    path = tmp_path / "gap.csv"
    scan.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "s,e0,e1,gap" and len(lines) == 11
    assert lines[-1] == f"# g_min={scan.g_min!r} at s={scan.s_min!r}"
    back = GapScan.from_csv(path)
    assert np.array_equal(back.e0, scan.e0) and np.array_equal(back.e1, scan.e1)
