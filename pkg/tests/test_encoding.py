import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_qubo
from groundgap.encoding import (
    FixedPointEncoding,
    IsingModel,
    QuboModel,
    all_assignments,
    bits_from_spins,
    build_qubo,
    compile_problem,
    decode,
    load_ising,
    load_qubo,
    qubo_to_ising,
    save_model,
    scale_ising,
    spins_from_bits,
)
from groundgap.problems import EnsembleSpec, Problem, generate_planted


def test_hand_example_coefficients():
    q = build_qubo(Problem([[1.0]], [2.0]), FixedPointEncoding((0,)))
    assert q.linear.tolist() == [12.0, -3.0]
    assert q.quadratic[0, 1] == -4.0
    assert q.offset == 4.0
    for bits in itertools.product([0, 1], repeat=2):
        x = decode(bits, FixedPointEncoding((0,)), 1)[0]
        assert q.objective(np.array(bits)) == pytest.approx((x - 2.0) ** 2)


def test_zero_rhs_nonnegative_linear(rng):
    a = rng.normal(size=(6, 3))
    enc = FixedPointEncoding.with_bits(3)
    q = build_qubo(Problem(a, np.zeros(6)), enc)
    assert np.all(q.linear >= 0)
    energies = q.energy(all_assignments(q.num_bits))
    assert energies[0] == 0.0 and energies.min() >= -1e-12


def test_binary_special_case(rng):
    # Theta={0}, no sign bit: v_j = sum_i A_ij (A_ij - 2 b_i), w_jk = 2 sum_i A_ij A_ik.
    a, b = rng.normal(size=(5, 3)), rng.normal(size=5)
    q = build_qubo(Problem(a, b), FixedPointEncoding((0,), has_sign=False))
    v = np.array([np.sum(a[:, j] * (a[:, j] - 2 * b)) for j in range(3)])
    w = np.array([[2 * a[:, j] @ a[:, k] if j < k else 0.0 for k in range(3)] for j in range(3)])
    assert np.allclose(q.linear, v, rtol=1e-14, atol=1e-14)
    assert np.allclose(q.quadratic, w, rtol=1e-14, atol=1e-14)


def test_bit_order_and_map():
    enc = FixedPointEncoding((2, 1, 0))
    q = build_qubo(Problem(np.eye(3)[:, :2], [1.0, 2.0, 3.0]), enc)
    assert q.num_bits == 8
    assert q.bit_map[:4] == [(0, -8.0), (0, 4.0), (0, 2.0), (0, 1.0)]
    assert q.bit_map[4][0] == 1


def test_encoding_validation():
    with pytest.raises(ValueError):
        FixedPointEncoding(())
    with pytest.raises(ValueError):
        FixedPointEncoding((), has_sign=False)
    with pytest.raises(ValueError):
        FixedPointEncoding((0, 2))
    enc = FixedPointEncoding((0, 2, 1))
    assert enc.theta == (2, 1, 0) and enc.bits_per_var == 4


def test_decode_examples():
    assert decode([1, 0], FixedPointEncoding((0,)), 1).tolist() == [-2.0]
    assert decode([1, 1, 1, 1], FixedPointEncoding((2, 1, 0)), 1).tolist() == [-1.0]
    enc = FixedPointEncoding((2, 1, 0))
    values = decode(all_assignments(4), enc, 1).ravel()
    assert sorted(values.tolist()) == list(range(-8, 8))
    assert enc.representable().tolist() == list(range(-8, 8))


def test_decode_validation():
    enc = FixedPointEncoding((0,))
    with pytest.raises(ValueError):
        decode([1, 0, 1], enc, 1)
    with pytest.raises(ValueError):
        decode([2, 0], enc, 1)


def test_decode_batch_matches_rows():
    enc = FixedPointEncoding.with_bits(3)
    bits = all_assignments(6)
    batch = decode(bits, enc, 2)
    assert np.array_equal(batch, np.array([decode(row, enc, 2) for row in bits]))


def test_single_bit_ising():
    ising = qubo_to_ising(QuboModel([-3.0], [[0.0]], offset=1.0))
    assert ising.h.tolist() == [-1.5]
    assert ising.offset == pytest.approx(1.0 - 1.5)


def test_zero_qubo_to_ising():
    ising = qubo_to_ising(QuboModel(np.zeros(3), np.zeros((3, 3)), offset=2.5))
    assert not ising.h.any() and not ising.j.any()
    assert ising.offset == 2.5 and ising.scale == 1.0


def test_ising_equivalence_8_bits(rng):
    q = random_qubo(rng, 8)
    q.offset = 0.7
    ising = qubo_to_ising(q)
    bits = all_assignments(8)
    lhs = ising.energy(spins_from_bits(bits)) + ising.offset
    rhs = q.energy(bits) + q.offset
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_scale_example():
    m = scale_ising(IsingModel([-3.0, 4.0], [[0.0, 0.5], [0.0, 0.0]], offset=2.0))
    assert m.scale == 0.5
    assert m.h.tolist() == [-1.5, 2.0]
    assert m.j[0, 1] == 0.25
    assert m.offset == 1.0


def test_scale_identity_when_tight():
    m = IsingModel([2.0, -1.0], [[0.0, 0.3], [0.0, 0.0]])
    s = scale_ising(m)
    assert s.scale == 1.0 and np.array_equal(s.h, m.h) and np.array_equal(s.j, m.j)


def test_scale_zero_model_unchanged():
    s = scale_ising(IsingModel(np.zeros(2), np.zeros((2, 2)), offset=3.0))
    assert s.scale == 1.0 and s.offset == 3.0


def test_scale_uses_only_present_class():
    s = scale_ising(IsingModel([0.5, -1.0], np.zeros((2, 2))))
    assert s.scale == 2.0 and np.max(np.abs(s.h)) == 2.0


def test_scale_accumulates():
    m = scale_ising(scale_ising(IsingModel([8.0], [[0.0]])))
    assert m.scale == 0.25


def test_scaling_preserves_argmin(rng):
    spins = spins_from_bits(all_assignments(8))
    for _ in range(10):
        m = IsingModel(rng.normal(size=8) * 5, np.triu(rng.normal(size=(8, 8)) * 3, 1))
        s = scale_ising(m)
        assert np.max(np.abs(s.h)) <= 2 + 1e-12 and np.max(np.abs(s.j)) <= 1 + 1e-12
        e, es = m.energy(spins), s.energy(spins)
        assert np.array_equal(np.flatnonzero(e == e.min()), np.flatnonzero(es == es.min()))
        assert np.allclose(es, s.scale * e)


def test_spin_bit_roundtrip():
    bits = all_assignments(5)
    assert np.array_equal(bits_from_spins(spins_from_bits(bits)), bits)


def test_model_file_roundtrip(tmp_path, rng):
    q = random_qubo(rng, 6)
    q.offset = 1 / 3
    save_model(tmp_path / "q.json", q)
    q2 = load_qubo(tmp_path / "q.json")
    assert np.array_equal(q2.linear, q.linear) and np.array_equal(q2.quadratic, q.quadratic)
    assert q2.offset == q.offset
    ising = scale_ising(qubo_to_ising(q))
    save_model(tmp_path / "i.json", ising)
    i2 = load_ising(tmp_path / "i.json")
    assert np.array_equal(i2.h, ising.h) and np.array_equal(i2.j, ising.j)
    assert i2.scale == ising.scale and i2.offset == ising.offset


def _objective_identity(problem, enc):
    q, raw, _ = compile_problem(problem, enc, scaled=False)
    bits = all_assignments(q.num_bits)
    x = decode(bits, enc, problem.n)
    truth = np.sum((x @ problem.a.T - problem.b) ** 2, axis=1)
    via_qubo = q.energy(bits) + q.offset
    via_ising = raw.energy(spins_from_bits(bits)) + raw.offset
    scale = np.maximum(np.abs(truth), 1.0)
    assert np.max(np.abs(via_qubo - truth) / scale) <= 1e-8
    assert np.max(np.abs(via_ising - truth) / scale) <= 1e-8
    assert q.num_bits == problem.n * enc.bits_per_var


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(1, 3), c=st.integers(2, 4),
       low=st.integers(-2, 1), extra=st.integers(1, 5))
def test_objective_identity_property(seed, n, c, low, extra):
    rng = np.random.default_rng(seed)
    m = n + extra
    problem = Problem(rng.normal(size=(m, n)), rng.normal(size=m) * 3)
    _objective_identity(problem, FixedPointEncoding.with_bits(c, low))


def test_objective_identity_planted_20_bits():
    (p,) = generate_planted(EnsembleSpec(1, 30, 5, (-8, 8), seed=3))
    _objective_identity(p, FixedPointEncoding.with_bits(4))
