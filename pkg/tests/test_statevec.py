import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare, unitary_group

from qta.errors import CapacityError, ConfigurationError, ShapeError, ValidationError
from qta.gates import CNOT, HAD, X, kron
from qta.rng import RandomStream
from qta.statevec import (
    QuantumState,
    RegisterLayout,
    apply_controlled,
    apply_register_diagonal,
    apply_unitary,
    measure_register,
    measure_with_projectors,
    new_state,
    project_register,
    reduced_density,
    register_marginal,
    reset_register,
    sample_index,
    shift_register,
)


def dense_operator(u, targets, n, controls=(), control_values=()):
    """Full 2**n matrix by explicit bit bookkeeping."""
    k = len(targets)
    full = np.zeros((1 << n, 1 << n), dtype=complex)
    for col in range(1 << n):
        if any(((col >> c) & 1) != v for c, v in zip(controls, control_values)):
            full[col, col] = 1.0
            continue
        sub_in = 0
        for t in targets:
            sub_in = (sub_in << 1) | ((col >> t) & 1)
        for sub_out in range(1 << k):
            row = col
            for j, t in enumerate(targets):
                bit = (sub_out >> (k - 1 - j)) & 1
                row = (row & ~(1 << t)) | (bit << t)
            full[row, col] += u[sub_out, sub_in]
    return full


def random_state(layout, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    return QuantumState(layout, v / np.linalg.norm(v))


def small_layout(n=4):
    return RegisterLayout.from_entries([("a", 1, "acceptance"), ("s", n - 1, "system")])


def test_index_convention():
    lay = RegisterLayout.from_entries([("a", 1, "acceptance"), ("b", 2, "energy")])
    assert lay.index(a=1, b=2) == 0b110
    assert lay["a"].qubits == [2]
    assert lay["b"].qubits == [1, 0]


def test_layout_rejects_bad_entries():
    with pytest.raises(ConfigurationError):
        RegisterLayout.from_entries([("a", 2, "acceptance")])
    with pytest.raises(ConfigurationError):
        RegisterLayout.from_entries([("a", 1, "system"), ("a", 1, "system")])
    with pytest.raises(ConfigurationError):
        RegisterLayout.from_entries([("a", 1, "bogus")])
    with pytest.raises(CapacityError):
        RegisterLayout.from_entries([("s", 13, "system"), ("c", 12, "system-conjugate")])


def test_twenty_four_qubits_allowed():
    lay = RegisterLayout.from_entries([("s", 12, "system"), ("c", 12, "system-conjugate")])
    assert lay.n_qubits == 24


def test_from_registers_product():
    lay = small_layout()
    plus = np.full(8, 1 / np.sqrt(8))
    st_ = QuantumState.from_registers(lay, s=plus)
    assert np.allclose(st_.tensor()[0], plus)
    with pytest.raises(ShapeError):
        QuantumState.from_registers(lay, s=np.ones(4) / 2)


@given(st.integers(0, 10_000), st.integers(1, 3), st.randoms(use_true_random=False))
@settings(max_examples=40, deadline=None)
def test_apply_unitary_matches_dense(seed, k, rnd):
    n = 5
    targets = rnd.sample(range(n), k)
    u = unitary_group.rvs(1 << k, random_state=seed)
    lay = RegisterLayout.from_entries([("s", n, "system")])
    s = random_state(lay, seed)
    expected = dense_operator(u, targets, n) @ s.amplitudes
    apply_unitary(s, u, targets)
    np.testing.assert_allclose(s.amplitudes, expected, atol=1e-12)


@given(st.integers(0, 10_000), st.randoms(use_true_random=False))
@settings(max_examples=40, deadline=None)
def test_apply_controlled_matches_dense(seed, rnd):
    n = 5
    qubits = rnd.sample(range(n), 3)
    controls, targets = qubits[:2], qubits[2:]
    values = [rnd.randint(0, 1), rnd.randint(0, 1)]
    u = unitary_group.rvs(2, random_state=seed)
    lay = RegisterLayout.from_entries([("s", n, "system")])
    s = random_state(lay, seed)
    expected = dense_operator(u, targets, n, controls, values) @ s.amplitudes
    apply_controlled(s, u, controls, targets, values)
    np.testing.assert_allclose(s.amplitudes, expected, atol=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_composition_linearity(seed):
    lay = RegisterLayout.from_entries([("s", 4, "system")])
    u = unitary_group.rvs(4, random_state=seed)
    v = unitary_group.rvs(4, random_state=seed + 1)
    a = random_state(lay, seed)
    b = a.copy()
    apply_unitary(a, v, [3, 1])
    apply_unitary(a, u, [3, 1])
    apply_unitary(b, u @ v, [3, 1])
    np.testing.assert_allclose(a.amplitudes, b.amplitudes, atol=1e-10)


@given(st.integers(0, 10_000), st.integers(1, 30))
@settings(max_examples=20, deadline=None)
def test_norm_preserved(seed, depth):
    lay = RegisterLayout.from_entries([("s", 5, "system")])
    s = random_state(lay, seed)
    rng = np.random.default_rng(seed)
    for i in range(depth):
        targets = rng.choice(5, size=2, replace=False).tolist()
        apply_unitary(s, unitary_group.rvs(4, random_state=seed + i), targets)
    assert abs(s.norm() - 1.0) < 1e-10


def test_batched_columns_evolve_independently():
    lay = RegisterLayout.from_entries([("s", 3, "system")])
    batch = QuantumState(lay, np.eye(8, dtype=complex))
    apply_unitary(batch, CNOT, [2, 0])
    apply_unitary(batch, HAD, [1])
    np.testing.assert_allclose(batch.amplitudes, dense_operator(HAD, [1], 3) @ dense_operator(CNOT, [2, 0], 3))


def test_non_unitary_rejected_and_shape_checked():
    s = new_state(small_layout())
    with pytest.raises(ValidationError):
        apply_unitary(s, np.array([[1, 1], [0, 1]]), [0])
    with pytest.raises(ShapeError):
        apply_unitary(s, X, [0, 1])
    with pytest.raises(ShapeError):
        apply_unitary(s, CNOT, [1, 1])


def test_born_rule_single_qubit():
    lay = RegisterLayout.from_entries([("q", 1, "system")])
    rng = RandomStream(2024)
    n = 100_000
    zeros = 0
    plus = np.array([1, 1]) / np.sqrt(2)
    for _ in range(n):
        k, _ = measure_register(QuantumState(lay, plus.copy()), "q", rng)
        zeros += k == 0
    assert abs(zeros / n - 0.5) < 3 * np.sqrt(0.25 / n)
    assert chisquare([zeros, n - zeros]).pvalue > 1e-3


def test_measurement_idempotent():
    lay = small_layout()
    rng = RandomStream(3)
    for seed in range(20):
        s = random_state(lay, seed)
        k1, s = measure_register(s, "s", rng)
        k2, s = measure_register(s, "s", rng)
        assert k1 == k2


def test_measurement_deterministic():
    lay = small_layout()
    out = []
    for _ in range(2):
        rng = RandomStream(77, 1)
        s = random_state(lay, 5)
        apply_unitary(s, kron(HAD, HAD), [3, 2])
        ks = [measure_register(s, "a", rng)[0], measure_register(s, "s", rng)[0]]
        out.append((ks, s.amplitudes.copy()))
    assert out[0][0] == out[1][0]
    np.testing.assert_array_equal(out[0][1], out[1][1])


def test_sample_index_edges():
    assert sample_index([0.0, 1.0], 0.0) == 1
    assert sample_index([1.0, 0.0], 0.999999999) == 0
    assert sample_index([0.2, 0.3, 0.5], 0.25) == 1
    # drift in the total cannot run off the end onto an empty bin
    assert sample_index([0.5, 0.5 - 1e-12, 0.0], 0.9999999999999) == 1


def test_project_shift_reset():
    lay = small_layout()
    s = random_state(lay, 1)
    p = register_marginal(s, "a")[1]
    assert abs(project_register(s, "a", 1) - p) < 1e-12
    shift_register(s, "a", 1)
    assert abs(register_marginal(s, "a")[0] - 1.0) < 1e-12
    s = random_state(lay, 2)
    reset_register(s, "s", RandomStream(0))
    assert abs(register_marginal(s, "s")[0] - 1.0) < 1e-12


def test_reduced_density_of_bell_pair():
    lay = RegisterLayout.from_entries([("s", 1, "system"), ("c", 1, "system-conjugate")])
    s = new_state(lay)
    apply_unitary(s, HAD, lay["s"].qubits)
    apply_controlled(s, X, lay["s"].qubits, lay["c"].qubits)
    np.testing.assert_allclose(reduced_density(s, "s"), np.eye(2) / 2, atol=1e-15)
    rho_all = reduced_density(s, ["s", "c"])
    np.testing.assert_allclose(rho_all, np.outer(s.amplitudes, s.amplitudes.conj()), atol=1e-15)


def test_register_diagonal():
    lay = RegisterLayout.from_entries([("a", 1, "acceptance"), ("d", 2, "delta-energy")])
    s = QuantumState(lay, np.ones(8, dtype=complex) / np.sqrt(8))
    diag = -np.ones((2, 4))
    diag[0, 0] = 1.0
    apply_register_diagonal(s, diag, ["a", "d"])
    expected = -np.ones(8) / np.sqrt(8)
    expected[0] *= -1
    np.testing.assert_allclose(s.amplitudes, expected)
    # registers listed out of layout order
    s2 = QuantumState(lay, np.ones(8, dtype=complex) / np.sqrt(8))
    apply_register_diagonal(s2, diag.T, ["d", "a"])
    np.testing.assert_allclose(s2.amplitudes, expected)


def test_projector_measurement():
    lay = RegisterLayout.from_entries([("q", 1, "system")])
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    s = QuantumState(lay, np.array([0.6, 0.8], dtype=complex))
    k, s = measure_with_projectors(s, "q", [p0, p1], RandomStream(1))
    assert abs(abs(s.amplitudes[k]) - 1.0) < 1e-12
