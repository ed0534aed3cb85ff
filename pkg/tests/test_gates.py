import numpy as np
import pytest

from qta.errors import ValidationError
from qta.gates import CNOT, HAD, I2, SWAP, X, Y, Z, check_unitary, controlled, kron, qft_matrix, ry, unitarity_defect


@pytest.mark.parametrize("u", [I2, X, Y, Z, HAD, CNOT, SWAP])
def test_constants_are_unitary(u):
    assert unitarity_defect(u) < 1e-15


def test_kron_order():
    np.testing.assert_array_equal(kron(X, I2), np.kron(X, I2))
    assert kron(X, Y, Z).shape == (8, 8)


@pytest.mark.parametrize("theta", [0.0, 0.3, np.pi / 2, np.pi])
def test_ry_rotates_zero(theta):
    v = ry(theta) @ np.array([1, 0])
    np.testing.assert_allclose(v, [np.cos(theta / 2), np.sin(theta / 2)], atol=1e-15)


def test_ry_filter_angle_gives_probability():
    f = 0.37
    v = ry(2 * np.arcsin(np.sqrt(f))) @ np.array([1, 0])
    assert abs(abs(v[1]) ** 2 - f) < 1e-14


def test_controlled_x_is_cnot():
    np.testing.assert_array_equal(controlled(X), CNOT)


def test_qft_matrix_matches_fft():
    n = 3
    f = qft_matrix(n)
    v = np.random.default_rng(0).normal(size=8) + 0j
    np.testing.assert_allclose(f @ v, np.fft.ifft(v) * np.sqrt(8), atol=1e-12)
    assert unitarity_defect(f) < 1e-12


def test_check_unitary_rejects():
    with pytest.raises(ValidationError):
        check_unitary(np.array([[1, 1], [0, 1]], dtype=complex))
