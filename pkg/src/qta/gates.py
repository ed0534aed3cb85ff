"""Dense gate matrices."""
from __future__ import annotations

from functools import reduce

import numpy as np

from .errors import ValidationError

UNITARITY_TOL = 1e-12

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
HAD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)


def kron(*mats):
    """Tensor product, leftmost factor acting on the most significant qubit."""
    return reduce(np.kron, mats)


def ry(theta: float) -> np.ndarray:
    """Rotation about y: ``ry(theta)|0> = cos(theta/2)|0> + sin(theta/2)|1>``."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def phase(phi: float) -> np.ndarray:
    return np.diag([1.0, np.exp(1j * phi)]).astype(complex)


def controlled(u: np.ndarray, n_controls: int = 1) -> np.ndarray:
    """Matrix of ``u`` controlled on ``n_controls`` qubits (all in |1>).

    Control qubits are the most significant bits of the returned matrix.
    """
    u = np.asarray(u, dtype=complex)
    d = u.shape[0]
    dim = d << n_controls
    out = np.eye(dim, dtype=complex)
    out[dim - d:, dim - d:] = u
    return out


def qft_matrix(n: int) -> np.ndarray:
    """Discrete Fourier transform on ``n`` qubits: ``|j> -> sum_k w^{jk}|k>/sqrt(N)``."""
    dim = 1 << n
    j = np.arange(dim)
    return np.exp(2j * np.pi * np.outer(j, j) / dim) / np.sqrt(dim)


def unitarity_defect(u: np.ndarray) -> float:
    u = np.asarray(u)
    return float(np.abs(u.conj().T @ u - np.eye(u.shape[0])).max())


def check_unitary(u: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    defect = unitarity_defect(u)
    if defect > tol:
        raise ValidationError(f"matrix is not unitary (defect {defect:.3e})")
    return u
