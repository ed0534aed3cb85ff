"""Energy digitization and quantum phase estimation.

Bin ``k`` of an ``n``-qubit energy register stands for the energy
``e_min + k * P / 2**n``.  The evolution ``U = exp(2 pi i (H - e_min) / P)``
gives eigenstate ``|phi>`` the phase ``(E - e_min) / P``; forward QPE writes
that phase, times ``2**n``, into the register.

Both inexact grids place their ``2**n`` bins on a closed interval including
both endpoints, so ``P = span * 2**n / (2**n - 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError
from .gates import HAD, check_unitary, qft_matrix
from .statevec import QuantumState, apply_controlled, apply_register_unitary
from .triangle import EnergySpectrum


class GridMode(str, Enum):
    EXACT = "exact"
    FIXED_EXTREMA = "fixed"
    REFINED = "refined"

    @classmethod
    def parse(cls, text) -> "GridMode":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("_", "-")
        aliases = {
            "exact": cls.EXACT,
            "fixed": cls.FIXED_EXTREMA,
            "fixed-extrema": cls.FIXED_EXTREMA,
            "fixedextrema": cls.FIXED_EXTREMA,
            "refined": cls.REFINED,
        }
        if key not in aliases:
            raise ConfigurationError(f"unknown grid mode {text!r}")
        return aliases[key]


@dataclass(frozen=True)
class EnergyGrid:
    mode: GridMode
    n_qubits: int
    margin: float
    e_min: float
    e_max: float
    period: float

    @property
    def n_bins(self) -> int:
        return 1 << self.n_qubits

    @property
    def spacing(self) -> float:
        return self.period / self.n_bins

    @property
    def bins(self) -> np.ndarray:
        return self.e_min + np.arange(self.n_bins) * self.spacing

    def energy(self, k) -> np.ndarray | float:
        return self.e_min + np.asarray(k) * self.spacing

    def phase(self, energy) -> np.ndarray:
        """Eigenphase in ``[0, 1)`` of an energy under the grid's evolution."""
        return np.mod((np.asarray(energy, float) - self.e_min) / self.period, 1.0)

    def nearest_bin(self, energy: float) -> int:
        return int(np.argmin(np.abs(self.bins - energy)))


def build_grid(mode, n_qubits: int, margin: float, s: EnergySpectrum) -> EnergyGrid:
    """Energy grid around the extreme levels of ``s``."""
    mode = GridMode.parse(mode)
    if n_qubits < 1:
        raise ConfigurationError("energy register needs at least one qubit")
    if margin < 0:
        raise ConfigurationError("grid margin must be non-negative")
    lo, hi = float(s.energies.min()), float(s.energies.max())
    if mode is GridMode.EXACT:
        if n_qubits != 1 or len(s.levels) != 2:
            raise ConfigurationError("exact grid needs one qubit and a two-level spectrum")
        return EnergyGrid(mode, 1, 0.0, lo, hi, 2.0 * (hi - lo))
    gap = hi - lo + 2.0 * margin
    e_min = lo - margin
    if mode is GridMode.FIXED_EXTREMA:
        e_max = hi + margin
    else:
        e_max = hi + margin + gap * (1.0 - 2.0 ** (1 - n_qubits))
    span = e_max - e_min
    m = 1 << n_qubits
    return EnergyGrid(mode, n_qubits, float(margin), e_min, e_max, span * m / (m - 1))


@dataclass(frozen=True)
class DeltaGrid:
    """Two's-complement encoding of energy differences: bin ``b`` means ``v(b) * scale``."""

    n_qubits: int
    scale: float

    @property
    def n_bins(self) -> int:
        return 1 << self.n_qubits

    def signed(self, b) -> np.ndarray:
        b = np.asarray(b)
        half = self.n_bins // 2
        return np.where(b < half, b, b - self.n_bins)

    def value(self, b) -> np.ndarray:
        return self.signed(b) * self.scale

    @property
    def period(self) -> float:
        return self.scale * self.n_bins

    def bin_of(self, delta: float) -> int:
        return int(np.round(delta / self.scale)) % self.n_bins


def build_delta_grid(s: EnergySpectrum, n_qubits: int = 2, grid: EnergyGrid | None = None) -> DeltaGrid:
    """Exact differences when ``grid`` is ``None`` or exact, else the grid's spacing."""
    if grid is None or grid.mode is GridMode.EXACT:
        lev = s.level_energies
        gaps = np.diff(lev)
        scale = float(gaps.min()) if gaps.size else 1.0
        dg = DeltaGrid(n_qubits, scale)
        diffs = s.energies[:, None] - s.energies[None, :]
        units = diffs / scale
        if np.abs(units - np.round(units)).max() > 1e-9 or np.abs(units).max() > dg.n_bins / 2 - 1 + 1e-9:
            raise ConfigurationError("energy differences alias on the delta register")
        return dg
    return DeltaGrid(n_qubits, grid.period / (1 << n_qubits))


def evolution_unitary(s: EnergySpectrum, grid: EnergyGrid) -> np.ndarray:
    """``exp(2 pi i (H - e_min) / P)`` from the exact eigendecomposition."""
    return s.function(lambda e: np.exp(2j * np.pi * (e - grid.e_min) / grid.period))


def leakage_kernel(delta_phase, n_qubits: int) -> np.ndarray:
    """Probability of a QPE bin at phase offset ``delta_phase`` from the true phase."""
    m = 1 << n_qubits
    d = np.asarray(delta_phase, float)
    num = np.sin(m * np.pi * d)
    den = m * np.sin(np.pi * d)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(np.abs(den) < 1e-15, 1.0, (num / np.where(den == 0, 1, den)) ** 2)
    return out


def qpe_outcome_distribution(phase: float, n_qubits: int) -> np.ndarray:
    m = 1 << n_qubits
    return leakage_kernel(np.arange(m) / m - phase, n_qubits)


def _controlled_power_ladder(state, system, register, u, inverse):
    layout = state.layout
    sys_q = layout[system].qubits
    reg = layout[register]
    order = range(reg.size) if not inverse else reversed(range(reg.size))
    for j in order:
        uj = np.linalg.matrix_power(u, 1 << j)
        if inverse:
            uj = uj.conj().T
        apply_controlled(state, uj, [reg.offset + j], sys_q, check=False)


def _qpe_generic(state, system, register, u, forward):
    reg = state.layout[register]
    hn = _hadamard_n(reg.size)
    f_dag = qft_matrix(reg.size).conj().T
    if forward:
        apply_register_unitary(state, hn, register, check=False)
        _controlled_power_ladder(state, system, register, u, inverse=False)
        apply_register_unitary(state, f_dag, register, check=False)
    else:
        apply_register_unitary(state, f_dag.conj().T, register, check=False)
        _controlled_power_ladder(state, system, register, u, inverse=True)
        apply_register_unitary(state, hn, register, check=False)
    return state


def _hadamard_n(n: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        out = np.kron(out, HAD)
    return out


def _direction(direction) -> bool:
    if direction in ("forward", True):
        return True
    if direction in ("inverse", False):
        return False
    raise ConfigurationError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def qpe_energy(
    state: QuantumState,
    system: str,
    register: str,
    grid: EnergyGrid,
    s: EnergySpectrum,
    direction="forward",
) -> QuantumState:
    """Gate-level energy QPE: Hadamards, controlled ``U^(2^j)`` on qubit ``j``, inverse QFT."""
    if state.layout[register].size != grid.n_qubits:
        raise ConfigurationError(
            f"register {register!r} has {state.layout[register].size} qubits, grid needs {grid.n_qubits}"
        )
    u = check_unitary(evolution_unitary(s, grid))
    return _qpe_generic(state, system, register, u, _direction(direction))


def delta_evolution(s: EnergySpectrum, dgrid: DeltaGrid) -> np.ndarray:
    """``exp(2 pi i (H (x) 1 - 1 (x) H*) / (scale 2**n))`` on system (x) conjugate."""
    h = s.hamiltonian.matrix
    eye = np.eye(h.shape[0])
    hd = np.kron(h, eye) - np.kron(eye, h.conj())
    w, v = np.linalg.eigh(hd)
    return (v * np.exp(2j * np.pi * w / dgrid.period)) @ v.conj().T


def qpe_delta_energy(
    state: QuantumState,
    system: str,
    conjugate: str,
    register: str,
    dgrid: DeltaGrid,
    s: EnergySpectrum,
    direction="forward",
) -> QuantumState:
    """QPE of ``E_system - E_conjugate`` into a two's-complement register."""
    layout = state.layout
    if layout[register].size != dgrid.n_qubits:
        raise ConfigurationError("delta register size does not match the delta grid")
    u = delta_evolution(s, dgrid)
    # treat (system, conjugate) as one target block, system most significant
    sys_q = layout[system].qubits + layout[conjugate].qubits
    reg = layout[register]
    hn = _hadamard_n(reg.size)
    f_dag = qft_matrix(reg.size).conj().T
    forward = _direction(direction)
    if forward:
        apply_register_unitary(state, hn, register, check=False)
    else:
        apply_register_unitary(state, f_dag.conj().T, register, check=False)
    order = range(reg.size) if forward else reversed(range(reg.size))
    for j in order:
        uj = np.linalg.matrix_power(u, 1 << j)
        if not forward:
            uj = uj.conj().T
        apply_controlled(state, uj, [reg.offset + j], sys_q, check=False)
    if forward:
        apply_register_unitary(state, f_dag, register, check=False)
    else:
        apply_register_unitary(state, hn, register, check=False)
    return state


# Compiled QPE in the eigenbasis -------------------------------------------

def qpe_block(phase: float, n_qubits: int) -> np.ndarray:
    """Register-space matrix of forward QPE on an eigenstate of the given phase."""
    m = 1 << n_qubits
    d = np.exp(2j * np.pi * phase * np.arange(m))
    return (qft_matrix(n_qubits).conj().T * d) @ _hadamard_n(n_qubits)


def _fwht(a: np.ndarray) -> np.ndarray:
    """Normalized Walsh-Hadamard transform along axis 0."""
    m = a.shape[0]
    n = m.bit_length() - 1
    out = a.reshape((2,) * n + a.shape[1:]).copy()
    for ax in range(n):
        x0 = np.take(out, 0, axis=ax)
        x1 = np.take(out, 1, axis=ax)
        out = np.stack([x0 + x1, x0 - x1], axis=ax)
    return out.reshape(a.shape) / np.sqrt(m)


class CompiledQPE:
    """Forward and inverse energy QPE acting on an ``(2**n, 8)`` eigenbasis array.

    Row ``m`` is the energy-register value and column ``k`` the eigenstate, so
    the whole QPE is block diagonal in ``k``.  The result equals the gate-level
    circuit after changing the system register to the eigenbasis.
    """

    def __init__(self, grid: EnergyGrid, energies: np.ndarray):
        self.grid = grid
        self.n_qubits = grid.n_qubits
        self.n_bins = grid.n_bins
        phases = grid.phase(energies)
        m = np.arange(self.n_bins)
        self.phase_table = np.exp(2j * np.pi * np.outer(m, phases))  # (M, 8)
        ones = np.full(self.n_bins, 1.0 / np.sqrt(self.n_bins))
        # forward QPE of |0> for each eigenstate: columns are output register states
        self.from_zero = np.fft.fft(self.phase_table * ones[:, None], axis=0) / np.sqrt(self.n_bins)
        self.probabilities = np.abs(self.from_zero) ** 2  # P(bin m | eigenstate k)

        self._dense = self.n_bins <= 64
        if self._dense:
            blocks = np.stack([qpe_block(ph, self.n_qubits) for ph in phases], axis=-1)
            self._fwd = blocks  # (M, M, 8)
            self._inv = np.conj(np.transpose(blocks, (1, 0, 2)))
        self._round_trip = None

    def round_trip(self, m: int) -> np.ndarray | None:
        """``G[a, j, k]``: inverse QPE from register value ``m`` in eigenstate ``k``
        followed by forward QPE into ``a`` in eigenstate ``j``; ``None`` above 64 bins."""
        if not self._dense:
            return None
        if self._round_trip is None:
            self._round_trip = np.einsum("anj,bnk->bajk", self._fwd, self._fwd.conj())
        return self._round_trip[m]

    def forward(self, a: np.ndarray) -> np.ndarray:
        if self._dense:
            return np.einsum("mnk,nk->mk", self._fwd, a)
        return np.fft.fft(self.phase_table * _fwht(a), axis=0) / np.sqrt(self.n_bins)

    def inverse(self, a: np.ndarray) -> np.ndarray:
        if self._dense:
            return np.einsum("mnk,nk->mk", self._inv, a)
        b = np.fft.ifft(a, axis=0) * np.sqrt(self.n_bins)
        return _fwht(self.phase_table.conj() * b)
