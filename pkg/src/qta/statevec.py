"""Dense statevector simulation over named registers.

Bit order
---------
Qubit ``q`` carries the place value ``2**q`` of the amplitude index.  In a
:class:`RegisterLayout` the register listed first owns the most significant
qubits and the register listed last owns qubit 0.  Inside a register its
lowest qubit is the least significant bit of the register value, so for the
layout ``[("a", 1), ("b", 2)]`` the index of ``|a=1>|b=2>`` is ``0b1_10 = 6``.

Multi-qubit matrices passed to :func:`apply_unitary` are indexed with
``targets[0]`` as their most significant bit, i.e. ``kron(A, B)`` applied to
``targets=[q1, q0]`` puts ``A`` on ``q1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CapacityError,
    ConfigurationError,
    NumericalDegeneracyError,
    ShapeError,
    ValidationError,
)
from .gates import unitarity_defect

MAX_QUBITS = 24
NORM_TOL = 1e-12
ROLES = (
    "system",
    "system-conjugate",
    "energy",
    "delta-energy",
    "acceptance",
    "walk-phase",
)


@dataclass(frozen=True)
class Register:
    name: str
    size: int
    role: str
    offset: int  # index of the register's least significant qubit

    @property
    def qubits(self) -> list[int]:
        """Qubit indices, most significant first."""
        return list(range(self.offset + self.size - 1, self.offset - 1, -1))

    @property
    def dim(self) -> int:
        return 1 << self.size


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered registers; the first one owns the most significant qubits."""

    registers: tuple[Register, ...]
    n_qubits: int
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_entries(cls, items) -> "RegisterLayout":
        """Build from ``[(name, size, role), ...]`` listed most significant first."""
        entries = [tuple(s) for s in items]
        if not entries:
            raise ConfigurationError("layout needs at least one register")
        names = [e[0] for e in entries]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate register names in {names}")
        n = 0
        for name, size, role in entries:
            if int(size) < 1:
                raise ConfigurationError(f"register {name!r} has size {size}")
            if role not in ROLES:
                raise ConfigurationError(f"unknown register role {role!r}")
            if role == "acceptance" and size != 1:
                raise ConfigurationError("acceptance registers hold exactly one qubit")
            n += int(size)
        if n > MAX_QUBITS:
            raise CapacityError(f"{n} qubits exceed the cap of {MAX_QUBITS}")
        regs = []
        offset = n
        for name, size, role in entries:
            offset -= int(size)
            regs.append(Register(name, int(size), role, offset))
        layout = cls(tuple(regs), n)
        layout._index.update({r.name: r for r in regs})
        return layout

    def __getitem__(self, name: str) -> Register:
        try:
            return self._index[name]
        except KeyError:
            raise ConfigurationError(f"no register named {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._index

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.registers]

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    @property
    def shape(self) -> tuple[int, ...]:
        """Amplitude tensor shape with one axis per register."""
        return tuple(r.dim for r in self.registers)

    def axis(self, name: str) -> int:
        return self.names.index(name)

    def index(self, **values: int) -> int:
        """Amplitude index of a register-basis state; missing registers are 0."""
        idx = 0
        for name, v in values.items():
            reg = self[name]
            if not 0 <= v < reg.dim:
                raise ConfigurationError(f"value {v} out of range for {name!r}")
            idx |= int(v) << reg.offset
        return idx


class QuantumState:
    """Normalized amplitude vector over a :class:`RegisterLayout`.

    ``amplitudes`` may carry trailing batch axes, in which case every column
    is evolved independently.  Batched states are how circuits are compiled
    into dense matrices; measurement needs an unbatched state.
    """

    def __init__(self, layout: RegisterLayout, amplitudes: np.ndarray):
        amplitudes = np.asarray(amplitudes, dtype=complex)
        if amplitudes.shape[0] != layout.dim:
            raise ShapeError(
                f"amplitude length {amplitudes.shape[0]} != 2**{layout.n_qubits}"
            )
        self.layout = layout
        self.amplitudes = amplitudes

    @property
    def batched(self) -> bool:
        return self.amplitudes.ndim > 1

    def norm(self) -> np.ndarray | float:
        n = np.sqrt(np.sum(np.abs(self.amplitudes) ** 2, axis=0))
        return float(n) if not self.batched else n

    def check_norm(self, tol: float = NORM_TOL) -> None:
        err = np.max(np.abs(np.atleast_1d(self.norm()) - 1.0))
        if err > tol:
            raise ValidationError(f"state norm deviates from 1 by {err:.3e}")

    def tensor(self) -> np.ndarray:
        """View with one axis per register (plus batch axes)."""
        return self.amplitudes.reshape(self.layout.shape + self.amplitudes.shape[1:])

    def copy(self) -> "QuantumState":
        return QuantumState(self.layout, self.amplitudes.copy())

    @classmethod
    def from_registers(cls, layout: RegisterLayout, **vectors) -> "QuantumState":
        """Product state from per-register vectors; omitted registers are |0>."""
        out = np.ones(1, dtype=complex)
        for reg in layout.registers:
            v = vectors.get(reg.name)
            if v is None:
                v = np.zeros(reg.dim, dtype=complex)
                v[0] = 1.0
            v = np.asarray(v, dtype=complex)
            if v.shape != (reg.dim,):
                raise ShapeError(f"register {reg.name!r} expects length {reg.dim}")
            out = np.kron(out, v)
        state = cls(layout, out)
        state.check_norm(1e-10)
        return state


def new_state(layout: RegisterLayout) -> QuantumState:
    """The all-zero basis state ``|0...0>``."""
    if layout.n_qubits > MAX_QUBITS:
        raise CapacityError(f"{layout.n_qubits} qubits exceed the cap of {MAX_QUBITS}")
    amps = np.zeros(layout.dim, dtype=complex)
    amps[0] = 1.0
    return QuantumState(layout, amps)


def basis_batch(layout: RegisterLayout, register: str) -> QuantumState:
    """Batched state whose column ``k`` is ``|k>`` on ``register``, zeros elsewhere."""
    reg = layout[register]
    amps = np.zeros((layout.dim, reg.dim), dtype=complex)
    amps[np.arange(reg.dim) << reg.offset, np.arange(reg.dim)] = 1.0
    return QuantumState(layout, amps)


def _validate_targets(n: int, targets) -> list[int]:
    targets = [int(t) for t in targets]
    if len(set(targets)) != len(targets):
        raise ShapeError(f"repeated qubit in {targets}")
    for t in targets:
        if not 0 <= t < n:
            raise ShapeError(f"qubit {t} out of range for {n} qubits")
    return targets


def _apply_kernel(amps, n, u, targets, controls=(), control_values=()):
    """Contract ``u`` into the qubit axes of ``amps`` (in place)."""
    k = len(targets)
    batch = amps.shape[1:]
    psi = amps.reshape((2,) * n + batch)
    index = [slice(None)] * (n + len(batch))
    for c, v in zip(controls, control_values):
        index[n - 1 - c] = int(v)
    sub = psi[tuple(index)] if controls else psi
    # axes of ``sub`` after integer indexing drop the control axes
    removed = sorted(n - 1 - c for c in controls)
    def shifted(ax):
        return ax - sum(1 for r in removed if r < ax)
    axes = [shifted(n - 1 - t) for t in targets]
    ut = u.reshape((2,) * (2 * k))
    moved = np.tensordot(ut, sub, axes=(list(range(k, 2 * k)), axes))
    moved = np.moveaxis(moved, list(range(k)), axes)
    if controls:
        psi[tuple(index)] = moved
    else:
        psi[...] = moved


def apply_unitary(
    state: QuantumState, u: np.ndarray, targets, *, check: bool = True
) -> QuantumState:
    """Apply ``u`` to the listed qubits (``targets[0]`` is the matrix MSB)."""
    u = np.asarray(u, dtype=complex)
    targets = _validate_targets(state.layout.n_qubits, targets)
    dim = 1 << len(targets)
    if u.shape != (dim, dim):
        raise ShapeError(f"matrix shape {u.shape} does not act on {len(targets)} qubits")
    if check:
        defect = unitarity_defect(u)
        if defect > 1e-10:
            raise ValidationError(f"matrix is not unitary (defect {defect:.3e})")
    _apply_kernel(state.amplitudes, state.layout.n_qubits, u, targets)
    return state


def apply_controlled(
    state: QuantumState,
    u: np.ndarray,
    controls,
    targets,
    control_values=None,
    *,
    check: bool = True,
) -> QuantumState:
    """Apply ``u`` on ``targets`` where each control qubit has its control value (default 1)."""
    u = np.asarray(u, dtype=complex)
    n = state.layout.n_qubits
    controls = list(controls)
    all_q = _validate_targets(n, controls + list(targets))
    targets = all_q[len(controls):]
    if control_values is None:
        control_values = [1] * len(controls)
    dim = 1 << len(targets)
    if u.shape != (dim, dim):
        raise ShapeError(f"matrix shape {u.shape} does not act on {len(targets)} qubits")
    if check:
        defect = unitarity_defect(u)
        if defect > 1e-10:
            raise ValidationError(f"matrix is not unitary (defect {defect:.3e})")
    _apply_kernel(state.amplitudes, n, u, targets, controls, control_values)
    return state


def apply_register_unitary(
    state: QuantumState, u: np.ndarray, register: str, *, check: bool = True
) -> QuantumState:
    """Apply ``u`` to the whole of ``register``."""
    return apply_unitary(state, u, state.layout[register].qubits, check=check)


def apply_register_diagonal(
    state: QuantumState, diag: np.ndarray, registers: list[str]
) -> QuantumState:
    """Multiply amplitudes by ``diag`` indexed by the joint value of ``registers``.

    ``diag`` has shape ``(dim_r0, dim_r1, ...)`` in the order given.
    """
    layout = state.layout
    axes = [layout.axis(r) for r in registers]
    shape = [1] * len(layout.registers)
    d = np.asarray(diag)
    order = np.argsort(axes)
    d = np.transpose(d, order)
    for ax in axes:
        shape[ax] = layout.registers[ax].dim
    d = d.reshape(shape + [1] * (state.amplitudes.ndim - 1))
    t = state.tensor()
    t *= d
    return state


def register_marginal(state: QuantumState, register: str) -> np.ndarray:
    """Born probabilities of the values of ``register``."""
    if state.batched:
        raise ShapeError("marginals need an unbatched state")
    t = state.tensor()
    ax = state.layout.axis(register)
    probs = np.abs(np.moveaxis(t, ax, 0).reshape(t.shape[ax], -1)) ** 2
    return probs.sum(axis=1)


def sample_index(probs, u: float) -> int:
    """Cumulative scan; the first bin whose upper edge exceeds ``u`` wins.

    ``u`` is scaled by the total so tiny normalization drift cannot fall off the
    end, and zero-probability bins are never returned.
    """
    p = np.asarray(probs, dtype=float).tolist()
    total = 0.0
    for v in p:
        total += v
    x = u * total
    acc = 0.0
    k = len(p) - 1
    for i, v in enumerate(p):
        acc += v
        if x < acc:
            k = i
            break
    while p[k] <= 0.0 and k > 0:
        k -= 1
    while p[k] <= 0.0 and k < len(p) - 1:
        k += 1
    return k


def project_register(state: QuantumState, register: str, value: int) -> float:
    """Collapse ``register`` onto ``value`` in place; returns the pre-collapse probability."""
    t = state.tensor()
    ax = state.layout.axis(register)
    moved = np.moveaxis(t, ax, 0)
    keep = moved[value].copy()
    p = float(np.sum(np.abs(keep) ** 2))
    if p <= 0.0:
        raise NumericalDegeneracyError(f"register {register!r} has zero weight on {value}")
    moved[...] = 0.0
    moved[value] = keep / np.sqrt(p)
    return p


def measure_register(state: QuantumState, register: str, rng) -> tuple[int, QuantumState]:
    """Projective measurement of ``register`` using one uniform draw."""
    probs = register_marginal(state, register)
    if probs.sum() <= 1e-300:
        raise NumericalDegeneracyError("state has no weight to measure")
    k = sample_index(probs, rng.uniform())
    project_register(state, register, k)
    return k, state


def shift_register(state: QuantumState, register: str, value: int) -> QuantumState:
    """XOR the value of ``register`` with ``value`` (bit flips)."""
    t = state.tensor()
    ax = state.layout.axis(register)
    dim = t.shape[ax]
    perm = np.arange(dim) ^ int(value)
    moved = np.moveaxis(t, ax, 0)
    moved[...] = moved[perm]
    return state


def reset_register(state: QuantumState, register: str, rng) -> QuantumState:
    """Measure ``register`` and flip the observed bits back to ``|0...0>``."""
    k, _ = measure_register(state, register, rng)
    if k:
        shift_register(state, register, k)
    return state


def reduced_density(state: QuantumState, register) -> np.ndarray:
    """Partial trace keeping ``register`` (a name or a list of names, in layout order)."""
    if state.batched:
        raise ShapeError("reduced density needs an unbatched state")
    names = [register] if isinstance(register, str) else list(register)
    layout = state.layout
    axes = sorted(layout.axis(r) for r in names)
    t = state.tensor()
    rest = [a for a in range(len(layout.registers)) if a not in axes]
    m = np.transpose(t, axes + rest)
    d = int(np.prod([t.shape[a] for a in axes]))
    m = m.reshape(d, -1)
    return m @ m.conj().T


def measure_with_projectors(
    state: QuantumState, register: str, projectors, rng
) -> tuple[int, QuantumState]:
    """Lüders measurement with orthogonal projectors acting on ``register``."""
    reg = state.layout[register]
    probs = []
    branches = []
    for proj in projectors:
        branch = state.copy()
        apply_unitary(branch, proj, reg.qubits, check=False)
        branches.append(branch)
        probs.append(float(np.sum(np.abs(branch.amplitudes) ** 2)))
    probs = np.array(probs)
    if probs.sum() <= 1e-300:
        raise NumericalDegeneracyError("projectors annihilate the state")
    k = sample_index(probs, rng.uniform())
    state.amplitudes[...] = branches[k].amplitudes / np.sqrt(probs[k])
    return k, state
