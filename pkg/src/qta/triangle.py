"""Exact results for the frustrated three-spin triangle.

``H = J (XX1 + X1X + 1XX)`` has levels ``-J`` (six states) and ``3J`` (two
states).  Inside each level the eigenbasis is fixed to the sigma-x product
states in lexicographic order, ``|+> -> bit 0`` and ``|-> -> bit 1`` with the
first spin as the most significant bit.  Basis index ``a`` therefore has energy
``3J`` for ``a in {0, 7}`` and ``-J`` otherwise, and the basis matrix is
``Had (x) Had (x) Had``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, DomainError
from .gates import HAD, I2, X, Y, kron

N_SPINS = 3
DIM = 1 << N_SPINS


@dataclass(frozen=True)
class HamiltonianSpec:
    coupling: float
    matrix: np.ndarray


def triangle_hamiltonian(coupling: float = 1.0) -> HamiltonianSpec:
    if coupling <= 0:
        raise DomainError("coupling J must be positive")
    h = coupling * (kron(X, X, I2) + kron(X, I2, X) + kron(I2, X, X))
    return HamiltonianSpec(float(coupling), h)


def sigma_x_basis() -> np.ndarray:
    """Columns are the sigma-x product states in lexicographic order."""
    return kron(HAD, HAD, HAD)


@dataclass(frozen=True)
class EnergySpectrum:
    """Eigen-decomposition of ``H`` in the fixed sigma-x product basis.

    ``energies[a]`` belongs to column ``a`` of ``basis``.  ``levels`` lists the
    distinct energies ascending with their degeneracies.
    """

    hamiltonian: HamiltonianSpec
    energies: np.ndarray
    basis: np.ndarray
    levels: tuple[tuple[float, int], ...]

    @property
    def level_energies(self) -> np.ndarray:
        return np.array([e for e, _ in self.levels])

    def level_index(self) -> np.ndarray:
        """Level number of every basis state."""
        lev = self.level_energies
        return np.array([int(np.argmin(np.abs(lev - e))) for e in self.energies])

    def projectors(self) -> list[np.ndarray]:
        """Sector projectors in the computational basis, one per level."""
        idx = self.level_index()
        out = []
        for k in range(len(self.levels)):
            cols = self.basis[:, idx == k]
            out.append(cols @ cols.conj().T)
        return out

    def function(self, fn) -> np.ndarray:
        """``fn(H)`` in the computational basis."""
        b = self.basis
        return (b * fn(self.energies)) @ b.conj().T


def _group_levels(energies: np.ndarray, tol: float) -> tuple[tuple[float, int], ...]:
    levels: list[list[float]] = []
    for e in np.sort(energies):
        if levels and abs(e - levels[-1][0]) < tol:
            levels[-1].append(e)
        else:
            levels.append([e])
    return tuple((float(np.mean(g)), len(g)) for g in levels)


def spectrum(h: HamiltonianSpec) -> EnergySpectrum:
    """Diagonalize ``h`` in the sigma-x product basis.

    Falls back to a plain Hermitian eigendecomposition when the product states
    are not eigenvectors (any matrix other than an XX-coupled Hamiltonian).
    """
    m = np.asarray(h.matrix, dtype=complex)
    basis = sigma_x_basis()
    if m.shape == basis.shape:
        energies = np.real(np.einsum("ia,ij,ja->a", basis.conj(), m, basis))
        residual = np.abs(m @ basis - basis * energies).max()
    else:
        residual = np.inf
    if residual > 1e-12:
        energies, basis = np.linalg.eigh(m)
        basis = basis.astype(complex)
    tol = 1e-9 * max(1.0, float(np.abs(energies).max()))
    return EnergySpectrum(h, np.asarray(energies, float), basis.astype(complex),
                          _group_levels(energies, tol))


@dataclass(frozen=True)
class GibbsEnsemble:
    beta: float
    partition: float
    state_weights: np.ndarray  # Gibbs probability of each basis state
    level_probs: np.ndarray  # probability of each level, ascending energy
    rho: np.ndarray  # computational basis
    e_mean: float
    a_mean: float


def gibbs_ensemble(s: EnergySpectrum, beta: float) -> GibbsEnsemble:
    if beta < 0:
        raise DomainError("beta must be non-negative")
    shift = s.energies.min()
    boltz = np.exp(-beta * (s.energies - shift))
    z_shifted = boltz.sum()
    w = boltz / z_shifted
    partition = float(z_shifted * np.exp(-beta * shift))
    idx = s.level_index()
    level_probs = np.array([w[idx == k].sum() for k in range(len(s.levels))])
    rho = (s.basis * w) @ s.basis.conj().T
    a = observable_a().matrix
    return GibbsEnsemble(
        beta=float(beta),
        partition=partition,
        state_weights=w,
        level_probs=level_probs,
        rho=rho,
        e_mean=float(np.dot(w, s.energies)),
        a_mean=float(np.real(np.trace(rho @ a))) if rho.shape == a.shape else float("nan"),
    )


def closed_form_energy(beta: float, coupling: float = 1.0) -> float:
    """Thermal energy of the triangle from its two-level partition function."""
    bj = beta * coupling
    return 3 * coupling * (np.exp(-3 * bj) - np.exp(bj)) / (np.exp(-3 * bj) + 3 * np.exp(bj))


@dataclass(frozen=True)
class ObservableA:
    matrix: np.ndarray
    eigenvalues: np.ndarray  # distinct, ascending
    projectors: tuple[np.ndarray, ...]


def observable_a() -> ObservableA:
    """``A = X (x) X (x) (1 + Y)``, which does not commute with ``H``."""
    a = kron(X, X, I2 + Y)
    vals, vecs = np.linalg.eigh(a)
    groups = _group_levels(vals, 1e-9)
    projs = []
    for lam, _ in groups:
        cols = vecs[:, np.abs(vals - lam) < 1e-9]
        projs.append(cols @ cols.conj().T)
    # eigenvalues are -2, 0, 2; snap away rounding noise
    levels = np.round(np.array([g[0] for g in groups]), 12) + 0.0
    return ObservableA(a, levels, tuple(projs))


_KICKS = (kron(I2, I2, HAD), kron(I2, HAD, I2), kron(HAD, I2, I2))


def kick_matrices() -> tuple[np.ndarray, ...]:
    """``K0, K1, K2``: a Hadamard on spin 3, 2 and 1 respectively."""
    return _KICKS


@dataclass(frozen=True)
class KickPolicy:
    """How the kick of each step is chosen.

    ``kind`` is ``"random"`` (uniform, one draw per step), ``"cycle"``
    (``K_{step mod 3}``) or ``"fixed"`` (always ``K_index``).
    """

    kind: str = "random"
    index: int = 0

    @classmethod
    def parse(cls, text: str) -> "KickPolicy":
        text = str(text).strip().lower()
        m = re.fullmatch(r"fixed[(:\s]*([0-2])\)?", text)
        if m:
            return cls("fixed", int(m.group(1)))
        if text in ("random", "cycle", "alternate", "alternated"):
            return cls("random" if text == "random" else "cycle")
        raise ConfigurationError(f"unknown kick policy {text!r}")

    def choose(self, step: int, rng=None) -> int:
        if self.kind == "fixed":
            return self.index
        if self.kind == "cycle":
            return step % len(_KICKS)
        return rng.integer(len(_KICKS))

    def weights(self) -> np.ndarray:
        """Average usage frequency of each kick."""
        if self.kind == "fixed":
            w = np.zeros(len(_KICKS))
            w[self.index] = 1.0
            return w
        return np.full(len(_KICKS), 1.0 / len(_KICKS))

    def __str__(self):
        return f"fixed({self.index})" if self.kind == "fixed" else self.kind


def proposal_amplitudes(s: EnergySpectrum, kick: np.ndarray) -> np.ndarray:
    """``x[p, k] = <phi_p| K |phi_k>``."""
    return s.basis.conj().T @ kick @ s.basis


def metropolis_factor(beta: float, delta: np.ndarray) -> np.ndarray:
    return np.minimum(1.0, np.exp(-beta * np.asarray(delta, float)))


def transition_matrix(s: EnergySpectrum, kick: np.ndarray, beta: float) -> np.ndarray:
    """Column-stochastic ``T[p, k]`` for one kick with Metropolis filtering."""
    x = proposal_amplitudes(s, kick)
    f = metropolis_factor(beta, s.energies[:, None] - s.energies[None, :])
    t = np.abs(x) ** 2 * f
    np.fill_diagonal(t, 0.0)
    t[np.diag_indices_from(t)] = 1.0 - t.sum(axis=0)
    return t


def _strongly_connected(t: np.ndarray, tol: float = 1e-14) -> bool:
    adj = (np.abs(t) > tol).astype(int)
    n = adj.shape[0]
    reach = np.eye(n, dtype=int) | adj
    for _ in range(n):
        reach = ((reach @ reach) > 0).astype(int)
    return bool(reach.all())


@dataclass(frozen=True)
class MarkovAnalysis:
    beta: float
    policy: KickPolicy
    proposals: tuple[np.ndarray, ...]  # x^(C) per kick
    transition: np.ndarray  # effective per-step matrix
    eigenvalues: np.ndarray  # sorted descending by real part
    ergodic: bool

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1].real)

    @property
    def decay_rate(self) -> float:
        """``-log lambda2``: the per-step decay rate of the slowest mode."""
        return float(-np.log(abs(self.eigenvalues[1])))

    def stationary(self) -> np.ndarray:
        w, v = np.linalg.eig(self.transition)
        i = int(np.argmin(np.abs(w - 1.0)))
        p = np.real(v[:, i])
        return p / p.sum()


def markov_chain_analysis(s: EnergySpectrum, policy: KickPolicy | str, beta: float) -> MarkovAnalysis:
    """Classical chain on the eight fixed eigenstates.

    Random and fixed policies give the usage-weighted mixture of single-kick
    matrices.  The cycle policy is analysed through the matrix of one full
    period, whose eigenvalues are reported as per-step values (cube roots).
    """
    if beta < 0:
        raise DomainError("beta must be non-negative")
    if isinstance(policy, str):
        policy = KickPolicy.parse(policy)
    ts = [transition_matrix(s, k, beta) for k in _KICKS]
    if policy.kind == "cycle":
        period = ts[2] @ ts[1] @ ts[0]
        ev = np.linalg.eigvals(period)
        mags = np.abs(ev) ** (1.0 / 3.0)
        ev = mags * np.exp(1j * np.angle(ev) / 3.0)
        eff = period
        ergodic = _strongly_connected(ts[0] + ts[1] + ts[2])
    else:
        w = policy.weights()
        eff = sum(wi * t for wi, t in zip(w, ts))
        ev = np.linalg.eigvals(eff)
        ergodic = _strongly_connected(eff)
    order = np.argsort(-ev.real, kind="stable")
    return MarkovAnalysis(
        beta=float(beta),
        policy=policy,
        proposals=tuple(proposal_amplitudes(s, k) for k in _KICKS),
        transition=eff,
        eigenvalues=ev[order],
        ergodic=ergodic,
    )


@dataclass(frozen=True)
class CetsVector:
    """Purification ``sum_i sqrt(w_i) |phi_i>|phi_i*>``; index ``8*sys + conj``."""

    beta: float
    vector: np.ndarray

    def system_density(self) -> np.ndarray:
        m = self.vector.reshape(DIM, DIM)
        return m @ m.conj().T


def cets_vector(s: EnergySpectrum, beta: float) -> CetsVector:
    g = gibbs_ensemble(s, beta)
    b = s.basis
    m = (b * np.sqrt(g.state_weights)) @ b.conj().T
    return CetsVector(float(beta), m.reshape(-1))


# Reference walk -----------------------------------------------------------

def _ry_block(f: float) -> np.ndarray:
    c, sn = np.sqrt(1.0 - f), np.sqrt(f)
    return np.array([[c, -sn], [sn, c]])


@dataclass(frozen=True)
class ReferenceWalk:
    """Dense walk on ``acc (x) system (x) conjugate`` (index ``64*acc + 8*sys + conj``)."""

    beta: float
    walk: np.ndarray
    eig1_projector: np.ndarray
    cets: np.ndarray  # CETS embedded with acc = 0

    @property
    def eig1_dimension(self) -> int:
        return int(round(np.real(np.trace(self.eig1_projector))))


def eigenvalue_one_projector(u: np.ndarray, tol: float = 1e-7) -> np.ndarray:
    """Orthogonal projector onto ``ker(u - 1)`` for a unitary ``u``."""
    d = u.shape[0]
    _, sv, vh = np.linalg.svd(u - np.eye(d))
    null = vh[sv < tol].conj().T
    return null @ null.conj().T


def szegedy_reference(s: EnergySpectrum, kick: np.ndarray, beta: float) -> ReferenceWalk:
    """Szegedy-type quantization of the filtered kick chain, built from formulas.

    In the pair eigenbasis ``|p, l>`` the step isometry is
    ``|k, l>|0> -> sum_p x[p, k] |p, l> (sqrt(1 - f_pl)|0> + sqrt(f_pl)|1>)``
    with ``f_pl = min(1, exp(-beta (E_p - E_l)))``.  The walk is
    ``R V^dag S V`` where ``S`` exchanges system and conjugate when the
    acceptance flag is set and ``R`` reflects about the equal-energy pairs
    with the flag cleared.
    """
    e = s.energies
    n = e.size
    x = proposal_amplitudes(s, kick)
    f = metropolis_factor(beta, e[:, None] - e[None, :])
    # rotation on acc controlled by the pair (p, l); order (acc, p, l)
    rot = np.zeros((2, n, n, 2, n, n), dtype=complex)
    for p in range(n):
        for l in range(n):
            rot[:, p, l, :, p, l] = _ry_block(f[p, l])
    rot = rot.reshape(2 * n * n, 2 * n * n)
    kick_pair = np.kron(np.eye(2), np.kron(x, np.eye(n)))
    v = rot @ kick_pair
    swap = np.zeros((n * n, n * n))
    for a in range(n):
        for b in range(n):
            swap[b * n + a, a * n + b] = 1.0
    s_acc = scipy.linalg.block_diag(np.eye(n * n), swap)
    vertex = np.zeros(2 * n * n)
    same = np.isclose(e[:, None], e[None, :]).reshape(-1)
    vertex[: n * n] = same
    refl = np.diag(2 * vertex - 1.0)
    walk_eig = refl @ v.conj().T @ s_acc @ v
    # back to the computational basis of both registers
    bb = np.kron(np.eye(2), np.kron(s.basis, s.basis.conj()))
    walk = bb @ walk_eig @ bb.conj().T
    cets = np.zeros(2 * n * n, dtype=complex)
    cets[: n * n] = cets_vector(s, beta).vector
    return ReferenceWalk(float(beta), walk, eigenvalue_one_projector(walk), cets)
