"""Quantum-quantum Metropolis: CETS preparation by annealed Szegedy projections.

Walk register layout, most significant first::

    w (n_w) | acc (1) | delta (n_delta) | system (3) | conj (3) | energy (n_e)

``energy`` is only used to draw the final energy sample.

The walk for one temperature and kick is ``W = X V^dag S V`` with

* ``V``: kick on the system, delta-energy QPE, ``RY(2 arcsin sqrt(f))`` on
  ``acc`` controlled by the delta bin, inverse delta-energy QPE;
* ``S``: exchange of system and conjugate when ``acc = 1``;
* ``X``: delta-energy QPE, reflection about ``acc = 0, delta = 0``, inverse
  QPE.  With exact grids this reflects about equal-energy pairs with the
  acceptance flag cleared.

The CETS with cleared ancillas is an eigenvector of ``W`` with eigenvalue 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, ConstructionError
from .gates import CNOT, HAD, qft_matrix, ry, unitarity_defect
from .qpe import (
    DeltaGrid,
    EnergyGrid,
    build_delta_grid,
    build_grid,
    qpe_delta_energy,
    qpe_energy,
)
from .qms import SampleSet
from .rng import RandomStream
from .statevec import (
    QuantumState,
    RegisterLayout,
    apply_controlled,
    apply_register_diagonal,
    apply_register_unitary,
    apply_unitary,
    measure_register,
    new_state,
    reduced_density,
    sample_index,
    shift_register,
)
from .triangle import (
    EnergySpectrum,
    KickPolicy,
    cets_vector,
    eigenvalue_one_projector,
    kick_matrices,
    observable_a,
    spectrum,
    triangle_hamiltonian,
)

WALK_REGISTERS = ("acc", "delta", "system", "conj")


def walk_layout(n_delta: int = 2) -> RegisterLayout:
    """The nine walk qubits without the phase and energy registers."""
    return RegisterLayout.from_entries(
        [
            ("acc", 1, "acceptance"),
            ("delta", n_delta, "delta-energy"),
            ("system", 3, "system"),
            ("conj", 3, "system-conjugate"),
        ]
    )


def qqma_layout(n_w: int = 3, n_delta: int = 2, n_energy: int = 1) -> RegisterLayout:
    return RegisterLayout.from_entries(
        [
            ("w", n_w, "walk-phase"),
            ("acc", 1, "acceptance"),
            ("delta", n_delta, "delta-energy"),
            ("system", 3, "system"),
            ("conj", 3, "system-conjugate"),
            ("energy", n_energy, "energy"),
        ]
    )


@dataclass(frozen=True)
class WalkGrids:
    spectrum: EnergySpectrum
    energy: EnergyGrid
    delta: DeltaGrid

    @property
    def exact(self) -> bool:
        return self.energy.mode.value == "exact"


def make_grids(grid_mode="exact", n_energy: int = 1, margin: float = 0.1,
               n_delta: int = 2, coupling: float = 1.0) -> WalkGrids:
    s = spectrum(triangle_hamiltonian(coupling))
    n_e = 1 if str(grid_mode).lower() == "exact" else n_energy
    grid = build_grid(grid_mode, n_e, margin, s)
    return WalkGrids(s, grid, build_delta_grid(s, n_delta, grid))


def prepare_beta0(state: QuantumState, system: str = "system", conj: str = "conj") -> QuantumState:
    """Hadamard on each system qubit, then CNOT onto the matching conjugate qubit."""
    lay = state.layout
    sq, cq = lay[system].qubits, lay[conj].qubits
    if len(sq) != len(cq):
        raise ConfigurationError("system and conjugate registers differ in size")
    for a, b in zip(sq, cq):
        apply_unitary(state, HAD, [a], check=False)
        apply_unitary(state, CNOT, [a, b], check=False)
    return state


def _filter_angles(beta: float, dgrid: DeltaGrid) -> np.ndarray:
    f = np.minimum(1.0, np.exp(-beta * dgrid.value(np.arange(dgrid.n_bins))))
    return 2.0 * np.arcsin(np.sqrt(f))


def _bits(value: int, width: int) -> list[int]:
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


@dataclass
class SzegedyProgram:
    """Gate program for ``W(beta, K)`` plus its compiled matrix and diagnostics.

    ``matrix`` acts on the walk layout ``acc | delta | system | conj``.
    """

    beta: float
    kick: int
    grids: WalkGrids
    matrix: np.ndarray = field(repr=False)
    unitarity_defect: float = 0.0
    fixed_point_residual: float = 0.0

    # gate sequence --------------------------------------------------------
    @staticmethod
    def _v(state, beta, kick, grids, inverse=False):
        s, dg = grids.spectrum, grids.delta
        lay = state.layout
        k = kick_matrices()[kick]
        angles = _filter_angles(beta, dg)
        dq = lay["delta"].qubits
        acc = lay["acc"].qubits

        def filt(sign):
            for d in range(dg.n_bins):
                apply_controlled(state, ry(sign * angles[d]), dq, acc, _bits(d, len(dq)), check=False)

        if not inverse:
            apply_register_unitary(state, k, "system", check=False)
            qpe_delta_energy(state, "system", "conj", "delta", dg, s, "forward")
            filt(+1)
            qpe_delta_energy(state, "system", "conj", "delta", dg, s, "inverse")
        else:
            qpe_delta_energy(state, "system", "conj", "delta", dg, s, "forward")
            filt(-1)
            qpe_delta_energy(state, "system", "conj", "delta", dg, s, "inverse")
            apply_register_unitary(state, k.conj().T, "system", check=False)

    @staticmethod
    def _swap_on_accept(state):
        lay = state.layout
        n = lay["system"].size
        sw = _register_swap(n)
        apply_controlled(state, sw, lay["acc"].qubits,
                         lay["system"].qubits + lay["conj"].qubits, check=False)

    @staticmethod
    def _vertex_reflection(state, grids):
        s, dg = grids.spectrum, grids.delta
        qpe_delta_energy(state, "system", "conj", "delta", dg, s, "forward")
        lay = state.layout
        diag = -np.ones((2, lay["delta"].dim))
        diag[0, 0] = 1.0
        apply_register_diagonal(state, diag, ["acc", "delta"])
        qpe_delta_energy(state, "system", "conj", "delta", dg, s, "inverse")

    @classmethod
    def apply_walk(cls, state, beta, kick, grids):
        """Apply ``W`` gate by gate to the walk registers of ``state``."""
        cls._v(state, beta, kick, grids)
        cls._swap_on_accept(state)
        cls._v(state, beta, kick, grids, inverse=True)
        cls._vertex_reflection(state, grids)
        return state

    def cets_embedded(self) -> np.ndarray:
        """CETS with cleared ancillas as a walk-layout vector."""
        out = np.zeros(self.matrix.shape[0], dtype=complex)
        out[:64] = cets_vector(self.grids.spectrum, self.beta).vector
        return out

    def eig1_projector(self) -> np.ndarray:
        return eigenvalue_one_projector(self.matrix)


@lru_cache(maxsize=None)
def _register_swap(n: int) -> np.ndarray:
    d = 1 << n
    sw = np.zeros((d * d, d * d))
    for a in range(d):
        for b in range(d):
            sw[b * d + a, a * d + b] = 1.0
    return sw


def build_szegedy(beta: float, kick: int, grids: WalkGrids, check: bool = True) -> SzegedyProgram:
    """Compile ``W(beta, K_kick)`` by running its gates on every basis state."""
    lay = walk_layout(grids.delta.n_qubits)
    batch = QuantumState(lay, np.eye(lay.dim, dtype=complex))
    SzegedyProgram.apply_walk(batch, beta, kick, grids)
    w = batch.amplitudes
    prog = SzegedyProgram(float(beta), int(kick), grids, w)
    prog.unitarity_defect = unitarity_defect(w)
    c = prog.cets_embedded()
    prog.fixed_point_residual = float(np.linalg.norm(w @ c - c))
    if check:
        if prog.unitarity_defect > 1e-10:
            raise ConstructionError(f"walk is not unitary (defect {prog.unitarity_defect:.2e})")
        if grids.exact and prog.fixed_point_residual > 1e-8:
            raise ConstructionError(
                f"CETS is not fixed (residual {prog.fixed_point_residual:.2e})"
            )
    return prog


# Annealing -----------------------------------------------------------------

@dataclass(frozen=True)
class AnnealSchedule:
    beta: float
    n_steps: int
    policy: KickPolicy

    def beta_at(self, j: int) -> float:
        return j * self.beta / self.n_steps

    @property
    def betas(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.beta / self.n_steps


@dataclass(frozen=True)
class QqmaConfig:
    beta: float
    n_anneal: int = 16
    n_w: int = 3
    phase_offset: float = 0.0
    grid_mode: str = "exact"
    n_energy: int = 1
    margin: float = 0.1
    n_delta: int = 2
    kick_policy: str = "random"
    n_samples: int = 100
    max_restarts: int = 200
    seed: int = 0
    stream: int = 0
    engine: str = "fast"
    coupling: float = 1.0

    def __post_init__(self):
        if self.n_w < 1 or self.n_samples < 1 or self.n_anneal < 1:
            raise ConfigurationError("n_w, n_samples and n_anneal must be at least 1")
        if self.beta < 0:
            raise ConfigurationError("beta must be non-negative")
        if self.engine not in ("fast", "gate"):
            raise ConfigurationError(f"unknown engine {self.engine!r}")

    def with_(self, **kw) -> "QqmaConfig":
        return replace(self, **kw)

    @property
    def accept_bin(self) -> int:
        """w outcome that eigenphase 0 is mapped to."""
        m = 1 << self.n_w
        return int(round(self.phase_offset * m)) % m


@dataclass
class CetsRunResult:
    success: bool
    restarts: int
    step_accepts: list  # (j, accepted) for every attempted annealing step
    rho: np.ndarray | None
    state: object = None
    energy_bin: int | None = None


class _WalkCache:
    """Compiled walks and their ``w``-projection maps keyed by (beta, kick)."""

    def __init__(self, cfg: QqmaConfig, grids: WalkGrids):
        self.cfg = cfg
        self.grids = grids
        self.programs: dict = {}
        self.maps: dict = {}

    def program(self, beta: float, kick: int) -> SzegedyProgram:
        key = (float(beta), int(kick))
        if key not in self.programs:
            self.programs[key] = build_szegedy(beta, kick, self.grids)
        return self.programs[key]

    def projection_map(self, beta: float, kick: int) -> np.ndarray:
        """Amplitude of the accepted ``w`` bin for inputs with cleared ancillas.

        With ``M = 2**n_w`` and accepted bin ``b`` this is
        ``(1/M) sum_m exp(-2 pi i (b/M - offset) m) (e^{2 pi i offset} W)^m``
        restricted to the first 64 columns.
        """
        key = (float(beta), int(kick))
        if key not in self.maps:
            w = self.program(beta, kick).matrix
            m = 1 << self.cfg.n_w
            b = self.cfg.accept_bin
            ph = np.exp(2j * np.pi * self.cfg.phase_offset)
            acc = np.zeros((w.shape[0], 64), dtype=complex)
            cur = np.eye(w.shape[0], dtype=complex)[:, :64]
            for k in range(m):
                acc += np.exp(-2j * np.pi * b * k / m) * cur
                cur = ph * (w @ cur)
            self.maps[key] = acc / m
        return self.maps[key]


def _szegedy_qpe(state: QuantumState, w: np.ndarray, n_w: int, offset: float):
    lay = state.layout
    walk_q = []
    for r in WALK_REGISTERS:
        walk_q += lay[r].qubits
    wq = lay["w"]
    apply_register_unitary(state, _hadamard(n_w), "w", check=False)
    ph = np.exp(2j * np.pi * offset)
    p = ph * w
    for j in range(n_w):
        apply_controlled(state, p, [wq.offset + j], walk_q, check=False)
        p = p @ p
    apply_register_unitary(state, qft_matrix(n_w).conj().T, "w", check=False)


@lru_cache(maxsize=None)
def _hadamard(n: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        out = np.kron(out, HAD)
    return out


def anneal_step(state: QuantumState, beta_j: float, kick: int, cfg: QqmaConfig,
                cache: _WalkCache, rng: RandomStream) -> tuple[int, QuantumState]:
    """Szegedy QPE of ``W(beta_j, K)`` and measurement of ``w``.

    Returns the measured ``w`` value shifted so that 0 means accepted, or -1
    when ``w`` was accepted but an ancilla check failed.
    """
    w = cache.program(beta_j, kick).matrix
    _szegedy_qpe(state, w, cfg.n_w, cfg.phase_offset)
    m = 1 << cfg.n_w
    out, _ = measure_register(state, "w", rng)
    shifted = (out - cfg.accept_bin) % m
    if shifted != 0:
        return shifted, state
    if out:
        shift_register(state, "w", out)
    a, _ = measure_register(state, "acc", rng)
    if a:
        return -1, state
    d, _ = measure_register(state, "delta", rng)
    if d:
        return -1, state
    return 0, state


def sample_cets(state: QuantumState, grids: WalkGrids, rng: RandomStream) -> tuple[int, QuantumState]:
    """Energy QPE of the system register into ``energy`` and a measurement."""
    qpe_energy(state, "system", "energy", grids.energy, grids.spectrum, "forward")
    return measure_register(state, "energy", rng)


class QqmaRunner:
    """Runs annealing sequences for one configuration."""

    def __init__(self, cfg: QqmaConfig, rng: RandomStream | None = None):
        self.cfg = cfg
        self.rng = rng or RandomStream(cfg.seed, cfg.stream)
        self.grids = make_grids(cfg.grid_mode, cfg.n_energy, cfg.margin, cfg.n_delta, cfg.coupling)
        self.policy = KickPolicy.parse(cfg.kick_policy)
        self.schedule = AnnealSchedule(cfg.beta, cfg.n_anneal, self.policy)
        self.cache = _WalkCache(cfg, self.grids)
        self.layout = qqma_layout(cfg.n_w, cfg.n_delta, self.grids.energy.n_qubits)
        s = self.grids.spectrum
        self._cets0 = cets_vector(s, 0.0).vector

    # one full annealing sequence with restarts ---------------------------
    def run_once(self) -> CetsRunResult:
        cfg = self.cfg
        attempts = []
        for restart in range(cfg.max_restarts + 1):
            ok, payload = self._attempt(attempts)
            if ok:
                return CetsRunResult(True, restart, attempts, payload[0], payload[1])
        return CetsRunResult(False, cfg.max_restarts, attempts, None)

    def _attempt(self, attempts):
        if self.cfg.engine == "gate":
            return self._attempt_gate(attempts)
        return self._attempt_fast(attempts)

    def _attempt_fast(self, attempts):
        rng = self.rng
        v = self._cets0.copy()
        for j in range(1, self.cfg.n_anneal + 1):
            k = self.policy.choose(j - 1, rng)
            amp = self.cache.projection_map(self.schedule.beta_at(j), k) @ v
            p0 = float(np.vdot(amp, amp).real)
            out = sample_index(np.array([p0, max(1.0 - p0, 0.0)]), rng.uniform())
            if out != 0:
                attempts.append((j, False))
                return False, None
            amp = amp / np.sqrt(p0)
            half = amp.size // 2
            pa0 = float(np.vdot(amp[:half], amp[:half]).real)
            if sample_index(np.array([pa0, max(1.0 - pa0, 0.0)]), rng.uniform()) != 0:
                attempts.append((j, False))
                return False, None
            amp = amp[:half] / np.sqrt(pa0)
            pd0 = float(np.vdot(amp[:64], amp[:64]).real)
            if sample_index(np.array([pd0, max(1.0 - pd0, 0.0)]), rng.uniform()) != 0:
                attempts.append((j, False))
                return False, None
            v = amp[:64] / np.sqrt(pd0)
            attempts.append((j, True))
        mat = v.reshape(8, 8)
        return True, (mat @ mat.conj().T, v)

    def _attempt_gate(self, attempts):
        rng = self.rng
        state = new_state(self.layout)
        prepare_beta0(state)
        for j in range(1, self.cfg.n_anneal + 1):
            k = self.policy.choose(j - 1, rng)
            out, state = anneal_step(state, self.schedule.beta_at(j), k, self.cfg, self.cache, rng)
            if out != 0:
                attempts.append((j, False))
                return False, None
            attempts.append((j, True))
        return True, (reduced_density(state, "system"), state)

    def energy_sample(self, payload) -> int:
        """Energy bin drawn from a successful run's final state."""
        if isinstance(payload, QuantumState):
            state = payload
        else:
            state = new_state(self.layout)
            t = state.tensor()
            t[...] = 0.0
            t[0, 0, 0, :, :, 0] = payload.reshape(8, 8)
        k, _ = sample_cets(state, self.grids, self.rng)
        return k


def run_qqma(cfg: QqmaConfig, rng: RandomStream | None = None) -> SampleSet:
    """``n_samples`` independent annealing runs, each ending in an energy sample."""
    runner = QqmaRunner(cfg, rng)
    grid = runner.grids.energy
    n = cfg.n_samples
    rhos = np.zeros((n, 8, 8), dtype=complex)
    bins = np.full(n, -1, dtype=np.int64)
    accepted = np.zeros(n, dtype=np.int64)
    restarts = np.zeros(n, dtype=np.int64)
    ok = np.zeros(n, dtype=bool)
    step_tries = np.zeros(cfg.n_anneal + 1)
    step_wins = np.zeros(cfg.n_anneal + 1)
    for i in range(n):
        res = runner.run_once()
        for j, acc in res.step_accepts:
            step_tries[j] += 1
            step_wins[j] += acc
        restarts[i] = res.restarts
        accepted[i] = sum(acc for _, acc in res.step_accepts)
        if res.success:
            ok[i] = True
            rhos[i] = res.rho
            bins[i] = runner.energy_sample(res.state)
    e_vals = np.where(ok, grid.energy(np.maximum(bins, 0)), np.nan)
    keep = ok
    h = runner.grids.spectrum.hamiltonian.matrix
    a = observable_a().matrix
    sset = SampleSet(
        algorithm="qqma",
        beta=cfg.beta,
        grid=grid,
        energy_bins=bins[keep],
        energy_values=e_vals[keep],
        a_values=np.real(np.einsum("nij,ji->n", rhos[keep], a)),
        accepted_steps=accepted[keep],
        reversal_iters=restarts[keep],
        rhos=rhos[keep],
        restarts=int(restarts.sum()),
        failures=int((~ok).sum()),
    )
    sset.e_estimates = np.real(np.einsum("nij,ji->n", rhos[keep], h))
    sset.extra["step_tries"] = step_tries[1:]
    sset.extra["step_accepts"] = step_wins[1:]
    return sset
