"""Quantum Metropolis Sampling on the triangle.

One step of the chain, with the old energy bin held classically:

1. choose a kick ``K`` and apply it to the system;
2. run energy QPE into the energy register;
3. rotate the acceptance qubit by ``RY(2 arcsin sqrt(f))`` controlled on the
   new energy bin, ``f = min(1, exp(-beta (E_new - E_old)))``;
4. measure the acceptance qubit.  On 1 measure the energy register and keep
   the collapsed state.  On 0 repeat {inverse QPE, kick, QPE, measure energy}
   until the old bin comes back, restarting the chain after too many tries.

Every random decision consumes exactly one uniform draw from the chain's
:class:`~qta.rng.RandomStream`, in the order listed above, so the fast
eigenbasis engine and the gate-level engine agree draw for draw.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError
from .gates import ry
from .qpe import CompiledQPE, EnergyGrid, build_grid, qpe_energy
from .rng import RandomStream
from .statevec import (
    RegisterLayout,
    apply_controlled,
    apply_register_unitary,
    measure_register,
    measure_with_projectors,
    new_state,
    sample_index,
    shift_register,
)
from .triangle import (
    KickPolicy,
    kick_matrices,
    observable_a,
    proposal_amplitudes,
    spectrum,
    triangle_hamiltonian,
)


@dataclass(frozen=True)
class MetropolisFilter:
    """Acceptance probabilities ``f[new_bin, old_bin]`` on an energy grid.

    ``sign=-1`` flips the sign of the exponent; it exists only so that tests
    can check that a broken filter is caught.
    """

    beta: float
    grid: EnergyGrid
    sign: int = 1

    @property
    def table(self) -> np.ndarray:
        e = self.grid.bins
        d = e[:, None] - e[None, :]
        return np.minimum(1.0, np.exp(-self.sign * self.beta * d))

    @property
    def angles(self) -> np.ndarray:
        return 2.0 * np.arcsin(np.sqrt(self.table))

    def factor(self, delta) -> np.ndarray:
        return np.minimum(1.0, np.exp(-self.sign * self.beta * np.asarray(delta, float)))


@dataclass(frozen=True)
class QmsConfig:
    beta: float
    grid_mode: str = "exact"
    n_energy: int = 1
    margin: float = 0.1
    kick_policy: str = "random"
    r: int = 10
    n_samples: int = 1000
    max_reversal: int = 64
    seed: int = 0
    stream: int = 0
    measurement: str = "energy"  # "energy" or "a"
    variant: str = "single"  # "single" or "double" energy registers
    engine: str = "fast"  # "fast" (eigenbasis) or "gate" (statevector)
    reversal_kick: str = "same"  # "same" or "fresh"
    filter_sign: int = 1
    coupling: float = 1.0

    def __post_init__(self):
        if self.r < 1 or self.n_samples < 1:
            raise ConfigurationError("r and n_samples must be at least 1")
        if self.beta < 0:
            raise ConfigurationError("beta must be non-negative")
        if self.measurement not in ("energy", "a"):
            raise ConfigurationError(f"unknown measurement mode {self.measurement!r}")
        if self.variant not in ("single", "double"):
            raise ConfigurationError(f"unknown register variant {self.variant!r}")
        if self.engine not in ("fast", "gate"):
            raise ConfigurationError(f"unknown engine {self.engine!r}")
        if self.reversal_kick not in ("same", "fresh"):
            raise ConfigurationError(f"unknown reversal kick rule {self.reversal_kick!r}")
        if self.variant == "double" and self.engine != "gate":
            raise ConfigurationError("the two-register variant runs on the gate engine")
        if self.max_reversal < 1:
            raise ConfigurationError("max_reversal must be at least 1")

    def with_(self, **kw) -> "QmsConfig":
        return replace(self, **kw)


@dataclass
class StepOutcome:
    accepted: bool
    proposed_bin: int | None
    reversal_iters: int
    restarted: bool = False


@dataclass
class SampleSet:
    """Samples from one chain or annealing run.

    ``states`` holds pure system states (computational basis) when every
    snapshot is pure; otherwise ``rhos`` holds density matrices.
    """

    algorithm: str
    beta: float
    grid: EnergyGrid
    energy_bins: np.ndarray
    energy_values: np.ndarray
    a_values: np.ndarray
    accepted_steps: np.ndarray
    reversal_iters: np.ndarray
    states: np.ndarray | None = None
    rhos: np.ndarray | None = None
    restarts: int = 0
    failures: int = 0
    e_estimates: np.ndarray | None = None  # per-sample energy estimate if not the sampled value
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.energy_bins.size)

    def density(self, idx=slice(None)) -> np.ndarray:
        """Sum of snapshot density matrices over ``idx``."""
        if self.states is not None:
            s = self.states[idx]
            return np.einsum("ni,nj->ij", s, s.conj())
        return self.rhos[idx].sum(axis=0)

    def rho_mean(self) -> np.ndarray:
        return self.density() / len(self)


class _Model:
    """Shared per-configuration tables."""

    def __init__(self, cfg: QmsConfig):
        self.spectrum = spectrum(triangle_hamiltonian(cfg.coupling))
        n_e = 1 if str(cfg.grid_mode).lower() == "exact" else cfg.n_energy
        self.grid = build_grid(cfg.grid_mode, n_e, cfg.margin, self.spectrum)
        self.filter = MetropolisFilter(cfg.beta, self.grid, cfg.filter_sign)
        self.policy = KickPolicy.parse(cfg.kick_policy)
        self.kicks = kick_matrices()
        obs = observable_a()
        self.a_values = obs.eigenvalues
        self.a_projectors = obs.projectors


class FastChain:
    """QMS chain simulated in the energy eigenbasis of the system.

    The system register is a coefficient vector over the eight fixed
    eigenstates and the energy register is handled through
    :class:`~qta.qpe.CompiledQPE`; ancillas are |0> between steps.
    """

    def __init__(self, cfg: QmsConfig, rng: RandomStream, model: _Model | None = None):
        self.cfg = cfg
        self.rng = rng
        self.model = model or _Model(cfg)
        m = self.model
        self.qpe = CompiledQPE(m.grid, m.spectrum.energies)
        self.f = m.filter.table
        self.x = [proposal_amplitudes(m.spectrum, k) for k in m.kicks]
        b = m.spectrum.basis
        self.basis = b
        self.a_proj = [b.conj().T @ p @ b for p in m.a_projectors]
        self.t = 0
        self.restarts = 0
        self.init()

    # state -----------------------------------------------------------------
    def init(self):
        """Prepare |000>, run QPE and measure the energy register."""
        psi0 = self.basis.conj().T[:, 0]  # eigen-coordinates of |000>
        self._collapse_from(psi0)

    def _collapse_from(self, coeffs):
        amp = self.qpe.from_zero * coeffs[None, :]
        probs = np.sum(np.abs(amp) ** 2, axis=1)
        m = sample_index(probs, self.rng.uniform())
        row = amp[m]
        self.psi = row / np.sqrt(probs[m])
        self.bin = m

    def system_state(self) -> np.ndarray:
        """System state in the computational basis."""
        return self.basis @ self.psi

    # one Metropolis step --------------------------------------------------
    def step(self) -> StepOutcome:
        rng = self.rng
        c = self.model.policy.choose(self.t, rng)
        self.t += 1
        x = self.x[c]
        amp = self.qpe.from_zero * (x @ self.psi)[None, :]
        w = np.sum(np.abs(amp) ** 2, axis=1)
        f = self.f[:, self.bin]
        p_acc = float(f @ w)
        outcome = sample_index(np.array([1.0 - p_acc, p_acc]), rng.uniform())
        if outcome == 1:
            probs = f * w
            m = sample_index(probs, rng.uniform())
            self.psi = amp[m] / np.sqrt(w[m])
            self.bin = m
            return StepOutcome(True, m, 0)
        amp = amp * np.sqrt(1.0 - f)[:, None]
        amp /= np.sqrt(max(1.0 - p_acc, 1e-300))
        proposed = None
        g = row = None
        for it in range(1, self.cfg.max_reversal + 1):
            if it > 1 and self.cfg.reversal_kick == "fresh":
                x = self.x[self.model.policy.choose(self.t, rng)]
            if it > 1 and g is not None:
                amp = np.einsum("ajk,jk->aj", g, x * row[None, :])
            else:
                amp = self.qpe.forward(self.qpe.inverse(amp) @ x.T)
            probs = np.sum(np.abs(amp) ** 2, axis=1)
            m = sample_index(probs, rng.uniform())
            row = amp[m] / np.sqrt(probs[m])
            if m == self.bin:
                self.psi = row
                return StepOutcome(False, proposed, it)
            g = self.qpe.round_trip(m)
            if g is None:
                amp = np.zeros_like(amp)
                amp[m] = row
        self.restarts += 1
        self.init()
        return StepOutcome(False, proposed, self.cfg.max_reversal, restarted=True)

    def measure_a(self) -> float:
        """Projective measurement of A, then energy re-collapse."""
        probs = np.array([np.real(np.vdot(self.psi, p @ self.psi)) for p in self.a_proj])
        k = sample_index(probs, self.rng.uniform())
        post = self.a_proj[k] @ self.psi / np.sqrt(probs[k])
        self._collapse_from(post)
        return float(self.model.a_values[k])


class GateChain:
    """QMS chain on the dense statevector, one gate operation at a time."""

    def __init__(self, cfg: QmsConfig, rng: RandomStream, model: _Model | None = None):
        self.cfg = cfg
        self.rng = rng
        self.model = model or _Model(cfg)
        n_e = self.model.grid.n_qubits
        entries = [("acc", 1, "acceptance"), ("energy", n_e, "energy")]
        if cfg.variant == "double":
            entries.append(("energy_old", n_e, "energy"))
        entries.append(("system", 3, "system"))
        self.layout = RegisterLayout.from_entries(entries)
        self.old_register = "energy_old" if cfg.variant == "double" else "energy"
        self.t = 0
        self.restarts = 0
        self.init()

    def _qpe(self, register, direction):
        m = self.model
        qpe_energy(self.state, "system", register, m.grid, m.spectrum, direction)

    def init(self):
        self.state = new_state(self.layout)
        self._collapse_energy()

    def _collapse_energy(self):
        reg = self.old_register
        self._qpe(reg, "forward")
        m, _ = measure_register(self.state, reg, self.rng)
        self.bin = m
        if self.cfg.variant == "single":
            shift_register(self.state, reg, m)

    def system_state(self) -> np.ndarray:
        """System state; between steps every ancilla holds a known basis value."""
        t = self.state.tensor()
        idx = [0, 0] + ([self.bin] if self.cfg.variant == "double" else [])
        return t[tuple(idx)].copy()

    def _filter(self):
        lay = self.layout
        angles = self.model.filter.angles
        acc = lay["acc"].qubits
        e_q = lay["energy"].qubits
        n_bins = lay["energy"].dim
        for m in range(n_bins):
            if self.cfg.variant == "single":
                bits = [(m >> (len(e_q) - 1 - i)) & 1 for i in range(len(e_q))]
                apply_controlled(self.state, ry(angles[m, self.bin]), e_q, acc, bits, check=False)
            else:
                o_q = lay["energy_old"].qubits
                for o in range(n_bins):
                    bits = [(m >> (len(e_q) - 1 - i)) & 1 for i in range(len(e_q))]
                    bits += [(o >> (len(o_q) - 1 - i)) & 1 for i in range(len(o_q))]
                    apply_controlled(
                        self.state, ry(angles[m, o]), e_q + o_q, acc, bits, check=False
                    )

    def step(self) -> StepOutcome:
        rng = self.rng
        kicks = self.model.kicks
        c = self.model.policy.choose(self.t, rng)
        self.t += 1
        k = kicks[c]
        apply_register_unitary(self.state, k, "system", check=False)
        self._qpe("energy", "forward")
        self._filter()
        a, _ = measure_register(self.state, "acc", rng)
        if a == 1:
            m, _ = measure_register(self.state, "energy", rng)
            shift_register(self.state, "acc", 1)
            shift_register(self.state, "energy", m)
            if self.cfg.variant == "double":
                shift_register(self.state, "energy_old", self.bin ^ m)
            self.bin = m
            return StepOutcome(True, m, 0)
        for it in range(1, self.cfg.max_reversal + 1):
            if it > 1 and self.cfg.reversal_kick == "fresh":
                k = kicks[self.model.policy.choose(self.t, rng)]
            self._qpe("energy", "inverse")
            apply_register_unitary(self.state, k, "system", check=False)
            self._qpe("energy", "forward")
            m, _ = measure_register(self.state, "energy", rng)
            if m == self.bin:
                shift_register(self.state, "energy", m)
                return StepOutcome(False, None, it)
        self.restarts += 1
        self.init()
        return StepOutcome(False, None, self.cfg.max_reversal, restarted=True)

    def measure_a(self) -> float:
        k, _ = measure_with_projectors(self.state, "system", self.model.a_projectors, self.rng)
        if self.cfg.variant == "double":
            shift_register(self.state, "energy_old", self.bin)
        self._collapse_energy()
        return float(self.model.a_values[k])


def init_chain(cfg: QmsConfig, rng: RandomStream | None = None):
    """Chain prepared from |000> with a measured initial energy bin."""
    rng = rng or RandomStream(cfg.seed, cfg.stream)
    cls = FastChain if cfg.engine == "fast" else GateChain
    return cls(cfg, rng)


def run_qms(cfg: QmsConfig, rng: RandomStream | None = None) -> SampleSet:
    """Collect ``n_samples`` samples spaced by ``r`` chain steps."""
    chain = init_chain(cfg, rng)
    grid = chain.model.grid
    n = cfg.n_samples
    bins = np.empty(n, dtype=np.int64)
    a_vals = np.full(n, np.nan)
    accepted = np.zeros(n, dtype=np.int64)
    reversals = np.zeros(n, dtype=np.int64)
    states = np.empty((n, 8), dtype=complex)
    for i in range(n):
        acc = rev = 0
        for _ in range(cfg.r):
            out = chain.step()
            acc += out.accepted
            rev += out.reversal_iters
        states[i] = chain.system_state()
        bins[i] = chain.bin
        if cfg.measurement == "a":
            a_vals[i] = chain.measure_a()
        accepted[i] = acc
        reversals[i] = rev
    return SampleSet(
        algorithm="qms",
        beta=cfg.beta,
        grid=grid,
        energy_bins=bins,
        energy_values=grid.energy(bins),
        a_values=a_vals,
        accepted_steps=accepted,
        reversal_iters=reversals,
        states=states,
        restarts=chain.restarts,
    )
