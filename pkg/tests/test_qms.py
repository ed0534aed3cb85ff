import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2_contingency

from qta.errors import ConfigurationError
from qta.metrics import mean_and_error
from qta.qms import FastChain, MetropolisFilter, QmsConfig, init_chain, run_qms
from qta.qpe import build_grid
from qta.rng import RandomStream
from qta.triangle import gibbs_ensemble, kick_matrices, spectrum, triangle_hamiltonian


@pytest.fixture(scope="module")
def sp():
    return spectrum(triangle_hamiltonian())


@given(st.floats(0.0, 3.0), st.integers(1, 6))
@settings(max_examples=40, deadline=None)
def test_filter_detailed_balance(beta, n_e):
    s = spectrum(triangle_hamiltonian())
    grid = build_grid("fixed", n_e, 0.1, s)
    f = MetropolisFilter(beta, grid).table
    e = grid.bins
    assert f.min() >= 0 and f.max() <= 1
    lhs = f * np.exp(-beta * e)[None, :]  # f(new <- old) e^{-beta E_old}
    np.testing.assert_allclose(lhs, lhs.T, atol=1e-12)
    d = e[:, None] - e[None, :]
    assert np.all(f[d <= 0] == 1.0)


def test_filter_angles():
    s = spectrum(triangle_hamiltonian())
    filt = MetropolisFilter(0.5, build_grid("exact", 1, 0.0, s))
    np.testing.assert_allclose(np.sin(filt.angles / 2) ** 2, filt.table, atol=1e-14)


@pytest.mark.parametrize("kw", [dict(r=0), dict(n_samples=0), dict(beta=-1.0), dict(measurement="x"),
                                dict(variant="double"), dict(engine="warp"), dict(max_reversal=0)])
def test_config_validation(kw):
    base = dict(beta=1.0)
    base.update(kw)
    with pytest.raises(ConfigurationError):
        QmsConfig(**base)


def _chain_at(sp, signs_index, beta):
    chain = FastChain(QmsConfig(beta=beta, kick_policy="fixed(0)"), RandomStream(0))
    psi = np.zeros(8, dtype=complex)
    psi[signs_index] = 1.0
    chain.psi = psi
    chain.bin = 0 if sp.energies[signs_index] < 0 else 1
    return chain


def _accept_split(chain):
    x = chain.x[0]
    amp = chain.qpe.from_zero * (x @ chain.psi)[None, :]
    w = np.sum(np.abs(amp) ** 2, axis=1)
    return chain.f[:, chain.bin] * w


def test_proposal_to_excited_and_accept(sp):
    # eigenstate index 1 is |++->, energy -1
    chain = _chain_at(sp, 1, 0.25)
    p = _accept_split(chain)
    assert abs(p[1] - 0.5 * np.exp(-1.0)) < 1e-12
    assert abs(0.5 * np.exp(-1.0) - 0.18394) < 1e-5


def test_proposal_within_ground_level(sp):
    # eigenstate index 2 is |+-+>
    chain = _chain_at(sp, 2, 0.25)
    p = _accept_split(chain)
    assert abs(p.sum() - 1.0) < 1e-12 and abs(p[0] - 1.0) < 1e-12


@pytest.mark.parametrize("engine", ["fast", "gate"])
def test_beta_zero_always_accepts(engine):
    ss = run_qms(QmsConfig(beta=0.0, r=3, n_samples=200 if engine == "fast" else 30, engine=engine, seed=4))
    assert np.all(ss.accepted_steps == 3)
    assert np.all(ss.reversal_iters == 0)


def test_initial_sector_frequency():
    n = 4000
    hits = 0
    for i in range(n):
        chain = init_chain(QmsConfig(beta=1.0, seed=9, stream=i))
        hits += chain.bin == 0
    assert abs(hits / n - 0.75) < 3 * np.sqrt(0.75 * 0.25 / n)


def test_initial_bin_has_leakage_support(sp):
    grid = build_grid("fixed", 6, 0.1, sp)
    from qta.qpe import qpe_outcome_distribution

    support = (qpe_outcome_distribution(float(grid.phase(-1.0)), 6)
               + qpe_outcome_distribution(float(grid.phase(3.0)), 6)) > 0
    for i in range(50):
        chain = init_chain(QmsConfig(beta=0.25, grid_mode="fixed", n_energy=6, seed=1, stream=i))
        assert support[chain.bin]


@pytest.mark.parametrize("grid_mode,n_e", [("exact", 1), ("fixed", 2), ("fixed", 3)])
@pytest.mark.parametrize("reversal_kick", ["same", "fresh"])
def test_fast_and_gate_engines_agree(grid_mode, n_e, reversal_kick):
    base = QmsConfig(beta=0.5, grid_mode=grid_mode, n_energy=n_e, r=2, n_samples=25, seed=31,
                     measurement="a", reversal_kick=reversal_kick)
    fast = run_qms(base)
    gate = run_qms(base.with_(engine="gate"))
    np.testing.assert_array_equal(fast.energy_bins, gate.energy_bins)
    np.testing.assert_array_equal(fast.a_values, gate.a_values)
    np.testing.assert_array_equal(fast.reversal_iters, gate.reversal_iters)
    np.testing.assert_allclose(fast.density(), gate.density(), atol=1e-9)


def test_double_register_agrees_draw_for_draw():
    base = QmsConfig(beta=1.0, grid_mode="fixed", n_energy=2, r=2, n_samples=20, seed=5, engine="gate")
    single = run_qms(base)
    double = run_qms(base.with_(variant="double"))
    np.testing.assert_array_equal(single.energy_bins, double.energy_bins)


def test_single_and_double_registers_same_distribution():
    base = QmsConfig(beta=1.0, r=1, n_samples=3000, engine="gate")
    a = run_qms(base.with_(seed=100))
    b = run_qms(base.with_(seed=200, variant="double"))
    table = [np.bincount(a.energy_bins, minlength=2), np.bincount(b.energy_bins, minlength=2)]
    assert chi2_contingency(table).pvalue > 0.01


def test_chain_state_stays_in_measured_level(sp):
    chain = init_chain(QmsConfig(beta=0.5, seed=12))
    for _ in range(200):
        chain.step()
        psi = chain.system_state()
        level = sp.energies[np.abs(sp.basis.conj().T @ psi) > 1e-9]
        assert np.allclose(level, level[0])
        assert (level[0] < 0) == (chain.bin == 0)


def test_gate_chain_probe_qpe_repeats_bin():
    from qta.qpe import qpe_energy
    from qta.statevec import register_marginal

    chain = init_chain(QmsConfig(beta=0.5, seed=8, engine="gate"))
    for _ in range(20):
        chain.step()
        probe = chain.state.copy()
        qpe_energy(probe, "system", "energy", chain.model.grid, chain.model.spectrum)
        assert register_marginal(probe, "energy")[chain.bin] > 1 - 1e-10


def test_a_measurement_idempotent():
    chain = init_chain(QmsConfig(beta=1.0, seed=3))
    for _ in range(50):
        chain.step()
        psi = chain.psi
        probs = np.array([np.real(np.vdot(psi, p @ psi)) for p in chain.a_proj])
        k = int(np.argmax(probs > 1e-9))
        post = chain.a_proj[k] @ psi
        post /= np.linalg.norm(post)
        again = np.array([np.real(np.vdot(post, p @ post)) for p in chain.a_proj])
        assert abs(again[k] - 1.0) < 1e-12


def test_a_values_in_spectrum():
    ss = run_qms(QmsConfig(beta=1.0, r=2, n_samples=300, measurement="a", seed=1))
    assert set(np.unique(ss.a_values)) <= {-2.0, 0.0, 2.0}


def test_determinism():
    cfg = QmsConfig(beta=0.5, r=3, n_samples=300, measurement="a", seed=77, stream=3)
    a, b = run_qms(cfg), run_qms(cfg)
    np.testing.assert_array_equal(a.energy_bins, b.energy_bins)
    np.testing.assert_array_equal(a.a_values, b.a_values)
    np.testing.assert_array_equal(a.states, b.states)


def test_snapshots_are_valid_states():
    ss = run_qms(QmsConfig(beta=0.5, r=2, n_samples=100, measurement="a", seed=2))
    assert len(ss) == 100
    np.testing.assert_allclose(np.linalg.norm(ss.states, axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("beta", [0.25, 0.5, 1.0])
def test_stationary_sector_frequencies(sp, beta):
    n = 100_000
    ss = run_qms(QmsConfig(beta=beta, r=1, n_samples=n, seed=2024, stream=int(beta * 100)))
    freq, err = mean_and_error((ss.energy_bins == 0).astype(float))
    p0 = gibbs_ensemble(sp, beta).level_probs[0]
    binomial = np.sqrt(p0 * (1 - p0) / n)
    assert abs(freq - p0) < 4 * max(err, binomial)


def test_observable_a_mean_at_beta_one():
    n = 20_000
    ss = run_qms(QmsConfig(beta=1.0, r=20, n_samples=n, measurement="a", seed=5))
    mean, err = mean_and_error(ss.a_values)
    assert abs(mean - (-0.32524)) < 4 * err


def test_restart_after_reversal_cap():
    cfg = QmsConfig(beta=0.25, grid_mode="fixed", n_energy=4, r=5, n_samples=200, max_reversal=1, seed=3)
    ss = run_qms(cfg)
    assert ss.restarts > 0
    assert len(ss) == 200


def test_kick_matrices_unchanged_by_chain():
    before = [k.copy() for k in kick_matrices()]
    run_qms(QmsConfig(beta=1.0, r=2, n_samples=10))
    for a, b in zip(before, kick_matrices()):
        np.testing.assert_array_equal(a, b)
