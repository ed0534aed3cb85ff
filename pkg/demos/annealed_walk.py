"""Prepare the thermal purification by annealed walk projections and watch the bias shrink with more steps."""
from qta import QqmaConfig, gibbs_ensemble, run_qqma, sample_stats, spectrum, triangle_hamiltonian

BETA = 1.0
oracle = gibbs_ensemble(spectrum(triangle_hamiltonian()), BETA)
print(f"{'n_a':>4} {'d_trd':>10} {'err':>9} {'restarts':>8}")
for n_a in (2, 4, 8, 16):
    samples = run_qqma(QqmaConfig(beta=BETA, n_anneal=n_a, n_samples=100, seed=2))
    rep = sample_stats(samples, oracle)
    print(f"{n_a:4d} {rep.d_trd:10.2e} {rep.d_trd_err:9.1e} {samples.restarts:8d}")
