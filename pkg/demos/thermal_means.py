"""Sample the triangle at a few temperatures with the Metropolis chain and compare to exact means."""
from qta import QmsConfig, gibbs_ensemble, run_qms, sample_stats, spectrum, triangle_hamiltonian

N = 5000
sp = spectrum(triangle_hamiltonian())
print(f"{'beta':>5} {'<E> sampled':>18} {'<E> exact':>10}")
for beta in (0.25, 0.5, 1.0):
    samples = run_qms(QmsConfig(beta=beta, r=12, n_samples=N, seed=1))
    oracle = gibbs_ensemble(sp, beta)
    rep = sample_stats(samples, oracle)
    print(f"{beta:5.2f} {rep.e_mean:10.4f} +- {rep.e_err:.4f} {oracle.e_mean:10.4f}")
