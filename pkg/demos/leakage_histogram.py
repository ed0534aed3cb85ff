"""Energy-bin histogram on a coarse grid next to the phase-estimation leakage prediction."""
import numpy as np

from qta import QmsConfig, run_qms, spectrum, triangle_hamiltonian
from qta.harness import kernel_histogram

N_E, BETA, N = 4, 0.25, 5000
samples = run_qms(QmsConfig(beta=BETA, grid_mode="fixed", n_energy=N_E, r=10, n_samples=N, seed=3))
grid = samples.grid
counts = np.bincount(samples.energy_bins, minlength=grid.n_bins)
kernel = kernel_histogram(grid, spectrum(triangle_hamiltonian()), BETA)
print(f"{'bin':>3} {'energy':>8} {'sampled':>8} {'kernel':>8}")
for b in range(grid.n_bins):
    print(f"{b:3d} {grid.energy(b):8.3f} {counts[b] / N:8.4f} {kernel[b]:8.4f}")
print(f"total variation: {0.5 * np.abs(counts / N - kernel).sum():.4f}")
