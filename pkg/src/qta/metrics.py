"""Bias metrics, blocked jackknife errors and scaling fits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .triangle import GibbsEnsemble, observable_a, spectrum, triangle_hamiltonian

N_BLOCKS = 50


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the trace norm of ``a - b`` for Hermitian matrices."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"density matrices of shapes {a.shape} and {b.shape}")
    d = a - b
    d = 0.5 * (d + d.conj().T)
    return float(0.5 * np.abs(np.linalg.eigvalsh(d)).sum())


def _blocks(n: int, n_blocks: int) -> list[np.ndarray]:
    return np.array_split(np.arange(n), min(n_blocks, n))


def jackknife(block_sums: np.ndarray, block_counts: np.ndarray, estimator) -> tuple[float, float]:
    """Blocked jackknife of ``estimator(mean)`` from per-block sums.

    ``block_sums`` has the block index first; the estimator receives the
    leave-one-block-out mean of whatever the sums are (scalars or matrices).
    """
    total = block_sums.sum(axis=0)
    n = block_counts.sum()
    central = estimator(total / n)
    nb = len(block_counts)
    if nb < 2:
        return float(central), float("nan")
    loo = np.array(
        [estimator((total - block_sums[b]) / (n - block_counts[b])) for b in range(nb)]
    )
    err = np.sqrt((nb - 1) / nb * np.sum((loo - loo.mean()) ** 2))
    return float(central), float(err)


def mean_and_error(values: np.ndarray, n_blocks: int = N_BLOCKS) -> tuple[float, float]:
    values = np.asarray(values, float)
    if values.size == 0:
        raise DomainError("no samples")
    idx = _blocks(values.size, n_blocks)
    sums = np.array([values[i].sum() for i in idx])
    counts = np.array([i.size for i in idx])
    return jackknife(sums, counts, lambda m: m)


@dataclass
class MetricsReport:
    n_samples: int
    e_mean: float
    e_err: float
    a_mean: float
    a_err: float
    rho_mean: np.ndarray
    d_ene: float
    d_ene_err: float
    d_aop: float
    d_aop_err: float
    d_trd: float
    d_trd_err: float

    def row(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "e_mean": self.e_mean,
            "e_err": self.e_err,
            "a_mean": self.a_mean,
            "a_err": self.a_err,
            "d_ene": self.d_ene,
            "d_ene_err": self.d_ene_err,
            "d_aop": self.d_aop,
            "d_aop_err": self.d_aop_err,
            "d_trd": self.d_trd,
            "d_trd_err": self.d_trd_err,
        }


def sample_stats(samples, oracle: GibbsEnsemble, n_blocks: int = N_BLOCKS) -> MetricsReport:
    """Means, biases and trace distance of a sample set against the exact ensemble.

    Energies come from ``samples.e_estimates`` when present (per-run exact
    expectation values) and from the sampled bin energies otherwise.
    """
    n = len(samples)
    if n == 0:
        raise DomainError("empty sample set")
    e_vals = samples.e_estimates if samples.e_estimates is not None else samples.energy_values
    e_mean, e_err = mean_and_error(e_vals, n_blocks)
    a_vals = np.asarray(samples.a_values, float)
    if np.all(np.isnan(a_vals)):
        a_mean = a_err = d_aop = d_aop_err = float("nan")
    else:
        a_mean, a_err = mean_and_error(a_vals[~np.isnan(a_vals)], n_blocks)
        d_aop, d_aop_err = abs(a_mean - oracle.a_mean), a_err
    idx = _blocks(n, n_blocks)
    sums = np.array([samples.density(i) for i in idx])
    counts = np.array([i.size for i in idx])
    d_trd, d_trd_err = jackknife(sums, counts, lambda r: trace_distance(r, oracle.rho))
    return MetricsReport(
        n_samples=n,
        e_mean=e_mean,
        e_err=e_err,
        a_mean=a_mean,
        a_err=a_err,
        rho_mean=sums.sum(axis=0) / n,
        d_ene=abs(e_mean - oracle.e_mean),
        d_ene_err=e_err,
        d_aop=d_aop,
        d_aop_err=d_aop_err,
        d_trd=d_trd,
        d_trd_err=d_trd_err,
    )


def sector_trace_distance(frequencies, oracle: GibbsEnsemble) -> float:
    """Trace distance when the sampled state is uniform inside each energy level."""
    f = np.asarray(frequencies, float)
    return float(0.5 * np.abs(f - oracle.level_probs).sum())


def sector_density(frequencies, s=None) -> np.ndarray:
    """Density matrix that spreads each level's frequency evenly over the level."""
    s = s or spectrum(triangle_hamiltonian())
    projs = s.projectors()
    return sum(f * p / np.real(np.trace(p)) for f, p in zip(frequencies, projs))


@dataclass(frozen=True)
class FitResult:
    model: str
    slope: float
    intercept: float
    slope_err: float  # delete-one-point jackknife
    slope_err_ls: float  # weighted least squares covariance
    chi2_red: float
    n_points: int


def _wls(x, y, w):
    sw = w.sum()
    xm, ym = (w * x).sum() / sw, (w * y).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    return slope, ym - slope * xm, sxx


def scaling_fit(xs, ds, model: str = "exponential", errs=None) -> FitResult:
    """Straight-line fit of ``log d`` against ``x`` (exponential) or ``log x`` (power).

    ``errs`` are standard errors of ``d``; they weight the fit and enter the
    reduced chi-square.  Without them all points weigh the same and the
    chi-square uses the residual scatter.
    """
    xs = np.asarray(xs, float)
    ds = np.asarray(ds, float)
    if xs.size < 3 or xs.size != ds.size:
        raise DomainError("a scaling fit needs at least three matching points")
    if np.any(ds <= 0):
        raise DomainError("non-positive value in a logarithmic fit")
    if model not in ("exponential", "power"):
        raise DomainError(f"unknown model {model!r}")
    x = xs if model == "exponential" else np.log(xs)
    y = np.log(ds)
    if errs is None:
        sig = np.ones_like(y)
    else:
        sig = np.asarray(errs, float) / ds
        if np.any(sig <= 0):
            raise DomainError("errors must be positive")
    w = 1.0 / sig**2
    slope, icpt, sxx = _wls(x, y, w)
    resid = y - (slope * x + icpt)
    dof = x.size - 2
    chi2 = float((w * resid**2).sum() / dof) if dof > 0 else float("nan")
    if errs is None:
        ls_err = float(np.sqrt(chi2 / sxx)) if dof > 0 else float("nan")
    else:
        ls_err = float(np.sqrt(1.0 / sxx))
    loo = []
    for i in range(x.size):
        keep = np.arange(x.size) != i
        loo.append(_wls(x[keep], y[keep], w[keep])[0])
    loo = np.array(loo)
    n = x.size
    jk = float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))
    return FitResult(model, float(slope), float(icpt), jk, ls_err, chi2, int(n))


def fit_weights(errs):
    """``errs`` if every point has a positive error, else ``None`` (unweighted fit).

    Deterministic kick sequences give identical snapshots and a zero jackknife
    error; such points are exact and carry no weight information.
    """
    errs = np.asarray(errs, float)
    return errs if np.all(errs > 0) else None


def observable_mean(rho: np.ndarray) -> tuple[float, float]:
    """``(Tr rho H, Tr rho A)`` for the triangle at J = 1."""
    h = triangle_hamiltonian().matrix
    a = observable_a().matrix
    return float(np.real(np.trace(rho @ h))), float(np.real(np.trace(rho @ a)))
