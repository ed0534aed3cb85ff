"""Acceptance checks shared by ``qta verify`` and the acceptance tests.

Each check returns a :class:`CheckResult` holding the measured values, the
tolerance it was held to and whether it passed.  ``scale="full"`` uses the
sample sizes the criteria are stated at; ``scale="quick"`` is a smoke run
with far fewer samples whose statistical checks are not meaningful.
"""
from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .harness import list_presets, load_config, run_experiment
from .metrics import fit_weights, sample_stats, scaling_fit
from .qms import MetropolisFilter, QmsConfig, run_qms
from .qpe import build_grid, qpe_outcome_distribution
from .qqma import QqmaConfig, build_szegedy, make_grids, run_qqma
from .triangle import (
    closed_form_energy,
    eigenvalue_one_projector,
    gibbs_ensemble,
    kick_matrices,
    markov_chain_analysis,
    proposal_amplitudes,
    spectrum,
    szegedy_reference,
    triangle_hamiltonian,
)

SEED = 20240601


@dataclass
class CheckResult:
    check_id: str
    title: str
    passed: bool
    values: dict = field(default_factory=dict)
    tolerance: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        shown = ", ".join(f"{k}={_short(v)}" for k, v in self.values.items())
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.check_id} {self.title}: {shown} (tolerance: {self.tolerance}; {self.seconds:.1f}s)"

    def as_dict(self) -> dict:
        return {
            "id": self.check_id,
            "title": self.title,
            "passed": bool(self.passed),
            "values": _jsonable(self.values),
            "tolerance": self.tolerance,
            "seconds": self.seconds,
        }


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return None if math.isnan(v) else float(v)
    return v


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _spectrum():
    return spectrum(triangle_hamiltonian())


# individual checks -------------------------------------------------------------

@_timed
def check_stationarity(filter_sign: int = 1) -> CheckResult:
    """Gibbs weights are left-invariant under the filtered kick chain (exact grid)."""
    s = _spectrum()
    grid = build_grid("exact", 1, 0.0, s)
    bins = np.array([grid.nearest_bin(e) for e in s.energies])
    worst = 0.0
    for beta in (0.25, 0.5, 1.0):
        filt = MetropolisFilter(beta, grid, filter_sign)
        f = filt.table[bins[:, None], bins[None, :]]  # f[new, old]
        pi = gibbs_ensemble(s, beta).state_weights
        for kick in kick_matrices():
            p = np.abs(proposal_amplitudes(s, kick)) ** 2 * f
            t = p + np.diag(1.0 - p.sum(axis=0))  # column-stochastic, t[new, old]
            worst = max(worst, float(np.abs(t @ pi - pi).max()))
    return CheckResult("stationarity", "Gibbs weights fixed by the filtered chain",
                       worst < 1e-12, {"max_residual": worst}, "< 1e-12")


@_timed
def check_exact_means(scale: str = "full", betas=(0.25, 0.5, 1.0)) -> CheckResult:
    """QMS energy-only sampling on the exact grid reproduces the thermal mean energy."""
    n = 100_000 if scale == "full" else 5_000
    s = _spectrum()
    rows, ok = {}, True
    for i, beta in enumerate(betas):
        t0 = time.perf_counter()
        cfg = QmsConfig(beta=beta, r=12, n_samples=n, seed=SEED, stream=100 + i)
        ss = run_qms(cfg)
        elapsed = time.perf_counter() - t0
        ens = gibbs_ensemble(s, beta)
        rep = sample_stats(ss, ens)
        p0, p1 = ens.level_probs
        sigma = max(rep.e_err, 4.0 * math.sqrt(p0 * p1 / n))
        exact = closed_form_energy(beta)
        z = abs(rep.e_mean - exact) / sigma
        good = z < 4.0 and elapsed < 300.0
        ok &= good
        rows[f"beta={beta}"] = [rep.e_mean, exact, z, elapsed]
    return CheckResult("c1", "exact-grid QMS thermal energy [mean, exact, |z|, seconds]", ok, rows,
                       "|z| < 4 and < 300 s per beta")


def qms_decay(beta: float = 1.0, rs=(2, 4, 6, 8, 10), n: int = 100_000, policy: str = "random"):
    s = _spectrum()
    ens = gibbs_ensemble(s, beta)
    ds, errs = [], []
    for i, r in enumerate(rs):
        cfg = QmsConfig(beta=beta, r=r, n_samples=n, measurement="a", kick_policy=policy,
                        seed=SEED, stream=200 + i)
        rep = sample_stats(run_qms(cfg), ens)
        ds.append(rep.d_trd)
        errs.append(rep.d_trd_err)
    fit = scaling_fit(rs, ds, "exponential", errs)
    rate = markov_chain_analysis(s, policy, beta).decay_rate
    return ds, errs, fit, rate


@_timed
def check_qms_decay(scale: str = "full") -> CheckResult:
    """d_TrD decays exponentially in r at the rate set by the second chain eigenvalue."""
    n = 100_000 if scale == "full" else 5_000
    ds, errs, fit, rate = qms_decay(n=n)
    z = abs(-fit.slope - rate) / fit.slope_err
    ok = fit.slope < 0 and fit.chi2_red < 3.0 and z < 3.0
    return CheckResult(
        "c2", "QMS exponential decay of d_TrD in r", ok,
        {"d_trd": ds, "d_trd_err": errs, "fitted_rate": -fit.slope, "rate_err": fit.slope_err,
         "chi2_red": fit.chi2_red, "minus_log_lambda2": rate, "z": z},
        "slope < 0, chi2_red < 3, |rate + log lambda2| < 3 sigma",
    )


def qqma_scan(n_as=(8, 16, 32, 64), n: int = 2000, policy: str = "random", beta: float = 1.0,
              stream0: int = 300):
    ens = gibbs_ensemble(_spectrum(), beta)
    out = []
    for i, na in enumerate(n_as):
        cfg = QqmaConfig(beta=beta, n_anneal=na, n_w=3, kick_policy=policy, n_samples=n,
                         seed=SEED, stream=stream0 + i)
        ss = run_qqma(cfg)
        rep = sample_stats(ss, ens)
        out.append((na, rep.d_trd, rep.d_trd_err, ss.failures))
    return out


@_timed
def check_qqma_scaling(scale: str = "full", policy: str = "random") -> CheckResult:
    """d_TrD of the annealed walk sampler falls like a power of n_a with exponent near -1."""
    n = 2000 if scale == "full" else 200
    t0 = time.perf_counter()
    scan = qqma_scan(n=n, policy=policy)
    elapsed = time.perf_counter() - t0
    ds = [d for _, d, _, _ in scan]
    errs = [e for _, _, e, _ in scan]
    fit = scaling_fit([na for na, *_ in scan], ds, "power", fit_weights(errs))
    ok = -1.3 <= fit.slope <= -0.7 and elapsed < 1800.0
    return CheckResult(
        "c3", f"walk-sampler power law in n_a ({policy} kicks)", ok,
        {"d_trd": ds, "d_trd_err": errs, "exponent": fit.slope, "exponent_err": fit.slope_err,
         "seconds_total": elapsed},
        "exponent in [-1.3, -0.7], < 1800 s",
    )


@_timed
def check_ergodicity(scale: str = "full") -> CheckResult:
    """A single fixed kick stalls the annealed sampler; alternating kicks do not."""
    n = 2000 if scale == "full" else 200
    n_fixed = 400 if scale == "full" else 100
    ens = gibbs_ensemble(_spectrum(), 1.0)
    fixed = {}
    for i, na in enumerate((16, 64)):
        cfg = QqmaConfig(beta=1.0, n_anneal=na, n_w=3, kick_policy="fixed0", n_samples=n_fixed,
                         seed=SEED, stream=400 + i)
        rep = sample_stats(run_qqma(cfg), ens)
        fixed[na] = (rep.d_trd, rep.d_trd_err)
    alt = {na: (d, e) for na, d, e, _ in qqma_scan(n_as=(8, 16, 32, 64), n=n, policy="random",
                                                   stream0=450)}
    alt_fit = scaling_fit(list(alt), [v[0] for v in alt.values()], "power",
                          fit_weights([v[1] for v in alt.values()]))
    above = all(fixed[na][0] > 5 * alt[na][0] for na in (16, 64))
    diff = abs(fixed[16][0] - fixed[64][0])
    sigma = math.hypot(fixed[16][1], fixed[64][1])
    compatible = diff <= 2.0 * sigma
    alt_ok = -1.3 <= alt_fit.slope <= -0.7
    return CheckResult(
        "c4", "fixed-kick plateau versus alternated kicks", above and compatible and alt_ok,
        {"fixed_d_trd_16": list(fixed[16]), "fixed_d_trd_64": list(fixed[64]),
         "alternated_d_trd_16": list(alt[16]), "alternated_d_trd_64": list(alt[64]),
         "above_5x": above, "plateau_diff": diff, "plateau_sigma": sigma,
         "plateau_compatible": compatible, "alternated_exponent": alt_fit.slope},
        "fixed > 5x alternated at n_a = 16, 64; |d16 - d64| <= 2 sigma; alternated exponent in [-1.3, -0.7]",
    )


def _delta0_block(p: np.ndarray, n_delta: int = 2) -> np.ndarray:
    """Rows and columns of a walk-layout operator with the delta register at zero."""
    stride = (1 << n_delta) * 64
    idx = np.concatenate([np.arange(64), stride + np.arange(64)])
    return p[np.ix_(idx, idx)]


def common_fixed_space(mats, tol: float = 1e-6) -> np.ndarray:
    """Orthonormal basis of the vectors fixed by every matrix in ``mats``."""
    d = mats[0].shape[0]
    stacked = np.vstack([m - np.eye(d) for m in mats])
    _, sv, vh = np.linalg.svd(stacked)
    sv = np.r_[sv, np.zeros(vh.shape[0] - sv.size)]
    return vh[sv < tol].conj().T


@_timed
def check_walk_contract() -> CheckResult:
    """Walk unitarity, CETS fixed point, reference-walk agreement and the joint fixed space."""
    grids = make_grids()
    s = grids.spectrum
    kicks = kick_matrices()
    worst_u = worst_fix = worst_proj = 0.0
    dims = {}
    for beta in (0.0, 0.25, 0.5, 1.0):
        mats = []
        for k in range(3):
            prog = build_szegedy(beta, k, grids, check=False)
            mats.append(prog.matrix)
            worst_u = max(worst_u, prog.unitarity_defect)
            worst_fix = max(worst_fix, prog.fixed_point_residual)
            ref = szegedy_reference(s, kicks[k], beta)
            gate_p = _delta0_block(eigenvalue_one_projector(prog.matrix))
            worst_proj = max(worst_proj, float(np.abs(gate_p - ref.eig1_projector).max()))
        basis = common_fixed_space(mats)
        cets = build_szegedy(beta, 0, grids, check=False).cets_embedded()
        overlap = float(np.linalg.norm(basis.conj().T @ cets)) if basis.size else 0.0
        dims[f"beta={beta}"] = [basis.shape[1], overlap]
    one_dim = all(v[0] == 1 and abs(v[1] - 1.0) < 1e-6 for v in dims.values())
    ok = worst_u < 1e-10 and worst_fix < 1e-8 and worst_proj < 1e-6 and one_dim
    values = {"unitarity_defect": worst_u, "cets_residual": worst_fix,
              "projector_max_diff": worst_proj}
    values.update({f"joint_fixed_dim_and_cets_overlap[{k}]": v for k, v in dims.items()})
    return CheckResult("c5", "walk contract and reference cross-check", ok, values,
                       "defect < 1e-10, residual < 1e-8, projector diff < 1e-6, joint fixed space = span(CETS)")


@_timed
def check_inexact_plateau(scale: str = "full") -> CheckResult:
    """Fixed-extrema grids: E plateaus in r and d_Ene is non-monotone in n_e, small at n_e = 9."""
    n = 20_000 if scale == "full" else 1_000
    s = _spectrum()
    ens = gibbs_ensemble(s, 0.25)
    rs = (8, 10, 12, 14)
    means, errs = [], []
    for i, r in enumerate(rs):
        cfg = QmsConfig(beta=0.25, grid_mode="fixed", n_energy=4, margin=0.1, r=r, n_samples=n,
                        seed=SEED, stream=500 + i)
        rep = sample_stats(run_qms(cfg), ens)
        means.append(rep.e_mean)
        errs.append(rep.e_err)
    w = 1.0 / np.square(errs)
    x = np.array(rs, float)
    xm = (w * x).sum() / w.sum()
    slope = float((w * (x - xm) * np.array(means)).sum() / (w * (x - xm) ** 2).sum())
    slope_err = float(1.0 / np.sqrt((w * (x - xm) ** 2).sum()))
    plateau = abs(slope) <= 2.0 * slope_err
    d_ene, d_err = [], []
    n_es = tuple(range(2, 10))
    for ne in n_es:
        cfg = QmsConfig(beta=0.25, grid_mode="fixed", n_energy=ne, margin=0.1, r=10, n_samples=n,
                        seed=SEED, stream=520 + ne)
        rep = sample_stats(run_qms(cfg), ens)
        d_ene.append(rep.d_ene)
        d_err.append(rep.d_ene_err)
    steps = np.diff(d_ene)
    step_sig = 2.0 * np.hypot(d_err[:-1], d_err[1:])
    non_monotone = bool(np.any(steps > step_sig) and np.any(steps < -step_sig))
    last_small = d_ene[-1] < 0.02
    return CheckResult(
        "c6", "inexact-grid plateau and large-n_e convergence", plateau and non_monotone and last_small,
        {"e_mean_r8_14": means, "slope": slope, "slope_err": slope_err, "d_ene_ne2_9": d_ene,
         "d_ene_err": d_err, "non_monotone": non_monotone, "d_ene_ne9": d_ene[-1]},
        "|slope| <= 2 sigma; significant rise and fall in d_Ene; d_Ene(n_e = 9) < 0.02",
    )


@_timed
def check_histograms(scale: str = "full", n_es=(4, 6, 8)) -> CheckResult:
    """Energy-bin histograms follow the leakage kernel mixed with Gibbs weights."""
    n = 100_000 if scale == "full" else 5_000
    s = _spectrum()
    beta = 0.25
    ens = gibbs_ensemble(s, beta)
    rows, ok = {}, True
    for ne in n_es:
        cfg = QmsConfig(beta=beta, grid_mode="fixed", n_energy=ne, margin=0.1, r=10, n_samples=n,
                        seed=SEED, stream=600 + ne)
        ss = run_qms(cfg)
        grid = ss.grid
        hist = np.bincount(ss.energy_bins, minlength=grid.n_bins) / len(ss)
        kernel = np.zeros(grid.n_bins)
        for p, e in zip(ens.level_probs, s.level_energies):
            kernel += p * qpe_outcome_distribution(float(grid.phase(e)), ne)
        top2 = sorted(np.argsort(hist)[-2:].tolist())
        want = sorted([grid.nearest_bin(-1.0), grid.nearest_bin(3.0)])
        # reported only: whether the analytic kernel itself has these two dominant bins
        kernel_top2 = sorted(np.argsort(kernel)[-2:].tolist())
        tv = 0.5 * float(np.abs(hist - kernel).sum())
        good = top2 == want and tv < 0.02
        ok &= good
        rows[f"n_e={ne}"] = [tv, top2 == want, kernel_top2 == want, ss.restarts]
    return CheckResult("c7", "energy histograms against the leakage kernel "
                       "[TV, top bins, kernel top bins, restarts]",
                       ok, rows, "two dominant bins nearest -J and 3J; TV < 0.02")


@_timed
def check_beta_zero(scale: str = "full") -> CheckResult:
    """At beta = 0 both samplers hit the ground level with frequency 3/4."""
    n_qms = 20_000 if scale == "full" else 2_000
    n_qqma = 4_000 if scale == "full" else 400
    ss = run_qms(QmsConfig(beta=0.0, r=1, n_samples=n_qms, seed=SEED, stream=700))
    f_qms = float(np.mean(ss.energy_bins == 0))
    acc_qms = float(ss.accepted_steps.sum() / (n_qms * 1))
    sq = run_qqma(QqmaConfig(beta=0.0, n_anneal=4, n_samples=n_qqma, seed=SEED, stream=701))
    f_qqma = float(np.mean(sq.energy_bins == 0))
    tries = sq.extra["step_tries"]
    acc_qqma = float(sq.extra["step_accepts"].sum() / tries.sum())
    # acceptance probability of each step from the walk itself
    p_step = _beta0_step_probability()

    def z(f, n):
        return abs(f - 0.75) / math.sqrt(0.75 * 0.25 / n)

    z_qms, z_qqma = z(f_qms, n_qms), z(f_qqma, len(sq))
    ok = z_qms < 3 and z_qqma < 3 and acc_qms == 1.0 and acc_qqma == 1.0 and abs(p_step - 1) < 1e-12
    return CheckResult(
        "c8", "beta = 0 ground-level frequency and walk acceptance", ok,
        {"qms_freq": f_qms, "qms_z": z_qms, "qms_accept_rate": acc_qms, "qqma_freq": f_qqma,
         "qqma_z": z_qqma, "qqma_step_accept_rate": acc_qqma, "qqma_step_probability": p_step},
        "|z| < 3; acceptance = 1 within 1e-12",
    )


def _beta0_step_probability() -> float:
    from .qqma import QqmaRunner

    runner = QqmaRunner(QqmaConfig(beta=0.0, n_anneal=1, seed=SEED))
    worst = 1.0
    for k in range(3):
        amp = runner.cache.projection_map(0.0, k) @ runner._cets0
        worst = min(worst, float(np.vdot(amp[:64], amp[:64]).real))  # w, acc, delta all zero
    return worst


@_timed
def check_determinism(scale: str = "full") -> CheckResult:
    """Presets re-run with the same seed give identical CSVs, for one and four workers."""
    overrides = {"n_samples": "40" if scale == "full" else "8", "max_samples": "80"}
    names, same_seed, workers_match = [], True, True
    with tempfile.TemporaryDirectory() as tmp:
        for path in list_presets():
            cfg = load_config(path, dict(overrides, values=_first_two(path)), env={})
            outs = []
            for tag, workers in (("a", 1), ("b", 1), ("c", 4)):
                out = Path(tmp) / f"{path.stem}_{tag}"
                run_experiment(cfg, out, workers=workers)
                outs.append(out)
            names.append(path.stem)
            for csv_name in ("samples.csv", "metrics.csv", "histogram.csv"):
                a, b, c = (o / csv_name for o in outs)
                if not a.exists():
                    continue
                same_seed &= filecmp.cmp(a, b, shallow=False)
                workers_match &= filecmp.cmp(a, c, shallow=False)
    return CheckResult("c9", "byte-identical reruns and worker independence", same_seed and workers_match,
                       {"presets": names, "rerun_identical": same_seed, "workers_1_vs_4_identical": workers_match},
                       "identical CSV bodies")


def _first_two(path: Path) -> str:
    cfg = load_config(path, env={})
    return ",".join(str(v) for v in cfg.values[:2])


CHECKS = {
    "stationarity": lambda scale, sign: check_stationarity(sign),
    "c1": lambda scale, sign: check_exact_means(scale),
    "c2": lambda scale, sign: check_qms_decay(scale),
    "c3": lambda scale, sign: check_qqma_scaling(scale),
    "c4": lambda scale, sign: check_ergodicity(scale),
    "c5": lambda scale, sign: check_walk_contract(),
    "c6": lambda scale, sign: check_inexact_plateau(scale),
    "c7": lambda scale, sign: check_histograms(scale),
    "c8": lambda scale, sign: check_beta_zero(scale),
    "c9": lambda scale, sign: check_determinism(scale),
}


def run_checks(scale: str = "full", filter_sign: int = 1, only=None, on_result=None) -> list[CheckResult]:
    """Run the selected checks in order; ``on_result`` sees each result as it finishes."""
    ids = only or list(CHECKS)
    unknown = [i for i in ids if i not in CHECKS]
    if unknown:
        raise ConfigurationError(f"unknown check ids {unknown}; known: {sorted(CHECKS)}")
    results = []
    for i in ids:
        results.append(CHECKS[i](scale, filter_sign))
        if on_result is not None:
            on_result(results[-1])
    return results

