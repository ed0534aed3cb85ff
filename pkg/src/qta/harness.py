"""Sweep runner: configuration files, replica fan-out and CSV/JSON output."""
from __future__ import annotations

import csv
import io
import json
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, QtaError
from .metrics import fit_weights, sample_stats, scaling_fit
from .qms import QmsConfig, SampleSet, run_qms
from .qpe import GridMode, qpe_outcome_distribution
from .qqma import QqmaConfig, run_qqma
from .rng import RandomStream
from .triangle import KickPolicy, gibbs_ensemble, spectrum, triangle_hamiltonian

SWEEP_AXES = {"r": "r", "n_a": "n_anneal", "n_e": "n_energy"}
REPLICA_STRIDE = 1 << 20
PRESET_DIR = Path(__file__).with_name("presets")

SAMPLE_COLUMNS = [
    "run_id", "algorithm", "beta", "sweep_name", "sweep_value", "replica", "sample_idx",
    "energy_bin", "energy_value", "a_value", "accepted_steps", "reversal_iters_or_restarts",
    "seed", "point_id",
]
METRIC_COLUMNS = [
    "run_id", "beta", "sweep_name", "sweep_value", "n_samples", "e_mean", "e_err", "a_mean",
    "a_err", "d_ene", "d_ene_err", "d_aop", "d_aop_err", "d_trd", "d_trd_err",
    "seed", "point_id", "n_replicas", "kind", "fit_model", "exponent", "exponent_err", "chi2_red",
]
HISTOGRAM_COLUMNS = [
    "run_id", "beta", "sweep_name", "sweep_value", "bin", "energy", "count", "frequency",
    "kernel_frequency", "seed", "point_id",
]


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "run"
    algorithm: str = "qms"
    beta: tuple = (1.0,)
    sweep: str = "r"
    values: tuple = (1,)
    grid: str = "exact"
    n_energy: int = 1
    margin: float = 0.1
    kick_policy: str = "random"
    r: int = 10
    n_anneal: int = 16
    n_w: int = 3
    n_delta: int = 2
    phase_offset: float = 0.0
    measurement: str = "energy"
    engine: str = "fast"
    reversal_kick: str = "same"
    max_reversal: int = 64
    max_restarts: int = 200
    n_samples: int = 1000
    n_replicas: int = 4
    target_err: float = 0.0  # stop once d_trd_err falls below; 0 disables
    max_samples: int = 0
    seed: int = 0
    output: str = "out"
    histogram: bool = False
    fit: str = "none"  # none | exponential | power

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.algorithm not in ("qms", "qqma"):
            raise ConfigurationError(f"algorithm must be qms or qqma, got {self.algorithm!r}")
        if self.sweep not in SWEEP_AXES:
            raise ConfigurationError(f"sweep must be one of {sorted(SWEEP_AXES)}, got {self.sweep!r}")
        if self.algorithm == "qms" and self.sweep == "n_a":
            raise ConfigurationError("qms has no annealing axis")
        if self.algorithm == "qqma" and self.sweep == "r":
            raise ConfigurationError("qqma has no rethermalization axis")
        if not self.values or any(v <= 0 for v in self.values):
            raise ConfigurationError("sweep values must be positive")
        if not self.beta or any(b < 0 for b in self.beta):
            raise ConfigurationError("beta values must be non-negative")
        for key in ("n_samples", "n_replicas", "r", "n_anneal", "n_w", "n_energy"):
            if getattr(self, key) < 1:
                raise ConfigurationError(f"{key} must be positive")
        if self.target_err < 0 or self.max_samples < 0:
            raise ConfigurationError("target_err and max_samples must be non-negative")
        if self.fit not in ("none", "exponential", "power"):
            raise ConfigurationError(f"unknown fit model {self.fit!r}")
        if GridMode.parse(self.grid) is GridMode.EXACT and self.sweep == "n_e":
            raise ConfigurationError("the exact grid has a fixed single-qubit register")
        KickPolicy.parse(self.kick_policy)


_LISTS = {"beta": float, "values": int}


def _parse_value(key: str, text: str, kind):
    text = text.strip()
    if key in _LISTS:
        out = []
        for part in text.replace(" ", "").split(","):
            if not part:
                continue
            if ".." in part:
                lo, hi = part.split("..")
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(_LISTS[key](part))
        return tuple(_LISTS[key](v) for v in out)
    if kind is bool:
        low = text.lower()
        if low not in ("1", "0", "true", "false", "yes", "no"):
            raise ConfigurationError(f"{key}: expected a boolean, got {text!r}")
        return low in ("1", "true", "yes")
    try:
        return kind(text)
    except ValueError as exc:
        raise ConfigurationError(f"{key}: cannot parse {text!r}") from exc


_KINDS = {f.name: type(f.default) for f in fields(ExperimentConfig)}


def parse_assignments(items: dict) -> dict:
    out = {}
    for key, text in items.items():
        key = key.replace("-", "_")
        if key not in _KINDS:
            raise ConfigurationError(f"unknown configuration key {key!r}")
        out[key] = _parse_value(key, str(text), _KINDS[key])
    return out


def read_config_text(text: str) -> dict:
    items = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {n}: expected key=value")
        key, value = line.split("=", 1)
        items[key.strip()] = value.strip()
    return items


def load_config(path, overrides: dict | None = None, env=None) -> ExperimentConfig:
    """Config from a key=value file, then overrides, then ``QTA_SEED``."""
    env = os.environ if env is None else env
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    items = {"name": path.stem}
    items.update(read_config_text(text))
    items.update(overrides or {})
    if env.get("QTA_SEED"):
        items["seed"] = env["QTA_SEED"]
    try:
        return ExperimentConfig(**parse_assignments(items))
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def list_presets() -> list[Path]:
    return sorted(PRESET_DIR.glob("*.cfg"))


def preset_path(name: str) -> Path:
    path = PRESET_DIR / f"{name}.cfg"
    if not path.exists():
        raise ConfigurationError(f"no preset named {name!r}")
    return path


# engine dispatch --------------------------------------------------------------

@dataclass(frozen=True)
class ReplicaTask:
    point_id: int
    replica: int
    beta: float
    sweep_value: int
    n_samples: int
    config: ExperimentConfig


def engine_config(cfg: ExperimentConfig, beta: float, sweep_value: int, n_samples: int,
                  stream: int):
    axis = SWEEP_AXES[cfg.sweep]
    common = dict(
        beta=beta, grid_mode=cfg.grid, n_energy=cfg.n_energy, margin=cfg.margin,
        kick_policy=cfg.kick_policy, n_samples=n_samples, seed=cfg.seed, stream=stream,
        engine=cfg.engine,
    )
    if cfg.algorithm == "qms":
        ecfg = QmsConfig(r=cfg.r, measurement=cfg.measurement, reversal_kick=cfg.reversal_kick,
                         max_reversal=cfg.max_reversal, **common)
    else:
        ecfg = QqmaConfig(n_anneal=cfg.n_anneal, n_w=cfg.n_w, n_delta=cfg.n_delta,
                          phase_offset=cfg.phase_offset, max_restarts=cfg.max_restarts, **common)
    return ecfg.with_(**{axis: sweep_value})


def run_replica(task: ReplicaTask) -> SampleSet:
    stream = task.point_id * REPLICA_STRIDE + task.replica
    ecfg = engine_config(task.config, task.beta, task.sweep_value, task.n_samples, stream)
    rng = RandomStream(task.config.seed, stream)
    if task.config.algorithm == "qms":
        return run_qms(ecfg, rng)
    return run_qqma(ecfg, rng)


def merge_samples(parts: list[SampleSet]) -> SampleSet:
    """Concatenate replica sample sets in the given order."""
    first = parts[0]

    def cat(name):
        vals = [getattr(p, name) for p in parts]
        if any(v is None for v in vals):
            return None
        return np.concatenate(vals)

    merged = replace(
        first,
        energy_bins=cat("energy_bins"),
        energy_values=cat("energy_values"),
        a_values=cat("a_values"),
        accepted_steps=cat("accepted_steps"),
        reversal_iters=cat("reversal_iters"),
        states=cat("states"),
        rhos=cat("rhos"),
        e_estimates=cat("e_estimates"),
        restarts=sum(p.restarts for p in parts),
        failures=sum(p.failures for p in parts),
        extra={},
    )
    for key in first.extra:
        merged.extra[key] = sum(p.extra[key] for p in parts)
    return merged


def _split(n: int, k: int) -> list[int]:
    return [len(c) for c in np.array_split(np.arange(n), k) if len(c)]


def _map(tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [run_replica(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_replica, tasks))


# serialization ---------------------------------------------------------------

def fmt(x) -> str:
    """17-significant-digit text for floats, empty for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if np.isnan(x):
            return ""
        return format(float(x), ".17g")
    return str(x)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


@dataclass
class PointResult:
    point_id: int
    beta: float
    sweep_value: int
    samples: SampleSet
    replica_ids: list
    replica_sizes: list
    report: object = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    points: list = field(default_factory=list)
    fits: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def sample_rows(self):
        cfg = self.config
        for p in self.points:
            s = p.samples
            replica_of = np.repeat(p.replica_ids, p.replica_sizes)
            local = np.concatenate([np.arange(n) for n in p.replica_sizes]) if p.replica_sizes else []
            for i in range(len(s)):
                yield {
                    "run_id": cfg.name, "algorithm": cfg.algorithm, "beta": p.beta,
                    "sweep_name": cfg.sweep, "sweep_value": p.sweep_value,
                    "replica": int(replica_of[i]), "sample_idx": int(local[i]),
                    "energy_bin": int(s.energy_bins[i]), "energy_value": s.energy_values[i],
                    "a_value": s.a_values[i], "accepted_steps": int(s.accepted_steps[i]),
                    "reversal_iters_or_restarts": int(s.reversal_iters[i]),
                    "seed": cfg.seed, "point_id": p.point_id,
                }

    def metric_rows(self):
        cfg = self.config
        for p in self.points:
            row = {"run_id": cfg.name, "beta": p.beta, "sweep_name": cfg.sweep,
                   "sweep_value": p.sweep_value, "seed": cfg.seed, "point_id": p.point_id,
                   "n_replicas": len(p.replica_ids), "kind": "point"}
            row.update(p.report.row())
            yield row
        for f in self.fits:
            yield f

    def histogram_rows(self):
        cfg = self.config
        s = spectrum(triangle_hamiltonian())
        for p in self.points:
            grid = p.samples.grid
            counts = np.bincount(p.samples.energy_bins, minlength=grid.n_bins)
            kernel = kernel_histogram(grid, s, p.beta)
            n = counts.sum()
            for b in range(grid.n_bins):
                yield {"run_id": cfg.name, "beta": p.beta, "sweep_name": cfg.sweep,
                       "sweep_value": p.sweep_value, "bin": b, "energy": grid.energy(b),
                       "count": int(counts[b]), "frequency": counts[b] / n,
                       "kernel_frequency": kernel[b], "seed": cfg.seed, "point_id": p.point_id}

    def manifest(self) -> dict:
        return {
            "config": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.config).items()},
            "seed": self.config.seed,
            "software_version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "status": "partial" if self.partial else "complete",
            "points": [
                {"point_id": p.point_id, "beta": p.beta, "sweep_value": p.sweep_value,
                 "n_samples": len(p.samples), "replicas": list(map(int, p.replica_ids)),
                 "restarts": int(p.samples.restarts), "failed_runs": int(p.samples.failures)}
                for p in self.points
            ],
            "failures": self.failures,
            "wall_time_s": self.wall_time,
            "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "samples.csv").write_text(_csv_text(SAMPLE_COLUMNS, self.sample_rows()))
        (out / "metrics.csv").write_text(_csv_text(METRIC_COLUMNS, self.metric_rows()))
        if self.config.histogram:
            (out / "histogram.csv").write_text(_csv_text(HISTOGRAM_COLUMNS, self.histogram_rows()))
        (out / "manifest.json").write_text(json.dumps(self.manifest(), indent=2) + "\n")
        marker = out / "PARTIAL"
        if self.partial:
            marker.write_text("\n".join(f["error"] for f in self.failures) + "\n")
        elif marker.exists():
            marker.unlink()
        return out


def kernel_histogram(grid, s, beta: float) -> np.ndarray:
    """Bin distribution of phase estimation on a Gibbs mixture of eigenstates."""
    ens = gibbs_ensemble(s, beta)
    out = np.zeros(grid.n_bins)
    for p, e in zip(ens.level_probs, s.level_energies):
        out += p * qpe_outcome_distribution(float(grid.phase(e)), grid.n_qubits)
    return out


def _fit_rows(cfg: ExperimentConfig, points: list) -> list:
    if cfg.fit == "none":
        return []
    rows = []
    for beta in cfg.beta:
        pts = [p for p in points if p.beta == beta and p.report.d_trd > 0]
        if len(pts) < 3:
            continue
        xs = [p.sweep_value for p in pts]
        res = scaling_fit(xs, [p.report.d_trd for p in pts], cfg.fit,
                          fit_weights([p.report.d_trd_err for p in pts]))
        rows.append({"run_id": cfg.name, "beta": beta, "sweep_name": cfg.sweep,
                     "seed": cfg.seed, "kind": "fit", "fit_model": cfg.fit,
                     "exponent": res.slope, "exponent_err": res.slope_err,
                     "chi2_red": res.chi2_red, "n_samples": sum(len(p.samples) for p in pts)})
    return rows


def run_point(cfg: ExperimentConfig, point_id: int, beta: float, value: int,
              workers: int = 1) -> PointResult:
    """All replica rounds for one (beta, sweep value) point."""
    oracle = gibbs_ensemble(spectrum(triangle_hamiltonian()), beta)
    parts, ids, sizes = [], [], []
    next_id = 0
    budget = max(cfg.max_samples, cfg.n_samples)
    total = 0
    while True:
        chunk = _split(min(cfg.n_samples, budget - total), cfg.n_replicas)
        tasks = [ReplicaTask(point_id, next_id + i, beta, value, n, cfg) for i, n in enumerate(chunk)]
        next_id += len(tasks)
        parts.extend(_map(tasks, workers))
        ids.extend(t.replica for t in tasks)
        total += sum(chunk)
        merged = merge_samples(parts)
        report = sample_stats(merged, oracle)
        if cfg.target_err <= 0 or report.d_trd_err < cfg.target_err or total >= budget:
            break
    sizes = [len(p) for p in parts]
    return PointResult(point_id, beta, value, merged, ids, sizes, report)


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int | None = None) -> ExperimentResult:
    """Run every (beta, sweep value) point, write outputs and return the results.

    Replica streams depend only on (seed, point id, replica id), so the merged
    output does not depend on ``workers``.
    """
    if workers is None:
        workers = int(os.environ.get("QTA_WORKERS", "1") or 1)
    if workers < 1:
        raise ConfigurationError("QTA_WORKERS must be positive")
    start = time.perf_counter()
    result = ExperimentResult(cfg)
    point_id = 0
    for beta in cfg.beta:
        for value in cfg.values:
            try:
                result.points.append(run_point(cfg, point_id, beta, value, workers))
            except (QtaError, FloatingPointError) as exc:
                result.failures.append({"point_id": point_id, "beta": beta, "sweep_value": value,
                                        "error": f"{type(exc).__name__}: {exc}"})
            point_id += 1
    result.fits = _fit_rows(cfg, result.points)
    result.wall_time = time.perf_counter() - start
    if out_dir is not None or cfg.output:
        result.write(out_dir or cfg.output)
    return result

