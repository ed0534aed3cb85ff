import csv
import json

import numpy as np
import pytest

from qta import harness
from qta.errors import ConfigurationError, QtaError
from qta.harness import (
    HISTOGRAM_COLUMNS,
    METRIC_COLUMNS,
    SAMPLE_COLUMNS,
    ExperimentConfig,
    fmt,
    kernel_histogram,
    list_presets,
    load_config,
    parse_assignments,
    preset_path,
    read_config_text,
    run_experiment,
)
from qta.qpe import build_grid
from qta.triangle import spectrum, triangle_hamiltonian

SMALL = dict(algorithm="qms", beta=(0.5,), sweep="r", values=(1, 2, 3), n_samples=60,
             n_replicas=3, seed=11)


def small(**kw):
    return ExperimentConfig(**{**SMALL, **kw})


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("text,expected", [
    ("1..4", (1, 2, 3, 4)),
    ("2, 5..6", (2, 5, 6)),
    ("8,16,32", (8, 16, 32)),
])
def test_value_ranges(text, expected):
    assert parse_assignments({"values": text})["values"] == expected


def test_beta_list_and_scalars():
    got = parse_assignments({"beta": "0.25, 1", "histogram": "yes", "margin": "0.2", "n-energy": "3"})
    assert got == {"beta": (0.25, 1.0), "histogram": True, "margin": 0.2, "n_energy": 3}


def test_config_text_comments_and_blank_lines():
    items = read_config_text("# heading\n\nbeta = 1.0  # trailing\nvalues=1..2\n")
    assert items == {"beta": "1.0", "values": "1..2"}


@pytest.mark.parametrize("items", [{"bogus": "1"}, {"r": "ten"}, {"histogram": "maybe"}])
def test_bad_assignments(items):
    with pytest.raises(ConfigurationError):
        parse_assignments(items)


def test_missing_equals_rejected():
    with pytest.raises(ConfigurationError):
        read_config_text("beta 1.0\n")


@pytest.mark.parametrize("kw", [
    dict(algorithm="vqe"), dict(sweep="n_a"), dict(algorithm="qqma", sweep="r"),
    dict(values=(0,)), dict(beta=(-1.0,)), dict(n_samples=0), dict(fit="cubic"),
    dict(sweep="n_e", grid="exact"), dict(kick_policy="sometimes"), dict(target_err=-1.0),
])
def test_invalid_configs(kw):
    with pytest.raises(ConfigurationError):
        small(**kw)


def test_load_config_overrides_and_seed_env(tmp_path):
    path = tmp_path / "mine.cfg"
    path.write_text("algorithm = qms\nbeta = 1.0\nvalues = 1..3\nseed = 5\n")
    cfg = load_config(path, {"n_samples": "7"}, env={})
    assert (cfg.name, cfg.seed, cfg.n_samples, cfg.values) == ("mine", 5, 7, (1, 2, 3))
    assert load_config(path, env={"QTA_SEED": "42"}).seed == 42


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "nope.cfg", env={})


def test_presets_load():
    names = [p.stem for p in list_presets()]
    assert names == ["fig1", "fig2", "fig3", "fig4", "fig5"]
    for name in names:
        cfg = load_config(preset_path(name), env={})
        assert cfg.name == name
    with pytest.raises(ConfigurationError):
        preset_path("fig9")


@pytest.mark.parametrize("value,text", [
    (0.1, "0.10000000000000001"), (1.0, "1"), (3, "3"), (True, "1"),
    (float("nan"), ""), (None, ""), (-0.5630729097078562, "-0.56307290970785617"),
])
def test_fmt(value, text):
    assert fmt(value) == text


def test_float_round_trip():
    x = np.random.default_rng(1).normal(size=100)
    assert all(float(fmt(v)) == v for v in x)


def test_kernel_histogram_exact_grid_is_level_distribution():
    s = spectrum(triangle_hamiltonian())
    k = kernel_histogram(build_grid("exact", 1, 0.0, s), s, 1.0)
    np.testing.assert_allclose(k, [0.993932, 1 - 0.993932], atol=1e-6)
    assert kernel_histogram(build_grid("fixed", 4, 0.1, s), s, 0.25).sum() == pytest.approx(1.0)


def test_outputs_and_columns(tmp_path):
    cfg = small(fit="exponential", histogram=True, measurement="a")
    res = run_experiment(cfg, tmp_path)
    samples = read_csv(tmp_path / "samples.csv")
    metrics = read_csv(tmp_path / "metrics.csv")
    hist = read_csv(tmp_path / "histogram.csv")
    assert list(samples[0]) == SAMPLE_COLUMNS
    assert list(metrics[0]) == METRIC_COLUMNS
    assert list(hist[0]) == HISTOGRAM_COLUMNS
    assert len(samples) == 3 * 60
    points = [m for m in metrics if m["kind"] == "point"]
    fits = [m for m in metrics if m["kind"] == "fit"]
    assert len(points) == 3 and len(fits) == 1
    assert fits[0]["fit_model"] == "exponential" and fits[0]["exponent"]
    assert {m["n_replicas"] for m in points} == {"3"}
    assert all(m["d_aop"] for m in points)
    for m, p in zip(points, res.points):
        assert float(m["d_trd"]) == p.report.d_trd
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "complete" and manifest["seed"] == 11
    assert not (tmp_path / "PARTIAL").exists()
    by_point = {}
    for h in hist:
        by_point.setdefault(h["point_id"], 0.0)
        by_point[h["point_id"]] += float(h["frequency"])
    assert all(v == pytest.approx(1.0) for v in by_point.values())


def test_rerun_is_byte_identical(tmp_path):
    cfg = small()
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for name in ("samples.csv", "metrics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_worker_count_does_not_change_output(tmp_path):
    cfg = small(n_replicas=4)
    run_experiment(cfg, tmp_path / "one", workers=1)
    run_experiment(cfg, tmp_path / "four", workers=4)
    for name in ("samples.csv", "metrics.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "four" / name).read_bytes()


def test_seed_changes_samples(tmp_path):
    run_experiment(small(), tmp_path / "a")
    run_experiment(small(seed=12), tmp_path / "b")
    assert (tmp_path / "a" / "samples.csv").read_bytes() != (tmp_path / "b" / "samples.csv").read_bytes()


def test_stopping_rule_adds_replica_rounds(tmp_path):
    cfg = small(values=(2,), n_samples=30, target_err=1e-9, max_samples=90)
    res = run_experiment(cfg, tmp_path)
    p = res.points[0]
    assert len(p.samples) == 90
    assert p.replica_ids == list(range(9))


def test_failed_point_writes_partial_marker(tmp_path, monkeypatch):
    real = harness.run_replica

    def flaky(task):
        if task.point_id == 1:
            raise QtaError("injected")
        return real(task)

    monkeypatch.setattr(harness, "run_replica", flaky)
    res = run_experiment(small(), tmp_path)
    assert res.partial and [f["point_id"] for f in res.failures] == [1]
    assert "injected" in (tmp_path / "PARTIAL").read_text()
    assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "partial"
    assert {r["point_id"] for r in read_csv(tmp_path / "samples.csv")} == {"0", "2"}


def test_qqma_sweep(tmp_path):
    cfg = ExperimentConfig(algorithm="qqma", beta=(1.0,), sweep="n_a", values=(2, 4),
                           n_samples=6, n_replicas=2, seed=3)
    res = run_experiment(cfg, tmp_path)
    assert [len(p.samples) for p in res.points] == [6, 6]
    assert {r["algorithm"] for r in read_csv(tmp_path / "samples.csv")} == {"qqma"}


def test_energy_sweep(tmp_path):
    cfg = small(grid="fixed", sweep="n_e", values=(2, 3), r=4, histogram=True)
    run_experiment(cfg, tmp_path)
    hist = read_csv(tmp_path / "histogram.csv")
    assert len(hist) == 4 + 8
