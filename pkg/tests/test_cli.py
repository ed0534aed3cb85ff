import json
import shutil
import subprocess
import sys

import pytest

from qta.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main


def test_presets_list(capsys):
    assert main(["presets", "list"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in out] == ["fig1", "fig2", "fig3", "fig4", "fig5"]


@pytest.mark.parametrize("argv", [
    [], ["frobnicate"], ["run"], ["run", "--config", "no_such_preset"],
    ["run", "--config", "fig3", "--bogus", "1"], ["run", "--config", "fig3", "--r"],
    ["run", "--config", "fig3", "--beta", "-1"], ["verify", "--scale", "huge"],
    ["verify", "--only", "c99"],
])
def test_configuration_errors_exit_2(argv, capsys):
    assert main(argv) == EXIT_CONFIG


def test_run_small_preset(tmp_path, capsys):
    out = tmp_path / "fig3"
    code = main(["run", "--config", "fig3", "--values", "1..2", "--n_samples", "40",
                 "--n-replicas=2", "--output", str(out)])
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "d_trd=" in text and str(out) in text
    assert (out / "samples.csv").exists() and (out / "manifest.json").exists()


def test_run_from_file(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(f"algorithm = qqma\nsweep = n_a\nvalues = 2\nbeta = 0.5\nn_samples = 4\n"
                   f"n_replicas = 1\noutput = {tmp_path / 'o'}\n")
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "o" / "metrics.csv").exists()


def test_verify_stationarity_json(tmp_path, capsys):
    report = tmp_path / "report.json"
    assert main(["verify", "--only", "stationarity", "--json", str(report)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("[PASS]")
    data = json.loads(report.read_text())
    assert len(data) == 1 and data[0]["passed"] is True


def test_verify_detects_broken_filter(capsys):
    assert main(["verify", "--only", "stationarity", "--filter-sign", "-1"]) == EXIT_FAIL
    assert capsys.readouterr().out.startswith("[FAIL]")


@pytest.mark.skipif(shutil.which("qta") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["qta", "presets", "list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "fig1" in proc.stdout


def test_module_entry():
    proc = subprocess.run([sys.executable, "-m", "qta.cli", "presets", "list"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
