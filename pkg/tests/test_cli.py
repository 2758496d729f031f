import json
import subprocess
import sys

import pytest

from groundgap.cli import main
from groundgap.problems import load_ensemble


def run(tmp_path, *argv):
    return main(["--out-dir", str(tmp_path), *argv])


def outputs(tmp_path, command):
    manifest = json.loads((tmp_path / f"{command}.manifest.json").read_text())
    return manifest, {p: open(p, "rb").read() for p in manifest["outputs"]}


def test_generate_lls(tmp_path):
    assert run(tmp_path, "generate", "--kind", "lls", "--m", "100", "--n", "16", "--count", "50",
               "--range", "-8:8", "--seed", "7") == 0
    problems, spec = load_ensemble(tmp_path / "ensemble.json")
    assert len(problems) == 50 and problems[0].a.shape == (100, 16)
    assert spec.value_range == (-8, 8) and spec.seed == 7
    manifest, _ = outputs(tmp_path, "generate")
    assert manifest["seed"] == 7 and manifest["status"] == "ok"
    assert manifest["outputs"] == [str(tmp_path / "ensemble.json")]


def test_generate_lse_conditioned(tmp_path):
    assert run(tmp_path, "generate", "--kind", "lse", "--n", "16", "--kappa", "10", "--count", "3") == 0
    problems, spec = load_ensemble(tmp_path / "ensemble.json")
    assert problems[0].a.shape == (16, 16) and spec.kappa_target == 10.0


def test_missing_flag_is_usage_error(tmp_path, capsys):
    assert run(tmp_path, "generate", "--kind", "lls") == 2
    assert "--n" in capsys.readouterr().err


def test_bad_subcommand_and_values(tmp_path):
    assert run(tmp_path, "teleport") == 2
    assert run(tmp_path, "generate", "--n", "2", "--range", "3:1") == 2
    assert run(tmp_path, "sweep", "sideways") == 2


def test_gapscan_default_grid(tmp_path):
    run(tmp_path, "generate", "--m", "40", "--n", "2", "--count", "2", "--range", "-2:1")
    assert run(tmp_path, "gapscan", str(tmp_path / "ensemble.json"), "--seed", "3") == 0
    lines = (tmp_path / "gapscan_0000.csv").read_text().splitlines()
    assert lines[0] == "s,e0,e1,gap" and len(lines) == 102 and lines[-1].startswith("# g_min=")
    summary = (tmp_path / "gapscan_summary.csv").read_text().splitlines()
    assert len(summary) == 3 and summary[1].startswith("0,4,")


def test_gapscan_grid_and_unscaled(tmp_path):
    run(tmp_path, "generate", "--m", "40", "--n", "2", "--count", "1", "--range", "-2:1", "--kappa", "50")
    assert run(tmp_path, "gapscan", str(tmp_path / "ensemble.json"), "--grid", "201", "--unscaled") == 0
    assert len((tmp_path / "gapscan_0000.csv").read_text().splitlines()) == 203
    row = (tmp_path / "gapscan_summary.csv").read_text().splitlines()[1].split(",")
    assert float(row[5]) == 1.0  # scale column: untouched coefficients


def test_gapscan_qubit_overrun_skipped(tmp_path):
    run(tmp_path, "generate", "--m", "40", "--n", "6", "--count", "1")
    assert run(tmp_path, "gapscan", str(tmp_path / "ensemble.json"), "--max-qubits", "8") == 0
    manifest, _ = outputs(tmp_path, "gapscan")
    assert manifest["status"] == "partial" and manifest["skipped"][0]["problem"] == 0


def test_hybrid_exhaustive(tmp_path):
    run(tmp_path, "generate", "--m", "30", "--n", "4", "--count", "5", "--range", "-8:8")
    assert run(tmp_path, "hybrid", str(tmp_path / "ensemble.json"), "--sampler", "exhaustive") == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["wins_iters"] == 5
    for key in ("wins_iters", "ties_iters", "losses_iters", "wins_resid", "ties_resid", "losses_resid",
                "median_improvement_pct"):
        assert key in summary


def test_hybrid_sa_post_process_tag(tmp_path):
    run(tmp_path, "generate", "--m", "30", "--n", "3", "--count", "2", "--range", "-8:8")
    assert run(tmp_path, "hybrid", str(tmp_path / "ensemble.json"), "--sampler", "sa", "--reads", "20",
               "--sweeps", "10", "--post-process") == 0
    manifest, _ = outputs(tmp_path, "hybrid")
    assert manifest["config"]["tag"] == "sa+PP" and manifest["config"]["resolved"]["post_process"]


def test_hybrid_missing_file(tmp_path):
    assert run(tmp_path, "hybrid", str(tmp_path / "nope.json")) == 1
    manifest, _ = outputs(tmp_path, "hybrid")
    assert manifest["status"] == "failed" and "nope.json" in manifest["error"]


def test_sweep_and_fit(tmp_path):
    assert run(tmp_path, "sweep", "precision", "--per-value", "2", "--values", "2,3,4", "--grid", "11") == 0
    lines = (tmp_path / "sweep_precision.csv").read_text().splitlines()
    assert len(lines) == 4
    fits = json.loads((tmp_path / "fits_precision.json").read_text())
    assert [f["family"] for f in fits] == ["exp_decay", "poly_decay"]
    assert run(tmp_path, "fit", str(tmp_path / "sweep_precision.csv"), "--family", "plateau") == 0
    assert json.loads((tmp_path / "fits.json").read_text())[0]["family"] == "plateau"


def test_sweep_condition_columns(tmp_path):
    assert run(tmp_path, "sweep", "condition", "--per-value", "2", "--values", "1,20", "--grid", "6") == 0
    header = (tmp_path / "sweep_condition.csv").read_text().splitlines()[0]
    assert header.endswith("median_unscaled_gap,median_scale_factor")
    assert (tmp_path / "sweep_condition_unscaled.csv").exists()


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GROUNDGAP_OUT", str(tmp_path / "env"))
    assert main(["generate", "--n", "2", "--count", "1"]) == 0
    assert (tmp_path / "env" / "ensemble.json").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "groundgap", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "groundgap" in proc.stdout


@pytest.mark.parametrize("argv", [
    ["generate", "--m", "20", "--n", "3", "--count", "4", "--kappa", "7"],
    ["sweep", "rows", "--per-value", "2", "--values", "10,20", "--grid", "6"],
])
def test_outputs_byte_identical(tmp_path, argv):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["--out-dir", str(first), "--seed", "5", *argv]) == 0
    assert main(["--out-dir", str(second), "--seed", "5", "--jobs", "2", *argv]) == 0
    _, a = outputs(first, argv[0])
    _, b = outputs(second, argv[0])
    assert list(a.values()) == list(b.values())
