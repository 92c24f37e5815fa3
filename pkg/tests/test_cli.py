"""End-to-end command tests on a tiny instance."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from pdsr.cli import main


@pytest.fixture(scope="module")
def instance(tmp_path_factory):
    base = tmp_path_factory.mktemp("desk")
    rc = main(["make-desk", "--problem", "adn", "--N", "4", "--T", "12",
               "--buses", "4", "--bad-fraction", "0.25", "--seed", "3",
               "--out", str(base)])
    assert rc == 0
    return base


def run_ok(args):
    assert main([str(a) for a in args]) == 0


def common(instance, out):
    return ["--problem", "adn", "--config", instance / "config.json",
            "--scenarios", instance / "scenarios.csv",
            "--probabilities", instance / "probabilities.csv",
            "--out", out]


def test_project_and_cache_reuse(instance, tmp_path, capsys):
    out = tmp_path / "run"
    out.mkdir()
    run_ok(["project", *common(instance, out)])
    first = capsys.readouterr().out
    assert "built" in first
    assert (out / "F.csv").exists() and (out / "F.meta.json").exists()
    text = (out / "F.csv").read_text()
    assert len(text.splitlines()) == 5   # header + 4 rows
    run_ok(["project", *common(instance, out)])
    again = capsys.readouterr().out
    assert "reused" in again


def test_cluster_beta_zero_keeps_all(instance, tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    run_ok(["cluster", *common(instance, out), "--beta", "0"])
    red = json.loads((out / "reduction.json").read_text())
    assert red["k"] == 4
    assert (out / "reduction.timings.json").exists()


def test_cluster_fixed_k_one(instance, tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    run_ok(["cluster", *common(instance, out), "--K", "1"])
    red = json.loads((out / "reduction.json").read_text())
    assert red["k"] == 1
    assert len(red["representatives"]) == 1


def test_cluster_matches_library(instance, tmp_path):
    from pdsr.adn import AdnConfig, AdnProblem
    from pdsr.clustering import compute_pdd, solve_clustering
    from pdsr.projection import build_problem_space_matrix
    from pdsr.scenarios import load_scenarios

    out = tmp_path / "run"
    out.mkdir()
    run_ok(["cluster", *common(instance, out), "--K", "2"])
    red = json.loads((out / "reduction.json").read_text())

    ss = load_scenarios(instance / "scenarios.csv", instance / "probabilities.csv")
    cfg = AdnConfig.from_dict(json.loads((instance / "config.json").read_text()))
    problem = AdnProblem(cfg, ss.source_names)
    matrix = build_problem_space_matrix(problem, ss)
    result = solve_clustering(compute_pdd(matrix), ss.probabilities, fixed_k=2)
    assert red["representatives"] == result.representatives
    assert red["spdd"] == pytest.approx(result.spdd)


def test_sweep_beta_rows(instance, tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    run_ok(["sweep-beta", *common(instance, out), "--betas", "0,1e6"])
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3   # header + 2 rows
    header = lines[0].split(",")
    k_col = header.index("k")
    assert [row.split(",")[k_col] for row in lines[1:]] == ["4", "1"]
    for row in lines[1:]:
        for col in ("k_normalized", "spdd_normalized"):
            value = row.split(",")[header.index(col)]
            if value:
                assert 0.0 <= float(value) <= 1.0


def test_evaluate_identity_reduction(instance, tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    run_ok(["cluster", *common(instance, out), "--beta", "0"])
    run_ok(["evaluate", *common(instance, out),
            "--reduction", out / "reduction.json"])
    report = json.loads((out / "report.json").read_text())
    assert abs(report["og_pct"]) <= 0.02
    assert report["scenario_effectiveness"] is not None
    assert len(report["scenario_effectiveness"]) == 4
    assert len(report["worst_case_flags"]) == 4
    assert (out / "report.timings.json").exists()


def test_compare_single_method(instance, tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    run_ok(["compare", *common(instance, out), "--methods", "pdsr", "--K", "2"])
    table = json.loads((out / "table.json").read_text())
    assert [r["method"] for r in table] == ["benchmark", "pdsr"]
    assert table[0]["og_pct"] == 0.0
    assert table[1]["status"] == "ok"
    lines = (out / "table.csv").read_text().splitlines()
    assert len(lines) == 3


def test_compare_full_method_list(instance, tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    run_ok(["compare", *common(instance, out),
            "--methods", "pdsr,km_e,kd_e,hc,ws", "--K", "2"])
    table = json.loads((out / "table.json").read_text())
    assert [r["method"] for r in table] == ["benchmark", "pdsr", "km_e",
                                            "kd_e", "hc", "ws"]
    assert all(r["status"] == "ok" for r in table)


def test_outputs_byte_identical_across_workers(instance, tmp_path):
    outs = []
    for workers in ("1", "4"):
        out = tmp_path / f"w{workers}"
        out.mkdir()
        run_ok(["project", *common(instance, out), "--workers", workers])
        run_ok(["cluster", *common(instance, out), "--workers", workers,
                "--K", "2"])
        outs.append(out)
    a, b = outs
    assert (a / "F.csv").read_bytes() == (b / "F.csv").read_bytes()
    assert (a / "reduction.json").read_bytes() == (b / "reduction.json").read_bytes()


def test_compare_rerun_byte_identical(instance, tmp_path):
    blobs = []
    for run in ("r1", "r2"):
        out = tmp_path / run
        out.mkdir()
        run_ok(["compare", *common(instance, out), "--methods", "pdsr,km_e",
                "--K", "2", "--seed", "5"])
        blobs.append(((out / "table.csv").read_bytes(),
                      (out / "table.json").read_bytes()))
    assert blobs[0] == blobs[1]


def test_cache_env_var(instance, tmp_path, monkeypatch):
    cache = tmp_path / "cache"
    out = tmp_path / "run"
    out.mkdir()
    monkeypatch.setenv("PDSR_CACHE_DIR", str(cache))
    run_ok(["project", *common(instance, out)])
    assert (cache / "F.csv").exists()
    assert not (out / "F.csv").exists()


def test_error_exit_code(tmp_path):
    rc = main(["project", "--problem", "adn", "--config", "/nonexistent.json",
               "--scenarios", "/nonexistent.csv", "--out", str(tmp_path)])
    assert rc == 1
    # argparse-level misuse exits nonzero through SystemExit
    with pytest.raises(SystemExit):
        main(["cluster", "--out", str(tmp_path)])


def test_console_entry_point(instance, tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "pdsr.cli", "make-desk", "--problem", "uc",
         "--N", "3", "--T", "6", "--out", str(tmp_path / "uc")],
        capture_output=True, text=True)
    assert result.returncode == 0
    assert (tmp_path / "uc" / "config.json").exists()
    assert (tmp_path / "uc" / "scenarios.csv").exists()