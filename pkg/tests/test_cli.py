import re
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from pirm_lab.cli import main, parse_args, parse_lambda_grid
from pirm_lab.envs import EnvironmentFamily, env_risks, fairness_vrex
from pirm_lab.experiments import ScenarioConfig, run_lambda_sweep, run_default_partition_sweeps
from pirm_lab.report import CSV_COLUMNS, read_csv, write_csv, write_svg_plots
from pirm_lab.svg import MARGIN, PANEL_H


@pytest.fixture(scope="module")
def default_records():
    return run_default_partition_sweeps()


@pytest.fixture(scope="module")
def lambda_records():
    return run_lambda_sweep(ScenarioConfig(sigma=0.1, delta=0.1), [1e-2, 1.0, 100.0])


def test_default_manifest_is_builtin_setup():
    m = parse_args(["sweep-partitions"])
    assert m.command == "sweep-partitions"
    assert [(c.sigma, c.delta) for c in m.scenarios] == [(0.1, 0.1), (1.0, 0.1), (0.1, 1.0), (1.0, 1.0)]
    for c in m.scenarios:
        assert (c.mu1, c.mu2, c.n_envs, c.lam) == (1.0, 2.0, 24, 10.0)
        assert c.partition_counts == (1, 2, 3, 4, 6, 12, 24)
        assert c.fairness_mode == "assigned"
    assert not m.emit_svg


def test_lambda_manifest():
    m = parse_args(["sweep-lambda", "--sigma", "0.1", "--delta", "0.1"])
    assert (m.lambda_scenario.sigma, m.lambda_scenario.delta) == (0.1, 0.1)
    assert len(m.lambda_grid) == 25
    m = parse_args(["sweep-lambda", "--lambda-grid", "1e-2:1e2:5"])
    assert m.lambda_grid == pytest.approx([1e-2, 1e-1, 1, 10, 100])


def test_sigma_flag_collapses_scenarios():
    m = parse_args(["sweep-partitions", "--sigma", "0.1"])
    assert [(c.sigma, c.delta) for c in m.scenarios] == [(0.1, 0.1), (0.1, 1.0)]


def test_n_envs_default_partitions_are_divisors():
    m = parse_args(["sweep-partitions", "--n-envs", "12"])
    assert m.scenarios[0].partition_counts == (1, 2, 3, 4, 6, 12)


@pytest.mark.parametrize(
    "argv",
    [
        ["sweep-partitions", "--n-parts", "5"],
        ["sweep-partitions", "--partitions", "1,5"],
        ["sweep-partitions", "--bogus"],
        ["nope"],
        ["sweep-partitions", "--fairness-mode", "odd"],
        ["sweep-lambda", "--lambda-grid", "0:1:3"],
        ["sweep-partitions", "--config", "/nonexistent/cfg.ini"],
        ["sweep-partitions", "--sigma", "-1"],
    ],
)
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as info:
        parse_args(argv)
    assert info.value.code == 2


def test_lambda_grid_parser():
    assert parse_lambda_grid("1e-3:1e3:25-log")[-1] == pytest.approx(1e3)
    assert parse_lambda_grid("1:1:1") == [1.0]


def test_config_layering(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[common]\nlambda = 3\npartitions = 1,2,24\n\n"
        "[scenario a]\nsigma = 0.5\ndelta = 0.2\n\n"
        "[scenario b]\nsigma = 0.5\ndelta = 0.4\nlambda = 7\n\n"
        "[sem]\nn_samples = 500\nseed = 4\n",
        encoding="utf-8",
    )
    m = parse_args(["sweep-partitions", "--config", str(cfg)])
    assert [(c.sigma, c.delta, c.lam) for c in m.scenarios] == [(0.5, 0.2, 3.0), (0.5, 0.4, 7.0)]
    assert m.scenarios[0].partition_counts == (1, 2, 24)
    assert m.sem.n_samples == 500 and m.sem.seed == 4
    m = parse_args(["sweep-partitions", "--config", str(cfg), "--lambda", "1", "--seed", "9"])
    assert [c.lam for c in m.scenarios] == [1.0, 1.0]
    assert m.sem.seed == 9


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[common]\ncolour = red\n", encoding="utf-8")
    with pytest.raises(SystemExit) as info:
        parse_args(["sweep-partitions", "--config", str(cfg)])
    assert info.value.code == 2


def test_csv_layout(default_records, tmp_path):
    path = tmp_path / "p.csv"
    write_csv(default_records, path)
    raw = path.read_bytes()
    lines = raw.decode("utf-8").split("\n")
    assert lines[-1] == "" and len(lines) - 1 == 29
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert b"\r" not in raw
    first = lines[1].split(",")
    assert first[0] == "sep-large_overlap-high" and first[3] == "1"
    thresholds = lines[2].split(",")[-1].split(";")
    assert len(thresholds) == 2
    assert all(len(t.replace(".", "").replace("-", "").lstrip("0")) <= 12 for t in thresholds)
    write_csv(default_records, tmp_path / "q.csv")
    assert (tmp_path / "q.csv").read_bytes() == raw


def test_csv_empty_refused(tmp_path):
    with pytest.raises(ValueError):
        write_csv([], tmp_path / "empty.csv")
    assert not (tmp_path / "empty.csv").exists()


def test_csv_io_error_names_path(default_records, tmp_path):
    target = tmp_path / "missing" / "x.csv"
    with pytest.raises(OSError, match="missing"):
        write_csv(default_records, target)


def test_csv_round_trip(default_records, tmp_path):
    path = tmp_path / "p.csv"
    write_csv(default_records, path)
    back = read_csv(path)
    assert len(back) == len(default_records)
    for r in back:
        f = EnvironmentFamily(1.0, 2.0, r.sigma, r.delta, 24)
        risks = env_risks(f, np.repeat(r.thresholds, 24 // r.n_parts))
        assert abs(np.mean(risks) - r.global_risk) <= 1e-9
        assert abs(fairness_vrex(risks) - r.fairness) <= 1e-9


def _polyline_ys(svg: str) -> list[float]:
    ys = []
    for pts in re.findall(r'<polyline points="([^"]+)"', svg):
        ys.extend(float(p.split(",")[1]) for p in pts.split())
    return ys


def test_partition_svgs(default_records, tmp_path):
    paths = write_svg_plots(default_records, tmp_path)
    assert len(paths) == 4
    for p in paths:
        svg = p.read_text(encoding="utf-8")
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
        assert svg.count("<polyline") == 2
        ys = _polyline_ys(svg)
        top, bottom = MARGIN["top"], PANEL_H - MARGIN["bottom"]
        assert all(top - 1e-9 <= y <= bottom + 1e-9 for y in ys)
        assert min(ys) == pytest.approx(top) and max(ys) == pytest.approx(bottom)
    again = write_svg_plots(default_records, tmp_path / "again")
    assert [p.read_bytes() for p in paths] == [p.read_bytes() for p in again]


def test_lambda_svgs(lambda_records, tmp_path):
    paths = write_svg_plots(lambda_records, tmp_path)
    assert sorted(p.name for p in paths) == ["lambda_fairness.svg", "lambda_risk.svg"]
    for p in paths:
        svg = p.read_text(encoding="utf-8")
        assert svg.count("<polyline") == 7


def test_main_end_to_end_is_deterministic(tmp_path):
    argv = ["all", "--svg", "--n-samples", "2000", "--lambda-grid", "1e-1:1e1:3"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    assert {str(p) for p in files_a} >= {
        "partitions.csv", "lambda.csv", "sem_cells.csv", "sem_summary.csv",
        "svg/lambda_risk.svg", "svg/lambda_fairness.svg",
    }
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_sem_csv(tmp_path):
    assert main(["sem", "--n-samples", "2000", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "sem_cells.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "method,scope,subset,coefficients,E,e,sigma_e,mse"
    assert len(lines) == 1 + 3 * 9
    summary = (tmp_path / "sem_summary.csv").read_text(encoding="utf-8").splitlines()
    assert [row.split(",")[0] for row in summary[1:]] == ["IRM-global", "P-IRM-per-E", "ERM-pooled"]


def test_runtime_error_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["sweep-partitions", "--partitions", "24", "--out", str(blocker)]) == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "pirm_lab.cli", "sweep-partitions", "--sigma", "1", "--delta", "0.1",
         "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert len((tmp_path / "partitions.csv").read_text().splitlines()) == 8
