"""CSV and SVG output for sweep records and SEM reports."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path
from typing import Sequence

from pirm_lab.experiments import SweepRecord
from pirm_lab.sem import FEATURES, SemReport
from pirm_lab.svg import Panel, Series, render

CSV_COLUMNS = (
    "scenario",
    "sigma",
    "delta",
    "n_parts",
    "lambda",
    "fairness_mode",
    "global_risk",
    "fairness",
    "thresholds",
)

SEM_CELL_COLUMNS = ("method", "scope", "subset", "coefficients", "E", "e", "sigma_e", "mse")
SEM_SUMMARY_COLUMNS = ("method", "mean_mse", "fairness", "tol")


def _num(x: float) -> str:
    return repr(float(x))


def _write_text(path: Path, text: str) -> None:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_csv(records: Sequence[SweepRecord], path) -> None:
    if not records:
        raise ValueError("refusing to write an empty record list")
    rows = [
        (
            r.scenario_label,
            _num(r.sigma),
            _num(r.delta),
            str(r.n_parts),
            _num(r.lam),
            r.fairness_mode,
            _num(r.global_risk),
            _num(r.fairness),
            ";".join(f"{t:.12g}" for t in r.thresholds),
        )
        for r in records
    ]
    _write_text(path, _csv_text(CSV_COLUMNS, rows))


def read_csv(path) -> list[SweepRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            SweepRecord(
                scenario_label=row["scenario"],
                sigma=float(row["sigma"]),
                delta=float(row["delta"]),
                n_parts=int(row["n_parts"]),
                lam=float(row["lambda"]),
                fairness_mode=row["fairness_mode"],
                global_risk=float(row["global_risk"]),
                fairness=float(row["fairness"]),
                thresholds=tuple(float(t) for t in row["thresholds"].split(";")),
            )
            for row in reader
        ]


def _is_lambda_sweep(records: Sequence[SweepRecord]) -> bool:
    by_key = defaultdict(set)
    for r in records:
        by_key[(r.scenario_label, r.n_parts)].add(r.lam)
    return any(len(v) > 1 for v in by_key.values())


def write_svg_plots(records: Sequence[SweepRecord], output_dir) -> list[Path]:
    """Partition sweeps give one two-panel file per scenario; lambda sweeps
    give a risk file and a fairness file (log lambda axis)."""
    if not records:
        raise ValueError("no records to plot")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_scenario: dict[str, list[SweepRecord]] = defaultdict(list)
    for r in records:
        by_scenario[r.scenario_label].append(r)

    written = []
    if not _is_lambda_sweep(records):
        for label, recs in by_scenario.items():
            recs = sorted(recs, key=lambda r: r.n_parts)
            xs = [r.n_parts for r in recs]
            lam = recs[0].lam
            panels = [
                Panel(f"{label}: risk", "partitions", "global risk",
                      [Series(f"lambda={lam:g}", xs, [r.global_risk for r in recs])]),
                Panel(f"{label}: fairness", "partitions", "V-REx fairness",
                      [Series(f"lambda={lam:g}", xs, [r.fairness for r in recs])]),
            ]
            path = out / f"partitions_{label}.svg"
            _write_text(path, render(panels))
            written.append(path)
        return written

    prefix_needed = len(by_scenario) > 1
    for label, recs in by_scenario.items():
        series_by_p: dict[int, list[SweepRecord]] = defaultdict(list)
        for r in recs:
            series_by_p[r.n_parts].append(r)
        for metric, y_label in (("risk", "global risk"), ("fairness", "V-REx fairness")):
            series = []
            for p in sorted(series_by_p):
                rs = sorted(series_by_p[p], key=lambda r: r.lam)
                ys = [r.global_risk if metric == "risk" else r.fairness for r in rs]
                series.append(Series(f"p={p}", [r.lam for r in rs], ys))
            panel = Panel(f"{label}: {metric} vs lambda", "lambda", y_label, series, log_x=True)
            name = f"lambda_{metric}.svg" if not prefix_needed else f"lambda_{metric}_{label}.svg"
            path = out / name
            _write_text(path, render([panel]))
            written.append(path)
    return written


def write_sem_csv(report: SemReport, cells_path, summary_path) -> None:
    rows = []
    for m in report.methods:
        for (E, e), mse in m.cell_mse.items():
            scope = "all" if "all" in m.fits else f"E={E}"
            fit = m.fits[scope]
            rows.append((
                m.method,
                scope,
                ";".join(FEATURES[i] for i in fit.feature_subset),
                ";".join(f"{c:.12g}" for c in fit.coefficients),
                str(E),
                str(e),
                _num(report.scenario.sigma_e[e]),
                _num(mse),
            ))
    _write_text(cells_path, _csv_text(SEM_CELL_COLUMNS, rows))
    summary = [(m.method, _num(m.mean_mse), _num(m.fairness), _num(report.tol))
               for m in report.methods]
    _write_text(summary_path, _csv_text(SEM_SUMMARY_COLUMNS, summary))
