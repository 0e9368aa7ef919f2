"""``pirm-lab`` command line.

Settings resolve in three layers: built-in defaults (the four built-in
scenarios, N=24, lambda=10), then an optional INI config, then flags.

Config layout::

    [common]
    mu1 = 1
    n_envs = 24
    lambda = 10
    partitions = 1,2,3,4,6,12,24
    lambda_grid = 1e-3:1e3:25

    [scenario sep-large_overlap-high]
    sigma = 0.1
    delta = 0.1

    [lambda_sweep]
    sigma = 0.1
    delta = 0.1

    [sem]
    sigma_e = 0.2,1,2
    f_values = 1,2,3
    n_samples = 100000
    seed = 0
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import dataclass, field
from pathlib import Path

from pirm_lab.experiments import (
    DEFAULT_LAMBDA,
    DEFAULT_PARTITIONS,
    DEFAULT_SCENARIOS,
    ScenarioConfig,
    default_lambda_grid,
    run_lambda_sweep,
    run_partition_sweep,
)
from pirm_lab.report import write_csv, write_sem_csv, write_svg_plots
from pirm_lab.sem import NoInvariantSubsetError, SemScenario, SingularFitError, run_sem_experiment

COMMANDS = ("sweep-partitions", "sweep-lambda", "sem", "all")
EXIT_USAGE = 2
EXIT_RUNTIME = 3

COMMON_KEYS = ("mu1", "mu2", "n_envs", "lambda", "partitions", "fairness_mode", "lambda_grid")
SCENARIO_KEYS = COMMON_KEYS + ("sigma", "delta")
SEM_KEYS = ("sigma_e", "f_values", "n_samples", "seed")


class UsageError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    config_path: Path | None
    overrides: dict
    output_dir: Path
    emit_svg: bool
    seed: int
    scenarios: list[ScenarioConfig] = field(default_factory=list)
    lambda_scenario: ScenarioConfig | None = None
    lambda_grid: list[float] = field(default_factory=list)
    sem: SemScenario | None = None


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def parse_lambda_grid(text: str) -> list[float]:
    """``lo:hi:count`` with ``count`` log-spaced points; a trailing ``:log``
    or ``-log`` is accepted."""
    body = text.strip()
    for suffix in (":log", "-log"):
        if body.endswith(suffix):
            body = body[: -len(suffix)]
    parts = body.split(":")
    if len(parts) != 3:
        raise UsageError(f"lambda grid must look like lo:hi:count, got {text!r}")
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    if not (0 < lo <= hi) or count < 1:
        raise UsageError(f"lambda grid needs 0 < lo <= hi and count >= 1, got {text!r}")
    if count == 1:
        return [lo]
    return default_lambda_grid(lo, hi, count)


def _fairness_mode(text: str) -> str:
    mode = text.strip().replace("-", "_")
    if mode not in ("assigned", "per_threshold_global"):
        raise UsageError(f"unknown fairness mode {text!r}")
    return mode


def _default_partitions(n_envs: int) -> tuple[int, ...]:
    # the built-in set for N=24 skips p=8; any other N uses all of its divisors
    if n_envs == 24:
        return DEFAULT_PARTITIONS
    return tuple(k for k in range(1, n_envs + 1) if n_envs % k == 0)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pirm-lab",
        description="Partial-IRM risk/fairness experiments on Gaussian mixtures and a linear SEM.",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="INI config file")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--sigma", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--mu1", type=float)
    p.add_argument("--mu2", type=float)
    p.add_argument("--n-envs", type=int, dest="n_envs")
    p.add_argument("--lambda", type=float, dest="lam")
    p.add_argument("--lambda-grid", dest="lambda_grid", help="lo:hi:count, log spaced")
    p.add_argument("--partitions", "--n-parts", dest="partitions",
                   help="comma-separated partition counts")
    p.add_argument("--fairness-mode", dest="fairness_mode",
                   help="assigned | per-threshold-global")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-samples", type=int, dest="n_samples", help="SEM samples per cell")
    p.add_argument("--svg", action="store_true", help="also write SVG plots")
    return p


def _read_config(path: Path | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path is None:
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            cfg.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for section in cfg.sections():
        if section == "common":
            allowed = COMMON_KEYS
        elif section.startswith("scenario") or section == "lambda_sweep":
            allowed = SCENARIO_KEYS
        elif section == "sem":
            allowed = SEM_KEYS
        else:
            raise UsageError(f"{path}: unknown section [{section}]")
        unknown = set(cfg[section]) - set(allowed)
        if unknown:
            raise UsageError(f"{path}: unknown keys in [{section}]: {sorted(unknown)}")
    return cfg


def _scenario_from(values: dict, sigma: float, delta: float) -> ScenarioConfig:
    n_envs = int(values.get("n_envs", 24))
    partitions = (tuple(_ints(values["partitions"])) if "partitions" in values
                  else _default_partitions(n_envs))
    return ScenarioConfig(
        mu1=float(values.get("mu1", 1.0)),
        mu2=float(values.get("mu2", 2.0)),
        sigma=float(values.get("sigma", sigma)),
        delta=float(values.get("delta", delta)),
        n_envs=n_envs,
        lam=float(values.get("lambda", DEFAULT_LAMBDA)),
        partition_counts=partitions,
        fairness_mode=_fairness_mode(values.get("fairness_mode", "assigned")),
    )


def _flag_values(args: argparse.Namespace) -> dict:
    names = ("sigma", "delta", "mu1", "mu2", "n_envs", "lam", "lambda_grid",
             "partitions", "fairness_mode", "seed", "n_samples")
    out = {}
    for name in names:
        value = getattr(args, name)
        if value is not None:
            out["lambda" if name == "lam" else name] = value
    return out


def _dedupe(configs: list[ScenarioConfig]) -> list[ScenarioConfig]:
    seen, out = set(), []
    for c in configs:
        key = (c.sigma, c.delta)
        if key not in seen:
            seen.add(key)
            out.append(c)
    return out


def parse_args(argv=None) -> RunManifest:
    """Parse and validate; invalid input exits with status 2."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _resolve(args)
    except (UsageError, ValueError) as exc:
        parser.error(str(exc))


def _resolve(args: argparse.Namespace) -> RunManifest:
    cfg = _read_config(args.config)
    flags = _flag_values(args)
    common = dict(cfg["common"]) if cfg.has_section("common") else {}
    flag_common = {k: str(v) for k, v in flags.items() if k in COMMON_KEYS}

    scenario_sections = [s for s in cfg.sections() if s.startswith("scenario")]
    if scenario_sections:
        raw = [{**common, **dict(cfg[s])} for s in scenario_sections]
    else:
        raw = [{**common, "sigma": str(s), "delta": str(d)} for s, d in DEFAULT_SCENARIOS]
    for values in raw:
        values.update(flag_common)
        for key in ("sigma", "delta"):
            if key in flags:
                values[key] = str(flags[key])
    scenarios = _dedupe([_scenario_from(v, 1.0, 0.1) for v in raw])

    lam_values = {**common}
    if cfg.has_section("lambda_sweep"):
        lam_values.update(cfg["lambda_sweep"])
    lam_values.update(flag_common)
    for key in ("sigma", "delta"):
        if key in flags:
            lam_values[key] = str(flags[key])
    lambda_scenario = _scenario_from(lam_values, 0.1, 0.1)
    grid_text = lam_values.get("lambda_grid")
    lambda_grid = parse_lambda_grid(grid_text) if grid_text else default_lambda_grid()

    sem_values = dict(cfg["sem"]) if cfg.has_section("sem") else {}
    seed = int(flags.get("seed", sem_values.get("seed", 0)))
    sem_kwargs = {"seed": seed}
    if "sigma_e" in sem_values:
        sem_kwargs["sigma_e"] = tuple(_floats(sem_values["sigma_e"]))
    if "f_values" in sem_values:
        sem_kwargs["f_values"] = tuple(_floats(sem_values["f_values"]))
    n_samples = flags.get("n_samples", sem_values.get("n_samples"))
    if n_samples is not None:
        sem_kwargs["n_samples"] = int(n_samples)
    sem = SemScenario(**sem_kwargs)

    return RunManifest(
        command=args.command,
        config_path=args.config,
        overrides=flags,
        output_dir=args.out,
        emit_svg=args.svg,
        seed=seed,
        scenarios=scenarios,
        lambda_scenario=lambda_scenario,
        lambda_grid=lambda_grid,
        sem=sem,
    )


def _summary(records) -> None:
    for r in records:
        print(
            f"{r.scenario_label:28s} p={r.n_parts:<3d} lambda={r.lam:<10.4g} "
            f"risk={r.global_risk:.6f} fairness={r.fairness:.3e}"
        )


def run(manifest: RunManifest) -> None:
    out = manifest.output_dir
    out.mkdir(parents=True, exist_ok=True)
    if manifest.command in ("sweep-partitions", "all"):
        records = [r for c in manifest.scenarios for r in run_partition_sweep(c)]
        write_csv(records, out / "partitions.csv")
        if manifest.emit_svg:
            write_svg_plots(records, out / "svg")
        _summary(records)
    if manifest.command in ("sweep-lambda", "all"):
        records = run_lambda_sweep(manifest.lambda_scenario, manifest.lambda_grid)
        write_csv(records, out / "lambda.csv")
        if manifest.emit_svg:
            write_svg_plots(records, out / "svg")
        _summary(records)
    if manifest.command in ("sem", "all"):
        report = run_sem_experiment(manifest.sem)
        write_sem_csv(report, out / "sem_cells.csv", out / "sem_summary.csv")
        for m in report.methods:
            fits = ", ".join(f"{k}:{f.name}" for k, f in m.fits.items())
            print(f"{m.method:12s} mean_mse={m.mean_mse:.4f} fairness={m.fairness:.4f} [{fits}]")


def main(argv=None) -> int:
    manifest = parse_args(argv)
    try:
        run(manifest)
    except (OSError, ArithmeticError, SingularFitError, NoInvariantSubsetError) as exc:
        print(f"pirm-lab: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
