import numpy as np
import pytest

from pirm_lab.envs import EnvironmentFamily, env_risks, fairness_vrex
from pirm_lab.experiments import (
    DEFAULT_PARTITIONS,
    ScenarioConfig,
    default_lambda_grid,
    default_scenarios,
    run_lambda_sweep,
    run_default_partition_sweeps,
    run_partition_sweep,
    scenario_label,
    thread_count,
)
from pirm_lab.gauss import std_normal_cdf

from oracles import irmv1_values


@pytest.fixture(scope="module")
def default_records():
    return run_default_partition_sweeps()


@pytest.fixture(scope="module")
def lambda_records():
    return run_lambda_sweep(ScenarioConfig(sigma=0.1, delta=0.1), [0.0, 0.1, 10.0, 1000.0])


def audit(record, mu1=1.0, mu2=2.0, n_envs=24):
    f = EnvironmentFamily(mu1, mu2, record.sigma, record.delta, n_envs)
    per_env = np.repeat(record.thresholds, n_envs // record.n_parts)
    risks = env_risks(f, per_env)
    if record.fairness_mode == "assigned":
        fair = fairness_vrex(risks)
    else:
        fair = np.mean([fairness_vrex(env_risks(f, np.full(n_envs, t))) for t in record.thresholds])
    return float(np.mean(risks)), float(fair)


def test_labels():
    assert scenario_label(0.1, 0.1) == "sep-large_overlap-high"
    assert scenario_label(1.0, 0.1) == "sep-min_overlap-high"
    assert scenario_label(0.1, 1.0) == "sep-large_overlap-low"
    assert scenario_label(1, 1) == "sep-min_overlap-low"
    assert scenario_label(0.5, 2) == "sigma-0.5_delta-2"


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(partition_counts=(5,))
    with pytest.raises(ValueError):
        ScenarioConfig(lam=-1)
    with pytest.raises(ValueError):
        ScenarioConfig(fairness_mode="other")
    with pytest.raises(ValueError):
        ScenarioConfig(sigma=0)


def test_default_sweep_shape(default_records):
    assert len(default_records) == 28
    labels = [r.scenario_label for r in default_records]
    assert len(set(labels)) == 4
    for label in set(labels):
        ps = [r.n_parts for r in default_records if r.scenario_label == label]
        assert ps == list(DEFAULT_PARTITIONS)
    for r in default_records:
        assert r.lam == 10.0
        assert len(r.thresholds) == r.n_parts
        assert 0 <= r.global_risk <= 1 and r.fairness >= 0


def test_default_records_self_consistent(default_records):
    for r in default_records:
        risk, fair = audit(r)
        assert abs(risk - r.global_risk) <= 1e-12
        assert abs(fair - r.fairness) <= 1e-12


def test_erm_record_sigma_one(default_records):
    for r in default_records:
        if r.n_parts == 24 and r.sigma == 1.0:
            assert r.global_risk == pytest.approx(0.30853753872598689636, abs=1e-9)
            assert r.fairness <= 1e-12


def test_irm_record_high_overlap(default_records):
    (r,) = [r for r in default_records if r.n_parts == 1 and r.sigma == 1.0 and r.delta == 0.1]
    assert r.thresholds[0] == pytest.approx(2.65, abs=1e-4)


@pytest.mark.parametrize("sigma", [0.1, 1.0])
def test_high_overlap_risk_drops_from_irm_to_erm(default_records, sigma):
    recs = {r.n_parts: r for r in default_records if r.sigma == sigma and r.delta == 0.1}
    # oracle: p=1 threshold from a dense scipy grid, p=24 risk Phi(-1/(2 sigma))
    lo, hi = 1 - 6 * sigma, 2 + 23 * 0.1 + 6 * sigma
    ts = np.linspace(lo, hi, 200001)
    t1 = ts[np.argmin(irmv1_values(1, 2, sigma, 0.1, range(24), ts, 10.0))]
    f = EnvironmentFamily(1, 2, sigma, 0.1, 24)
    margin = np.mean(env_risks(f, np.full(24, t1))) - std_normal_cdf(-0.5 / sigma)
    assert margin > 0.03
    got = recs[1].global_risk - recs[24].global_risk
    assert got > 0
    assert got == pytest.approx(margin, abs=1e-6)


def test_lambda_sweep_order_and_count(lambda_records):
    assert len(lambda_records) == 4 * 7
    keys = [(r.lam, r.n_parts) for r in lambda_records]
    assert keys == sorted(keys)


def test_lambda_sweep_erm_rows_constant(lambda_records):
    erm = [(r.global_risk, r.fairness, r.thresholds) for r in lambda_records if r.n_parts == 24]
    assert all(e == erm[0] for e in erm)


def test_lambda_zero_rows_improve_with_partitions(lambda_records):
    risks = [r.global_risk for r in lambda_records if r.lam == 0.0]
    assert all(b <= a + 1e-12 for a, b in zip(risks, risks[1:]))


def test_irm_threshold_keeps_drifting_left_with_lambda(lambda_records):
    # the penalty pushes the single shared threshold into the left tail
    t = [r.thresholds[0] for r in lambda_records if r.n_parts == 1 and r.lam >= 10]
    assert t[0] > t[1]
    assert t[0] < 1.0


def test_lambda_sweep_self_consistent(lambda_records):
    for r in lambda_records:
        risk, fair = audit(r)
        assert abs(risk - r.global_risk) <= 1e-12
        assert abs(fair - r.fairness) <= 1e-12


def test_lambda_sweep_errors():
    with pytest.raises(ValueError):
        run_lambda_sweep(ScenarioConfig(), [])
    with pytest.raises(ValueError):
        run_lambda_sweep(ScenarioConfig(), [-1.0])


def test_default_lambda_grid():
    g = default_lambda_grid()
    assert len(g) == 25
    assert g[0] == pytest.approx(1e-3) and g[-1] == pytest.approx(1e3)
    assert np.allclose(np.diff(np.log10(g)), 0.25)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("PIRM_LAB_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("PIRM_LAB_THREADS", "0")
    assert thread_count() >= 1
    monkeypatch.setenv("PIRM_LAB_THREADS", "-1")
    with pytest.raises(ValueError):
        thread_count()


def test_parallel_and_serial_agree(monkeypatch):
    config = ScenarioConfig(sigma=1.0, delta=1.0)
    monkeypatch.setenv("PIRM_LAB_THREADS", "1")
    serial = run_partition_sweep(config)
    monkeypatch.setenv("PIRM_LAB_THREADS", "4")
    assert run_partition_sweep(config) == serial


def test_per_threshold_global_records():
    configs = default_scenarios(fairness_mode="per_threshold_global")
    recs = run_partition_sweep(configs[1])
    assert all(r.fairness_mode == "per_threshold_global" for r in recs)
    for r in recs:
        _, fair = audit(r)
        assert abs(fair - r.fairness) <= 1e-12
