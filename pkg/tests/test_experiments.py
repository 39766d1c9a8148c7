import pytest

from swarmcompose.experiments import ExperimentConfig, run_experiment

EXP1_COLUMNS = ["sla_bin", "method", "violation_rate", "mean_runtime_s", "violation_se",
                "runtime_se", "mean_latency", "latency_se", "n"]


def _strip_runtime(rows):
    return [{k: v for k, v in r.items() if k != "runtime_s"} for r in rows]


def test_exp1_schema_and_determinism():
    cfg = ExperimentConfig(requests_per_bin=2, bins=(1e-3, 2e-3), cap=20)
    a = run_experiment("exp1", cfg)
    assert list(a.summary[0]) == EXP1_COLUMNS
    assert len(a.summary) == 6 and {r["method"] for r in a.summary} == {"heuristic", "bf_direct", "bf_clustered"}
    assert a.summary_csv().splitlines()[1] == ",".join(EXP1_COLUMNS)
    b = run_experiment("exp1", cfg)
    assert _strip_runtime(a.rows) == _strip_runtime(b.rows)


def test_exp3_frequencies_sum_to_one():
    res = run_experiment("exp3", ExperimentConfig(requests_per_bin=3, bins=(100, 300)))
    for nominal in (100, 300):
        total = sum(r["frequency"] for r in res.summary if r["devices_bin"] == nominal)
        assert total == pytest.approx(1.0)


def test_exp2_checks_and_write(tmp_path):
    res = run_experiment("exp2", ExperimentConfig(requests_per_bin=2, bins=(100, 200)))
    assert set(res.checks) == {"framework", "direct", "clustered", "parallel", "dominance"}
    assert all("framework_paired_latency" in r for r in res.summary)
    paths = res.write(tmp_path)
    assert [p.name for p in paths] == ["exp2_bins.csv", "exp2_requests.csv", "exp2_summary.json"]
    assert paths[0].read_text().startswith("# swarmcompose 0.1.0 experiment=exp2 seed=0 config=")


def test_exp4_scales_and_workers():
    cfg = ExperimentConfig(requests_per_bin=2, bins=(50, 150), scales=("small", "medium"), workers=2)
    par = run_experiment("exp4", cfg)
    seq = run_experiment("exp4", ExperimentConfig(requests_per_bin=2, bins=(50, 150),
                                                  scales=("small", "medium")))
    assert par.rows == seq.rows
    assert set(par.checks) == {"small", "medium"}


def test_large_override_and_unknown():
    cfg = ExperimentConfig(large_override=(20, 4))
    assert cfg.scale("large").entry_drones == 20 and cfg.scale("small") == "small"
    assert cfg.digest() != ExperimentConfig().digest()
    with pytest.raises(ValueError):
        run_experiment("exp9")


def test_overfull_swarm_counts_as_unstable():
    # the small swarm hosts at most 10 * 73 devices
    res = run_experiment("exp4", ExperimentConfig(requests_per_bin=2, bins=(900,), scales=("small",),
                                                  perturbation=0.0))
    assert [r["stable"] for r in res.rows] == [False, False]
    assert res.checks["small"]["max_stable"] is None
