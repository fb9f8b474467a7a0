"""Tests for src.experiments and src.report."""

import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from src.config import (
    AnsatzConfig,
    DataConfig,
    ExperimentConfig,
    OptimizerConfig,
    ReportConfig,
    preset,
)
from src.consensus import build_graph, run_cdqkl
from src.errors import ConfigError
from src.experiments import (
    ansatz_for,
    grad_mode_of,
    kernel_summary,
    node_shards,
    prepare_data,
    run_table1,
    run_table2,
    seed_streams,
    svm_summary,
)
from src.report import MetricsReport, Table1Report, to_json, write_report


def _small_config(iterations: int = 3, **optimizer: object) -> ExperimentConfig:
    return ExperimentConfig(
        ansatz=AnsatzConfig(n_qubits=2, n_layers=2),
        optimizer=OptimizerConfig(iterations=iterations, **optimizer),  # type: ignore[arg-type]
        data=DataConfig(n_points=48),
        report=ReportConfig(eval_every=1),
        seed=4,
    )


@pytest.fixture(scope="module")
def table2_report() -> MetricsReport:
    return run_table2(_small_config())


# ── Data preparation ─────────────────────────────────────────────────


def test_desk_split_sizes() -> None:
    config = preset("desk")
    train, test = prepare_data(config, seed_streams(config.seed))
    assert (len(train), len(test)) == (160, 40)
    assert train.features.min() >= 0.0 and train.features.max() <= math.pi
    assert test.features.min() >= 0.0 and test.features.max() <= math.pi


def test_seed_streams_are_independent() -> None:
    streams = seed_streams(0)
    draws = {
        int(np.random.default_rng(s).integers(1 << 30))
        for s in (streams.data, streams.split, streams.sharding, streams.test_sharding)
    }
    assert len(draws) == 4
    assert streams.training == seed_streams(0).training


def test_node_shards_partition_both_splits() -> None:
    config = _small_config()
    streams = seed_streams(config.seed)
    train, test = prepare_data(config, streams)
    train_shards, test_shards = node_shards(config, train, test, streams)
    assert len(train_shards) == len(test_shards) == 4
    assert sum(len(s) for s in train_shards) == len(train)
    assert sum(len(s) for s in test_shards) == len(test)


def test_kernel_summary_is_positive_semidefinite() -> None:
    config = _small_config()
    train, _ = prepare_data(config, seed_streams(config.seed))
    summary = kernel_summary(config, train)
    assert summary["min_eigenvalue"] >= -1e-9
    assert len(summary["gram"]) == len(train)
    assert -1.0 <= summary["alignment"] <= 1.0


@pytest.mark.parametrize("kernel", ["linear", "gaussian", "quantum"])
def test_svm_summary_reports_accuracies(kernel: str) -> None:
    summary = svm_summary(_small_config(), kernel, 1.0)
    assert 0.0 <= summary["train_accuracy"] <= 1.0
    assert summary["test_accuracy"] is not None


def test_svm_summary_rejects_unknown_kernel() -> None:
    with pytest.raises(ValueError):
        svm_summary(_small_config(), "polynomial", 1.0)


# ── Table 1 ──────────────────────────────────────────────────────────


def test_table1_rows() -> None:
    report = run_table1(_small_config())
    assert [row.name for row in report.rows] == [
        "Linear SVM",
        "Gaussian SVM (C = 1)",
        "Gaussian SVM (C = 1000)",
        "Central QSVM (C = 1)",
        "Central QSVM (C = 1000)",
    ]
    for row in report.rows:
        assert 0.0 <= row.train_accuracy <= 1.0
    assert len(report.central_theta) == 4
    assert "Central QSVM (C = 1000)" in report.render_text()


def test_table1_step_callback_sees_every_iteration() -> None:
    seen: list[int] = []
    run_table1(_small_config(iterations=4), on_step=seen.append)
    assert seen == [1, 2, 3, 4]


# ── Table 2 ──────────────────────────────────────────────────────────


def test_table2_shape(table2_report: MetricsReport) -> None:
    assert [n.node for n in table2_report.nodes] == [0, 1, 2, 3]
    assert table2_report.iterations == [0, 1, 2, 3]
    assert len(table2_report.disagreement) == 4
    assert table2_report.sigma2 == pytest.approx(1.0 / 3.0)
    assert table2_report.central is not None
    assert len(table2_report.final_thetas) == 4


def test_table2_is_reproducible(table2_report: MetricsReport) -> None:
    again = run_table2(_small_config())
    assert to_json(again, include_wall_time=False) == to_json(table2_report, include_wall_time=False)


def test_before_metrics_match_untrained_run(table2_report: MetricsReport) -> None:
    untrained = run_table2(_small_config(iterations=0))
    assert [n.before for n in untrained.nodes] == [n.before for n in table2_report.nodes]
    assert [n.after for n in untrained.nodes] == [n.before for n in untrained.nodes]


def test_text_table_lists_every_node(table2_report: MetricsReport) -> None:
    text = table2_report.render_text()
    assert "Local Train" in text
    assert "Whole Test" in text
    assert "Node 4" in text
    assert "Mean" in text
    assert "Central QSVM" in text


def test_write_report_creates_json_and_text(table2_report: MetricsReport, tmp_path: Path) -> None:
    json_path, text_path = write_report(table2_report, tmp_path / "runs" / "table2.json")
    assert text_path == tmp_path / "runs" / "table2.txt"
    data = json.loads(json_path.read_text(encoding="utf-8"))
    assert data["experiment"] == "table2"
    assert data["config"]["ansatz"]["n_qubits"] == 2
    assert "wall_time" in data
    assert text_path.read_text(encoding="utf-8").startswith("Distributed-node")


def test_mean_metric(table2_report: MetricsReport) -> None:
    values = [n.after.whole_train for n in table2_report.nodes]
    assert table2_report.mean_metric("after", "whole_train") == pytest.approx(np.mean(values))


def test_global_loss_decreases_with_small_steps() -> None:
    config = _small_config(iterations=6, eta=0.05)
    config = replace(config, report=ReportConfig(eval_every=1, central_comparison=False))
    report = run_table2(config)
    assert report.global_loss[-1] < report.global_loss[0]
    assert report.central is None


def test_stochastic_batch_must_fit_every_shard() -> None:
    config = _small_config(grad_mode="stochastic", q=40)
    with pytest.raises(ConfigError) as info:
        run_table2(config)
    assert info.value.details["key"] == "optimizer.q"


# ── Desk preset ──────────────────────────────────────────────────────


@pytest.fixture(scope="module")
def desk_table1() -> Table1Report:
    return run_table1(preset("desk"))


@pytest.fixture(scope="module")
def desk_table2() -> MetricsReport:
    return run_table2(preset("desk"))


def test_desk_table1_model_ordering(desk_table1: Table1Report) -> None:
    test_acc = {row.name: row.test_accuracy for row in desk_table1.rows}
    assert test_acc["Linear SVM"] <= 0.60
    assert test_acc["Gaussian SVM (C = 1000)"] >= 0.95
    assert test_acc["Central QSVM (C = 1000)"] >= test_acc["Gaussian SVM (C = 1)"] - 0.05


def test_desk_training_does_not_hurt_whole_test(desk_table2: MetricsReport) -> None:
    before = desk_table2.mean_metric("before", "whole_test")
    after = desk_table2.mean_metric("after", "whole_test")
    assert before is not None and after is not None
    assert after >= before


def test_desk_training_lowers_mean_local_loss(desk_table2: MetricsReport) -> None:
    assert np.mean(desk_table2.node_losses[-1]) <= np.mean(desk_table2.node_losses[0])
    assert desk_table2.wall_time < 60.0


def test_desk_consensus_pulls_distinct_starts_together() -> None:
    config = preset("desk")
    streams = seed_streams(config.seed)
    train, test = prepare_data(config, streams)
    train_shards, _ = node_shards(config, train, test, streams)
    spec = ansatz_for(config, train.feature_dim)
    start = np.random.default_rng(config.seed).uniform(
        -math.pi / 4, math.pi / 4, size=(config.network.n_nodes, spec.n_params)
    )
    history = run_cdqkl(
        spec,
        train_shards,
        build_graph(config.network.topology, config.network.n_nodes),
        config.optimizer.eta,
        config.optimizer.iterations,
        grad_mode_of(config, train_shards),
        eval_every=config.report.eval_every,
        rng_seed=streams.training,
        initial_thetas=start,
        with_metrics=False,
    )
    assert history.disagreement[-1] <= 0.1 * history.disagreement[0]
