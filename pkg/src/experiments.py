"""Experiments module – seeded data preparation and the Table 1 / Table 2 runners.

All randomness of an experiment flows from ``config.seed`` through named
``SeedSequence`` substreams, so re-running a config reproduces the report
exactly (wall time aside) whatever the worker count.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.config import ExperimentConfig
from src.consensus import (
    GradMode,
    build_graph,
    central_descent,
    initial_theta,
    metropolis_weights,
    run_cdqkl,
    training_streams,
)
from src.datasets import (
    apply_scaler,
    extract_features,
    fit_scaler,
    labeled_wavs,
    load_csv,
    shard,
    split_indices,
    synth_dataset,
    train_test_split,
)
from src.errors import ConfigError, DataError
from src.qkernel import (
    AnsatzSpec,
    LabeledDataset,
    alignment,
    cross_kernel,
    kernel_matrix,
    kernel_matrix_parallel,
    min_eigenvalue,
    target_kernel,
)
from src.report import CentralMetrics, MetricsReport, ModelRow, NodeReport, Table1Report
from src.svm import accuracy, gaussian_kernel, linear_kernel, predict, smo_train

logger = logging.getLogger(__name__)

StepCallback = Callable[[int], None]


@dataclass(frozen=True)
class SeedStreams:
    """Independent substreams of one root seed."""

    data: np.random.SeedSequence
    split: np.random.SeedSequence
    sharding: np.random.SeedSequence
    test_sharding: np.random.SeedSequence
    training: int


def seed_streams(seed: int) -> SeedStreams:
    data, split, sharding, test_sharding, training = np.random.SeedSequence(seed).spawn(5)
    return SeedStreams(data, split, sharding, test_sharding, int(training.generate_state(1)[0]))


# ── Data ─────────────────────────────────────────────────────────────


def load_dataset(config: ExperimentConfig, streams: SeedStreams) -> LabeledDataset:
    """Raw (unscaled) points of a synthetic or CSV source."""
    data = config.data
    if data.source == "synthetic":
        return synth_dataset(data.kind, data.n_points, data.noise, streams.data)
    if data.source == "csv":
        return load_csv(Path(data.csv_path or ""))
    raise DataError(f"data source {data.source!r} has no single-file loader")


def prepare_data(
    config: ExperimentConfig, streams: SeedStreams
) -> tuple[LabeledDataset, LabeledDataset]:
    """Split, then fit the angle scaler on the training rows and apply it to both sides.

    WAV sources split by file before featurizing so augmented copies only ever
    land in the training split.
    """
    data = config.data
    if data.source == "wav":
        files = labeled_wavs(Path(data.wav_dir or ""), data.label_map)
        train_idx, test_idx = split_indices(len(files), config.split.test_fraction, streams.split)
        train = extract_features(
            Path(data.wav_dir or ""),
            data.label_map,
            data.augment,
            seed=int(streams.data.generate_state(1)[0]),
            files=[files[i] for i in train_idx],
            workers=config.workers,
        )
        if test_idx.shape[0]:
            test = extract_features(
                Path(data.wav_dir or ""),
                data.label_map,
                files=[files[i] for i in test_idx],
                workers=config.workers,
            )
        else:
            test = train.subset([])
    else:
        raw = load_dataset(config, streams)
        train, test = train_test_split(raw, config.split.test_fraction, streams.split)
    scaler = fit_scaler(train)
    return apply_scaler(scaler, train), apply_scaler(scaler, test)


def ansatz_for(config: ExperimentConfig, feature_dim: int) -> AnsatzSpec:
    return AnsatzSpec(config.ansatz.n_qubits, config.ansatz.n_layers, feature_dim)


def grad_mode_of(config: ExperimentConfig, shards: Sequence[LabeledDataset]) -> GradMode:
    """Gradient mode for training on ``shards``; the batch size must fit every shard."""
    mode = GradMode(config.optimizer.grad_mode, config.optimizer.q)
    if mode.q is not None and mode.kind == "stochastic":
        smallest = min(len(s) for s in shards)
        if mode.q > smallest:
            raise ConfigError(
                f"optimizer.q = {mode.q} exceeds the smallest training shard ({smallest} points)",
                key="optimizer.q",
            )
    return mode


def _accuracies(
    K: np.ndarray,
    K_test: np.ndarray | None,
    train: LabeledDataset,
    test: LabeledDataset,
    C: float,
    tol: float,
) -> tuple[float, float | None]:
    model = smo_train(K, train.labels, C=C, tol=tol)
    train_acc = accuracy(predict(model, K), train.labels)
    if K_test is None or len(test) == 0:
        return train_acc, None
    return train_acc, accuracy(predict(model, K_test), test.labels)


# ── Table 1 ──────────────────────────────────────────────────────────


def train_central_theta(
    config: ExperimentConfig,
    spec: AnsatzSpec,
    train: LabeledDataset,
    training_seed: int,
    on_step: StepCallback | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Shared seeded start and the θ reached by centralized alignment descent."""
    init_seq, sgd_entropy = training_streams(training_seed)
    theta0 = initial_theta(spec, init_seq)
    theta = central_descent(
        spec,
        train,
        theta0,
        config.optimizer.eta,
        config.optimizer.iterations,
        grad_mode_of(config, [train]),
        sgd_entropy,
        on_step=(lambda k, _theta: on_step(k)) if on_step else None,
    )
    return theta0, theta


def run_table1(config: ExperimentConfig, on_step: StepCallback | None = None) -> Table1Report:
    """Classical SVM baselines against the centralized QSVM on one train/test split."""
    started = time.perf_counter()
    streams = seed_streams(config.seed)
    train, test = prepare_data(config, streams)
    gamma = config.svm.gamma or 1.0 / train.feature_dim
    tol = config.svm.tol
    has_test = len(test) > 0

    rows: list[ModelRow] = []
    K_lin = linear_kernel(train.features)
    K_lin_test = linear_kernel(test.features, train.features) if has_test else None
    linear = _accuracies(K_lin, K_lin_test, train, test, config.svm.C, tol)
    rows.append(ModelRow("Linear SVM", config.svm.C, *linear))

    K_rbf = gaussian_kernel(train.features, gamma)
    K_rbf_test = gaussian_kernel(test.features, gamma, train.features) if has_test else None
    for C in (1.0, 1000.0):
        scores = _accuracies(K_rbf, K_rbf_test, train, test, C, tol)
        rows.append(ModelRow(f"Gaussian SVM (C = {C:g})", C, *scores))

    spec = ansatz_for(config, train.feature_dim)
    theta0, theta = train_central_theta(config, spec, train, streams.training, on_step)
    K_star = target_kernel(train.labels)
    K_q = kernel_matrix(spec, train.features, theta)
    K_q_test = cross_kernel(spec, train.features, test.features, theta) if has_test else None
    for C in (1.0, 1000.0):
        scores = _accuracies(K_q, K_q_test, train, test, C, tol)
        rows.append(ModelRow(f"Central QSVM (C = {C:g})", C, *scores))

    before = alignment(kernel_matrix(spec, train.features, theta0), K_star)
    after = alignment(K_q, K_star)
    logger.info("central alignment %.4f -> %.4f", before, after)
    return Table1Report(
        rows=rows,
        config=config.to_dict(),
        seed=config.seed,
        central_alignment_before=before,
        central_alignment_after=after,
        central_theta=theta.tolist(),
        wall_time=time.perf_counter() - started,
    )


# ── Table 2 ──────────────────────────────────────────────────────────


def node_shards(
    config: ExperimentConfig, train: LabeledDataset, test: LabeledDataset, streams: SeedStreams
) -> tuple[list[LabeledDataset], list[LabeledDataset]]:
    """Training shards (nonempty) and local test shards, cut the same way on separate streams."""
    n, mode, alpha = config.network.n_nodes, config.sharding.mode, config.sharding.alpha
    train_shards = shard(train, n, mode, streams.sharding, alpha)
    test_shards = shard(test, n, mode, streams.test_sharding, alpha, allow_empty=True)
    return train_shards, test_shards


def run_table2(config: ExperimentConfig, on_step: StepCallback | None = None) -> MetricsReport:
    """Full CDQKL run with per-node before/after metrics and the centralized comparison."""
    started = time.perf_counter()
    streams = seed_streams(config.seed)
    train, test = prepare_data(config, streams)
    train_shards, test_shards = node_shards(config, train, test, streams)
    spec = ansatz_for(config, train.feature_dim)
    graph = build_graph(config.network.topology, config.network.n_nodes, config.network.edges)
    opt = config.optimizer

    history = run_cdqkl(
        spec,
        train_shards,
        graph,
        opt.etas if opt.etas is not None else opt.eta,
        opt.iterations,
        grad_mode_of(config, train_shards),
        eval_every=config.report.eval_every,
        rng_seed=streams.training,
        test_shards=test_shards,
        svm_c=config.svm.C,
        svm_tol=config.svm.tol,
        workers=config.workers,
        on_step=on_step,
    )

    central = None
    if config.report.central_comparison:
        _, theta = train_central_theta(config, spec, train, streams.training)
        K = kernel_matrix(spec, train.features, theta)
        K_test = cross_kernel(spec, train.features, test.features, theta) if len(test) else None
        whole_train, whole_test = _accuracies(K, K_test, train, test, config.svm.C, config.svm.tol)
        central = CentralMetrics(whole_train, whole_test, theta.tolist())

    nodes = [NodeReport(i, b, a) for i, (b, a) in enumerate(zip(history.before, history.after))]
    return MetricsReport(
        nodes=nodes,
        iterations=history.iterations,
        node_losses=history.node_losses,
        global_loss=history.global_loss,
        disagreement=history.disagreement,
        sigma2=metropolis_weights(graph).sigma2,
        config=config.to_dict(),
        seed=config.seed,
        final_thetas=history.final_thetas,
        central=central,
        wall_time=time.perf_counter() - started,
    )


# ── Single-purpose commands ──────────────────────────────────────────


def kernel_summary(
    config: ExperimentConfig, dataset: LabeledDataset, theta: np.ndarray | None = None
) -> dict[str, object]:
    """Gram matrix of ``dataset`` (already angle-scaled), its min eigenvalue and label alignment.

    Without ``theta`` the seeded shared initial parameters are used.
    """
    spec = ansatz_for(config, dataset.feature_dim)
    if theta is None:
        theta = initial_theta(spec, training_streams(seed_streams(config.seed).training)[0])
    K = kernel_matrix_parallel(spec, dataset.features, theta, workers=config.workers)
    return {
        "theta": spec.check_theta(theta).tolist(),
        "gram": K.tolist(),
        "min_eigenvalue": min_eigenvalue(K),
        "alignment": alignment(K, target_kernel(dataset.labels)),
    }


def svm_summary(config: ExperimentConfig, kernel: str, C: float) -> dict[str, object]:
    """Train one SVM with a named kernel on the config's split and report its accuracies."""
    streams = seed_streams(config.seed)
    train, test = prepare_data(config, streams)
    has_test = len(test) > 0
    if kernel == "linear":
        K, K_test = linear_kernel(train.features), linear_kernel(test.features, train.features)
    elif kernel == "gaussian":
        gamma = config.svm.gamma or 1.0 / train.feature_dim
        K = gaussian_kernel(train.features, gamma)
        K_test = gaussian_kernel(test.features, gamma, train.features)
    elif kernel == "quantum":
        spec = ansatz_for(config, train.feature_dim)
        theta = initial_theta(spec, training_streams(streams.training)[0])
        K = kernel_matrix(spec, train.features, theta)
        K_test = cross_kernel(spec, train.features, test.features, theta)
    else:
        raise DataError(f"unknown kernel {kernel!r}; expected linear, gaussian or quantum")
    model = smo_train(K, train.labels, C=C, tol=config.svm.tol)
    return {
        "kernel": kernel,
        "C": C,
        "train_accuracy": accuracy(predict(model, K), train.labels),
        "test_accuracy": accuracy(predict(model, K_test), test.labels) if has_test else None,
        "support_vectors": int(model.support_indices.shape[0]),
        "iterations": model.iterations,
        "converged": model.converged,
    }
