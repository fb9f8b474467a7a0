"""Tests for src.datasets."""

import logging
import math
import struct
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.datasets import (
    apply_scaler,
    extract_features,
    fit_scaler,
    label_for,
    load_csv,
    save_csv,
    shard,
    split_indices,
    synth_dataset,
)
from src.errors import DataError
from src.qkernel import LabeledDataset
from src.svm import accuracy, gaussian_kernel, linear_kernel, predict, smo_train

LABEL_MAP = {"*_sad*": -1, "*_surprise*": 1}


def _write_tone(path: Path, freq: float, sr: int = 8000, seconds: float = 3.5) -> None:
    n = np.arange(int(sr * seconds))
    pcm = np.round(0.5 * 32767 * np.sin(2 * math.pi * freq * n / sr)).astype("<i2")
    payload = pcm.tobytes()
    fmt = struct.pack("<4sIHHIIHH", b"fmt ", 16, 1, 1, sr, 2 * sr, 2, 16)
    body = b"WAVE" + fmt + struct.pack("<4sI", b"data", len(payload)) + payload
    path.write_bytes(struct.pack("<4sI", b"RIFF", len(body)) + body)


def _fit_accuracy(
    K: np.ndarray, K_test: np.ndarray, train: LabeledDataset, test: LabeledDataset, C: float
) -> tuple[float, float]:
    model = smo_train(K, train.labels, C=C)
    return (
        accuracy(predict(model, K), train.labels),
        accuracy(predict(model, K_test), test.labels),
    )


# ── CSV ──────────────────────────────────────────────────────────────


def test_load_csv_values(tmp_path: Path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("f1,f2,label\n0.5,1.25,1\n-2,3e-1,-1\n", encoding="utf-8")
    dataset = load_csv(path)
    assert_allclose(dataset.features, [[0.5, 1.25], [-2.0, 0.3]])
    assert dataset.labels.tolist() == [1, -1]


def test_named_labels_are_accepted(tmp_path: Path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("f1,label\n1,Sad\n2,Surprise\n3,+1\n", encoding="utf-8")
    assert load_csv(path).labels.tolist() == [-1, 1, 1]


def test_ragged_row_names_its_line(tmp_path: Path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("f1,f2,label\n1,2,1\n3,-1\n", encoding="utf-8")
    with pytest.raises(DataError, match="line 3"):
        load_csv(path)


def test_bad_label_is_rejected(tmp_path: Path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("f1,label\n1,maybe\n", encoding="utf-8")
    with pytest.raises(DataError, match="line 2"):
        load_csv(path)


def test_empty_file_is_rejected(tmp_path: Path) -> None:
    path = tmp_path / "empty.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(DataError):
        load_csv(path)


def test_missing_file_is_a_data_error(tmp_path: Path) -> None:
    with pytest.raises(DataError, match="not found"):
        load_csv(tmp_path / "nope.csv")


def test_save_then_load_is_exact(tmp_path: Path) -> None:
    rng = np.random.default_rng(0)
    dataset = LabeledDataset(rng.standard_normal((12, 3)), np.where(np.arange(12) % 2 == 0, 1, -1))
    path = tmp_path / "out" / "features.csv"
    save_csv(dataset, path)
    loaded = load_csv(path)
    assert np.array_equal(loaded.features, dataset.features)
    assert np.array_equal(loaded.labels, dataset.labels)


# ── WAV extraction ───────────────────────────────────────────────────


def test_label_for_is_case_insensitive() -> None:
    assert label_for("OAF_back_SAD.wav", LABEL_MAP) == -1
    assert label_for("YAF_dog_surprise.wav", LABEL_MAP) == 1
    assert label_for("neutral.wav", LABEL_MAP) is None


def test_extract_features_skips_unlabeled_files(
    tmp_path: Path, caplog: pytest.LogCaptureFixture
) -> None:
    _write_tone(tmp_path / "a_sad.wav", 220.0)
    _write_tone(tmp_path / "b_surprise.wav", 880.0)
    _write_tone(tmp_path / "c_sad.wav", 330.0)
    _write_tone(tmp_path / "neutral.wav", 440.0)
    with caplog.at_level(logging.WARNING, logger="src.datasets"):
        dataset = extract_features(tmp_path, LABEL_MAP)
    assert dataset.features.shape == (3, 15)
    assert dataset.labels.tolist() == [-1, 1, -1]
    assert dataset.names == ["a_sad", "b_surprise", "c_sad"]
    assert "neutral.wav" in caplog.text


def test_every_augmentation_adds_a_row(tmp_path: Path) -> None:
    _write_tone(tmp_path / "a_sad.wav", 220.0)
    _write_tone(tmp_path / "b_surprise.wav", 880.0)
    _write_tone(tmp_path / "c_sad.wav", 330.0)
    techniques = ["noise", "stretch", "shift", "pitch"]
    dataset = extract_features(tmp_path, LABEL_MAP, techniques, seed=3)
    assert dataset.features.shape == (15, 15)
    assert dataset.names[:5] == ["a_sad"] + [f"a_sad+{t}" for t in techniques]
    assert np.all(np.isfinite(dataset.features))


def test_extraction_is_seeded(tmp_path: Path) -> None:
    _write_tone(tmp_path / "a_sad.wav", 220.0)
    first = extract_features(tmp_path, LABEL_MAP, ["noise", "shift"], seed=5)
    second = extract_features(tmp_path, LABEL_MAP, ["noise", "shift"], seed=5, workers=2)
    assert np.array_equal(first.features, second.features)


def test_empty_directory_is_rejected(tmp_path: Path) -> None:
    with pytest.raises(DataError):
        extract_features(tmp_path, LABEL_MAP)


# ── Synthetic data ───────────────────────────────────────────────────


def test_two_gaussians_are_linearly_separable() -> None:
    dataset = synth_dataset("two_gaussians", 40, 0.1, seed=7)
    K = linear_kernel(dataset.features)
    model = smo_train(K, dataset.labels, C=1.0)
    assert accuracy(predict(model, K), dataset.labels) == 1.0


@pytest.mark.parametrize("kind", ["xor_blobs", "two_gaussians", "ring_vs_core"])
def test_synthetic_data_is_seeded_and_balanced(kind: str) -> None:
    first = synth_dataset(kind, 50, 0.1, seed=1)
    second = synth_dataset(kind, 50, 0.1, seed=1)
    assert np.array_equal(first.features, second.features)
    assert int(first.labels.sum()) == 0


def test_xor_needs_a_nonlinear_kernel() -> None:
    dataset = synth_dataset("xor_blobs", 200, 0.1, seed=0)
    train_idx, test_idx = split_indices(200, 0.2, seed=1)
    train, test = dataset.subset(train_idx), dataset.subset(test_idx)
    linear_train, _ = _fit_accuracy(
        linear_kernel(train.features), linear_kernel(test.features, train.features), train, test, 1.0
    )
    gaussian_train, gaussian_test = _fit_accuracy(
        gaussian_kernel(train.features, 0.5),
        gaussian_kernel(test.features, 0.5, train.features),
        train,
        test,
        1000.0,
    )
    assert linear_train < gaussian_train
    assert gaussian_test >= 0.95


def test_unknown_synthetic_kind_is_rejected() -> None:
    with pytest.raises(DataError):
        synth_dataset("spirals", 10, 0.1, seed=0)


# ── Scaling ──────────────────────────────────────────────────────────


def test_scaler_maps_onto_angles() -> None:
    train = LabeledDataset(np.array([[0.0, 5.0], [2.0, 5.0]]), np.array([1, -1]))
    scaled = apply_scaler(fit_scaler(train), train)
    assert_allclose(scaled.features, [[0.0, math.pi / 2], [math.pi, math.pi / 2]])


def test_scaler_clamps_unseen_values() -> None:
    scaler = fit_scaler(LabeledDataset(np.array([[0.0], [2.0]]), np.array([1, -1])))
    test = LabeledDataset(np.array([[3.0], [-1.0], [1.0]]), np.array([1, -1, 1]))
    assert_allclose(apply_scaler(scaler, test).features[:, 0], [math.pi, 0.0, math.pi / 2])


def test_scaler_checks_dimension() -> None:
    scaler = fit_scaler(LabeledDataset(np.zeros((2, 2)), np.array([1, -1])))
    with pytest.raises(DataError):
        apply_scaler(scaler, LabeledDataset(np.zeros((2, 3)), np.array([1, -1])))


# ── Splitting and sharding ───────────────────────────────────────────


def test_split_sizes_and_disjointness() -> None:
    train_idx, test_idx = split_indices(200, 0.2, seed=0)
    assert (train_idx.shape[0], test_idx.shape[0]) == (160, 40)
    assert set(train_idx.tolist()).isdisjoint(test_idx.tolist())
    assert train_idx.tolist() == sorted(train_idx.tolist())


def test_iid_shards_cover_the_data() -> None:
    dataset = synth_dataset("xor_blobs", 160, 0.1, seed=2)
    shards = shard(dataset, 4, "iid", seed=0)
    assert [len(s) for s in shards] == [40, 40, 40, 40]
    rows = np.vstack([s.features for s in shards])
    assert len({tuple(r) for r in rows}) == 160
    assert {tuple(r) for r in rows} == {tuple(r) for r in dataset.features}


def test_label_skew_unbalances_some_node() -> None:
    dataset = synth_dataset("xor_blobs", 160, 0.1, seed=2)
    shards = shard(dataset, 4, "label_skew", seed=0, alpha=0.3)
    assert sum(len(s) for s in shards) == 160
    assert all(len(s) > 0 for s in shards)
    majority = [max(np.mean(s.labels > 0), np.mean(s.labels < 0)) for s in shards]
    assert max(majority) >= 0.7


def test_more_nodes_than_points_is_rejected() -> None:
    dataset = synth_dataset("two_gaussians", 3, 0.1, seed=0)
    with pytest.raises(DataError):
        shard(dataset, 4)


def test_empty_shards_allowed_on_request() -> None:
    dataset = synth_dataset("two_gaussians", 3, 0.1, seed=0)
    shards = shard(dataset, 4, allow_empty=True)
    assert sorted(len(s) for s in shards) == [0, 1, 1, 1]
