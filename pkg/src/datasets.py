"""Datasets module – feature CSV I/O, WAV featurization, synthetic data, scaling and sharding."""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fnmatch import fnmatch
from pathlib import Path

import numpy as np

from src.audiofeat import FrameConfig, augment, feature_vector, read_wav, trim
from src.errors import DataError
from src.qkernel import LabeledDataset

logger = logging.getLogger(__name__)

NAMED_LABELS = {"sad": -1, "surprise": 1}
MAX_SHARD_DRAWS = 100


# ── CSV ──────────────────────────────────────────────────────────────


def _parse_label(text: str, line: int) -> int:
    value = text.strip()
    if value.lower() in NAMED_LABELS:
        return NAMED_LABELS[value.lower()]
    if value in ("1", "+1", "-1"):
        return int(value)
    raise DataError(f"label must be -1, +1, 'Sad' or 'Surprise', got {value!r}", line=line)


def load_csv(path: Path) -> LabeledDataset:
    """Read a ``f1,...,fd,label`` file."""
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataError(f"dataset file not found: {path}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[-1] != "label":
        raise DataError("header must be f1,...,fd,label", line=1)
    dim = len(header) - 1

    features: list[list[float]] = []
    labels: list[int] = []
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise DataError(f"expected {dim + 1} fields, got {len(row)}", line=line)
        try:
            values = [float(v) for v in row[:dim]]
        except ValueError as exc:
            raise DataError(f"non-numeric feature: {exc}", line=line) from exc
        if not all(math.isfinite(v) for v in values):
            raise DataError("features must be finite", line=line)
        features.append(values)
        labels.append(_parse_label(row[dim], line))
    if not labels:
        raise DataError(f"{path} has a header but no data rows")
    return LabeledDataset(np.array(features), np.array(labels))


def save_csv(dataset: LabeledDataset, path: Path) -> None:
    """Write features with 17 significant digits so a reload is exact."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([f"f{j + 1}" for j in range(dataset.feature_dim)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([f"{v:.17g}" for v in row] + [str(int(label))])


# ── WAV feature extraction ───────────────────────────────────────────


def label_for(name: str, label_map: Mapping[str, int]) -> int | None:
    """First pattern in ``label_map`` matching ``name`` (case-insensitive), else ``None``."""
    lowered = name.lower()
    for pattern, label in label_map.items():
        if fnmatch(lowered, pattern.lower()):
            return int(label)
    return None


def labeled_wavs(wav_dir: Path, label_map: Mapping[str, int]) -> list[tuple[Path, int]]:
    """Sorted ``(path, label)`` pairs; files no pattern matches are skipped with a warning."""
    if not wav_dir.is_dir():
        raise DataError(f"WAV directory not found: {wav_dir}")
    files = sorted(p for p in wav_dir.iterdir() if p.suffix.lower() == ".wav")
    if not files:
        raise DataError(f"no .wav files in {wav_dir}")
    matched: list[tuple[Path, int]] = []
    for path in files:
        label = label_for(path.name, label_map)
        if label is None:
            logger.warning("skipping %s: no label pattern matches", path.name)
            continue
        matched.append((path, label))
    if not matched:
        raise DataError(f"none of the {len(files)} WAV file(s) in {wav_dir} match the label map")
    return matched


def _file_rows(
    path: Path,
    label: int,
    techniques: Sequence[str],
    seed: int,
    index: int,
    frame_config: FrameConfig,
) -> tuple[list[np.ndarray], list[int], list[str]]:
    clip = trim(read_wav(path))
    rows, names = [feature_vector(clip, frame_config)], [path.stem]
    for t, technique in enumerate(techniques):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, t)))
        rows.append(feature_vector(augment(clip, technique, rng), frame_config))
        names.append(f"{path.stem}+{technique}")
    return rows, [label] * len(rows), names


def extract_features(
    wav_dir: Path,
    label_map: Mapping[str, int],
    augment_with: Iterable[str] = (),
    seed: int = 0,
    files: Sequence[tuple[Path, int]] | None = None,
    frame_config: FrameConfig = FrameConfig(),
    workers: int = 1,
) -> LabeledDataset:
    """Parse, trim and featurize every labeled WAV; each augmentation adds one copy per file.

    Pass ``files`` to featurize a preselected subset (e.g. only the training split).
    """
    entries = list(files) if files is not None else labeled_wavs(wav_dir, label_map)
    if not entries:
        raise DataError("no WAV files to extract")
    techniques = list(augment_with)

    def work(item: tuple[int, tuple[Path, int]]) -> tuple[list[np.ndarray], list[int], list[str]]:
        index, (path, label) = item
        return _file_rows(path, label, techniques, seed, index, frame_config)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, enumerate(entries)))
    else:
        results = [work(item) for item in enumerate(entries)]

    rows: list[np.ndarray] = []
    labels: list[int] = []
    names: list[str] = []
    for file_rows, file_labels, file_names in results:
        rows.extend(file_rows)
        labels.extend(file_labels)
        names.extend(file_names)
    logger.info("extracted %d feature row(s) from %d file(s)", len(rows), len(entries))
    return LabeledDataset(np.vstack(rows), np.array(labels), names)


# ── Synthetic data ───────────────────────────────────────────────────


def _balanced_labels(M: int) -> np.ndarray:
    return np.where(np.arange(M) % 2 == 0, 1, -1)


def synth_dataset(
    kind: str, M: int, noise: float, seed: int | np.random.SeedSequence
) -> LabeledDataset:
    """Two-dimensional synthetic two-class data, balanced within one point.

    ``xor_blobs``: Gaussian blobs at the four corners of ``[-1, 1]^2``, label is the
    sign of ``x1 * x2``. ``two_gaussians``: blobs at ``(-1, -1)`` and ``(1, 1)``.
    ``ring_vs_core``: a core around the origin against a unit-radius ring.
    """
    if M < 2:
        raise DataError(f"need at least 2 points, got {M}")
    if noise < 0:
        raise DataError(f"noise must be >= 0, got {noise}")
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(M)
    if kind == "xor_blobs":
        flip = rng.integers(0, 2, size=M) * 2 - 1
        centers = np.stack([flip, flip * labels], axis=1).astype(float)
        features = centers + noise * rng.standard_normal((M, 2))
    elif kind == "two_gaussians":
        centers = np.repeat(labels[:, None], 2, axis=1).astype(float)
        features = centers + noise * rng.standard_normal((M, 2))
    elif kind == "ring_vs_core":
        angle = rng.uniform(0.0, 2.0 * math.pi, size=M)
        radius = np.where(labels > 0, 0.0, 1.0) + noise * rng.standard_normal(M)
        features = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
    else:
        raise DataError(f"unknown synthetic dataset {kind!r}")
    return LabeledDataset(features, labels)


# ── Scaling ──────────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    """Per-dimension min/max fitted on training rows."""

    minimum: np.ndarray
    maximum: np.ndarray


def fit_scaler(train: LabeledDataset) -> FeatureScaler:
    if len(train) == 0:
        raise DataError("cannot fit a scaler on an empty dataset")
    return FeatureScaler(train.features.min(axis=0), train.features.max(axis=0))


def apply_scaler(scaler: FeatureScaler, dataset: LabeledDataset) -> LabeledDataset:
    """Map features into ``[0, pi]``; constant dimensions go to ``pi/2``, outliers are clamped."""
    if dataset.feature_dim != scaler.minimum.shape[0]:
        raise DataError(
            f"scaler fitted on {scaler.minimum.shape[0]} feature(s), dataset has {dataset.feature_dim}"
        )
    span = scaler.maximum - scaler.minimum
    constant = span == 0.0
    safe = np.where(constant, 1.0, span)
    scaled = (dataset.features - scaler.minimum) / safe * math.pi
    scaled = np.where(constant, math.pi / 2, np.clip(scaled, 0.0, math.pi))
    return LabeledDataset(scaled, dataset.labels.copy(), list(dataset.names))


# ── Splitting and sharding ───────────────────────────────────────────


def split_indices(
    M: int, test_fraction: float, seed: int | np.random.SeedSequence
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle; the first ``round(M * test_fraction)`` indices are held out."""
    if not 0 <= test_fraction < 1:
        raise DataError(f"test fraction must be in [0, 1), got {test_fraction}")
    order = np.random.default_rng(seed).permutation(M)
    n_test = int(round(M * test_fraction))
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def train_test_split(
    dataset: LabeledDataset, test_fraction: float, seed: int | np.random.SeedSequence
) -> tuple[LabeledDataset, LabeledDataset]:
    train_idx, test_idx = split_indices(len(dataset), test_fraction, seed)
    return dataset.subset(train_idx), dataset.subset(test_idx)


def _label_skew_parts(
    labels: np.ndarray, N: int, alpha: float, rng: np.random.Generator
) -> list[np.ndarray]:
    parts: list[list[int]] = [[] for _ in range(N)]
    for cls in (-1, 1):
        members = rng.permutation(np.flatnonzero(labels == cls))
        proportions = rng.dirichlet(np.full(N, alpha))
        cuts = (np.cumsum(proportions)[:-1] * members.shape[0]).astype(int)
        for node, chunk in enumerate(np.split(members, cuts)):
            parts[node].extend(chunk.tolist())
    return [np.sort(np.array(p, dtype=int)) for p in parts]


def shard(
    dataset: LabeledDataset,
    N: int,
    mode: str = "iid",
    seed: int | np.random.SeedSequence = 0,
    alpha: float = 0.3,
    allow_empty: bool = False,
) -> list[LabeledDataset]:
    """Split ``dataset`` into ``N`` disjoint shards that together cover it.

    ``iid`` shuffles and cuts into contiguous near-equal blocks. ``label_skew``
    draws per-class node proportions from ``Dirichlet(alpha)``, redrawing until
    every shard is nonempty unless ``allow_empty`` is set.
    """
    M = len(dataset)
    if N < 1:
        raise DataError(f"need at least one shard, got {N}")
    if N > M and not allow_empty:
        raise DataError(f"cannot split {M} point(s) over {N} nodes")
    rng = np.random.default_rng(seed)
    if mode == "iid":
        parts = [np.sort(p) for p in np.array_split(rng.permutation(M), N)]
    elif mode == "label_skew":
        if alpha <= 0:
            raise DataError(f"Dirichlet alpha must be > 0, got {alpha}")
        for _ in range(MAX_SHARD_DRAWS):
            parts = _label_skew_parts(dataset.labels, N, alpha, rng)
            if allow_empty or all(p.shape[0] > 0 for p in parts):
                break
        else:
            raise DataError(
                f"label-skew sharding left a node empty after {MAX_SHARD_DRAWS} draws; raise alpha"
            )
    else:
        raise DataError(f"unknown sharding mode {mode!r}; expected 'iid' or 'label_skew'")
    return [dataset.subset(p) for p in parts]
