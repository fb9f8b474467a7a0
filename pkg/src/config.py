"""Config module – ExperimentConfig sections, JSON loading, presets and env overrides."""

from __future__ import annotations

import json
import os
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

from src.audiofeat import AUGMENTATIONS
from src.consensus import TOPOLOGIES
from src.errors import ConfigError
from src.statevec import MAX_QUBITS

SYNTH_KINDS = ("xor_blobs", "two_gaussians", "ring_vs_core")
DATA_SOURCES = ("synthetic", "csv", "wav")
SHARD_MODES = ("iid", "label_skew")

DEFAULT_LABEL_MAP = {"*_sad*": -1, "*_surprise*": 1}


@dataclass
class AnsatzConfig:
    n_qubits: int = 4
    n_layers: int = 2


@dataclass
class NetworkConfig:
    topology: str = "ring"
    n_nodes: int = 4
    edges: list[list[int]] | None = None


@dataclass
class OptimizerConfig:
    eta: float = 0.2
    etas: list[float] | None = None
    iterations: int = 300
    grad_mode: str = "full"
    q: int | None = None


@dataclass
class SvmConfig:
    C: float = 1.0
    tol: float = 1e-3
    gamma: float | None = None


@dataclass
class DataConfig:
    """Where the points come from: a synthetic generator, a feature CSV or a WAV directory."""

    source: str = "synthetic"
    kind: str = "xor_blobs"
    n_points: int = 200
    noise: float = 0.1
    csv_path: str | None = None
    wav_dir: str | None = None
    label_map: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_LABEL_MAP))
    augment: list[str] = field(default_factory=list)


@dataclass
class SplitConfig:
    test_fraction: float = 0.2


@dataclass
class ShardingConfig:
    mode: str = "iid"
    alpha: float = 0.3


@dataclass
class ReportConfig:
    eval_every: int = 10
    output: str = "report.json"
    central_comparison: bool = True


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment from a single root seed."""

    ansatz: AnsatzConfig = field(default_factory=AnsatzConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    sharding: ShardingConfig = field(default_factory=ShardingConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    seed: int = 0
    workers: int = 1

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


# ── Loading ──────────────────────────────────────────────────────────


def _build(cls: type, data: Any, prefix: str) -> Any:
    if not isinstance(data, dict):
        where = prefix or "config"
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}", key=prefix)
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            dotted = f"{prefix}.{key}" if prefix else key
            raise ConfigError(f"unknown config key {dotted!r}", key=dotted)
    values: dict[str, Any] = {}
    for name, f in known.items():
        if name not in data:
            continue
        dotted = f"{prefix}.{name}" if prefix else name
        default = f.default_factory() if f.default_factory is not MISSING else f.default
        if is_dataclass(default):
            values[name] = _build(type(default), data[name], dotted)
        else:
            values[name] = data[name]
    return cls(**values)


def _fail(key: str, message: str) -> None:
    raise ConfigError(f"{key}: {message}", key=key)


def validate(config: ExperimentConfig) -> ExperimentConfig:
    """Check every field against the preconditions of the module that consumes it."""
    a, net, opt, svm = config.ansatz, config.network, config.optimizer, config.svm
    data, split, sharding, report = config.data, config.split, config.sharding, config.report
    if not isinstance(a.n_qubits, int) or not 1 <= a.n_qubits <= MAX_QUBITS:
        _fail("ansatz.n_qubits", f"must be an integer in [1, {MAX_QUBITS}]")
    if not isinstance(a.n_layers, int) or a.n_layers < 1:
        _fail("ansatz.n_layers", "must be an integer >= 1")
    if net.topology not in TOPOLOGIES:
        _fail("network.topology", f"must be one of {', '.join(TOPOLOGIES)}")
    if not isinstance(net.n_nodes, int) or net.n_nodes < 2:
        _fail("network.n_nodes", "must be an integer >= 2")
    if net.topology == "explicit" and not net.edges:
        _fail("network.edges", "required for the explicit topology")
    if not isinstance(opt.eta, (int, float)) or opt.eta < 0:
        _fail("optimizer.eta", "must be a number >= 0")
    if opt.etas is not None:
        if len(opt.etas) != net.n_nodes:
            _fail("optimizer.etas", f"needs one step size per node ({net.n_nodes})")
        if any(not isinstance(e, (int, float)) or e < 0 for e in opt.etas):
            _fail("optimizer.etas", "step sizes must be numbers >= 0")
    if not isinstance(opt.iterations, int) or opt.iterations < 0:
        _fail("optimizer.iterations", "must be an integer >= 0")
    if opt.grad_mode not in ("full", "stochastic"):
        _fail("optimizer.grad_mode", "must be 'full' or 'stochastic'")
    if opt.grad_mode == "stochastic" and (not isinstance(opt.q, int) or opt.q < 1):
        _fail("optimizer.q", "stochastic gradients need an integer q >= 1")
    if not isinstance(svm.C, (int, float)) or svm.C <= 0:
        _fail("svm.C", "must be > 0")
    if not isinstance(svm.tol, (int, float)) or svm.tol <= 0:
        _fail("svm.tol", "must be > 0")
    if svm.gamma is not None and (not isinstance(svm.gamma, (int, float)) or svm.gamma <= 0):
        _fail("svm.gamma", "must be > 0 or null for 1/d")
    if data.source not in DATA_SOURCES:
        _fail("data.source", f"must be one of {', '.join(DATA_SOURCES)}")
    if data.source == "synthetic":
        if data.kind not in SYNTH_KINDS:
            _fail("data.kind", f"must be one of {', '.join(SYNTH_KINDS)}")
        if not isinstance(data.n_points, int) or data.n_points < 2:
            _fail("data.n_points", "must be an integer >= 2")
        if not isinstance(data.noise, (int, float)) or data.noise < 0:
            _fail("data.noise", "must be >= 0")
    if data.source == "csv" and not data.csv_path:
        _fail("data.csv_path", "required when data.source is 'csv'")
    if data.source == "wav":
        if not data.wav_dir:
            _fail("data.wav_dir", "required when data.source is 'wav'")
        if not data.label_map or any(v not in (-1, 1) for v in data.label_map.values()):
            _fail("data.label_map", "must map file-name patterns to -1 or +1")
    for technique in data.augment:
        if technique not in AUGMENTATIONS:
            _fail("data.augment", f"unknown augmentation {technique!r}")
    if not isinstance(split.test_fraction, (int, float)) or not 0 <= split.test_fraction < 1:
        _fail("split.test_fraction", "must be in [0, 1)")
    if sharding.mode not in SHARD_MODES:
        _fail("sharding.mode", f"must be one of {', '.join(SHARD_MODES)}")
    if not isinstance(sharding.alpha, (int, float)) or sharding.alpha <= 0:
        _fail("sharding.alpha", "must be > 0")
    if not isinstance(report.eval_every, int) or report.eval_every < 1:
        _fail("report.eval_every", "must be an integer >= 1")
    if not isinstance(config.seed, int) or config.seed < 0:
        _fail("seed", "must be a non-negative integer")
    if not isinstance(config.workers, int) or config.workers < 1:
        _fail("workers", "must be an integer >= 1")
    return config


def load_config(path: Path) -> ExperimentConfig:
    """Read and validate a JSON config; missing keys keep their defaults."""
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    try:
        config = _build(ExperimentConfig, raw, "")
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return validate(config)


# ── Presets and overrides ────────────────────────────────────────────


def preset(name: str) -> ExperimentConfig:
    """``desk`` is the quick default; ``full`` uses the 3000-iteration budget."""
    if name == "desk":
        return ExperimentConfig()
    if name == "full":
        return ExperimentConfig(optimizer=OptimizerConfig(iterations=3000))
    raise ConfigError(f"unknown preset {name!r}; expected 'desk' or 'full'", key="preset")


def apply_env(config: ExperimentConfig) -> ExperimentConfig:
    """Apply ``CDQKL_WORKERS`` on top of the loaded config."""
    workers = os.environ.get("CDQKL_WORKERS")
    if workers is None:
        return config
    try:
        count = int(workers)
    except ValueError as exc:
        raise ConfigError(f"CDQKL_WORKERS must be an integer, got {workers!r}", key="workers") from exc
    return validate(replace(config, workers=count))


def resolve_output(out: str | None, config: ExperimentConfig) -> Path:
    """Bare file names land in ``CDQKL_OUTPUT_DIR`` when it is set."""
    target = Path(out or config.report.output)
    out_dir = os.environ.get("CDQKL_OUTPUT_DIR")
    if out_dir and target.parent == Path("."):
        return Path(out_dir) / target
    return target
