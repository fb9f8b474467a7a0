"""Tests for src.config."""

from dataclasses import replace
from pathlib import Path

import pytest

from src.config import (
    ExperimentConfig,
    apply_env,
    load_config,
    preset,
    resolve_output,
    validate,
)
from src.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "config.json"
    path.write_text(text, encoding="utf-8")
    return path


# ── Presets ──────────────────────────────────────────────────────────


def test_desk_preset_defaults() -> None:
    config = preset("desk")
    assert (config.ansatz.n_qubits, config.ansatz.n_layers) == (4, 2)
    assert (config.network.topology, config.network.n_nodes) == ("ring", 4)
    assert config.optimizer.eta == 0.2
    assert config.split.test_fraction == 0.2


def test_full_preset_runs_longer() -> None:
    assert preset("full").optimizer.iterations == 3000


def test_unknown_preset_is_rejected() -> None:
    with pytest.raises(ConfigError):
        preset("laptop")


def test_shipped_desk_config_matches_preset() -> None:
    shipped = load_config(CONFIGS / "desk.json")
    expected = preset("desk")
    expected = replace(expected, report=replace(expected.report, output=shipped.report.output))
    assert shipped == expected


@pytest.mark.parametrize("name", ["desk.json", "full.json", "emotion_wav.json"])
def test_shipped_configs_load(name: str) -> None:
    assert isinstance(load_config(CONFIGS / name), ExperimentConfig)


# ── Loading ──────────────────────────────────────────────────────────


def test_partial_config_keeps_defaults(tmp_path: Path) -> None:
    config = load_config(_write(tmp_path, '{"optimizer": {"iterations": 5}, "seed": 3}'))
    assert config.optimizer.iterations == 5
    assert config.optimizer.eta == 0.2
    assert config.seed == 3


def test_unknown_nested_key_is_named(tmp_path: Path) -> None:
    with pytest.raises(ConfigError) as info:
        load_config(_write(tmp_path, '{"optimizer": {"learning_rate": 0.1}}'))
    assert info.value.details["key"] == "optimizer.learning_rate"


def test_invalid_value_is_named(tmp_path: Path) -> None:
    with pytest.raises(ConfigError) as info:
        load_config(_write(tmp_path, '{"network": {"n_nodes": 1}}'))
    assert info.value.details["key"] == "network.n_nodes"


def test_section_must_be_an_object(tmp_path: Path) -> None:
    with pytest.raises(ConfigError) as info:
        load_config(_write(tmp_path, '{"svm": 3}'))
    assert info.value.details["key"] == "svm"


def test_invalid_json_is_a_config_error(tmp_path: Path) -> None:
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(_write(tmp_path, '{"seed": '))


def test_missing_file_is_a_config_error(tmp_path: Path) -> None:
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")


def test_stochastic_mode_needs_a_batch_size() -> None:
    config = ExperimentConfig()
    config.optimizer.grad_mode = "stochastic"
    with pytest.raises(ConfigError) as info:
        validate(config)
    assert info.value.details["key"] == "optimizer.q"


def test_per_node_step_sizes_must_match_nodes() -> None:
    config = ExperimentConfig()
    config.optimizer.etas = [0.1, 0.2]
    with pytest.raises(ConfigError):
        validate(config)



# ── Environment ──────────────────────────────────────────────────────


def test_worker_count_from_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("CDQKL_WORKERS", "3")
    assert apply_env(ExperimentConfig()).workers == 3


def test_bad_worker_count_from_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("CDQKL_WORKERS", "many")
    with pytest.raises(ConfigError):
        apply_env(ExperimentConfig())


def test_output_dir_applies_to_bare_names(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    monkeypatch.setenv("CDQKL_OUTPUT_DIR", str(tmp_path))
    config = ExperimentConfig()
    assert resolve_output("table1.json", config) == tmp_path / "table1.json"
    assert resolve_output(None, config) == tmp_path / "report.json"
    assert resolve_output("runs/t.json", config) == Path("runs/t.json")


def test_output_without_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("CDQKL_OUTPUT_DIR", raising=False)
    assert resolve_output("table1.json", ExperimentConfig()) == Path("table1.json")
