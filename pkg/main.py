"""cdqkl-sim – CLI entry point."""

from __future__ import annotations

import functools
import json
import logging
import sys
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, TypeVar

import numpy as np
import typer
from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from src.config import ExperimentConfig, apply_env, load_config, preset, resolve_output, validate
from src.datasets import apply_scaler, extract_features, fit_scaler, load_csv, save_csv, synth_dataset
from src.errors import CdqklError
from src.experiments import kernel_summary, run_table1, run_table2, svm_summary
from src.report import TABLE2_METRICS, MetricsReport, Table1Report, write_report

load_dotenv()

app = typer.Typer(
    name="cdqkl-sim",
    help="Simulate consensus-based distributed quantum kernel learning.",
    add_completion=False,
)
features_app = typer.Typer(help="Audio feature extraction.", add_completion=False)
data_app = typer.Typer(help="Synthetic datasets.", add_completion=False)
kernel_app = typer.Typer(help="Quantum kernel matrices.", add_completion=False)
svm_app = typer.Typer(help="Single SVM runs.", add_completion=False)
cdqkl_app = typer.Typer(help="Distributed training runs.", add_completion=False)
app.add_typer(features_app, name="features")
app.add_typer(data_app, name="data")
app.add_typer(kernel_app, name="kernel")
app.add_typer(svm_app, name="svm")
app.add_typer(cdqkl_app, name="cdqkl")

console = Console()
err_console = Console(stderr=True)

F = TypeVar("F", bound=Callable[..., Any])

ConfigOption = typer.Option(None, "--config", "-c", help="JSON experiment config.")
PresetOption = typer.Option("desk", "--preset", help="Preset used when no --config is given.")
SeedOption = typer.Option(None, "--seed", help="Root seed; overrides the config.")
OutOption = typer.Option(None, "--out", "-o", help="Output path; overrides the config.")


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging.")) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


def _fails_as_json(func: F) -> F:
    """Turn any ``CdqklError`` into a JSON error object on stdout and exit code 1."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except CdqklError as exc:
            typer.echo(json.dumps(exc.to_dict(), sort_keys=True))
            raise typer.Exit(code=1) from exc
        except (ValueError, OSError) as exc:
            typer.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
            raise typer.Exit(code=1) from exc

    return wrapper  # type: ignore[return-value]


def _config(config_path: Path | None, preset_name: str, seed: int | None) -> ExperimentConfig:
    config = load_config(config_path) if config_path else preset(preset_name)
    config = apply_env(config)
    if seed is not None:
        config = validate(replace(config, seed=seed))
    return config


@contextmanager
def _progress(description: str, total: int) -> Iterator[Callable[[int], None]]:
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        console=err_console,
    ) as progress:
        task = progress.add_task(description, total=total)
        yield lambda _k: progress.advance(task)


def _write_json(data: dict[str, Any], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ── Data commands ────────────────────────────────────────────────────


@features_app.command("extract")
@_fails_as_json
def features_extract(
    wav_dir: Path = typer.Argument(..., help="Directory of PCM-16 WAV files."),
    augment: Optional[list[str]] = typer.Option(
        None, "--augment", "-a", help="noise, stretch, shift or pitch; repeatable."
    ),
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[str] = OutOption,
) -> None:
    """Trim, featurize and label every WAV file; write a feature CSV."""
    config = _config(config_path, "desk", seed)
    techniques = list(augment) if augment is not None else config.data.augment
    dataset = extract_features(
        wav_dir, config.data.label_map, techniques, seed=config.seed, workers=config.workers
    )
    target = resolve_output(out or "features.csv", config)
    save_csv(dataset, target)
    console.print(f"[green]Wrote {len(dataset)} row(s) x {dataset.feature_dim} feature(s) to {target}[/green]")


@data_app.command("synth")
@_fails_as_json
def data_synth(
    kind: Optional[str] = typer.Option(
        None, "--kind", help="xor_blobs, two_gaussians or ring_vs_core (default: config)."
    ),
    n_points: Optional[int] = typer.Option(None, "--n-points", "-m", help="Number of points."),
    noise: Optional[float] = typer.Option(None, "--noise", help="Gaussian noise standard deviation."),
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: str = typer.Option("synth.csv", "--out", "-o", help="Output CSV."),
) -> None:
    """Generate a balanced two-class synthetic dataset; flags override the config's data section."""
    config = _config(config_path, "desk", seed)
    data = config.data
    kind = kind or data.kind
    dataset = synth_dataset(
        kind,
        n_points if n_points is not None else data.n_points,
        noise if noise is not None else data.noise,
        config.seed,
    )
    target = resolve_output(out, config)
    save_csv(dataset, target)
    console.print(f"[green]Wrote {len(dataset)} {kind} point(s) to {target}[/green]")



# ── Kernel and SVM commands ──────────────────────────────────────────


@kernel_app.command("compute")
@_fails_as_json
def kernel_compute(
    data: Path = typer.Argument(..., help="Feature CSV; features are angle-scaled on load."),
    theta_from: Optional[Path] = typer.Option(
        None, "--theta-from", help="Report JSON whose trained parameters to use."
    ),
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[str] = OutOption,
) -> None:
    """Write the quantum Gram matrix, its minimum eigenvalue and its label alignment."""
    config = _config(config_path, "desk", seed)
    raw = load_csv(data)
    dataset = apply_scaler(fit_scaler(raw), raw)
    theta = None
    if theta_from is not None:
        report = json.loads(theta_from.read_text(encoding="utf-8"))
        if "central_theta" in report:
            theta = np.array(report["central_theta"])
        elif report.get("final_thetas"):
            theta = np.mean(np.array(report["final_thetas"]), axis=0)
        else:
            raise ValueError(f"{theta_from} holds no trained parameters")
    summary = kernel_summary(config, dataset, theta)
    target = resolve_output(out or "kernel.json", config)
    _write_json(summary, target)
    console.print(
        f"[bold]{len(dataset)}x{len(dataset)} kernel[/bold]  "
        f"min eigenvalue {summary['min_eigenvalue']:.3e}  alignment {summary['alignment']:.4f}"
    )
    console.print(f"[green]Wrote {target}[/green]")


@svm_app.command("run")
@_fails_as_json
def svm_run(
    kernel: str = typer.Option("gaussian", "--kernel", "-k", help="linear, gaussian or quantum."),
    penalty: float = typer.Option(1.0, "--C", "--penalty", help="Soft-margin penalty C."),
    config_path: Optional[Path] = ConfigOption,
    preset_name: str = PresetOption,
    seed: Optional[int] = SeedOption,
    out: Optional[str] = OutOption,
) -> None:
    """Train one SVM on the configured split and report accuracies."""
    config = _config(config_path, preset_name, seed)
    summary = svm_summary(config, kernel, penalty)
    target = resolve_output(out or "svm.json", config)
    _write_json(summary, target)
    test = summary["test_accuracy"]
    console.print(
        f"[bold]{kernel} SVM (C = {penalty:g})[/bold]  train {summary['train_accuracy']:.4f}  "
        f"test {'n/a' if test is None else f'{test:.4f}'}"
    )


# ── Experiments ──────────────────────────────────────────────────────


def _print_table1(report: Table1Report) -> None:
    table = Table(title="Comparison of SVM and QSVM Performance")
    table.add_column("Model", style="cyan")
    table.add_column("Train", justify="right")
    table.add_column("Test", justify="right")
    for row in report.rows:
        test = "n/a" if row.test_accuracy is None else f"{100 * row.test_accuracy:.2f}%"
        table.add_row(row.name, f"{100 * row.train_accuracy:.2f}%", test)
    console.print(table)


def _print_table2(report: MetricsReport) -> None:
    table = Table(title="Distributed-Node Performance Metrics Before and After Training")
    table.add_column("Metric", style="cyan")
    for node in report.nodes:
        table.add_column(f"Node {node.node + 1}", justify="right")
    for phase in ("before", "after"):
        for key, label in TABLE2_METRICS:
            cells = []
            for node in report.nodes:
                value = getattr(getattr(node, phase), key)
                cells.append("n/a" if value is None else f"{100 * value:.2f}%")
            table.add_row(f"{label} ({phase})", *cells)
    console.print(table)
    if report.central is not None:
        console.print(
            f"Central QSVM  whole train {100 * report.central.whole_train:.2f}%"
            + (
                ""
                if report.central.whole_test is None
                else f"  whole test {100 * report.central.whole_test:.2f}%"
            )
        )
    console.print(
        f"[dim]final disagreement {report.disagreement[-1]:.3e}  sigma2 {report.sigma2:.4f}  "
        f"wall time {report.wall_time:.1f}s[/dim]"
    )


@app.command("table1")
@_fails_as_json
def table1(
    config_path: Optional[Path] = ConfigOption,
    preset_name: str = PresetOption,
    seed: Optional[int] = SeedOption,
    out: Optional[str] = OutOption,
) -> None:
    """Linear and Gaussian SVM baselines against the centralized QSVM."""
    config = _config(config_path, preset_name, seed)
    with _progress("Training central kernel", config.optimizer.iterations) as advance:
        report = run_table1(config, on_step=advance)
    _print_table1(report)
    json_path, text_path = write_report(report, resolve_output(out or "table1.json", config))
    console.print(f"[green]Wrote {json_path} and {text_path}[/green]")


def _run_cdqkl_command(
    config_path: Path | None, preset_name: str, seed: int | None, out: str | None
) -> None:
    config = _config(config_path, preset_name, seed)
    with _progress("CDQKL rounds", config.optimizer.iterations) as advance:
        report = run_table2(config, on_step=advance)
    _print_table2(report)
    json_path, text_path = write_report(report, resolve_output(out, config))
    console.print(f"[green]Wrote {json_path} and {text_path}[/green]")


@cdqkl_app.command("run")
@_fails_as_json
def cdqkl_run(
    config_path: Optional[Path] = ConfigOption,
    preset_name: str = PresetOption,
    seed: Optional[int] = SeedOption,
    out: Optional[str] = OutOption,
) -> None:
    """Train every node with consensus SGD and report Table 2 metrics."""
    _run_cdqkl_command(config_path, preset_name, seed, out)


@app.command("table2")
@_fails_as_json
def table2(
    config_path: Optional[Path] = ConfigOption,
    preset_name: str = PresetOption,
    seed: Optional[int] = SeedOption,
    out: Optional[str] = OutOption,
) -> None:
    """Alias of ``cdqkl run``."""
    _run_cdqkl_command(config_path, preset_name, seed, out)


if __name__ == "__main__":
    try:
        app()
    except KeyboardInterrupt:
        sys.exit(130)
