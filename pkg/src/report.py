"""Report module – Table 1 / Table 2 report types, JSON serialization and text tables."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from jinja2 import Environment, StrictUndefined

from src.consensus import NodeMetrics

TABLE1_TEMPLATE = """\
Comparison of SVM and QSVM performance (seed {{ seed }})
{{ "%-26s"|format("Model") }} {{ "%10s"|format("Train") }} {{ "%10s"|format("Test") }}
{% for row in rows -%}
{{ "%-26s"|format(row.name) }} {{ "%10s"|format(row.train_accuracy|pct) }} {{ "%10s"|format(row.test_accuracy|pct) }}
{% endfor -%}
"""

TABLE2_TEMPLATE = """\
Distributed-node performance before and after training ({{ iterations }} iterations & C = {{ C|g }})
{{ "%-12s"|format("Metric") }}{% for node in nodes %} {{ "%16s"|format("Node " ~ (node.node + 1)) }}{% endfor %} {{ "%10s"|format("Mean") }}
{% for phase in ("before", "after") -%}
{{ phase|capitalize }} training
{% for key, label in metrics -%}
{{ "%-12s"|format(label) }}{% for node in nodes %} {{ "%16s"|format(node[phase][key]|pct) }}{% endfor %} {{ "%10s"|format(means[phase][key]|pct) }}
{% endfor -%}
{% endfor -%}
{% if central -%}
Central QSVM  whole train {{ central.whole_train|pct }}  whole test {{ central.whole_test|pct }}
{% endif -%}
Final disagreement {{ "%.3e"|format(final_disagreement) }}  sigma2 {{ "%.6f"|format(sigma2) }}
"""

TABLE2_METRICS = [
    ("local_train", "Local Train"),
    ("local_test", "Local Test"),
    ("whole_train", "Whole Train"),
    ("whole_test", "Whole Test"),
]


def _pct(value: float | None) -> str:
    return "n/a" if value is None else f"{100.0 * value:.2f}%"


def _g(value: float) -> str:
    return f"{value:g}"


_ENV = Environment(undefined=StrictUndefined, keep_trailing_newline=True)
_ENV.filters["pct"] = _pct
_ENV.filters["g"] = _g


@dataclass
class ModelRow:
    """One model of the SVM/QSVM comparison."""

    name: str
    C: float | None
    train_accuracy: float
    test_accuracy: float | None


@dataclass
class Table1Report:
    rows: list[ModelRow]
    config: dict[str, Any]
    seed: int
    central_alignment_before: float
    central_alignment_after: float
    central_theta: list[float]
    wall_time: float = 0.0
    experiment: str = "table1"

    def to_dict(self, include_wall_time: bool = True) -> dict[str, Any]:
        data = asdict(self)
        if not include_wall_time:
            data.pop("wall_time")
        return data

    def render_text(self) -> str:
        return _ENV.from_string(TABLE1_TEMPLATE).render(rows=self.rows, seed=self.seed)


@dataclass
class CentralMetrics:
    """Centralized QSVM trained on the union of all shards with the same budget."""

    whole_train: float
    whole_test: float | None
    theta: list[float]


@dataclass
class NodeReport:
    node: int
    before: NodeMetrics
    after: NodeMetrics


@dataclass
class MetricsReport:
    """Per-node Table 2 metrics with the training series and the config echo."""

    nodes: list[NodeReport]
    iterations: list[int]
    node_losses: list[list[float]]
    global_loss: list[float]
    disagreement: list[float]
    sigma2: float
    config: dict[str, Any]
    seed: int
    final_thetas: list[list[float]] = field(default_factory=list)
    central: CentralMetrics | None = None
    wall_time: float = 0.0
    experiment: str = "table2"

    def to_dict(self, include_wall_time: bool = True) -> dict[str, Any]:
        data = asdict(self)
        if not include_wall_time:
            data.pop("wall_time")
        return data

    def mean_metric(self, phase: str, key: str) -> float | None:
        values = [getattr(getattr(n, phase), key) for n in self.nodes]
        if any(v is None for v in values):
            return None
        return float(sum(values) / len(values))

    def render_text(self) -> str:
        return _ENV.from_string(TABLE2_TEMPLATE).render(
            nodes=[asdict(n) for n in self.nodes],
            metrics=TABLE2_METRICS,
            iterations=self.iterations[-1] if self.iterations else 0,
            C=self.config.get("svm", {}).get("C", 1.0),
            central=asdict(self.central) if self.central else None,
            final_disagreement=self.disagreement[-1] if self.disagreement else 0.0,
            sigma2=self.sigma2,
            means={
                phase: {key: self.mean_metric(phase, key) for key, _ in TABLE2_METRICS}
                for phase in ("before", "after")
            },
        )


def to_json(report: Table1Report | MetricsReport, include_wall_time: bool = True) -> str:
    """Stable JSON: sorted keys, so equal reports serialize to equal bytes."""
    return json.dumps(report.to_dict(include_wall_time), indent=2, sort_keys=True) + "\n"


def write_report(report: Table1Report | MetricsReport, path: Path) -> tuple[Path, Path]:
    """Write ``path`` (JSON) and a sibling ``.txt`` table; return both paths."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(report), encoding="utf-8")
    text_path = path.with_suffix(".txt")
    text_path.write_text(report.render_text(), encoding="utf-8")
    return path, text_path
