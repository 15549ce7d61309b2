import csv
import json
import logging
import os
import threading
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from app.models import CheckReport, ExperimentResult

from .dynamics_service import ControlSignal, ControlSystem, Trajectory, flow_segment
from .variation_service import TVCurve

logger = logging.getLogger(__name__)


def format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    if isinstance(value, (list, tuple)):
        return ";".join(format_cell(v) for v in value)
    return str(value)


def _fieldnames(rows: list[dict[str, Any]]) -> list[str]:
    names: list[str] = []
    for row in rows:
        for key in row:
            if key not in names:
                names.append(key)
    return names


def write_csv(path: Path, rows: list[dict[str, Any]], fieldnames: list[str] | None = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    names = fieldnames or _fieldnames(rows)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=names, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({name: format_cell(row.get(name, "")) for name in names})
    return path


def trajectory_csv(trajectory: Trajectory, path: Path) -> Path:
    rows = trajectory.rows()
    dimension = trajectory.states.shape[1]
    return write_csv(path, rows, ["t", *(f"y{i + 1}" for i in range(dimension)), "u"])


def control_csv(sys: ControlSystem, y0: Any, signal: ControlSignal, path: Path, dt: float = 0.05) -> Path:
    y = sys.state(y0)
    rows = []
    for start, end, u in signal.segments(signal.horizon):
        rows.append({"t": start, **_state_cells(y), "u": u})
        y = flow_segment(sys, y, u, np.array([end - start]), dt)[-1]
    rows.append({"t": signal.horizon, **_state_cells(y), "u": signal.values[-1]})
    return write_csv(path, rows, ["t", *(f"y{i + 1}" for i in range(sys.dimension)), "u"])


def _state_cells(y: np.ndarray) -> dict[str, float]:
    return {f"y{i + 1}": float(v) for i, v in enumerate(y)}


def tv_curve_csv(curve: TVCurve, path: Path) -> Path:
    return write_csv(path, curve.rows(), ["s", "tv", "method"])


def check_line(check: CheckReport) -> str:
    status = "PASS" if check.passed else "FAIL"
    values = ", ".join(f"{k}={format_cell(v)}" for k, v in check.values.items())
    slack = ", ".join(f"{k}={format_cell(v)}" for k, v in check.slack.items())
    line = f"[{status}] {check.name}: {values}"
    if slack:
        line += f" | slack {slack}"
    if check.detail:
        line += f" | {check.detail}"
    return line


def summary_text(result: ExperimentResult) -> str:
    lines = [
        f"experiment: {result.experiment_id}",
        f"reproduces: {result.anchor}",
        f"status: {'PASS' if result.passed else 'FAIL'}",
        "",
        *(check_line(check) for check in result.checks),
        "",
        "config:",
        json.dumps(result.config, indent=2, sort_keys=True, default=str),
    ]
    return "\n".join(lines) + "\n"


class ReportWriter:
    """Writes experiment artifacts under <out_dir>/<experiment id>/; writes are serialized."""

    def __init__(self, out_dir: str | Path | None = None) -> None:
        self.out_dir = Path(out_dir or os.getenv("MEANVALUE_OUT_DIR", "results"))
        self._lock = threading.Lock()

    def directory(self, experiment_id: str) -> Path:
        return self.out_dir / experiment_id

    def write_tables(self, experiment_id: str, tables: dict[str, list[dict[str, Any]]]) -> list[str]:
        paths = []
        with self._lock:
            for name, rows in tables.items():
                if not rows:
                    continue
                paths.append(str(write_csv(self.directory(experiment_id) / f"{name}.csv", rows)))
            if tables:
                paths.append(str(self._write_readme(experiment_id, tables)))
        return paths

    def _write_readme(self, experiment_id: str, tables: dict[str, list[dict[str, Any]]]) -> Path:
        path = self.directory(experiment_id) / "README.md"
        lines = [f"# {experiment_id}", ""]
        for name, rows in tables.items():
            if rows:
                lines.append(f"- `{name}.csv`: columns {', '.join(_fieldnames(rows))}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def write_summary(self, result: ExperimentResult, report_format: str = "csv") -> list[str]:
        with self._lock:
            directory = self.directory(result.experiment_id)
            directory.mkdir(parents=True, exist_ok=True)
            summary = directory / "summary.txt"
            summary.write_text(summary_text(result), encoding="utf-8")
            config = directory / "config.json"
            config.write_text(json.dumps(result.config, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
            paths = [str(summary), str(config)]
            if report_format == "csv":
                rows = [
                    {"check": c.name, "passed": c.passed, **{f"value_{k}": v for k, v in c.values.items()}}
                    for c in result.checks
                ]
                paths.append(str(write_csv(directory / "checks.csv", rows)))
        logger.info("wrote %d artifacts for %s", len(paths), result.experiment_id)
        return paths


def load_config_file(path: str | Path) -> dict[str, dict[str, Any]]:
    """Per-experiment parameter overrides: {"experiments": {id: {key: value}}}."""
    path = Path(path)
    if not path.exists():
        return {}
    payload = json.loads(path.read_text(encoding="utf-8"))
    experiments = payload.get("experiments", payload)
    if not isinstance(experiments, dict):
        raise ValueError(f"{path}: expected an object of experiment overrides")
    return experiments


def merge_params(*layers: Iterable[tuple[str, Any]] | dict[str, Any]) -> dict[str, Any]:
    merged: dict[str, Any] = {}
    for layer in layers:
        merged.update(dict(layer))
    return merged
