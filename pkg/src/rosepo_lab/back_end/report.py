"""Cross-run comparison tables.

Merges evaluated run directories into one row per run, then aggregates the rows by objective, by sampling strategy,
and by data fraction with mean and standard deviation columns.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from rosepo_lab.back_end.evaluation import SUMMARY_COLUMNS, metric_value
from rosepo_lab.models.config import RunConfig
from rosepo_lab.utils.constants import BIAS_FILE, CONFIG_FILE, SUMMARY_FILE
from rosepo_lab.utils.converters import format_fixed, parse_key_value

GIVEN_METRICS_FILE = "metrics_given.csv"
GROUPINGS = {"by_objective": "objective", "by_strategy": "strategy", "by_fraction": "data_fraction"}


@dataclass(frozen=True)
class RunReport:
    """Merged tables and the run directories that could not be read.

    Attributes:
        comparison: One row per run.
        groups: Aggregated tables keyed by output name (`by_objective`, `by_strategy`, `by_fraction`).
        skipped: Run directory and reason, per unreadable run.
    """

    comparison: pd.DataFrame
    groups: dict[str, pd.DataFrame]
    skipped: list[tuple[Path, str]]


def run_row(run_dir: Path) -> dict[str, object]:
    """Summarize one evaluated run directory.

    Args:
        run_dir: Directory holding `config.txt`, `metrics_given.csv`, and `bias.csv`.

    Raises:
        FileNotFoundError: If a required file is missing.

    Returns:
        Run identity and its summary columns.
    """
    missing = [name for name in (CONFIG_FILE, GIVEN_METRICS_FILE, BIAS_FILE) if not (run_dir / name).is_file()]
    if missing:
        error_message = f"missing {', '.join(missing)}"
        raise FileNotFoundError(error_message)
    config = RunConfig.from_pairs(parse_key_value((run_dir / CONFIG_FILE).read_text(encoding="utf-8")))
    metrics = pd.read_csv(run_dir / GIVEN_METRICS_FILE)
    bias = pd.read_csv(run_dir / BIAS_FILE)
    values = [
        metric_value(metrics, "hr", 1),
        metric_value(metrics, "hr", 5),
        metric_value(metrics, "ndcg", 5),
        metric_value(metrics, "ndcg", 10),
        float(bias["semantic_bias"].dropna().mean()),
        float(bias["popularity_bias"].mean()),
    ]
    return {
        "run": run_dir.name,
        "objective": config.objective.kind if config.stage == "po" else "sft",
        "strategy": config.strategy or "none",
        "data_fraction": config.data_fraction,
        "seed": config.seed,
        **dict(zip(SUMMARY_COLUMNS, values, strict=True)),
    }


def aggregate(comparison: pd.DataFrame, key: str) -> pd.DataFrame:
    """Mean and population standard deviation of every summary column per key value.

    Args:
        comparison: One row per run.
        key: Grouping column.

    Returns:
        One row per key value with `runs`, `<column>_mean`, and `<column>_std`.
    """
    rows: list[dict[str, object]] = []
    for value, group in comparison.groupby(key, sort=True):
        row: dict[str, object] = {key: value, "runs": len(group)}
        for column in SUMMARY_COLUMNS:
            values = group[column].to_numpy(dtype=np.float64)
            row[f"{column}_mean"] = float(values.mean())
            row[f"{column}_std"] = float(values.std())
        rows.append(row)
    frame = pd.DataFrame(rows)
    if key == "data_fraction" and not frame.empty:
        frame.insert(1, "label", [f"{fraction:.0%}" for fraction in frame[key]])
    return frame


def merge_runs(run_dirs: Sequence[Path]) -> RunReport:
    """Merge run directories, skipping unreadable ones.

    Args:
        run_dirs: Evaluated run directories.

    Returns:
        Merged report.
    """
    rows: list[dict[str, object]] = []
    skipped: list[tuple[Path, str]] = []
    for run_dir in run_dirs:
        try:
            rows.append(run_row(run_dir))
        except (FileNotFoundError, KeyError, ValueError) as e:
            skipped.append((run_dir, str(e)))
    comparison = pd.DataFrame(rows, columns=["run", "objective", "strategy", "data_fraction", "seed", *SUMMARY_COLUMNS])
    groups = {name: aggregate(comparison, key) for name, key in GROUPINGS.items()} if rows else {}
    return RunReport(comparison, groups, skipped)


def write_report(report: RunReport, out_dir: Path) -> None:
    """Write `comparison.csv`, one CSV per grouping, and `summary.txt`.

    Args:
        report: Merged report.
        out_dir: Output directory.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    report.comparison.to_csv(out_dir / "comparison.csv", index=False, float_format="%.6f", lineterminator="\n")
    for name, frame in report.groups.items():
        frame.to_csv(out_dir / f"{name}.csv", index=False, float_format="%.6f", lineterminator="\n")
    lines = [report.comparison.to_string(index=False, float_format=lambda value: format_fixed(value, 4))]
    lines += [f"skipped {run_dir}: {reason}" for run_dir, reason in report.skipped]
    _ = (out_dir / SUMMARY_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
