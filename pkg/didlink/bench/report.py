"""Benchmark reports: per-rep rows, outlier-trimmed summaries, JSON/CSV output."""

import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from ..errors import IoFailure, UsageError
from ..monitoring import get_logger

logger = get_logger(__name__)

OUTLIER_FACTOR = 5.0


class ReportFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class Summary(BaseModel):
    count: int
    mean: float
    stddev: float
    p95: float
    min: float
    max: float
    outliers_removed: int = 0


class BenchReport(BaseModel):
    scenario: str
    kind: str = "scenario"
    extension_transport: str = "preamble"
    parameters: Dict[str, Any] = Field(default_factory=dict)
    reps: List[Dict[str, Any]] = Field(default_factory=list)
    summary: Dict[str, Summary] = Field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.reps if row.get(name) is not None], dtype=float)

    def numeric_columns(self) -> List[str]:
        names: Dict[str, None] = {}
        for row in self.reps:
            for key, value in row.items():
                if isinstance(value, (int, float)) and not isinstance(value, bool) and key != "rep":
                    names.setdefault(key, None)
        return list(names)

    def summarize(self, columns: Iterable[str] = ()) -> "BenchReport":
        """Fill `summary` for the given (default: all numeric) columns."""
        for name in list(columns) or self.numeric_columns():
            values = self.column(name)
            if values.size:
                self.summary[name] = summarize(values)
        return self

    def mean(self, name: str) -> float:
        if name not in self.summary:
            self.summarize([name])
        return self.summary[name].mean


def remove_outliers(values: Sequence[float], factor: float = OUTLIER_FACTOR) -> Tuple[np.ndarray, int]:
    """Drop values beyond `factor` times the median; report how many went."""
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        return data, 0
    median = float(np.median(data))
    if median <= 0:
        return data, 0
    kept = data[data <= factor * median]
    return kept, int(data.size - kept.size)


def summarize(values: Sequence[float]) -> Summary:
    kept, removed = remove_outliers(values)
    return Summary(
        count=int(kept.size),
        mean=float(np.mean(kept)),
        stddev=float(np.std(kept, ddof=1)) if kept.size > 1 else 0.0,
        p95=float(np.percentile(kept, 95)),
        min=float(np.min(kept)),
        max=float(np.max(kept)),
        outliers_removed=removed,
    )


def report_frame(report: BenchReport) -> pd.DataFrame:
    frame = pd.DataFrame(report.reps)
    if not frame.empty:
        frame = frame[sorted(frame.columns)]
    return frame


def emit_report(report: BenchReport, path: Union[str, Path], fmt: Union[ReportFormat, str] = ReportFormat.JSON) -> Path:
    """Write the report; JSON keeps everything, CSV holds one row per rep."""
    try:
        fmt = ReportFormat(fmt)
    except ValueError as exc:
        raise UsageError(f"unknown report format {fmt!r}", suggestion="Use json or csv.") from exc
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt is ReportFormat.JSON:
            path.write_text(json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
        else:
            report_frame(report).to_csv(path, index=False)
    except OSError as exc:
        raise IoFailure(f"cannot write report {path}: {exc}") from exc
    logger.info("Report written", path=str(path), format=fmt.value, reps=len(report.reps))
    return path


def load_report(path: Union[str, Path]) -> BenchReport:
    try:
        return BenchReport.model_validate_json(Path(path).read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read report {path}: {exc}") from exc
