import csv
import io
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence

import numpy as np

from app.utils.files import PathLike, atomic_write_text
from app.utils.logging import setup_logger

logger = setup_logger("Metrics")


@dataclass
class Metric:
    """Individual metric tracking"""
    name: str
    values: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    def record(self, step: int, value: float) -> None:
        """Record a new metric value"""
        self.values.append(float(value))
        self.steps.append(int(step))

    def summary(self) -> Dict[str, Any]:
        """Get metric summary statistics"""
        if not self.values:
            return {}

        return {
            "count": len(self.values),
            "min": min(self.values),
            "max": max(self.values),
            "mean": sum(self.values) / len(self.values),
            "last": self.values[-1],
            "last_step": self.steps[-1]
        }

    def moving_average(self, window: int) -> np.ndarray:
        """Trailing moving average; empty when fewer than `window` values exist"""
        values = np.asarray(self.values, dtype=np.float64)
        if window <= 0 or values.size < window:
            return np.zeros(0)
        kernel = np.ones(window) / window
        return np.convolve(values, kernel, mode="valid")


class TrainingMonitor:
    """Loss-curve recording, section timing and CSV export for training loops"""

    def __init__(
        self,
        components: Sequence[str],
        log_interval: int = 1,
        record_wall_time: bool = True,
        name: str = "train"
    ):
        if log_interval < 1:
            raise ValueError("log_interval must be >= 1")
        self.components = list(components)
        self.log_interval = log_interval
        self.record_wall_time = record_wall_time
        self.name = name
        self.metrics: Dict[str, Metric] = {c: Metric(name=c) for c in self.components}
        self.timings: Dict[str, Metric] = {}
        self.rows: List[Dict[str, float]] = []
        self._start_time = time.perf_counter()

    @contextmanager
    def track(self, section: str = "step_duration") -> Iterator[None]:
        """
        Context manager for timing a section of the loop

        Yields:
            None
        """
        start_time = time.perf_counter()
        try:
            yield
        finally:
            duration = time.perf_counter() - start_time
            metric = self.timings.setdefault(section, Metric(name=section))
            metric.record(len(metric.values), duration)

    def log_step(self, step: int, **components: float) -> bool:
        """
        Record every component of one training step

        Args:
            step: Zero-based step index
            **components: Loss component values keyed by name

        Returns:
            True when the step fell on the log interval and produced a CSV row
        """
        missing = set(self.components) - set(components)
        if missing:
            raise ValueError(f"missing loss components: {sorted(missing)}")
        for key in self.components:
            self.metrics[key].record(step, components[key])

        if (step + 1) % self.log_interval != 0:
            return False

        row: Dict[str, float] = {"step": step}
        row.update({key: float(components[key]) for key in self.components})
        if self.record_wall_time:
            row["wall_time"] = time.perf_counter() - self._start_time
        self.rows.append(row)
        logger.info(f"{self.name} step", extra=row)
        return True

    def get_metrics(self) -> Dict[str, Dict[str, Any]]:
        """
        Get all recorded metrics with summaries

        Returns:
            Dictionary of metric summaries
        """
        summaries = {name: metric.summary() for name, metric in self.metrics.items()}
        summaries.update({name: metric.summary() for name, metric in self.timings.items()})
        return summaries

    def last(self, component: str) -> Optional[float]:
        values = self.metrics[component].values
        return values[-1] if values else None

    def to_csv(self) -> str:
        columns = ["step", *self.components]
        if self.record_wall_time:
            columns.append("wall_time")
        return rows_to_csv(self.rows, columns)

    def write_csv(self, path: PathLike) -> None:
        atomic_write_text(path, self.to_csv())
        logger.debug(f"Wrote {len(self.rows)} loss rows to {path}")


def rows_to_csv(rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> str:
    """Render dict rows as CSV text with a fixed column order and repr-exact floats"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell(row.get(col, "")) for col in columns])
    return buffer.getvalue()


def _format_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)
