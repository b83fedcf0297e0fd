"""CSV writers for metrics, benchmarks and loss traces."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from . import __version__
from .evaluate import BENCH_FIELDS, METRIC_FIELDS, BenchmarkRow, MetricRow
from .losses import LossBreakdown

TRACE_FIELDS = ("epoch", "total", "mse", "kl", "vq", "commit")


def provenance(seed: int, config_hash: str) -> str:
    return f"# seed={seed}, version={__version__}, config-hash={config_hash}"


def _write(path, header: str, fields, rows) -> None:
    buf = io.StringIO()
    buf.write(header + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue())


def write_metrics(path, rows: list[MetricRow], seed: int, config_hash: str) -> None:
    _write(path, provenance(seed, config_hash), METRIC_FIELDS, [r.cells() for r in rows])


def write_benchmarks(path, rows: list[BenchmarkRow], seed: int, config_hash: str) -> None:
    _write(path, provenance(seed, config_hash), BENCH_FIELDS, [r.cells() for r in rows])


def write_trace(path, trace: list[LossBreakdown], seed: int, config_hash: str) -> None:
    rows = [[str(i)] + [repr(float(v)) for v in parts.as_row()] for i, parts in enumerate(trace)]
    _write(path, provenance(seed, config_hash), TRACE_FIELDS, rows)


def read_rows(path) -> list[dict[str, str]]:
    """Data rows of a CSV written here, provenance line skipped."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))
