"""Benchmark suites, report emitters and the ``privinfer-bench`` command."""

from .report import FORMATS, emit_report, load_report
from .runner import (DEFAULT_SIZE, ROW_FIELDS, SCHEMA_VERSION, SUITES, BenchReport, BenchRow,
                     BenchSpec, check_report, merge_reports, run_bench, run_tcp, summarize)

__all__ = [
    "BenchReport", "BenchRow", "BenchSpec", "DEFAULT_SIZE", "FORMATS", "ROW_FIELDS",
    "SCHEMA_VERSION", "SUITES", "check_report", "emit_report", "load_report",
    "merge_reports", "run_bench", "run_tcp", "summarize",
]
