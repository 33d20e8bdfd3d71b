"""Benchmark runner, sweeps, Pareto output, HTTP service and CLI."""

from .bench import RunReport, TaskResult, run_benchmark, run_sweep, write_sweep_csv
from .pareto import emit_pareto
from .scoring import DatasetError, TaskRecord, load_dataset, score_answer

__all__ = ["DatasetError", "RunReport", "TaskRecord", "TaskResult", "emit_pareto", "load_dataset",
           "run_benchmark", "run_sweep", "score_answer", "write_sweep_csv"]
