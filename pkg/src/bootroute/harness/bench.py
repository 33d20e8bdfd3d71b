"""Benchmark and sweep runners."""

from __future__ import annotations

import asyncio
import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Sequence

from ..client import AllCandidatesFailed, ModelClient
from ..cost import total_currency, total_tokens
from ..mock import MockBackend
from ..pipeline import Router, RoutingTrace
from ..types import ConfigError, Query, RouterConfig, config_to_dict
from .scoring import TaskRecord, score_with_reason

logger = logging.getLogger(__name__)

AXES = ("k", "boot_budget", "layers")
STRATEGIES = ("router", "all-full", "single-best")


@dataclass
class TaskResult:
    task_id: str
    final_text: str
    correct: bool | None
    reason: str
    tokens: int
    currency: str
    calls: int
    boot_tokens: int


@dataclass
class RunReport:
    tasks: list[TaskResult]
    config: dict[str, Any]
    strategy: str = "router"
    axis: str | None = None
    value: int | None = None
    traces: list[RoutingTrace] = field(default_factory=list, repr=False)

    @property
    def scored(self) -> list[TaskResult]:
        return [t for t in self.tasks if t.correct is not None]

    @property
    def accuracy(self) -> float | None:
        scored = self.scored
        return sum(t.correct for t in scored) / len(scored) if scored else None

    @property
    def total_cost(self) -> Decimal:
        return sum((Decimal(t.currency) for t in self.tasks), Decimal(0))

    @property
    def mean_cost_per_query(self) -> Decimal:
        return self.total_cost / len(self.tasks) if self.tasks else Decimal(0)

    @property
    def total_tokens(self) -> int:
        return sum(t.tokens for t in self.tasks)

    @property
    def label(self) -> str:
        if self.axis is not None:
            return f"{self.axis}={self.value}"
        return self.strategy

    def to_dict(self) -> dict[str, Any]:
        return {
            "strategy": self.strategy,
            "axis": self.axis,
            "value": self.value,
            "config": self.config,
            "tasks": [asdict(t) for t in self.tasks],
            "aggregate": {
                "accuracy": self.accuracy,
                "scored": len(self.scored),
                "correct": sum(bool(t.correct) for t in self.scored),
                "total_cost": str(self.total_cost),
                "mean_cost_per_query": str(self.mean_cost_per_query),
                "total_tokens": self.total_tokens,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, out_dir: str | Path, name: str = "report") -> Path:
        out = Path(out_dir)
        (out / "traces").mkdir(parents=True, exist_ok=True)
        path = out / f"{name}.json"
        path.write_text(self.to_json())
        for trace in self.traces:
            safe = trace.query_id.replace("/", "_")
            (out / "traces" / f"{name}-{safe}.json").write_text(trace.to_json())
        return path


def make_client(config: RouterConfig) -> ModelClient:
    mocks = MockBackend.from_source(config.mocks) if config.mocks else None
    return ModelClient(mocks=mocks, timeout=config.request_timeout,
                       temperature=config.temperature)


def _result(record: TaskRecord, trace: RoutingTrace, reason: str | None = None) -> TaskResult:
    if reason is None:
        correct, reason = score_with_reason(trace.final_text, record)
    else:
        correct = None if record.scorer == "external" else False
    return TaskResult(
        task_id=record.task_id,
        final_text=trace.final_text,
        correct=correct,
        reason=reason,
        tokens=total_tokens(trace.ledger),
        currency=str(total_currency(trace.ledger)),
        calls=len(trace.calls),
        boot_tokens=sum(e.completion_tokens for e in trace.ledger.by_purpose("boot")),
    )


async def run_benchmark(dataset: Sequence[TaskRecord], config: RouterConfig,
                        concurrency_limit: int = 4, client: ModelClient | None = None,
                        strategy: str = "router", single_model: str | None = None,
                        overrides: dict[str, int] | None = None) -> RunReport:
    """Route every task with at most ``concurrency_limit`` pipelines in flight.

    Task failures are recorded as incorrect with a reason; they never abort
    the run. A fresh client is built from ``config`` unless one is given.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    if concurrency_limit < 1:
        raise ValueError("concurrency_limit must be >= 1")
    if overrides:
        config = config.replace(**overrides)
    own = client is None
    client = client or make_client(config)
    router = Router(config, client)
    gate = asyncio.Semaphore(concurrency_limit)
    results: list[TaskResult | None] = [None] * len(dataset)
    traces: list[RoutingTrace | None] = [None] * len(dataset)

    async def one(i: int, record: TaskRecord) -> None:
        query = Query(record.prompt, frozenset(record.required_capabilities), record.task_id)
        async with gate:
            try:
                if strategy == "router":
                    trace = await router.route(query)
                elif strategy == "all-full":
                    trace = await router.all_full(query)
                else:
                    trace = await router.single_best(query, single_model or config.aggregator_model)
                results[i] = _result(record, trace)
            except AllCandidatesFailed as exc:
                trace = exc.trace or RoutingTrace(query.query_id, query.text, error=str(exc))
                results[i] = _result(record, trace, reason=str(exc))
        traces[i] = trace

    try:
        await asyncio.gather(*(one(i, r) for i, r in enumerate(dataset)))
    finally:
        if own:
            await client.aclose()
    return RunReport(tasks=list(results), config=config_to_dict(config, include_mocks=False),
                     strategy=strategy, traces=list(traces))


async def run_sweep(dataset: Sequence[TaskRecord], config: RouterConfig, axis: str,
                    values: Sequence[int], concurrency_limit: int = 4
                    ) -> tuple[list[RunReport], list[str]]:
    """One report per axis value; invalid values are skipped with a warning."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    reports, skipped = [], []
    for value in values:
        try:
            config.replace(**{axis: value})
        except ConfigError as exc:
            msg = f"{axis}={value} skipped: {exc}"
            logger.warning(msg)
            skipped.append(msg)
            continue
        report = await run_benchmark(dataset, config, concurrency_limit,
                                     overrides={axis: value})
        report.axis, report.value = axis, value
        reports.append(report)
    return reports, skipped


SWEEP_COLUMNS = ("axis", "value", "accuracy", "mean_cost_per_query", "total_cost",
                 "mean_tokens_per_query", "boot_tokens", "calls")


def sweep_rows(reports: Sequence[RunReport]) -> list[dict[str, Any]]:
    rows = []
    for r in reports:
        n = len(r.tasks)
        rows.append({
            "axis": r.axis,
            "value": r.value,
            "accuracy": "" if r.accuracy is None else r.accuracy,
            "mean_cost_per_query": str(r.mean_cost_per_query),
            "total_cost": str(r.total_cost),
            "mean_tokens_per_query": r.total_tokens / n,
            "boot_tokens": sum(t.boot_tokens for t in r.tasks),
            "calls": sum(t.calls for t in r.tasks),
        })
    return rows


def write_sweep_csv(reports: Sequence[RunReport], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        w.writerows(sweep_rows(reports))
    return path
