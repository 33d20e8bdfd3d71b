"""Layered boot-probe / select / continue / aggregate routing."""

from __future__ import annotations

import asyncio
import json
import logging
import random
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Sequence

from .aggregator import AggregateInput, aggregate, answers_in_order
from .client import AllCandidatesFailed, ChatRequest, ModelClient
from .cost import CostLedger, LedgerEntry, total_currency, total_tokens
from .mock import MockBackend
from .prompts import load_template
from .selector import NoCandidates, SelectorCall, select_top_k
from .types import (
    BootResponse,
    ModelSpec,
    Query,
    RouterConfig,
    SelectionResult,
    config_to_dict,
    eligible_models,
)

logger = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = 1


@dataclass
class CallRecord:
    call_id: str
    layer: int
    purpose: str
    model_id: str
    termination: str
    prompt_tokens: int
    completion_tokens: int
    estimated: bool
    latency: float
    text: str
    prompt: str
    error_detail: str | None = None


@dataclass
class LayerRecord:
    layer_index: int
    responses: list[str]  # call_ids of boot/continuation calls in this layer
    selection: SelectionResult | None = None
    aggregate_text: str = ""
    aggregate_tokens: int = 0
    degraded: bool = False
    disqualified: list[str] = field(default_factory=list)
    selector_calls: list[str] = field(default_factory=list)
    aggregator_calls: list[str] = field(default_factory=list)


@dataclass
class RoutingTrace:
    query_id: str
    query_text: str
    strategy: str = "router"
    layers: list[LayerRecord] = field(default_factory=list)
    calls: list[CallRecord] = field(default_factory=list)
    final_text: str = ""
    ledger: CostLedger = field(default_factory=CostLedger)
    warnings: list[str] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    error: str | None = None

    @property
    def total_tokens(self) -> int:
        return total_tokens(self.ledger)

    @property
    def total_currency(self):
        return total_currency(self.ledger)

    def call(self, call_id: str) -> CallRecord:
        return next(c for c in self.calls if c.call_id == call_id)

    def to_dict(self, with_timing: bool = True) -> dict[str, Any]:
        calls = []
        for c in self.calls:
            d = asdict(c)
            if not with_timing:
                d.pop("latency")
            calls.append(d)
        layers = []
        for rec in self.layers:
            d = asdict(rec)
            if rec.selection is not None:
                d["selection"] = {
                    "ranking": list(rec.selection.ranking),
                    "selected": list(rec.selection.selected),
                    "selector_raw": rec.selection.selector_raw,
                    "fallback_used": rec.selection.fallback_used,
                }
            layers.append(d)
        return {
            "schema_version": TRACE_SCHEMA_VERSION,
            "query_id": self.query_id,
            "query_text": self.query_text,
            "strategy": self.strategy,
            "seed": self.seed,
            "config": self.config,
            "layers": layers,
            "calls": calls,
            "final_text": self.final_text,
            "ledger": self.ledger.to_list(),
            "totals": {"tokens": self.total_tokens, "currency": str(self.total_currency)},
            "warnings": list(self.warnings),
            "error": self.error,
        }

    def to_json(self, with_timing: bool = True) -> str:
        return json.dumps(self.to_dict(with_timing), indent=2, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RoutingTrace":
        layers = []
        for rec in d["layers"]:
            rec = dict(rec)
            sel = rec.pop("selection")
            if sel is not None:
                sel = SelectionResult(tuple(sel["ranking"]), tuple(sel["selected"]),
                                      sel["selector_raw"], sel["fallback_used"])
            layers.append(LayerRecord(selection=sel, **rec))
        calls = [CallRecord(**{"latency": 0.0, **c}) for c in d["calls"]]
        return cls(
            query_id=d["query_id"], query_text=d["query_text"],
            strategy=d.get("strategy", "router"), layers=layers, calls=calls,
            final_text=d["final_text"], ledger=CostLedger.from_list(d["ledger"]),
            warnings=list(d.get("warnings", [])), config=dict(d.get("config", {})),
            seed=d.get("seed"), error=d.get("error"),
        )


class _Recorder:
    """Assigns call ids and keeps trace calls and ledger entries in lockstep."""

    def __init__(self, trace: RoutingTrace, config: RouterConfig) -> None:
        self.trace = trace
        self.config = config
        self._seq = 0

    def record(self, layer: int, purpose: str, model: ModelSpec, resp: BootResponse,
               prompt: str) -> str:
        self._seq += 1
        call_id = f"{self.trace.query_id}:{self._seq:03d}"
        self.trace.calls.append(CallRecord(
            call_id=call_id, layer=layer, purpose=purpose, model_id=model.model_id,
            termination=resp.termination, prompt_tokens=resp.prompt_tokens,
            completion_tokens=resp.completion_tokens, estimated=resp.estimated,
            latency=resp.latency, text=resp.text, prompt=prompt,
            error_detail=resp.error_detail,
        ))
        self.trace.ledger.append(LedgerEntry(
            call_id=call_id, model_id=model.model_id, purpose=purpose,
            prompt_tokens=resp.prompt_tokens, completion_tokens=resp.completion_tokens,
            estimated=resp.estimated, unit_price=model.price_per_million_tokens, layer=layer,
        ))
        return call_id


def query_rng(seed: int | None, query_id: str) -> random.Random:
    # per-query stream: independent of how concurrent queries interleave
    return random.Random(f"{seed}:{query_id}") if seed is not None else random.Random()


def continuation_prompt(query: Query, previous: str) -> str:
    return load_template("continuation.txt").format(query=query.text, previous=previous)


class Router:
    """Routes queries through ``config.layers`` rounds of select-and-aggregate."""

    def __init__(self, config: RouterConfig, client: ModelClient | None = None) -> None:
        self.config = config
        if client is None:
            mocks = MockBackend.from_source(config.mocks) if config.mocks else None
            client = ModelClient(mocks=mocks, timeout=config.request_timeout,
                                 temperature=config.temperature)
        self.client = client

    async def aclose(self) -> None:
        await self.client.aclose()

    async def route(self, query: Query, *, k: int | None = None, layers: int | None = None,
                    boot_budget: int | None = None) -> RoutingTrace:
        config = self.config
        changes = {key: v for key, v in
                   (("k", k), ("layers", layers), ("boot_budget", boot_budget)) if v is not None}
        if changes:
            config = config.replace(**changes)
        return await _route(self.client, query, config)

    async def all_full(self, query: Query) -> RoutingTrace:
        return await _all_full(self.client, query, self.config)

    async def single_best(self, query: Query, model_id: str) -> RoutingTrace:
        return await _single_best(self.client, query, self.config, model_id)


def _new_trace(query: Query, config: RouterConfig, strategy: str) -> RoutingTrace:
    return RoutingTrace(query_id=query.query_id, query_text=query.text, strategy=strategy,
                        config=config_to_dict(config, include_mocks=False), seed=config.seed)


async def _route(client: ModelClient, query: Query, config: RouterConfig) -> RoutingTrace:
    trace = _new_trace(query, config, "router")
    rec = _Recorder(trace, config)
    rng = query_rng(config.seed, query.query_id)
    models, fell_back = eligible_models(query, config.pool)
    if fell_back:
        trace.warnings.append("capability_fallback: no model matched "
                              f"{sorted(query.required_capabilities)}; using full pool")
    by_id = {m.model_id: m for m in models}
    pool_order = [m.model_id for m in config.pool]
    price_of = lambda mid: config.model(mid).price_per_million_tokens  # noqa: E731

    def fail(reason: str) -> AllCandidatesFailed:
        trace.error = reason
        return AllCandidatesFailed(reason, trace=trace)

    async def select(layer: int, record: LayerRecord, responses: Sequence[BootResponse],
                     width: int) -> SelectionResult:
        def on_call(call: SelectorCall) -> None:
            record.selector_calls.append(
                rec.record(layer, "selection", config.selector, call.response, call.prompt))

        sel = await select_top_k(
            client, query, responses, width, config.selector, price_of=price_of,
            pool_order=pool_order, max_tokens=config.selector_max_tokens, rng=rng,
            on_call=on_call)
        if sel.fallback_used:
            trace.warnings.append(f"layer {layer}: selector fallback (price ranking)")
        return sel

    async def merge(layer: int, record: LayerRecord, responses: Sequence[BootResponse],
                    ranking: Sequence[str]) -> None:
        def on_call(resp: BootResponse, prompt: str) -> None:
            record.aggregator_calls.append(
                rec.record(layer, "aggregation", config.aggregator, resp, prompt))

        result = await aggregate(
            client, AggregateInput(query.text, answers_in_order(responses, ranking), layer),
            config.aggregator, config.max_final_tokens, on_call=on_call)
        record.aggregate_text = result.text
        record.aggregate_tokens = result.tokens
        record.degraded = result.degraded
        if result.degraded:
            trace.warnings.append(f"layer {layer}: aggregator degraded to top-ranked answer")

    # layer 1: boot probes over every eligible model
    layer1 = LayerRecord(layer_index=1, responses=[])
    trace.layers.append(layer1)
    boots = await asyncio.gather(*(
        client.stream_completion(
            m, ChatRequest.user(m.model_id, query.text, config.boot_budget),
            config.boot_budget)
        for m in models))
    for m, b in zip(models, boots):
        layer1.responses.append(rec.record(1, "boot", m, b, query.text))
        if not b.usable:
            layer1.disqualified.append(m.model_id)
    if not any(b.usable for b in boots):
        raise fail("all_candidates_failed")
    try:
        selection = await select(1, layer1, boots, config.k)
    except NoCandidates:
        raise fail("all_candidates_failed") from None
    layer1.selection = selection
    generators = list(selection.selected)

    previous: str | None = None
    for layer in range(1, config.layers + 1):
        if layer == 1:
            record = layer1
            prompt = query.text
        else:
            record = LayerRecord(layer_index=layer, responses=[])
            trace.layers.append(record)
            prompt = continuation_prompt(query, previous or "")
        fulls = await asyncio.gather(*(
            client.complete_full(
                by_id[mid], ChatRequest.user(mid, prompt, config.max_final_tokens),
                config.max_final_tokens)
            for mid in generators))
        for mid, resp in zip(generators, fulls):
            record.responses.append(
                rec.record(layer, "continuation", by_id[mid], resp, prompt))
            if not resp.usable and mid not in record.disqualified:
                record.disqualified.append(mid)
        usable = [r for r in fulls if r.usable]
        if not usable:
            raise fail("all_candidates_failed")
        if layer == 1:
            ranking = [mid for mid in selection.ranking if mid in {r.model_id for r in usable}]
        else:
            record.selection = await select(layer, record, usable, len(usable))
            ranking = list(record.selection.ranking)
        await merge(layer, record, usable, ranking)
        previous = record.aggregate_text

    trace.final_text = trace.layers[-1].aggregate_text
    return trace


async def _all_full(client: ModelClient, query: Query, config: RouterConfig) -> RoutingTrace:
    """Baseline: every eligible model answers in full, then one aggregation."""
    trace = _new_trace(query, config, "all-full")
    rec = _Recorder(trace, config)
    models, _ = eligible_models(query, config.pool)
    record = LayerRecord(layer_index=1, responses=[])
    trace.layers.append(record)
    fulls = await asyncio.gather(*(
        client.complete_full(m, ChatRequest.user(m.model_id, query.text,
                                                 config.max_final_tokens),
                             config.max_final_tokens)
        for m in models))
    for m, r in zip(models, fulls):
        record.responses.append(rec.record(1, "continuation", m, r, query.text))
        if not r.usable:
            record.disqualified.append(m.model_id)
    usable = [r for r in fulls if r.usable]
    if not usable:
        trace.error = "all_candidates_failed"
        raise AllCandidatesFailed("all_candidates_failed", trace=trace)

    def on_call(resp: BootResponse, prompt: str) -> None:
        record.aggregator_calls.append(
            rec.record(1, "aggregation", config.aggregator, resp, prompt))

    result = await aggregate(
        client, AggregateInput(query.text, tuple((r.model_id, r.text) for r in usable), 1),
        config.aggregator, config.max_final_tokens, on_call=on_call)
    record.aggregate_text, record.aggregate_tokens = result.text, result.tokens
    record.degraded = result.degraded
    trace.final_text = result.text
    return trace


async def _single_best(client: ModelClient, query: Query, config: RouterConfig,
                       model_id: str) -> RoutingTrace:
    """Baseline: one configured model answers alone."""
    model = config.model(model_id)
    if model is None:
        raise ValueError(f"unknown model {model_id!r}")
    trace = _new_trace(query, config, "single-best")
    rec = _Recorder(trace, config)
    record = LayerRecord(layer_index=1, responses=[])
    trace.layers.append(record)
    resp = await client.complete_full(
        model, ChatRequest.user(model_id, query.text, config.max_final_tokens),
        config.max_final_tokens)
    record.responses.append(rec.record(1, "continuation", model, resp, query.text))
    if not resp.usable:
        record.disqualified.append(model_id)
        trace.error = "all_candidates_failed"
        raise AllCandidatesFailed("all_candidates_failed", [resp], trace=trace)
    record.aggregate_text = trace.final_text = resp.text
    return trace


async def route(query: Query, config: RouterConfig, client: ModelClient | None = None
                ) -> RoutingTrace:
    return await route_with_overrides(query, config, {}, client)


async def route_with_overrides(query: Query, config: RouterConfig,
                               overrides: Mapping[str, int], client: ModelClient | None = None
                               ) -> RoutingTrace:
    """Route with per-call substitution of ``k``, ``layers`` or ``boot_budget``."""
    unknown = set(overrides) - {"k", "layers", "boot_budget"}
    if unknown:
        raise ValueError(f"unsupported overrides: {sorted(unknown)}")
    if overrides:
        config = config.replace(**overrides)
    router = Router(config, client)
    try:
        return await router.route(query)
    finally:
        if client is None:
            await router.aclose()
