"""Aggregate-and-synthesize step."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .client import ChatRequest, ModelClient
from .prompts import load_template
from .types import BootResponse, ModelSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AggregateInput:
    query_text: str
    answers: tuple[tuple[str, str], ...]  # (source label, text), ranked order
    layer_index: int = 1

    def __post_init__(self) -> None:
        if not self.answers:
            raise ValueError("answers must be non-empty")


@dataclass
class AggregateResult:
    text: str
    tokens: int
    degraded: bool = False
    calls: list[BootResponse] = field(default_factory=list)


def build_aggregate_prompt(inp: AggregateInput) -> str:
    blocks = "\n\n".join(
        f"LLM{i}'s answer: {text}" for i, (_, text) in enumerate(inp.answers, start=1))
    return load_template("aggregator.txt").format(answers=blocks, query=inp.query_text)


async def aggregate(client: ModelClient, inp: AggregateInput, aggregator_model: ModelSpec,
                    max_tokens: int,
                    on_call: Callable[[BootResponse, str], None] | None = None
                    ) -> AggregateResult:
    """Merge the answers with one non-streamed aggregator call (one retry).

    If both attempts fail the top-ranked answer is returned verbatim and the
    result is flagged ``degraded``.
    """
    prompt = build_aggregate_prompt(inp)
    calls = []
    for attempt in range(2):
        resp = await client.complete(
            aggregator_model,
            ChatRequest.user(aggregator_model.model_id, prompt, max_tokens, False))
        calls.append(resp)
        if on_call is not None:
            on_call(resp, prompt)
        if resp.usable:
            return AggregateResult(resp.text, resp.prompt_tokens + resp.completion_tokens,
                                   calls=calls)
        logger.warning("aggregator %s failed (attempt %d): %s",
                       aggregator_model.model_id, attempt + 1, resp.error_detail)
    return AggregateResult(inp.answers[0][1], 0, degraded=True, calls=calls)


def answers_in_order(responses: Sequence[BootResponse], ranking: Sequence[str]
                     ) -> tuple[tuple[str, str], ...]:
    by_id = {r.model_id: r for r in responses}
    return tuple((m, by_id[m].text) for m in ranking if m in by_id)
