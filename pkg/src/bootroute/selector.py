"""Ranking prompt construction, reply parsing and top-k selection."""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass
from typing import Callable, Sequence

from .client import ChatRequest, ModelClient
from .prompts import load_template
from .types import BootResponse, ModelSpec, Query, SelectionResult

logger = logging.getLogger(__name__)

LABEL = re.compile(r"LLM\s*(\d+)", re.I)
BRACKETED = re.compile(r"\[([^\[\]]*)\]")

_NUMBER_WORDS = ("zero one two three four five six seven eight nine ten eleven twelve "
                 "thirteen fourteen fifteen sixteen seventeen eighteen nineteen twenty").split()


class NoCandidates(ValueError):
    """Raised when no usable boot response is available for ranking."""


class ParseFailure(ValueError):
    """The selector reply carried no recognisable candidate label."""


def count_word(n: int) -> str:
    return _NUMBER_WORDS[n] if n < len(_NUMBER_WORDS) else str(n)


@dataclass(frozen=True)
class SelectorPromptContext:
    query_text: str
    candidates: tuple[tuple[str, str], ...]  # (label, boot text), presentation order
    label_map: dict[str, str]

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.candidates]


def format_list(n: int) -> str:
    return "[" + ", ".join(f"LLM{i}" for i in range(1, n + 1)) + "]"


def build_selector_prompt(query: Query, boots: Sequence[BootResponse],
                          rng: random.Random | None = None
                          ) -> tuple[SelectorPromptContext, str]:
    """Render the ranking prompt over anonymised candidates.

    Models are assigned to LLM1..LLMn in a shuffled order drawn from ``rng``.
    """
    if not boots:
        raise NoCandidates("no_candidates")
    rng = rng or random.Random()
    order = list(range(len(boots)))
    rng.shuffle(order)
    candidates = []
    label_map = {}
    for pos, idx in enumerate(order, start=1):
        label = f"LLM{pos}"
        label_map[label] = boots[idx].model_id
        candidates.append((label, boots[idx].text))
    ctx = SelectorPromptContext(query.text, tuple(candidates), label_map)
    blocks = "\n\n".join(f"{label}: {text}" for label, text in candidates)
    prompt = load_template("selector.txt").format(
        count_word=count_word(len(boots)),
        format_list=format_list(len(boots)),
        query=query.text,
        candidates=blocks,
    )
    return ctx, prompt


def parse_ranking(reply: str, context: SelectorPromptContext) -> list[str]:
    """Map a selector reply to a full ranking of model ids.

    Labels come from the first bracketed list that names a known label, or
    from anywhere in the reply when no such list exists. Duplicates keep
    their first position; unmentioned candidates follow in presentation order.
    """
    known = set(context.label_map)
    found: list[str] = []
    for m in BRACKETED.finditer(reply or ""):
        found = [f"LLM{int(d)}" for d in LABEL.findall(m.group(1))]
        found = [f for f in found if f in known]
        if found:
            break
    if not found:
        found = [f"LLM{int(d)}" for d in LABEL.findall(reply or "")]
        found = [f for f in found if f in known]
    if not found:
        raise ParseFailure("parse_failure")
    ranked = list(dict.fromkeys(found))
    ranked += [label for label in context.labels if label not in ranked]
    return [context.label_map[label] for label in ranked]


def price_ranking(model_ids: Sequence[str], price_of: Callable[[str], object],
                  pool_order: Sequence[str]) -> list[str]:
    """Cheapest first; ties broken by pool order."""
    position = {m: i for i, m in enumerate(pool_order)}
    return sorted(model_ids, key=lambda m: (price_of(m), position.get(m, len(position))))


@dataclass
class SelectorCall:
    """One selector invocation as recorded on the trace."""

    response: BootResponse
    prompt: str
    retry: bool


async def select_top_k(client: ModelClient, query: Query, boots: Sequence[BootResponse],
                       k: int, selector_model: ModelSpec, *,
                       price_of: Callable[[str], object],
                       pool_order: Sequence[str],
                       max_tokens: int = 512,
                       rng: random.Random | None = None,
                       on_call: Callable[[SelectorCall], None] | None = None
                       ) -> SelectionResult:
    """Rank usable boots with the selector model and keep the first ``k``.

    An unparseable reply is retried once with a stricter reminder; after that
    (or on endpoint failure) candidates are ranked by ascending price.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    usable = [b for b in boots if b.usable]
    if not usable:
        raise NoCandidates("no_candidates")
    ctx, prompt = build_selector_prompt(query, usable, rng)
    raw = ""
    ranking: list[str] | None = None
    for attempt in range(2):
        text = prompt
        if attempt:
            text += load_template("selector_retry.txt").format(format_list=format_list(len(usable)))
        resp = await client.complete(
            selector_model, ChatRequest.user(selector_model.model_id, text, max_tokens, False))
        if on_call is not None:
            on_call(SelectorCall(resp, text, bool(attempt)))
        raw = resp.text
        if not resp.usable:
            logger.warning("selector %s failed: %s", selector_model.model_id, resp.error_detail)
            continue
        try:
            ranking = parse_ranking(raw, ctx)
            break
        except ParseFailure:
            logger.info("selector reply unparseable (attempt %d): %.80r", attempt + 1, raw)
    fallback = ranking is None
    if fallback:
        ranking = price_ranking([b.model_id for b in usable], price_of, pool_order)
    return SelectionResult(
        ranking=tuple(ranking),
        selected=tuple(ranking[:min(k, len(ranking))]),
        selector_raw=raw,
        fallback_used=fallback,
    )
