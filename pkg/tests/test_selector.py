import random
import re
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from bootroute.client import ModelClient
from bootroute.mock import MockBackend
from bootroute.selector import (
    NoCandidates,
    ParseFailure,
    SelectorPromptContext,
    build_selector_prompt,
    parse_ranking,
    select_top_k,
)
from bootroute.types import BootResponse, ModelSpec, Query

from conftest import run


def boot(mid, text=None, termination="budget_reached"):
    return BootResponse(mid, text or f"partial from {mid}", 200, 10, 0.0, termination)


def ctx(n):
    labels = [f"LLM{i}" for i in range(1, n + 1)]
    ids = [chr(ord("a") + i) for i in range(n)]
    return SelectorPromptContext("q", tuple((l, "") for l in labels), dict(zip(labels, ids)))


def test_prompt_five_candidates_matches_original_layout():
    boots = [boot(f"m{i}") for i in range(5)]
    _, prompt = build_selector_prompt(Query("What is 2+2?"), boots, random.Random(0))
    assert len(re.findall(r"^LLM\d: ", prompt, re.M)) == 5
    assert "Only output a list in this format:\n[LLM1, LLM2, LLM3, LLM4, LLM5]\n" in prompt
    assert "partial responses from five different LLMs" in prompt
    assert "DO NOT include any explanations, comments, or additional text" in prompt
    assert "\n\nquery: What is 2+2?\n\nLLM1: " in prompt


def test_prompt_generalises_to_three_and_one():
    _, p3 = build_selector_prompt(Query("q"), [boot("a"), boot("b"), boot("c")])
    assert len(re.findall(r"^LLM\d: ", p3, re.M)) == 3
    assert "[LLM1, LLM2, LLM3]" in p3 and "three different LLMs" in p3
    c1, p1 = build_selector_prompt(Query("q"), [boot("a")])
    assert len(re.findall(r"^LLM\d: ", p1, re.M)) == 1
    assert c1.label_map == {"LLM1": "a"}


def test_prompt_requires_candidates():
    with pytest.raises(NoCandidates):
        build_selector_prompt(Query("q"), [])


def test_labels_are_a_shuffled_bijection():
    boots = [boot(f"m{i}") for i in range(6)]
    maps = set()
    for seed in range(20):
        c, prompt = build_selector_prompt(Query("q"), boots, random.Random(seed))
        assert sorted(c.label_map.values()) == sorted(b.model_id for b in boots)
        for label, mid in c.label_map.items():
            assert f"{label}: partial from {mid}" in prompt
        maps.add(tuple(c.label_map.values()))
    assert len(maps) > 1


def test_parse_simple():
    assert parse_ranking("[LLM3, LLM1, LLM2]", ctx(3)) == ["c", "a", "b"]


def test_parse_dedupe_and_complete():
    assert parse_ranking("Ranking: [LLM2, LLM2, LLM1]", ctx(3)) == ["b", "a", "c"]


def test_parse_failure():
    with pytest.raises(ParseFailure):
        parse_ranking("I cannot rank these.", ctx(3))


def test_parse_skips_brackets_without_labels():
    assert parse_ranking("[note] then [LLM2, LLM3]", ctx(3)) == ["b", "c", "a"]


def test_parse_unbracketed_labels():
    assert parse_ranking("Best is llm3, then LLM1", ctx(3)) == ["c", "a", "b"]


def test_parse_ignores_unknown_labels():
    assert parse_ranking("[LLM9, LLM2]", ctx(3)) == ["b", "a", "c"]


@given(st.text(alphabet=st.sampled_from(list("LM[], 0123456789xyz\n")), max_size=60),
       st.integers(1, 8))
def test_parse_always_permutation_or_failure(reply, n):
    c = ctx(n)
    try:
        out = parse_ranking(reply, c)
    except ParseFailure:
        known = {f"LLM{i}" for i in range(1, n + 1)}
        assert not any(f"LLM{int(d)}" in known for d in re.findall(r"LLM\s*(\d+)", reply, re.I))
        return
    assert sorted(out) == sorted(c.label_map.values())


def _pool_prices():
    return {"a": 0.88, "b": 1.32, "c": 1.10}


def _select(selector_script, boots, k, timeout=5.0):
    mocks = MockBackend.from_source({"scripts": {"sel": selector_script}})
    client = ModelClient(mocks, timeout=timeout)
    calls = []
    prices = _pool_prices()
    result = run(select_top_k(
        client, Query("q"), boots, k, ModelSpec("sel", "mock://sel"),
        price_of=lambda m: prices.get(m, 1.0), pool_order=["a", "b", "c", "d", "e"],
        rng=random.Random(1), on_call=calls.append))
    return result, calls


def test_select_top_two_from_reply():
    boots = [boot(m) for m in "abcde"]
    mocks = MockBackend.from_source({"scripts": {"sel": {"replies": ["[LLM4, LLM2, LLM5, LLM1, LLM3]"]}}})
    c, _ = build_selector_prompt(Query("q"), boots, random.Random(1))
    result = run(select_top_k(
        ModelClient(mocks), Query("q"), boots, 2, ModelSpec("sel", "mock://sel"),
        price_of=lambda m: 1, pool_order=list("abcde"), rng=random.Random(1)))
    assert result.selected == (c.label_map["LLM4"], c.label_map["LLM2"])
    assert not result.fallback_used


def test_select_k_equals_candidates():
    result, _ = _select({"replies": ["[LLM2, LLM1]"]}, [boot("a"), boot("b")], 2)
    assert set(result.selected) == {"a", "b"}


def test_selector_unreachable_uses_price_fallback():
    result, calls = _select({"replies": [{"status": 503}]}, [boot("a"), boot("b"), boot("c")], 2)
    assert result.selected == ("a", "c")
    assert result.fallback_used
    assert len(calls) == 2  # one retry


def test_retry_then_success():
    # first reply unparseable, the reminder-bearing retry is a different conversation
    script = {"replies": [{"text": "[LLM1, LLM2, LLM3]", "match": "Reminder"}, "no idea"]}
    result, calls = _select(script, [boot("a"), boot("b"), boot("c")], 1)
    assert not result.fallback_used
    assert [c.retry for c in calls] == [False, True]


def test_errored_boots_never_selected():
    boots = [boot("a", termination="error"), boot("b"), boot("c", termination="timeout")]
    result, _ = _select({"replies": ["[LLM1]"]}, boots, 2)
    assert result.selected == ("b",)
    assert "a" not in result.ranking and "c" not in result.ranking


def test_no_usable_boots():
    with pytest.raises(NoCandidates):
        _select({"replies": ["[LLM1]"]}, [boot("a", termination="error")], 1)


@given(st.permutations(list("abcde")), st.integers(0, 10_000))
def test_anonymisation_invariance(pool_order, seed):
    """A fixed preference over models picks the same set whatever the pool order."""
    preferred = ["d", "b"]
    boots = [boot(m) for m in pool_order]
    c, _ = build_selector_prompt(Query("q"), boots, random.Random(seed))
    inverse = {mid: label for label, mid in c.label_map.items()}
    reply = "[" + ", ".join(inverse[m] for m in preferred) + "]"
    assert parse_ranking(reply, c)[:2] == preferred


class _Identity:
    def shuffle(self, seq):
        pass


def test_five_candidate_rendering_is_byte_exact():
    golden = (Path(__file__).parent / "golden" / "selector_5.txt").read_text()
    boots = [BootResponse(f"m{i}", f"{{answer{i}}}", 0, 0, 0.0, "model_finished")
             for i in range(1, 6)]
    _, prompt = build_selector_prompt(Query('{state["query"]}'), boots, _Identity())
    assert prompt == golden
