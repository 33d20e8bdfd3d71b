import re
from pathlib import Path

from bootroute.aggregator import AggregateInput, aggregate, build_aggregate_prompt
from bootroute.client import ModelClient
from bootroute.mock import MockBackend
from bootroute.types import ModelSpec

from conftest import run

AGG = ModelSpec("agg", "mock://agg")


def test_prompt_two_answers():
    p = build_aggregate_prompt(AggregateInput("Why?", (("a", "first"), ("b", "second"))))
    assert "LLM1's answer: first\n\nLLM2's answer: second\n\nquery: Why?" in p
    assert "Critically evaluate the input responses" in p
    assert p.startswith("You are given a set of responses from various open-source models")


def test_prompt_single_and_four():
    assert len(re.findall(r"LLM\d's answer:", build_aggregate_prompt(
        AggregateInput("q", (("a", "x"),))))) == 1
    p = build_aggregate_prompt(AggregateInput("q", tuple((m, m * 3) for m in "wxyz")))
    assert [m.group(1) for m in re.finditer(r"LLM\d's answer: (\w+)", p)] == [
        "www", "xxx", "yyy", "zzz"]


def _client(script):
    return ModelClient(MockBackend.from_source({"scripts": {"agg": script}}))


def test_aggregate_returns_synthesis_and_tokens():
    res = run(aggregate(_client({"replies": ["the synthesis"]}),
                        AggregateInput("q", (("a", "x"), ("b", "y"))), AGG, 100))
    assert res.text == "the synthesis" and not res.degraded
    assert res.tokens == res.calls[0].prompt_tokens + 2


def test_single_answer_echo():
    echo = {"replies": [{"extract": r"LLM1's answer: (.*?)\n\nquery:"}]}
    res = run(aggregate(_client(echo), AggregateInput("q", (("a", "forty two"),)), AGG, 100))
    assert res.text == "forty two"


def test_degraded_after_two_failures():
    res = run(aggregate(_client({"replies": [{"status": 500}]}),
                        AggregateInput("q", (("c", "c text"), ("a", "a text"))), AGG, 100))
    assert res.degraded and res.text == "c text"
    assert len(res.calls) == 2


def test_two_answer_rendering_is_byte_exact():
    golden = (Path(__file__).parent / "golden" / "aggregator_2.txt").read_text()
    p = build_aggregate_prompt(
        AggregateInput('{state["query"]}', (("a", "{answer1}"), ("b", "{answer2}"))))
    assert p == golden
