import asyncio
from decimal import Decimal

import pytest

from bootroute import MockBackend, ModelClient, load_config

# Cost per 1M tokens for the five candidate models and the selector/aggregator.
TABLE_PRICES = {
    "llama-3.1-70b": Decimal("0.88"),
    "qwen2.5-max": Decimal("1.32"),
    "qwen-2.5-math-72b": Decimal("1.65"),
    "mixtral-8x22b": Decimal("0.80"),
    "deepseek-v3": Decimal("1.10"),
}
POOL_IDS = list(TABLE_PRICES)


def run(coro):
    return asyncio.run(coro)


def mock_doc(n=5, k=2, layers=2, boot_budget=200, tokens=2000, chunk_size=4,
             selector="[LLM1, LLM2, LLM3, LLM4, LLM5]", aggregator="merged answer",
             seed=7, scripts=None, honor_max_tokens=True, capabilities=None, **router):
    ids = POOL_IDS[:n] if n <= len(POOL_IDS) else [f"m{i}" for i in range(n)]
    pool = []
    base_scripts = {}
    for i, mid in enumerate(ids):
        pool.append({
            "model_id": mid,
            "endpoint": f"mock://{mid}",
            "price_per_million_tokens": str(TABLE_PRICES.get(mid, "1.00")),
            "capabilities": (capabilities or {}).get(mid, []),
        })
        base_scripts[mid] = {"chunk_size": chunk_size, "honor_max_tokens": honor_max_tokens,
                             "replies": [{"tokens": tokens}]}
    base_scripts["selector"] = {"replies": [selector]}
    base_scripts["aggregator"] = {"replies": [aggregator]}
    base_scripts.update(scripts or {})
    return {
        "version": 1,
        "pool": pool,
        "models": [
            {"model_id": "selector", "endpoint": "mock://selector",
             "price_per_million_tokens": "1.10"},
            {"model_id": "aggregator", "endpoint": "mock://aggregator",
             "price_per_million_tokens": "1.10"},
        ],
        "router": {"k": k, "layers": layers, "boot_budget": boot_budget,
                   "selector_model": "selector", "aggregator_model": "aggregator",
                   "seed": seed, "max_final_tokens": 4096, "request_timeout_secs": 5,
                   **router},
        "mocks": {"scripts": base_scripts},
    }


def mock_config(**kw):
    return load_config(mock_doc(**kw))


def client_for(config):
    return ModelClient(mocks=MockBackend.from_source(config.mocks),
                       timeout=config.request_timeout)


@pytest.fixture
def config():
    return mock_config()


# One pass/fail line per acceptance criterion, printed at the end of the run.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
