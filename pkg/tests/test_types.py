import json

import pytest
import yaml
from hypothesis import given, strategies as st

from bootroute.types import (
    ConfigError,
    ModelSpec,
    Query,
    config_to_dict,
    dump_config,
    eligible_models,
    load_config,
)

from conftest import mock_doc


def test_primary_setting_loads():
    cfg = load_config(mock_doc(n=5, k=2, layers=2, boot_budget=200))
    assert (len(cfg.pool), cfg.k, cfg.layers, cfg.boot_budget) == (5, 2, 2, 200)
    assert cfg.selector.model_id == "selector"


@pytest.mark.parametrize("k, n, message", [
    (0, 5, "k must be ≥ 1"),
    (3, 2, "k exceeds pool size"),
])
def test_k_bounds(k, n, message):
    with pytest.raises(ConfigError, match=message):
        load_config(mock_doc(n=n, k=k))


@pytest.mark.parametrize("field, value, fragment", [
    ("layers", 0, "layers"),
    ("boot_budget", 0, "boot_budget"),
    ("k", "two", "router.k"),
    ("selector_model", "nope", "selector_model"),
    ("lambda", "-1", "lambda"),
])
def test_schema_errors_name_the_field(field, value, fragment):
    doc = mock_doc()
    doc["router"][field] = value
    with pytest.raises(ConfigError, match=fragment):
        load_config(doc)


def test_negative_price_rejected():
    doc = mock_doc()
    doc["pool"][0]["price_per_million_tokens"] = -1
    with pytest.raises(ConfigError, match="price_per_million_tokens"):
        load_config(doc)


def test_duplicate_model_id_rejected():
    doc = mock_doc()
    doc["pool"][1]["model_id"] = doc["pool"][0]["model_id"]
    with pytest.raises(ConfigError, match="duplicate"):
        load_config(doc)


def test_round_trip(tmp_path):
    cfg = load_config(mock_doc())
    assert load_config(json.loads(dump_config(cfg))) == cfg
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(config_to_dict(cfg)))
    assert load_config(path) == cfg


def test_yaml_text_and_external_mock_file(tmp_path):
    doc = mock_doc()
    scripts = doc.pop("mocks")
    (tmp_path / "mocks.yaml").write_text(yaml.safe_dump(scripts))
    doc["mocks"] = "mocks.yaml"
    path = tmp_path / "router.yaml"
    path.write_text(yaml.safe_dump(doc))
    cfg = load_config(path)
    assert "selector" in cfg.mocks["scripts"]


def _pool():
    caps = [{"math"}, {"code"}, {"math", "code"}, set(), {"chat"}]
    return [ModelSpec(f"m{i}", f"mock://m{i}", capabilities=frozenset(c))
            for i, c in enumerate(caps)]


def test_eligible_no_filter():
    models, fallback = eligible_models(Query("q"), _pool())
    assert len(models) == 5 and not fallback


def test_eligible_math():
    models, fallback = eligible_models(Query("q", frozenset({"math"})), _pool())
    assert [m.model_id for m in models] == ["m0", "m2"] and not fallback


def test_eligible_fallback():
    models, fallback = eligible_models(Query("q", frozenset({"nonexistent-tag"})), _pool())
    assert len(models) == 5 and fallback


TAGS = st.frozensets(st.sampled_from(["math", "code", "chat", "law"]), max_size=3)


@given(st.lists(TAGS, min_size=1, max_size=8), TAGS)
def test_eligible_is_ordered_subset(caps, required):
    pool = [ModelSpec(f"m{i}", f"mock://m{i}", capabilities=c) for i, c in enumerate(caps)]
    models, fallback = eligible_models(Query("q", required), pool)
    ids = [m.model_id for m in models]
    assert ids == [m.model_id for m in pool if m in models]
    if fallback:
        assert models == pool and required
    else:
        assert all(not required or m.capabilities & required for m in models)


def test_query_text_required():
    with pytest.raises(ValueError):
        Query("   ")
