"""Domain types, configuration loading and capability filtering."""

from __future__ import annotations

import json
import logging
import uuid
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Mapping

import yaml

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1

BUDGET_REACHED = "budget_reached"
MODEL_FINISHED = "model_finished"
ERROR = "error"
TIMEOUT = "timeout"
TERMINATIONS = (BUDGET_REACHED, MODEL_FINISHED, ERROR, TIMEOUT)


class ConfigError(ValueError):
    """Raised when a configuration document violates the schema."""


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    endpoint: str
    price_per_million_tokens: Decimal = Decimal("0")
    capabilities: frozenset[str] = frozenset()
    display_name: str = ""
    api_key_env: str | None = None

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ConfigError("model_id must be non-empty")
        if self.price_per_million_tokens < 0:
            raise ConfigError(
                f"price_per_million_tokens must be >= 0 (model {self.model_id})"
            )

    @property
    def is_mock(self) -> bool:
        return self.endpoint.startswith("mock://")


@dataclass(frozen=True)
class RouterConfig:
    pool: tuple[ModelSpec, ...]
    k: int = 2
    layers: int = 2
    boot_budget: int = 200
    lam: Decimal = Decimal("0")
    selector_model: str = ""
    aggregator_model: str = ""
    max_final_tokens: int = 4096
    request_timeout: float = 60.0
    selector_max_tokens: int = 512
    temperature: float | None = None
    seed: int | None = None
    extra_models: tuple[ModelSpec, ...] = ()
    mocks: Mapping[str, Any] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        n = len(self.pool)
        if n < 1:
            raise ConfigError("pool must contain at least one model")
        ids = [m.model_id for m in self.pool]
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise ConfigError(f"duplicate model_id in pool: {sorted(dupes)}")
        if self.k < 1:
            raise ConfigError("k must be ≥ 1")
        if self.k > n:
            raise ConfigError(f"k exceeds pool size ({self.k} > {n})")
        if self.layers < 1:
            raise ConfigError("layers must be ≥ 1")
        if self.boot_budget < 1:
            raise ConfigError("boot_budget must be ≥ 1")
        if self.lam < 0:
            raise ConfigError("lambda must be ≥ 0")
        if self.max_final_tokens < 1:
            raise ConfigError("max_final_tokens must be ≥ 1")
        if self.selector_max_tokens < 1:
            raise ConfigError("selector_max_tokens must be ≥ 1")
        if self.request_timeout <= 0:
            raise ConfigError("request_timeout_secs must be > 0")
        for role in ("selector_model", "aggregator_model"):
            if self.model(getattr(self, role)) is None:
                raise ConfigError(
                    f"{role} {getattr(self, role)!r} does not resolve to a known model"
                )

    def model(self, model_id: str) -> ModelSpec | None:
        for m in (*self.pool, *self.extra_models):
            if m.model_id == model_id:
                return m
        return None

    @property
    def selector(self) -> ModelSpec:
        return self.model(self.selector_model)  # type: ignore[return-value]

    @property
    def aggregator(self) -> ModelSpec:
        return self.model(self.aggregator_model)  # type: ignore[return-value]

    def replace(self, **changes: Any) -> "RouterConfig":
        import dataclasses

        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Query:
    text: str
    required_capabilities: frozenset[str] = frozenset()
    query_id: str = field(default_factory=lambda: uuid.uuid4().hex)

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ValueError("query text must be non-empty")


@dataclass(frozen=True)
class BootResponse:
    """A truncated probe (or a full generation) from one candidate."""

    model_id: str
    text: str
    completion_tokens: int
    prompt_tokens: int
    latency: float
    termination: str
    error_detail: str | None = None
    estimated: bool = False

    @property
    def usable(self) -> bool:
        return self.termination in (BUDGET_REACHED, MODEL_FINISHED)


# Full generations carry the same fields; the pipeline distinguishes them by purpose.
FullResponse = BootResponse


@dataclass(frozen=True)
class SelectionResult:
    ranking: tuple[str, ...]
    selected: tuple[str, ...]
    selector_raw: str
    fallback_used: bool = False


# -- configuration documents -------------------------------------------------


def _decimal(value: Any, name: str) -> Decimal:
    try:
        return Decimal(str(value))
    except (InvalidOperation, ValueError) as exc:
        raise ConfigError(f"{name}: not a decimal number: {value!r}") from exc


def _int(section: Mapping[str, Any], key: str, default: int | None = None) -> int:
    if key not in section:
        if default is None:
            raise ConfigError(f"router.{key} is required")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"router.{key} must be an integer, got {value!r}")
    return value


def _model_entry(entry: Any, where: str) -> ModelSpec:
    if not isinstance(entry, Mapping):
        raise ConfigError(f"{where}: model entry must be a mapping")
    for key in ("model_id", "endpoint"):
        if not isinstance(entry.get(key), str) or not entry.get(key):
            raise ConfigError(f"{where}.{key} is required and must be a string")
    caps = entry.get("capabilities", [])
    if not isinstance(caps, (list, tuple)) or not all(isinstance(c, str) for c in caps):
        raise ConfigError(f"{where}.capabilities must be a list of strings")
    price = _decimal(
        entry.get("price_per_million_tokens", 0), f"{where}.price_per_million_tokens"
    )
    if price < 0:
        raise ConfigError(f"{where}.price_per_million_tokens must be >= 0")
    return ModelSpec(
        model_id=entry["model_id"],
        endpoint=entry["endpoint"],
        price_per_million_tokens=price,
        capabilities=frozenset(caps),
        display_name=entry.get("display_name", entry["model_id"]),
        api_key_env=entry.get("api_key_env"),
    )


def config_from_dict(doc: Mapping[str, Any], base_dir: Path | None = None) -> RouterConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("configuration root must be a mapping")
    version = doc.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}")
    pool_doc = doc.get("pool")
    if not isinstance(pool_doc, list) or not pool_doc:
        raise ConfigError("pool must be a non-empty list of model entries")
    pool = tuple(_model_entry(e, f"pool[{i}]") for i, e in enumerate(pool_doc))
    extra = tuple(
        _model_entry(e, f"models[{i}]") for i, e in enumerate(doc.get("models", []) or [])
    )
    router = doc.get("router")
    if not isinstance(router, Mapping):
        raise ConfigError("router section is required")

    mocks = doc.get("mocks")
    if isinstance(mocks, str):
        path = Path(mocks)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        mocks = _read_document(path)

    temperature = router.get("temperature")
    seed = router.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ConfigError("router.seed must be an integer")
    timeout = router.get("request_timeout_secs", 60)
    if not isinstance(timeout, (int, float)) or isinstance(timeout, bool):
        raise ConfigError("router.request_timeout_secs must be a number")
    for key in ("selector_model", "aggregator_model"):
        if not isinstance(router.get(key), str):
            raise ConfigError(f"router.{key} is required and must be a model_id")

    return RouterConfig(
        pool=pool,
        k=_int(router, "k"),
        layers=_int(router, "layers"),
        boot_budget=_int(router, "boot_budget"),
        lam=_decimal(router.get("lambda", 0), "router.lambda"),
        selector_model=router["selector_model"],
        aggregator_model=router["aggregator_model"],
        max_final_tokens=_int(router, "max_final_tokens", 4096),
        request_timeout=float(timeout),
        selector_max_tokens=_int(router, "selector_max_tokens", 512),
        temperature=None if temperature is None else float(temperature),
        seed=seed,
        extra_models=extra,
        mocks=mocks,
    )


def _read_document(path: Path) -> Any:
    text = Path(path).read_text()
    if Path(path).suffix.lower() == ".json":
        return json.loads(text)
    return yaml.safe_load(text)


def load_config(source: str | Path | Mapping[str, Any]) -> RouterConfig:
    """Load and validate a router configuration.

    ``source`` may be a mapping, a path to a JSON/YAML file, or the document
    text itself.
    """
    if isinstance(source, Mapping):
        return config_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).exists()):
        path = Path(source)
        return config_from_dict(_read_document(path), base_dir=path.parent)
    try:
        doc = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        raise ConfigError(f"configuration does not parse: {exc}") from exc
    return config_from_dict(doc)


def _model_to_dict(m: ModelSpec) -> dict[str, Any]:
    out: dict[str, Any] = {
        "model_id": m.model_id,
        "endpoint": m.endpoint,
        "price_per_million_tokens": str(m.price_per_million_tokens),
        "capabilities": sorted(m.capabilities),
        "display_name": m.display_name,
    }
    if m.api_key_env:
        out["api_key_env"] = m.api_key_env
    return out


def config_to_dict(config: RouterConfig, include_mocks: bool = True) -> dict[str, Any]:
    router: dict[str, Any] = {
        "k": config.k,
        "layers": config.layers,
        "boot_budget": config.boot_budget,
        "lambda": str(config.lam),
        "selector_model": config.selector_model,
        "aggregator_model": config.aggregator_model,
        "max_final_tokens": config.max_final_tokens,
        "request_timeout_secs": config.request_timeout,
        "selector_max_tokens": config.selector_max_tokens,
    }
    if config.temperature is not None:
        router["temperature"] = config.temperature
    if config.seed is not None:
        router["seed"] = config.seed
    doc: dict[str, Any] = {
        "version": CONFIG_VERSION,
        "pool": [_model_to_dict(m) for m in config.pool],
        "router": router,
    }
    if config.extra_models:
        doc["models"] = [_model_to_dict(m) for m in config.extra_models]
    if include_mocks and config.mocks is not None:
        doc["mocks"] = config.mocks
    return doc


def dump_config(config: RouterConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2, sort_keys=True)


def eligible_models(query: Query, pool: list[ModelSpec] | tuple[ModelSpec, ...]
                    ) -> tuple[list[ModelSpec], bool]:
    """Filter the pool by the query's required capabilities.

    Returns ``(models, fallback)``; ``fallback`` is True when no model matched
    and the full pool was returned instead.
    """
    if not pool:
        raise ValueError("pool must be non-empty")
    if not query.required_capabilities:
        return list(pool), False
    matched = [m for m in pool if m.capabilities & query.required_capabilities]
    if not matched:
        logger.warning(
            "no model carries %s; falling back to full pool",
            sorted(query.required_capabilities),
        )
        return list(pool), True
    return matched, False
