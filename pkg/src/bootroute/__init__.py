"""Token-efficient multi-model routing: probe with short boot prefixes,
keep the top-k candidates, aggregate them over a fixed number of layers."""

from .client import AllCandidatesFailed, ChatRequest, ModelClient
from .cost import CostLedger, LedgerEntry, optimal_k, pareto_frontier, total_currency, total_tokens
from .mock import MockBackend
from .pipeline import Router, RoutingTrace, route, route_with_overrides
from .types import (
    BootResponse,
    ConfigError,
    ModelSpec,
    Query,
    RouterConfig,
    SelectionResult,
    eligible_models,
    load_config,
)

__version__ = "0.1.0"

__all__ = [
    "AllCandidatesFailed", "BootResponse", "ChatRequest", "ConfigError", "CostLedger",
    "LedgerEntry", "MockBackend", "ModelClient", "ModelSpec", "Query", "Router",
    "RouterConfig", "RoutingTrace", "SelectionResult", "eligible_models", "load_config",
    "optimal_k", "pareto_frontier", "route", "route_with_overrides", "total_currency",
    "total_tokens",
]
