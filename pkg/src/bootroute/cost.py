"""Token and currency accounting, the cost-penalised objective, and Pareto analysis."""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass
from decimal import Decimal
from typing import Any, Iterable, Mapping, Sequence

PURPOSES = ("boot", "continuation", "selection", "aggregation")
MILLION = Decimal(1_000_000)


def to_decimal(value: Any) -> Decimal:
    if isinstance(value, Decimal):
        return value
    # str() avoids binary float artefacts: 0.1 -> Decimal("0.1")
    return Decimal(str(value))


@dataclass(frozen=True)
class LedgerEntry:
    call_id: str
    model_id: str
    purpose: str
    prompt_tokens: int
    completion_tokens: int
    estimated: bool
    unit_price: Decimal
    layer: int = 0

    def __post_init__(self) -> None:
        if self.purpose not in PURPOSES:
            raise ValueError(f"unknown purpose {self.purpose!r}")
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")

    @property
    def tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    @property
    def currency(self) -> Decimal:
        return self.tokens * self.unit_price / MILLION

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["unit_price"] = str(self.unit_price)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "LedgerEntry":
        return cls(**{**d, "unit_price": Decimal(d["unit_price"])})


class CostLedger:
    """Append-only record of every model call's token usage."""

    def __init__(self, entries: Iterable[LedgerEntry] = ()) -> None:
        self._entries: list[LedgerEntry] = []
        self._lock = threading.Lock()
        self._tokens = 0
        self._currency = Decimal(0)
        for e in entries:
            self.append(e)

    def append(self, entry: LedgerEntry) -> None:
        with self._lock:
            self._entries.append(entry)
            self._tokens += entry.tokens
            self._currency += entry.currency

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self.entries)

    def __add__(self, other: "CostLedger") -> "CostLedger":
        return CostLedger([*self._entries, *other._entries])

    def by_purpose(self, purpose: str) -> list[LedgerEntry]:
        return [e for e in self._entries if e.purpose == purpose]

    @property
    def cached_totals(self) -> tuple[int, Decimal]:
        return self._tokens, self._currency

    def to_list(self) -> list[dict[str, Any]]:
        return [e.to_dict() for e in self._entries]

    @classmethod
    def from_list(cls, items: Iterable[Mapping[str, Any]]) -> "CostLedger":
        return cls(LedgerEntry.from_dict(d) for d in items)


def total_tokens(ledger: CostLedger | Iterable[LedgerEntry]) -> int:
    return sum(e.prompt_tokens + e.completion_tokens for e in ledger)


def total_currency(ledger: CostLedger | Iterable[LedgerEntry]) -> Decimal:
    """Exact decimal cost; round only for display (see :func:`format_currency`)."""
    total = Decimal(0)
    for e in ledger:
        total += (e.prompt_tokens + e.completion_tokens) * e.unit_price / MILLION
    return total


def format_currency(value: Decimal) -> str:
    return str(value.quantize(Decimal("0.000001")))


def objective(expected_consistency: Any, total_cost: Any, lam: Any) -> Decimal:
    lam = to_decimal(lam)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return to_decimal(expected_consistency) - lam * to_decimal(total_cost)


def optimal_k(expected_consistency_by_k: Mapping[int, Any],
              cost_by_k: Mapping[int, Any], lam: Any) -> int:
    """Return the k maximising consistency minus lambda * cost.

    Ties resolve to the smallest k.
    """
    if not expected_consistency_by_k or not cost_by_k:
        raise ValueError("optimal_k needs non-empty maps")
    if set(expected_consistency_by_k) != set(cost_by_k):
        raise ValueError("consistency and cost maps must share the same k values")
    best_k, best = None, None
    for k in sorted(expected_consistency_by_k):
        value = objective(expected_consistency_by_k[k], cost_by_k[k], lam)
        if best is None or value > best:
            best_k, best = k, value
    return best_k  # type: ignore[return-value]


@dataclass(frozen=True)
class ParetoPoint:
    label: str
    score: float
    cost: float


def as_point(p: Any) -> ParetoPoint:
    if isinstance(p, ParetoPoint):
        return p
    if isinstance(p, Mapping):
        return ParetoPoint(str(p["label"]), p["score"], p["cost"])
    label, score, cost = p
    return ParetoPoint(str(label), score, cost)


def pareto_frontier(points: Sequence[Any]) -> list[str]:
    """Labels of the non-dominated points, cheapest first.

    A point is dominated when another has score >= and cost <= with at least
    one strict inequality. Exact duplicates do not dominate each other.
    """
    pts = [as_point(p) for p in points]
    # cheapest first; among equal cost the best score first
    order = sorted(range(len(pts)), key=lambda i: (pts[i].cost, -pts[i].score, i))
    frontier: list[int] = []
    best_score = None
    i = 0
    while i < len(order):
        # group of equal cost
        j = i
        cost = pts[order[i]].cost
        while j < len(order) and pts[order[j]].cost == cost:
            j += 1
        group = order[i:j]
        top = pts[group[0]].score
        if best_score is None or top > best_score:
            frontier.extend(g for g in group if pts[g].score == top)
            best_score = top
        i = j
    return [pts[i].label for i in frontier]
