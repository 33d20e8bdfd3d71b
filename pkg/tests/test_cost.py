import random
from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from bootroute.cost import (
    CostLedger,
    LedgerEntry,
    format_currency,
    objective,
    optimal_k,
    pareto_frontier,
    total_currency,
    total_tokens,
)


def entry(p, c, price="1.10", model="deepseek-v3", i=0):
    return LedgerEntry(f"c{i}", model, "boot", p, c, False, Decimal(price))


def test_total_tokens_examples():
    ledger = CostLedger(entry(50, c, i=i) for i, c in enumerate([200, 200, 450, 300]))
    assert total_tokens(ledger) == 1350
    assert total_tokens(CostLedger()) == 0
    assert total_tokens(CostLedger([entry(10, 90)])) == 100


def test_currency_examples():
    assert total_currency([entry(0, 1_000_000)]) == Decimal("1.10")
    assert total_currency([entry(0, 1_000)]) == Decimal("0.0011")
    mixed = [entry(0, 500, "0.88", "llama"), entry(0, 500, "0.80", "mixtral", 1)]
    assert total_currency(mixed) == Decimal("0.00084")
    assert format_currency(total_currency(mixed)) == "0.000840"


def test_ledger_cache_matches_recompute():
    ledger = CostLedger(entry(i, 3 * i, "0.37", i=i) for i in range(50))
    assert ledger.cached_totals == (total_tokens(ledger), total_currency(ledger))


def test_ledger_serialisation():
    ledger = CostLedger([entry(1, 2), entry(3, 4, "0.80", i=1)])
    assert CostLedger.from_list(ledger.to_list()).entries == ledger.entries


def test_entry_validation():
    with pytest.raises(ValueError):
        LedgerEntry("x", "m", "training", 1, 1, False, Decimal(1))
    with pytest.raises(ValueError):
        LedgerEntry("x", "m", "boot", -1, 1, False, Decimal(1))


@given(st.lists(st.tuples(st.integers(0, 10**6), st.integers(0, 10**6),
                          st.decimals(min_value=0, max_value=50, places=2)), max_size=30),
       st.integers(0, 30))
def test_ledger_additivity(items, cut):
    entries = [entry(p, c, str(price), i=i) for i, (p, c, price) in enumerate(items)]
    a, b = CostLedger(entries[:cut]), CostLedger(entries[cut:])
    assert total_tokens(a + b) == total_tokens(a) + total_tokens(b)
    assert total_currency(a + b) == total_currency(a) + total_currency(b)


@given(st.decimals(min_value=0, max_value=1000, places=2))
def test_million_tokens_costs_unit_price(price):
    assert total_currency([entry(400_000, 600_000, str(price))]) == price


def test_objective_examples():
    assert objective(0.86, 0.003, 25) == Decimal("0.785")
    assert objective(0.42, 123, 0) == Decimal("0.42")
    assert objective(0.5, 0.02, 25) == 0
    with pytest.raises(ValueError):
        objective(0.5, 0.1, -1)


def test_optimal_k_worked_example():
    es = {1: 0.80, 2: 0.86, 3: 0.88, 4: 0.885}
    cost = {1: 0.002, 2: 0.003, 3: 0.004, 4: 0.005}
    assert [objective(es[k], cost[k], 25) for k in es] == [
        Decimal("0.75"), Decimal("0.785"), Decimal("0.78"), Decimal("0.76")]
    assert optimal_k(es, cost, 25) == 2


def test_optimal_k_limits():
    es = {1: 0.5, 2: 0.6, 3: 0.7}
    assert optimal_k(es, {1: 1, 2: 2, 3: 3}, 0) == 3
    assert optimal_k({1: 0.7, 2: 0.7, 3: 0.7}, {1: 1, 2: 2, 3: 3}, 0.1) == 1
    assert optimal_k({1: 0.7, 2: 0.7}, {1: 1, 2: 1}, 1) == 1  # tie -> smaller k
    with pytest.raises(ValueError):
        optimal_k({}, {}, 1)
    with pytest.raises(ValueError):
        optimal_k({1: 0.1}, {2: 0.1}, 1)


def brute_force_k(es, cost, lam):
    values = {k: Fraction(str(es[k])) - Fraction(str(lam)) * Fraction(str(cost[k])) for k in es}
    best = max(values.values())
    return min(k for k, v in values.items() if v == best)


def test_optimal_k_matches_brute_force():
    rng = random.Random(11)
    for _ in range(300):
        n = rng.randint(1, 8)
        es = {k: round(rng.random(), rng.choice([1, 2, 3])) for k in range(1, n + 1)}
        cost = {k: round(rng.random() / 100, 4) for k in range(1, n + 1)}
        lam = rng.choice([0, 1, 10, 25, 100])
        assert optimal_k(es, cost, lam) == brute_force_k(es, cost, lam)


def dominated(p, q):
    """True when q dominates p."""
    return q[1] >= p[1] and q[2] <= p[2] and (q[1] > p[1] or q[2] < p[2])


def pairwise_frontier(points):
    keep = [p for p in points if not any(dominated(p, q) for q in points if q is not p)]
    return sorted(keep, key=lambda p: (p[2], -p[1], points.index(p)))


def test_pareto_examples():
    pts = [("A", 9.0, 0.003), ("B", 9.2, 0.004), ("C", 8.9, 0.005)]
    assert pareto_frontier(pts) == ["A", "B"]
    assert pareto_frontier([("solo", 1, 1)]) == ["solo"]
    assert pareto_frontier([("x", 5, 2), ("y", 5, 1)]) == ["y"]
    assert pareto_frontier([{"label": "m", "score": 1, "cost": 1}]) == ["m"]


def test_pareto_against_pairwise():
    rng = random.Random(5)
    for _ in range(300):
        pts = [(f"p{i}", rng.randint(0, 6), rng.randint(0, 6)) for i in range(rng.randint(1, 12))]
        assert pareto_frontier(pts) == [p[0] for p in pairwise_frontier(pts)]
