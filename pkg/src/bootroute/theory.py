"""Monte-Carlo checks of the merge/selection statistics.

Candidate consistency scores are abstract numbers in [0, 1]; nothing here
looks at real text. Sampling is split into fixed-size blocks, each seeded
from ``(seed, block_index)``, so results are bit-identical for a given seed
no matter how blocks are scheduled.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

FAMILIES = ("uniform", "truncated-normal", "bernoulli-mixture")
MERGE_KINDS = ("mean", "best-of", "weighted")
BLOCK = 1 << 15
CLIP_WARN = 0.01


class ClippingWarning(UserWarning):
    """More than 1% of the score mass falls outside [0, 1] and gets clipped."""


def _phi(x: float) -> float:
    return 0.5 * (1 + math.erf(x / math.sqrt(2)))


@dataclass(frozen=True)
class ConsistencyModel:
    """Per-candidate score distribution with mean ``mu`` and variance ``var``.

    ``uniform`` is flat on mu ± sqrt(3 var); ``truncated-normal`` is a normal
    clipped to [0, 1]; ``bernoulli-mixture`` puts half its mass on each of
    mu ± sqrt(var). Samples are always clipped to [0, 1].
    """

    mu: float = 0.8
    var: float = 0.04
    family: str = "truncated-normal"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if not 0 <= self.mu <= 1:
            raise ValueError("mu must lie in [0, 1]")
        if self.var < 0:
            raise ValueError("var must be >= 0")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.var)

    def clipping_mass(self) -> float:
        s = self.sigma
        if s == 0:
            return 0.0
        if self.family == "truncated-normal":
            return _phi(-self.mu / s) + 1 - _phi((1 - self.mu) / s)
        if self.family == "uniform":
            half = math.sqrt(3) * s
            lo, hi = self.mu - half, self.mu + half
            return (max(0.0, -lo) + max(0.0, hi - 1)) / (hi - lo)
        return 0.5 * ((self.mu - s < 0) + (self.mu + s > 1))

    def check_clipping(self) -> float:
        mass = self.clipping_mass()
        if mass > CLIP_WARN:
            warnings.warn(
                f"{self.family}(mu={self.mu}, var={self.var}) clips {mass:.1%} of its mass; "
                "moments are no longer exact", ClippingWarning, stacklevel=3)
        return mass

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        s = self.sigma
        if self.family == "truncated-normal":
            x = rng.normal(self.mu, s, size)
        elif self.family == "uniform":
            half = math.sqrt(3) * s
            x = rng.uniform(self.mu - half, self.mu + half, size)
        else:
            x = self.mu + s * np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return np.clip(x, 0.0, 1.0)


@dataclass(frozen=True)
class MergePolicy:
    kind: str = "mean"
    weights: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in MERGE_KINDS:
            raise ValueError(f"kind must be one of {MERGE_KINDS}")
        if self.kind == "weighted" and (not self.weights or min(self.weights) < 0):
            raise ValueError("weighted merge needs non-negative weights")

    def merge(self, scores: np.ndarray) -> np.ndarray:
        """Merge along the last axis; columns are in selection order."""
        if self.kind == "mean":
            return scores.mean(axis=-1)
        if self.kind == "best-of":
            return scores.max(axis=-1)
        k = scores.shape[-1]
        if len(self.weights) < k:
            raise ValueError(f"weighted merge has {len(self.weights)} weights for k={k}")
        w = np.asarray(self.weights[:k], dtype=float)
        return scores @ (w / w.sum())


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    trials: int

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.trials) if self.trials else float("nan")


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block,)))


def _run_blocks(trials: int, seed: int, fn: Callable[[np.random.Generator, int], np.ndarray],
                workers: int = 1) -> Moments:
    sizes = [min(BLOCK, trials - start) for start in range(0, trials, BLOCK)]

    def one(i: int) -> tuple[int, float, float]:
        x = np.asarray(fn(_block_rng(seed, i), sizes[i]), dtype=float)
        m = float(x.mean())
        return len(x), m, float(((x - m) ** 2).sum())

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(one, range(len(sizes))))
    else:
        parts = [one(i) for i in range(len(sizes))]
    # pairwise moment combination in block order
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in parts:
        delta = mb - mean
        tot = n + nb
        mean += delta * nb / tot
        m2 += m2b + delta * delta * n * nb / tot
        n = tot
    return Moments(mean, m2 / (n - 1) if n > 1 else 0.0, n)


def simulate_merge_variance(model: ConsistencyModel, k: int, trials: int,
                            policy: MergePolicy | None = None, workers: int = 1) -> Moments:
    """Moments of the merged score of ``k`` iid candidates (mean merge by default)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if trials < 1000:
        raise ValueError("trials must be >= 1000")
    policy = policy or MergePolicy("mean")
    model.check_clipping()
    return _run_blocks(trials, model.seed,
                       lambda rng, n: policy.merge(model.sample(rng, (n, k))), workers)


def check_mean_bound(scores: Sequence[float], merged_score: float, eps: float = 1e-12) -> bool:
    """True iff the merged score does not exceed the candidates' mean."""
    if len(scores) < 1:
        raise ValueError("need at least one score")
    return merged_score <= math.fsum(scores) / len(scores) + eps


def cumulative_error(per_step_consistencies: Iterable) -> Decimal:
    """One minus the product of per-step consistencies, in exact decimal arithmetic."""
    prod = Decimal(1)
    for s in per_step_consistencies:
        d = s if isinstance(s, Decimal) else Decimal(str(s))
        if not 0 <= d <= 1:
            raise ValueError(f"consistency {s!r} outside [0, 1]")
        prod *= d
    return 1 - prod


def _select(scores: np.ndarray, k: int, noise: float, rng: np.random.Generator) -> np.ndarray:
    """Top-k columns per row by (possibly noisy) observed score, best first."""
    observed = scores if noise == 0 else scores + rng.normal(0, noise, scores.shape)
    idx = np.argsort(-observed, axis=1, kind="stable")[:, :k]
    return np.take_along_axis(scores, idx, axis=1)


@dataclass(frozen=True)
class PollutionResult:
    mean_merged_score: float
    std_error: float
    trials: int


def simulate_pool_pollution(good: ConsistencyModel, bad: ConsistencyModel, n_good: int,
                            n_bad: int, policy: MergePolicy, with_filter: bool, k: int,
                            trials: int, selector_noise: float = 0.0, seed: int | None = None,
                            workers: int = 1) -> PollutionResult:
    """Mean merged score of a mixed pool, merged whole or after top-k filtering.

    ``selector_noise`` is the std of Gaussian noise the selector sees on top
    of the true scores; 0 is a perfect oracle.
    """
    if not 1 <= k <= n_good + n_bad:
        raise ValueError("need n_good + n_bad >= k >= 1")
    good.check_clipping()
    bad.check_clipping()
    seed = good.seed if seed is None else seed

    def block(rng: np.random.Generator, n: int) -> np.ndarray:
        scores = np.concatenate(
            [good.sample(rng, (n, n_good)), bad.sample(rng, (n, n_bad))], axis=1)
        if with_filter:
            scores = _select(scores, k, selector_noise, rng)
        return policy.merge(scores)

    m = _run_blocks(trials, seed, block, workers)
    return PollutionResult(m.mean, m.std_error, m.trials)


@dataclass(frozen=True)
class SweepPoint:
    k: int
    expected_consistency: float
    total_cost: float
    objective: float


@dataclass
class KSweep:
    points: dict[int, SweepPoint] = field(default_factory=dict)
    lam: float = 0.0

    @property
    def best_k(self) -> int:
        from .cost import optimal_k

        return optimal_k({k: p.expected_consistency for k, p in self.points.items()},
                         {k: p.total_cost for k, p in self.points.items()}, self.lam)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "expected_consistency", "total_cost", "objective"])
            for k in sorted(self.points):
                p = self.points[k]
                w.writerow([k, repr(p.expected_consistency), repr(p.total_cost),
                            repr(p.objective)])


def sweep_k_objective(model: ConsistencyModel, cost_per_candidate: float, merge_cost: float,
                      lam: float, N: int, trials: int, policy: MergePolicy | None = None,
                      selector_noise: float = 0.0) -> KSweep:
    """Estimate E[S_k] for top-k-of-N selection and score each k.

    T_total(k) = k * cost_per_candidate + merge_cost. Every k reuses the same
    seeded score draws, so differences across k are not sampling noise.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    policy = policy or MergePolicy("mean")
    sweep = KSweep(lam=lam)
    for k in range(1, N + 1):
        def block(rng: np.random.Generator, n: int, k=k) -> np.ndarray:
            scores = model.sample(rng, (n, N))
            return policy.merge(_select(scores, k, selector_noise, rng))

        es = _run_blocks(trials, model.seed, block).mean
        cost = k * cost_per_candidate + merge_cost
        sweep.points[k] = SweepPoint(k, es, cost, es - lam * cost)
    return sweep
