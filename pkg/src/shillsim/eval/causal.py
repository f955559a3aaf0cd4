"""Manipulation-score and price-move timelines for the Granger validation.

Time runs in 5-minute buckets. Each bucket carries one thread drawn from a
pool of generated episodes; the thread's detector flags are summed into the
manipulation score ``x_t`` and its root post moves the price through the
discourse response (on top of baseline diffusion). The target ``y_t`` is the
relative price move over the preceding 60 minutes (12 buckets).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..core import DiscourseEpisode, Regime
from ..market import MarketConfig, minute_sigma
from .baseline import RuleConfig, rule_based_detect
from .granger import GrangerResult, granger_test

BUCKET_MINUTES = 5
MOVE_WINDOW_BUCKETS = 12


@dataclass(frozen=True)
class ThreadPool:
    """Per-thread detector score plus the root post's sentiment and intensity."""

    score: np.ndarray
    sentiment: np.ndarray
    intensity: np.ndarray

    @classmethod
    def from_episodes(cls, episodes: Sequence[DiscourseEpisode],
                      detector: Callable[[DiscourseEpisode], np.ndarray] | None = None) -> "ThreadPool":
        if detector is None:
            rules = RuleConfig()
            detector = lambda e: rule_based_detect(e, rules)  # noqa: E731
        return cls(
            score=np.array([float(np.sum(detector(e))) for e in episodes]),
            sentiment=np.array([e.root.sentiment for e in episodes]),
            intensity=np.array([e.root.manipulation_intensity for e in episodes]),
        )


def simulate_timeline(pool: ThreadPool, n_buckets: int, cfg: MarketConfig, rng, *,
                      regime: Regime | None = None, arrival_prob: float = 1.0,
                      delay_buckets: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(x, y, prices)`` for ``n_buckets`` buckets.

    A thread posted in bucket ``s`` moves the price in bucket ``s + delay_buckets``.
    ``prices[t]`` is the price at the end of bucket ``t``. Burn-in buckets for
    the move window are simulated and dropped.
    """
    if delay_buckets < 0:
        raise ValueError("delay_buckets must be >= 0")
    regime = Regime(regime or cfg.regime)
    w = MOVE_WINDOW_BUCKETS
    total = n_buckets + w + delay_buckets
    pick = rng.integers(0, pool.score.size, size=total)
    active = rng.random(total) < arrival_prob
    s_b = minute_sigma(regime) * math.sqrt(BUCKET_MINUTES)
    log_base = s_b * rng.standard_normal(total) - 0.5 * s_b * s_b
    eps = rng.normal(0.0, cfg.noise_sigma, size=total) if cfg.noise_sigma > 0 else np.zeros(total)
    push = np.where(active, cfg.alpha * pool.sentiment[pick] + cfg.beta * pool.intensity[pick], 0.0)
    push = np.concatenate([np.zeros(delay_buckets), push[:total - delay_buckets]])
    impact = np.maximum(1.0 + push + eps, 1e-9)
    log_p = np.cumsum(log_base + np.log(impact))
    prices = np.exp(log_p - log_p[0])
    x = np.where(active, pool.score[pick], 0.0)
    y = np.abs(prices[w:] / prices[:-w] - 1.0)
    start = delay_buckets
    return x[w + start:], y[start:], prices[w + start:]


def causal_run(pool: ThreadPool, n_buckets: int, cfg: MarketConfig, seed: int, run: int = 0,
               aic_model: str = "restricted", arrival_prob: float = 1.0,
               delay_buckets: int = 1) -> GrangerResult:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11, int(run)]))
    x, y, _ = simulate_timeline(pool, n_buckets, cfg, rng, arrival_prob=arrival_prob,
                                delay_buckets=delay_buckets)
    return granger_test(x, y, aic_model=aic_model)


def causal_study(pool: ThreadPool, n_buckets: int, cfg: MarketConfig, seed: int, runs: int,
                 aic_model: str = "restricted", arrival_prob: float = 1.0,
                 delay_buckets: int = 1) -> list[GrangerResult]:
    return [causal_run(pool, n_buckets, cfg, seed, r, aic_model, arrival_prob, delay_buckets)
            for r in range(runs)]


def rejection_rate(results: Sequence[GrangerResult], alpha: float) -> float:
    return float(np.mean([r.p_value < alpha for r in results])) if results else 0.0
