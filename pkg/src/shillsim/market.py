"""Baseline token prices by volatility regime and the discourse price response.

The discourse response multiplies the price by ``1 + alpha*S + beta*M + eps``
where ``S`` is root-post sentiment, ``M`` manipulation intensity and ``eps``
Gaussian market noise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import MarketSnapshot, PriceSeries, Regime
from .errors import ConfigError, NonPositivePrice

# hourly volatility regime bounds: Low <= 2%, Medium (2%, 8%], High > 8%
LOW_UPPER = 0.02
MEDIUM_UPPER = 0.08
# representative hourly volatility used to drive the baseline process
REGIME_HOURLY_VOL = {Regime.LOW: 0.01, Regime.MEDIUM: 0.05, Regime.HIGH: 0.10}
PRICE_FLOOR_FRACTION = 1e-9


@dataclass(frozen=True)
class MarketConfig:
    alpha: float = 0.3
    beta: float = 0.5
    noise_sigma: float = 0.02
    regime: Regime = Regime.MEDIUM
    minutes_per_step: int = 1
    history_minutes: int = 60

    def __post_init__(self):
        if isinstance(self.regime, str) and not isinstance(self.regime, Regime):
            object.__setattr__(self, "regime", Regime(self.regime))

    def validate(self, prefix: str = "market") -> None:
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ConfigError(f"{prefix}.alpha", "alpha and beta must be finite")
        if not self.noise_sigma >= 0:
            raise ConfigError(f"{prefix}.noise_sigma", "must be >= 0")
        if self.minutes_per_step < 1:
            raise ConfigError(f"{prefix}.minutes_per_step", "must be >= 1")
        if self.history_minutes < 2:
            raise ConfigError(f"{prefix}.history_minutes", "must be >= 2")


def classify_regime(hourly_vol: float) -> Regime:
    if hourly_vol <= LOW_UPPER:
        return Regime.LOW
    if hourly_vol <= MEDIUM_UPPER:
        return Regime.MEDIUM
    return Regime.HIGH


def minute_sigma(regime: Regime) -> float:
    return REGIME_HOURLY_VOL[Regime(regime)] / math.sqrt(60.0)


def step_baseline(p: float, regime: Regime | None, rng, sigma_m: float | None = None) -> float:
    """One geometric minute step with zero expected return."""
    if not p > 0:
        raise NonPositivePrice(f"price {p}")
    s = minute_sigma(regime) if sigma_m is None else sigma_m
    if s == 0.0:
        return p
    z = rng.standard_normal()
    return p * math.exp(s * z - 0.5 * s * s)


def baseline_path(p0: float, n_steps: int, regime: Regime, rng) -> np.ndarray:
    """Vectorised ``step_baseline`` chain; returns ``n_steps + 1`` prices starting at ``p0``."""
    if not p0 > 0:
        raise NonPositivePrice(f"price {p0}")
    s = minute_sigma(regime)
    z = rng.standard_normal(n_steps)
    log_inc = s * z - 0.5 * s * s
    return p0 * np.exp(np.concatenate(([0.0], np.cumsum(log_inc))))


def simulate_volumes(prices: np.ndarray, rng, base: float = 1000.0) -> np.ndarray:
    """Lognormal volumes whose mean scales with the absolute minute return."""
    ret = np.abs(np.diff(np.log(prices), prepend=np.log(prices[0])))
    scale = base * (1.0 + 50.0 * ret)
    return scale * rng.lognormal(mean=-0.125, sigma=0.5, size=len(prices))


def apply_discourse_impact(p: float, sentiment: float, intensity: float, cfg: MarketConfig, rng=None,
                           eps: float | None = None) -> float:
    """Price after the discourse reaction; ``eps`` overrides the noise draw."""
    if eps is None:
        eps = 0.0 if cfg.noise_sigma == 0 or rng is None else rng.normal(0.0, cfg.noise_sigma)
    out = p * (1.0 + cfg.alpha * sentiment + cfg.beta * intensity + eps)
    return max(out, PRICE_FLOOR_FRACTION * p)


def relative_move(p_t: float, p_after: float) -> float:
    if not p_t > 0:
        raise NonPositivePrice(f"price {p_t}")
    return abs(p_after - p_t) / p_t


def market_context(p_start: float, regime: Regime, history_minutes: int, rng):
    """Simulate the pre-root history window.

    Returns ``(series, snapshot)``; the last series price is the price at the root timestamp.
    """
    prices = baseline_path(p_start, history_minutes, regime, rng)
    volumes = simulate_volumes(prices, rng)
    log_ret = np.diff(np.log(prices))
    hourly_vol = float(np.std(log_ret) * math.sqrt(60.0))
    window = min(60, history_minutes)
    recent = float(prices[-1] / prices[-1 - window] - 1.0)
    log_volume = float(math.log(np.mean(volumes[-window:]) / 1000.0))
    series = PriceSeries(0, tuple(float(x) for x in prices), tuple(float(v) for v in volumes))
    return series, MarketSnapshot(Regime(regime), hourly_vol, recent, log_volume)


def write_price_csv(path: str | Path, rows: Iterable[tuple], with_episode: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((["episode"] if with_episode else []) + ["minute", "price", "volume"])
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def series_rows(series: PriceSeries, episode: int | None = None):
    for i, (p, v) in enumerate(zip(series.prices, series.volumes)):
        head = () if episode is None else (episode,)
        yield head + (series.start_minute + i, p, v)
