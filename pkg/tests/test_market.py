import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shillsim.core import Regime
from shillsim.errors import NonPositivePrice
from shillsim.market import (
    MarketConfig, apply_discourse_impact, baseline_path, classify_regime, minute_sigma, relative_move,
    step_baseline,
)

NOISELESS = MarketConfig(noise_sigma=0.0)


def test_zero_sigma_is_identity(rng):
    assert step_baseline(42.0, None, rng, sigma_m=0.0) == 42.0


@pytest.mark.parametrize("vol, regime", [(0.015, Regime.LOW), (0.02, Regime.LOW), (0.05, Regime.MEDIUM),
                                         (0.08, Regime.MEDIUM), (0.09, Regime.HIGH)])
def test_regime_classification(vol, regime):
    assert classify_regime(vol) is regime


@pytest.mark.parametrize("p, s, m, expected", [(1.0, 0.0, 0.0, 1.0), (100.0, 0.2, 0.6, 136.0),
                                               (100.0, -1.0, 0.0, 70.0)])
def test_discourse_impact_examples(p, s, m, expected):
    assert apply_discourse_impact(p, s, m, NOISELESS) == pytest.approx(expected, rel=1e-15)


def test_noise_free_response_is_affine():
    grid = np.linspace(-1, 1, 9)
    for s in grid:
        for m in np.linspace(0, 1, 5):
            independent = 50.0 + 50.0 * 0.3 * s + 50.0 * 0.5 * m
            assert apply_discourse_impact(50.0, s, m, NOISELESS) == pytest.approx(independent, rel=1e-14)


@pytest.mark.parametrize("p0, p1, move", [(100, 100, 0.0), (100, 110, 0.10), (100, 90, 0.10)])
def test_relative_move(p0, p1, move):
    assert relative_move(p0, p1) == pytest.approx(move, abs=1e-15)


def test_relative_move_rejects_zero():
    with pytest.raises(NonPositivePrice):
        relative_move(0.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(-1, 1), st.floats(0, 1), st.floats(-5, 5))
def test_prices_stay_positive(p, s, m, eps):
    cfg = MarketConfig(alpha=3.0, beta=3.0)
    assert apply_discourse_impact(p, s, m, cfg, eps=eps) > 0


def test_regime_volatility_ordering():
    stds = []
    for regime in (Regime.LOW, Regime.MEDIUM, Regime.HIGH):
        path = baseline_path(1.0, 20_000, regime, np.random.default_rng(0))
        hourly = path[::60]
        stds.append(np.std(np.diff(np.log(hourly))))
    assert stds[0] < stds[1] < stds[2]
    # the High hourly std sits near its 10% driving volatility
    assert stds[2] == pytest.approx(0.10, rel=0.15)


def test_minute_sigma_scaling():
    assert minute_sigma(Regime.HIGH) == pytest.approx(0.10 / math.sqrt(60))
