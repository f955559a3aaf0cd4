import json

import numpy as np
import pytest

from shillsim.errors import SeriesTooShort, SingularRegression
from shillsim.eval.causal import ThreadPool, causal_study, rejection_rate, simulate_timeline
from shillsim.eval.granger import betainc_reg, f_cdf, granger_test, select_lag
from shillsim.market import MarketConfig

# (f, d1, d2, CDF) from a 40-digit hypergeometric evaluation of the regularized
# incomplete beta function, computed outside this package and frozen here.
F_CDF_ORACLE = [
    (0.5, 1, 10, 0.50435249561688006),
    (1.0, 1, 10, 0.65910686769794013),
    (2.0, 2, 20, 0.83849441711015428),
    (3.5, 3, 50, 0.97795214246059157),
    (0.1, 5, 5, 0.012241916531069726),
    (4.0, 4, 100, 0.99527351783894508),
    (1.2, 6, 30, 0.66666671507732738),
    (2.5, 12, 1975, 0.99705836556083288),
    (1.0, 12, 1975, 0.55383402928306524),
    (0.8, 8, 500, 0.39719518932096048),
    (6.0, 1, 1, 0.75324828557115014),
    (0.2, 2, 3, 0.17117373238730216),
    (10.0, 3, 7, 0.99366839649337596),
    (1.5, 10, 10, 0.73343232),
    (2.2, 7, 1000, 0.96789928921032761),
    (0.95, 12, 100, 0.4986793713435147),
    (3.0, 1, 1998, 0.91658114869612283),
    (1.75, 5, 60, 0.86290714456019691),
    (0.3, 12, 1975, 0.010454000453444902),
    (5.0, 2, 200, 0.99239551000212649),
]


@pytest.mark.parametrize("f, d1, d2, expected", F_CDF_ORACLE)
def test_f_cdf_oracle(f, d1, d2, expected):
    assert round(f_cdf(f, d1, d2), 6) == round(expected, 6)
    assert f_cdf(f, d1, d2) == pytest.approx(expected, abs=1e-12)


def test_betainc_edges():
    assert betainc_reg(2.0, 3.0, 0.0) == 0.0
    assert betainc_reg(2.0, 3.0, 1.0) == 1.0
    # I_x(1, 1) = x
    assert betainc_reg(1.0, 1.0, 0.37) == pytest.approx(0.37, abs=1e-14)


def test_detects_lagged_dependence():
    rng = np.random.default_rng(0)
    x = rng.normal(size=500)
    y = np.r_[0.0, 0.9 * x[:-1]] + 0.05 * rng.normal(size=500)
    r = granger_test(x, y)
    assert r.p_value < 0.01
    assert r.chosen_lag >= 1


def test_null_calibration():
    rng = np.random.default_rng(1)
    rejections = [granger_test(rng.normal(size=500), rng.normal(size=500)).p_value < 0.05 for _ in range(1000)]
    assert abs(np.mean(rejections) - 0.05) <= 0.03


def test_shuffled_cause_loses_significance():
    rng = np.random.default_rng(2)
    x = rng.normal(size=400)
    y = np.r_[0.0, 0.9 * x[:-1]] + 0.3 * rng.normal(size=400)
    assert granger_test(x, y).p_value < 1e-6
    ps = [granger_test(rng.permutation(x), y).p_value for _ in range(100)]
    assert np.median(ps) > 0.1


def test_too_short():
    with pytest.raises(SeriesTooShort):
        granger_test(np.zeros(120), np.zeros(120))


def test_singular():
    rng = np.random.default_rng(3)
    with pytest.raises(SingularRegression):
        granger_test(np.ones(300), rng.normal(size=300), lag=2)


def test_lag_ties_prefer_smaller():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=300), rng.normal(size=300)
    p, aics = select_lag(x, y, 12)
    assert aics[p - 1] == min(aics)
    assert all(a > aics[p - 1] for a in aics[:p - 1])


def test_result_json():
    rng = np.random.default_rng(5)
    r = granger_test(rng.normal(size=300), rng.normal(size=300))
    d = json.loads(r.to_json())
    assert d["direction"] == "ManipToPrice"
    assert len(d["aic"]) == 12


class TestTimeline:
    pool = ThreadPool(score=np.array([0.0, 5.0]), sentiment=np.array([0.0, 0.8]), intensity=np.array([0.0, 0.9]))

    def test_shapes(self):
        x, y, prices = simulate_timeline(self.pool, 300, MarketConfig(), np.random.default_rng(0))
        assert x.shape == y.shape == prices.shape == (300,)
        assert np.all(prices > 0) and np.all(y >= 0)

    def test_coupled_rejects(self):
        res = causal_study(self.pool, 600, MarketConfig(), seed=0, runs=10)
        assert rejection_rate(res, 0.01) >= 0.9

    def test_decoupled_mostly_insignificant(self):
        res = causal_study(self.pool, 600, MarketConfig(alpha=0.0, beta=0.0), seed=0, runs=40)
        assert rejection_rate(res, 0.05) <= 0.15
