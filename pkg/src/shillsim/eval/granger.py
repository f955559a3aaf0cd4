"""Granger causality with AIC lag selection and an F test.

The F distribution tail comes from a hand-written regularized incomplete beta
function (continued fraction, modified Lentz iteration).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from ..errors import SeriesTooShort, SingularRegression

MAX_LAG = 12
_TINY = 1e-300
_EPS = 1e-16


def _beta_cf(a: float, b: float, x: float, max_iter: int = 10_000) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = _TINY if abs(d) < _TINY else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def f_cdf(f: float, d1: float, d2: float) -> float:
    if f <= 0:
        return 0.0
    return betainc_reg(d1 / 2.0, d2 / 2.0, d1 * f / (d1 * f + d2))


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail P(F > f), computed directly to avoid cancellation."""
    if f <= 0:
        return 1.0
    return betainc_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


class Direction(str, Enum):
    MANIP_TO_PRICE = "ManipToPrice"
    PRICE_TO_MANIP = "PriceToManip"


@dataclass(frozen=True)
class GrangerResult:
    chosen_lag: int
    f_stat: float
    p_value: float
    direction: Direction
    n_obs: int = 0
    aic: tuple = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["direction"] = self.direction.value
        d["aic"] = list(self.aic)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def lag_matrix(series: np.ndarray, p: int, start: int) -> np.ndarray:
    """Columns ``series[t-1], ..., series[t-p]`` for ``t = start .. len-1``."""
    n = series.size
    return np.column_stack([series[start - k:n - k] for k in range(1, p + 1)])


def _residuals(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise SingularRegression(f"design matrix rank {rank} < {X.shape[1]} columns")
    return y - X @ coef


def ols_rss(X: np.ndarray, y: np.ndarray) -> float:
    resid = _residuals(X, y)
    return float(resid @ resid)


def _design(x: np.ndarray, y: np.ndarray, p: int, start: int, with_x: bool) -> np.ndarray:
    cols = [np.ones(y.size - start), lag_matrix(y, p, start)]
    if with_x:
        cols.append(lag_matrix(x, p, start))
    return np.column_stack(cols)


AIC_MODELS = ("restricted", "unrestricted", "var")


def select_lag(x: np.ndarray, y: np.ndarray, max_lag: int = MAX_LAG,
               model: str = "restricted") -> tuple[int, list[float]]:
    """AIC lag choice on a common sample; ties go to the smaller lag.

    ``model`` picks the criterion: the own-lag regression of ``y``
    ("restricted"), the regression including ``x`` lags ("unrestricted"), or
    the two-equation VAR log-determinant ("var"). Selecting on a model that
    contains ``x`` lags inflates the size of the subsequent F test, so the
    restricted criterion is the default.
    """
    if model not in AIC_MODELS:
        raise ValueError(f"unknown AIC model {model!r}")
    t = y.size - max_lag
    aics = []
    best, best_aic = 1, math.inf
    for p in range(1, max_lag + 1):
        if model == "var":
            X = _design(x, y, p, max_lag, True)
            E = np.column_stack([_residuals(X, y[max_lag:]), _residuals(X, x[max_lag:])])
            sign, logdet = np.linalg.slogdet(E.T @ E / t)
            if sign <= 0:
                raise SingularRegression("singular residual covariance")
            aic = t * logdet + 2 * 2 * (2 * p + 1)
        else:
            with_x = model == "unrestricted"
            rss = ols_rss(_design(x, y, p, max_lag, with_x), y[max_lag:])
            if rss <= 0:
                raise SingularRegression("zero residual sum of squares")
            aic = t * math.log(rss / t) + 2 * ((2 * p + 1) if with_x else (p + 1))
        aics.append(aic)
        if aic < best_aic:
            best, best_aic = p, aic
    return best, aics


def granger_test(x, y, max_lag: int = MAX_LAG, direction: Direction = Direction.MANIP_TO_PRICE,
                 lag: int | None = None, aic_model: str = "restricted") -> GrangerResult:
    """Does ``x`` help predict ``y`` beyond ``y``'s own lags?

    The lag is AIC-selected unless given; the F test is then run on the full
    sample available at that lag.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("x and y must have equal length")
    if y.size <= 10 * max_lag:
        raise SeriesTooShort(f"length {y.size} <= {10 * max_lag}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("series must be finite")
    aics: list[float] = []
    if lag is None:
        lag, aics = select_lag(x, y, max_lag, aic_model)
    p = lag
    target = y[p:]
    rss_r = ols_rss(_design(x, y, p, p, False), target)
    rss_u = ols_rss(_design(x, y, p, p, True), target)
    t = target.size
    dof = t - 2 * p - 1
    if rss_u <= 0:
        raise SingularRegression("zero residual sum of squares")
    f = max(0.0, ((rss_r - rss_u) / p) / (rss_u / dof))
    return GrangerResult(p, f, min(1.0, max(0.0, f_sf(f, p, dof))), Direction(direction), t, tuple(aics))
