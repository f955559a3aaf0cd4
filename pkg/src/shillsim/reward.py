"""Delayed market-grounded rewards, the attention-cost penalty, and reward mixing.

A correct prediction on a comment earns ``ln(1 + |dP|/P)``, the log of the
thread's realised relative price move; a thread that did not move the market
teaches the detector nothing. The attention penalty subtracts ``lambda_attn``
times the mutual information (bits) between a discretised salience feature and
the action.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyBatch, LengthMismatch, NonPositivePrice
from .features import SALIENCE_INDEX


@dataclass(frozen=True)
class RewardConfig:
    lambda_attn: float = 0.01
    lambda_mix: float = 0.5
    mi_bins: int = 8
    delta_minutes: int = 90
    mi_scope: str = "group"  # "group" or "episode"

    def validate(self, prefix: str = "reward") -> None:
        if not self.lambda_attn >= 0:
            raise ConfigError(f"{prefix}.lambda_attn", "must be >= 0")
        if not 0.0 <= self.lambda_mix <= 1.0:
            raise ConfigError(f"{prefix}.lambda_mix", "must lie in [0,1]")
        if self.mi_bins < 2:
            raise ConfigError(f"{prefix}.mi_bins", "must be >= 2")
        if self.delta_minutes <= 0:
            raise ConfigError(f"{prefix}.delta_minutes", "must be positive")
        if self.mi_scope not in ("group", "episode"):
            raise ConfigError(f"{prefix}.mi_scope", "must be 'group' or 'episode'")


def impact_weight(p_t: float, p_after: float) -> float:
    if not p_t > 0:
        raise NonPositivePrice(f"price {p_t}")
    return math.log1p(abs(p_after - p_t) / p_t)


def price_reward(a, y, p_t: float, p_after: float) -> float:
    a = np.asarray(a)
    y = np.asarray(y)
    if a.shape != y.shape:
        raise LengthMismatch(f"{a.size} actions vs {y.size} labels")
    w = impact_weight(p_t, p_after)
    return float(np.count_nonzero(a == y)) * w


def discretize(values, bins: int) -> np.ndarray:
    """Equal-width bin index over the batch range; a constant batch maps to bin 0."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.int64)
    idx = np.floor((v - lo) / (hi - lo) * bins).astype(np.int64)
    return np.minimum(idx, bins - 1)


def mi_from_counts(table) -> float:
    """Plug-in mutual information (bits) of a contingency table, with 0 log 0 = 0."""
    t = np.asarray(table, dtype=np.float64)
    n = t.sum()
    if n <= 0:
        raise EmptyBatch("empty contingency table")
    p = t / n
    ps = p.sum(axis=1, keepdims=True)
    pa = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(max(0.0, np.sum(p[nz] * np.log2(p[nz] / (ps @ pa)[nz]))))


def salience_column(states) -> np.ndarray:
    S = np.asarray(states, dtype=np.float64)
    return S[:, SALIENCE_INDEX] if S.ndim == 2 else S


def estimate_mi(states, actions, bins: int = 8) -> float:
    """MI between the binned salience feature and a binary action.

    ``states`` is either a matrix of feature rows (salience column is used) or
    the salience values themselves.
    """
    a = np.asarray(actions, dtype=np.int64)
    if a.size == 0:
        raise EmptyBatch("no samples")
    s = salience_column(states)
    if s.shape[0] != a.size:
        raise LengthMismatch(f"{s.shape[0]} states vs {a.size} actions")
    b = discretize(s, bins)
    table = np.zeros((bins, 2))
    np.add.at(table, (b, a), 1.0)
    return mi_from_counts(table)


def attention_reward(a, y, p_t: float, p_after: float, states, cfg: RewardConfig = RewardConfig(),
                     mi: float | None = None) -> float:
    """Price reward minus the attention cost; ``mi`` overrides the per-call estimate."""
    r = price_reward(a, y, p_t, p_after)
    if cfg.lambda_attn == 0:
        return r
    if mi is None:
        mi = estimate_mi(states, a, cfg.mi_bins) if np.size(a) else 0.0
    return r - cfg.lambda_attn * mi


def mix_rewards(r_individual, r_group, cfg: RewardConfig = RewardConfig()):
    lam = cfg.lambda_mix
    return lam * r_individual + (1.0 - lam) * r_group


def group_rewards(actions, labels, prices, salience_rows, cfg: RewardConfig = RewardConfig()):
    """Individual attention rewards for a group and their mixes with the group mean.

    ``actions``/``labels``/``salience_rows`` are per-episode sequences and
    ``prices`` a sequence of ``(p_t, p_after)``. Returns ``(individual, mixed)``.
    """
    mi_group = None
    if cfg.lambda_attn > 0 and cfg.mi_scope == "group":
        flat_a = np.concatenate([np.asarray(a) for a in actions]) if actions else np.zeros(0)
        flat_s = np.concatenate([salience_column(s) for s in salience_rows]) if actions else np.zeros(0)
        mi_group = estimate_mi(flat_s, flat_a, cfg.mi_bins) if flat_a.size else 0.0
    ind = np.array([
        attention_reward(a, y, p0, p1, s, cfg, mi=mi_group)
        for a, y, (p0, p1), s in zip(actions, labels, prices, salience_rows)
    ])
    mixed = mix_rewards(ind, ind.mean() if ind.size else 0.0, cfg)
    return ind, np.asarray(mixed)
