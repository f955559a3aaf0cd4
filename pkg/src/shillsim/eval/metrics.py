"""Detection metrics, evasion rate, strategy-evolution speed and training-stability summaries."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from ..errors import DomainError, LengthMismatch, SingleClass


def classification_metrics(preds, labels) -> tuple[float, float, float]:
    """Precision, recall and F1 with 0/0 taken as 0."""
    p = np.asarray(preds)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise LengthMismatch(f"{p.size} predictions vs {y.size} labels")
    tp = int(np.count_nonzero((p == 1) & (y == 1)))
    fp = int(np.count_nonzero((p == 1) & (y == 0)))
    fn = int(np.count_nonzero((p == 0) & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def auc_roc(scores, labels) -> float:
    """P(random positive outscores random negative), ties counted one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.size} scores vs {y.size} labels")
    n_pos = int(np.count_nonzero(y == 1))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    ranks = rankdata(s)  # average ranks resolve ties as one half
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def ser(detected: int, total: int) -> float:
    if total <= 0 or not 0 <= detected <= total:
        raise DomainError(f"need 0 <= detected <= total and total > 0, got ({detected}, {total})")
    return (total - detected) / total


def ses(f1_curve: Sequence[float], tail_window: int = 50) -> int | None:
    """First index reaching 90% of the asymptote (mean of the last ``tail_window`` points)."""
    f = np.asarray(f1_curve, dtype=np.float64)
    if f.size == 0:
        raise ValueError("empty curve")
    asymptote = f[-tail_window:].mean()
    hit = np.flatnonzero(f >= 0.9 * asymptote)
    return int(hit[0]) if hit.size else None


def smooth(x, window: int) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` points average what is available."""
    x = np.asarray(x, dtype=np.float64)
    c = np.cumsum(np.insert(x, 0, 0.0))
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def policy_oscillation(thetas) -> float:
    """Mean Frobenius norm of consecutive parameter differences."""
    T = [np.asarray(t, dtype=np.float64) for t in thetas]
    if len(T) < 2:
        raise ValueError("need at least two parameter snapshots")
    return float(np.mean([np.linalg.norm(b - a) for a, b in zip(T, T[1:])]))


@dataclass(frozen=True)
class StabilityMetrics:
    reward_variance_pct: float
    mean_policy_oscillation: float
    convergence_episodes: int


def stability_metrics(rewards, oscillations, *, warmup: int = 20, smooth_window: int = 10,
                      episodes_per_step: int = 1) -> StabilityMetrics:
    """Summaries of a per-step training stream.

    ``reward_variance_pct`` is the coefficient of variation (percent) of the
    per-step reward after ``warmup`` steps; convergence is the first step whose
    trailing-average reward reaches 90% of the best trailing average, reported
    in episodes.
    """
    r = np.asarray(rewards, dtype=np.float64)
    osc = np.asarray(oscillations, dtype=np.float64)
    if r.size < 2:
        raise ValueError("need at least two steps")
    post = r[warmup:] if r.size > warmup + 1 else r
    m = post.mean()
    sd = post.std()
    var_pct = 0.0 if sd == 0 else (math.inf if m == 0 else float(100.0 * sd / abs(m)))
    sm = smooth(r, smooth_window)
    best = sm.max()
    target = 0.9 * best if best >= 0 else 1.1 * best
    conv_step = int(np.flatnonzero(sm >= target)[0])
    return StabilityMetrics(var_pct, float(osc.mean()) if osc.size else 0.0,
                            (conv_step + 1) * episodes_per_step)


def stability_from_diagnostics(rows: Sequence[dict], group_size: int, **kw) -> StabilityMetrics:
    return stability_metrics([r["mean_reward"] for r in rows], [r["policy_oscillation"] for r in rows],
                             episodes_per_step=group_size, **kw)


@dataclass
class EvalReport:
    detector: str
    precision: float
    recall: float
    f1: float
    auc_roc: float | None
    ser_traditional: float
    ser_stealth: float
    ses_episodes: int | None = None
    reward_variance_pct: float | None = None
    mean_policy_oscillation: float | None = None
    convergence_episodes: int | None = None
    n_comments: int = 0
    config_hash: str = ""

    def validate(self) -> None:
        for name in ("precision", "recall", "f1", "ser_traditional", "ser_stealth"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0,1]")
        if self.auc_roc is not None and not 0.0 <= self.auc_roc <= 1.0:
            raise ValueError(f"auc_roc={self.auc_roc} outside [0,1]")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, allow_nan=False)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "EvalReport":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))
