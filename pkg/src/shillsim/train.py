"""Training loop: sample groups of episodes, roll out the detector, reward, update.

Episodes are generated and encoded once into a :class:`Corpus`; each training
step draws ``group_size`` episodes from it. Feature columns are standardised
with the training corpus statistics, which travel with the checkpoint.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import DiscourseEpisode
from .discourse import DiscourseGenerator
from .features import N_FEATURES, RECENT_RETURN_INDEX, SALIENCE_INDEX, encode_state
from .grpo import Algo, GroupBatch, OptState, TrainConfig, update
from .policy import PolicyParams, ValueParams, predict_proba, sample_actions
from .reward import RewardConfig, group_rewards, impact_weight

DIAGNOSTICS_VERSION = 1
DIAGNOSTIC_FIELDS = (
    "step", "episodes", "mean_reward", "reward_variance", "policy_oscillation", "clipped_fraction",
    "mean_ratio", "value_loss", "probe_reward", "f1_eval",
)


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Normalizer":
        if X.shape[0] == 0:
            return cls.identity(X.shape[1])
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 1e-8, std, 1.0))

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"feature_mean": self.mean.tolist(), "feature_std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict, dim: int) -> "Normalizer":
        if "feature_mean" not in d:
            return cls.identity(dim)
        return cls(np.asarray(d["feature_mean"]), np.asarray(d["feature_std"]))


@dataclass
class Corpus:
    """Encoded episodes: raw feature rows, labels and per-episode price weights."""

    X: np.ndarray
    offsets: np.ndarray       # episode k owns rows offsets[k]:offsets[k+1]
    labels: np.ndarray
    weight: np.ndarray        # ln(1 + |dP|/P) per episode
    pooled: np.ndarray
    pooled_next: np.ndarray
    prices: np.ndarray        # (n, 2) price_before, price_after
    episodes: list = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return self.weight.size

    @classmethod
    def from_episodes(cls, episodes: Sequence[DiscourseEpisode], keep: bool = False) -> "Corpus":
        rows, pooled, nxt, labels, weight, prices, offsets = [], [], [], [], [], [], [0]
        for e in episodes:
            sm = encode_state(e)
            rows.append(sm.rows)
            pooled.append(sm.pooled)
            after = sm.pooled.copy()
            after[RECENT_RETURN_INDEX] = e.price_after / e.price_before - 1.0
            nxt.append(after)
            labels.extend(e.labels)
            weight.append(impact_weight(e.price_before, e.price_after))
            prices.append((e.price_before, e.price_after))
            offsets.append(offsets[-1] + sm.n)
        return cls(
            X=np.vstack(rows) if rows else np.zeros((0, N_FEATURES)),
            offsets=np.asarray(offsets),
            labels=np.asarray(labels, dtype=np.int64),
            weight=np.asarray(weight),
            pooled=np.asarray(pooled).reshape(-1, N_FEATURES),
            pooled_next=np.asarray(nxt).reshape(-1, N_FEATURES),
            prices=np.asarray(prices).reshape(-1, 2),
            episodes=list(episodes) if keep else [],
        )

    @classmethod
    def generate(cls, gen: DiscourseGenerator, n: int, start: int = 0, keep: bool = False) -> "Corpus":
        return cls.from_episodes([r.episode for r in gen.generate(n, start)], keep=keep)

    def rows_of(self, idx) -> tuple[np.ndarray, np.ndarray]:
        """Row indices and the trajectory position of each row for episodes ``idx``."""
        counts = np.diff(self.offsets)[idx]
        starts = self.offsets[:-1][idx]
        seg = np.repeat(np.arange(len(idx)), counts)
        within = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        return np.repeat(starts, counts) + within, seg


def expected_reward(params: PolicyParams, corpus: Corpus, norm: Normalizer) -> float:
    """Mean over episodes of the policy's expected price reward (no attention cost)."""
    if corpus.n == 0:
        return 0.0
    p = predict_proba(params, norm(corpus.X)) if corpus.X.shape[0] else np.zeros(0)
    correct = np.where(corpus.labels == 1, p, 1.0 - p)
    seg = np.repeat(np.arange(corpus.n), np.diff(corpus.offsets))
    per_ep = np.bincount(seg, weights=correct, minlength=corpus.n) * corpus.weight
    return float(per_ep.mean())


def greedy_predictions(params: PolicyParams, corpus: Corpus, norm: Normalizer, threshold: float = 0.5):
    if corpus.X.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return (predict_proba(params, norm(corpus.X)) >= threshold).astype(np.int64)


def f1_score(pred, labels) -> float:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    tp = np.count_nonzero((pred == 1) & (labels == 1))
    fp = np.count_nonzero((pred == 1) & (labels == 0))
    fn = np.count_nonzero((pred == 0) & (labels == 1))
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


@dataclass
class TrainResult:
    params: PolicyParams
    value: ValueParams
    norm: Normalizer
    diagnostics: list
    episodes_seen: int


def build_batch(params: PolicyParams, corpus: Corpus, norm: Normalizer, idx: np.ndarray,
                reward_cfg: RewardConfig, rng) -> tuple[GroupBatch, np.ndarray]:
    rows, seg = corpus.rows_of(idx)
    Xn = norm(corpus.X[rows])
    actions = sample_actions(params, Xn, "Stochastic", rng)
    labels = corpus.labels[rows]
    k = len(idx)
    bounds = np.searchsorted(seg, np.arange(k + 1))
    a_list = [actions[bounds[j]:bounds[j + 1]] for j in range(k)]
    y_list = [labels[bounds[j]:bounds[j + 1]] for j in range(k)]
    s_list = [corpus.X[rows[bounds[j]:bounds[j + 1]], SALIENCE_INDEX] for j in range(k)]
    individual, mixed = group_rewards(a_list, y_list, corpus.prices[idx], s_list, reward_cfg)
    batch = GroupBatch(Xn, seg, actions, mixed, norm(corpus.pooled[idx]), norm(corpus.pooled_next[idx]))
    return batch, individual


def train(corpus: Corpus, cfg: TrainConfig, reward_cfg: RewardConfig, seed: int, *,
          probe: Corpus | None = None, params: PolicyParams | None = None,
          callback: Callable[[dict], None] | None = None) -> TrainResult:
    """Run ``cfg.steps`` group updates on episodes drawn from ``corpus``."""
    cfg.validate()
    reward_cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    norm = Normalizer.fit(corpus.X)
    dim = corpus.X.shape[1]
    if params is None:
        params = PolicyParams.init(dim, cfg.hidden, rng)
    vp = ValueParams.zeros(dim)
    opt = OptState.new(cfg.optimizer)
    diagnostics = []
    steps = cfg.steps
    for step in range(steps):
        idx = rng.integers(0, corpus.n, size=cfg.group_size)
        batch, individual = build_batch(params, corpus, norm, idx, reward_cfg, rng)
        scale = 1.0 - step / steps if cfg.anneal_lr else 1.0
        params, vp, diag = update(params, vp, batch, cfg, opt, scale, rng)
        row = {
            "step": step,
            "episodes": (step + 1) * cfg.group_size,
            "mean_reward": float(individual.mean()),
            "reward_variance": float(individual.var()),
            "policy_oscillation": diag["policy_oscillation"],
            "clipped_fraction": diag["clipped_fraction"],
            "mean_ratio": diag["mean_ratio"],
            "value_loss": diag["value_loss"],
            "probe_reward": float("nan"),
            "f1_eval": float("nan"),
        }
        if probe is not None and (step % cfg.eval_every == 0 or step == steps - 1):
            row["probe_reward"] = expected_reward(params, probe, norm)
            row["f1_eval"] = f1_score(greedy_predictions(params, probe, norm), probe.labels)
        diagnostics.append(row)
        if callback is not None:
            callback(row)
    return TrainResult(params, vp, norm, diagnostics, steps * cfg.group_size)


def write_diagnostics(path: str | Path, rows: Sequence[dict], config_hash: str = "") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# diagnostics_version={DIAGNOSTICS_VERSION} config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAGNOSTIC_FIELDS)
        for r in rows:
            w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in DIAGNOSTIC_FIELDS])


def read_diagnostics(path: str | Path) -> tuple[dict, list[dict]]:
    """Return ``(header, rows)``; header holds the version and config hash."""
    with open(path, newline="") as fh:
        first = fh.readline()
        header = dict(kv.split("=", 1) for kv in first.lstrip("# ").split())
        rows = []
        for r in csv.DictReader(fh):
            rows.append({k: (int(v) if k in ("step", "episodes") else float(v)) for k, v in r.items()})
    return header, rows


__all__ = [
    "Algo", "Corpus", "Normalizer", "TrainResult", "train", "expected_reward", "greedy_predictions",
    "f1_score", "write_diagnostics", "read_diagnostics", "DIAGNOSTIC_FIELDS", "DIAGNOSTICS_VERSION",
]
