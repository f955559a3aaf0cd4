"""Rule-based compliance baseline.

A comment is flagged when any rule fires: weighted dictionary phrases,
thread like-to-comment ratio, author follower growth, reply interval, or
membership in a dense timestamp cluster of comments mentioning the thread's
token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sklearn.cluster import DBSCAN

from ..core import DiscourseEpisode
from ..lexicons import load_json, phrase_regex


@dataclass(frozen=True)
class PhraseDictionary:
    weights: dict
    threshold: float
    pattern: re.Pattern

    @classmethod
    def from_dict(cls, d: dict) -> "PhraseDictionary":
        w = {k.lower(): float(v) for k, v in d["phrases"].items()}
        return cls(w, float(d["threshold"]), phrase_regex(w))

    def score(self, text: str) -> float:
        return sum(self.weights[m.group(0).lower()] for m in self.pattern.finditer(text))

    def hit(self, text: str) -> bool:
        return self.score(text) >= self.threshold


@lru_cache(maxsize=None)
def default_dictionary() -> PhraseDictionary:
    return PhraseDictionary.from_dict(load_json(None, "compliance_phrases.json"))


@dataclass(frozen=True)
class RuleConfig:
    like_ratio: float = 20.0
    follower_growth: float = 1.5
    min_interval_s: float = 30.0
    cluster_eps_minutes: float = 90.0
    cluster_min_pts: int = 3
    dictionary: str | None = None

    def phrases(self) -> PhraseDictionary:
        if self.dictionary is None:
            return default_dictionary()
        return PhraseDictionary.from_dict(load_json(self.dictionary, "compliance_phrases.json"))


def token_cluster_members(e: DiscourseEpisode, cfg: RuleConfig) -> np.ndarray:
    """Boolean mask of comments inside a timestamp density cluster of token mentions."""
    n = len(e.comments)
    mask = np.zeros(n, dtype=bool)
    if not e.root.token or n < cfg.cluster_min_pts:
        return mask
    tok = re.compile(rf"(?<![\w]){re.escape(e.root.token)}(?![\w])", re.IGNORECASE)
    idx = [i for i, c in enumerate(e.comments) if tok.search(c.text)]
    if len(idx) < cfg.cluster_min_pts:
        return mask
    ts = np.array([[e.comments[i].timestamp] for i in idx], dtype=np.float64)
    labels = DBSCAN(eps=cfg.cluster_eps_minutes, min_samples=cfg.cluster_min_pts).fit_predict(ts)
    mask[np.asarray(idx)[labels >= 0]] = True
    return mask


def rule_based_detect(e: DiscourseEpisode, cfg: RuleConfig = RuleConfig(),
                      phrases: PhraseDictionary | None = None) -> np.ndarray:
    phrases = phrases or cfg.phrases()
    n = len(e.comments)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    flags = token_cluster_members(e, cfg)
    if e.likes_total / n > cfg.like_ratio:
        flags[:] = True
    users = {u.user_id: u for u in e.users}
    prev = e.root.timestamp
    for i, c in enumerate(e.comments):
        u = users.get(c.author_id)
        if (phrases.hit(c.text)
                or (u is not None and u.follower_growth_24h > cfg.follower_growth)
                or 60.0 * (c.timestamp - prev) < cfg.min_interval_s):
            flags[i] = True
        prev = c.timestamp
    return flags.astype(np.int64)


def rule_based_text(text: str, phrases: PhraseDictionary | None = None) -> bool:
    """The dictionary rule alone, for standalone posts without thread context."""
    return (phrases or default_dictionary()).hit(text)
