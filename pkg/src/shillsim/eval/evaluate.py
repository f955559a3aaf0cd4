"""Detector wrappers and corpus-level evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import DiscourseEpisode, RootPost
from ..features import N_TEXT, encode_state, text_features
from ..policy import PolicyParams, predict_proba
from ..train import Normalizer
from .baseline import RuleConfig, rule_based_detect, rule_based_text
from .metrics import auc_roc, classification_metrics, ser


class PolicyDetector:
    """Greedy detector backed by trained (or untrained) policy parameters."""

    def __init__(self, params: PolicyParams, norm: Normalizer, threshold: float = 0.5, name: str = "policy"):
        self.params = params
        self.norm = norm
        self.threshold = threshold
        self.name = name

    def scores(self, e: DiscourseEpisode) -> np.ndarray:
        rows = encode_state(e).rows
        if rows.shape[0] == 0:
            return np.zeros(0)
        return predict_proba(self.params, self.norm(rows))

    def predict(self, e: DiscourseEpisode) -> np.ndarray:
        return (self.scores(e) >= self.threshold).astype(np.int64)

    def text_scores(self, texts: Sequence[str]) -> np.ndarray:
        """Score standalone texts; user and market columns sit at the training mean."""
        rows = np.tile(self.norm.mean, (len(texts), 1))
        for i, t in enumerate(texts):
            rows[i, :N_TEXT] = text_features(t)
        return predict_proba(self.params, self.norm(rows)) if len(texts) else np.zeros(0)

    def predict_texts(self, texts: Sequence[str]) -> np.ndarray:
        return (self.text_scores(texts) >= self.threshold).astype(np.int64)


class RuleDetector:
    name = "rule_based"

    def __init__(self, cfg: RuleConfig = RuleConfig()):
        self.cfg = cfg
        self.phrases = cfg.phrases()

    def predict(self, e: DiscourseEpisode) -> np.ndarray:
        return rule_based_detect(e, self.cfg, self.phrases)

    def scores(self, e: DiscourseEpisode) -> np.ndarray:
        return self.predict(e).astype(np.float64)

    def predict_texts(self, texts: Sequence[str]) -> np.ndarray:
        return np.array([int(rule_based_text(t, self.phrases)) for t in texts], dtype=np.int64)


@dataclass(frozen=True)
class DetectionScores:
    precision: float
    recall: float
    f1: float
    auc_roc: float | None
    n_comments: int


def evaluate_detector(detector, episodes: Sequence[DiscourseEpisode]) -> DetectionScores:
    preds, scores, labels = [], [], []
    for e in episodes:
        if not e.comments:
            continue
        preds.append(detector.predict(e))
        scores.append(detector.scores(e))
        labels.append(np.asarray(e.labels))
    if not labels:
        return DetectionScores(0.0, 0.0, 0.0, None, 0)
    y = np.concatenate(labels)
    p, r, f = classification_metrics(np.concatenate(preds), y)
    auc = auc_roc(np.concatenate(scores), y) if 0 < y.sum() < y.size else None
    return DetectionScores(p, r, f, auc, int(y.size))


def evasion_rate(detector, posts: Sequence[RootPost | str]) -> float:
    texts = [p if isinstance(p, str) else p.text for p in posts]
    detected = int(np.sum(detector.predict_texts(texts)))
    return ser(detected, len(texts))
