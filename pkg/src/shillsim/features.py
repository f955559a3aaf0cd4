"""Fixed-order numeric encoding of comments in thread and market context.

The index map below is versioned: reordering or redefining a feature is a
breaking change and must bump ``FEATURE_MAP_VERSION`` (the golden-vector
test pins the current layout).
"""

from __future__ import annotations

import math
import re
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import INTEREST_DIM, Comment, DiscourseEpisode, MarketSnapshot, RootPost, UserProfile
from .lexicons import Lexicon, count_matches, default_lexicon, sentiment_score, words

FEATURE_MAP_VERSION = 1

TEXT_FEATURES = (
    "exaggerated_claim_score",
    "false_attribution_flag",
    "urgency_phrase_count",
    "social_proof_count",
    "exclamation_density",
    "all_caps_ratio",
    "traditional_keyword_salience",
    "obfuscated_synonym_hits",
    "numeric_return_flag",
    "token_mention_count",
    "question_form_flag",
    "log_text_length",
    "sibling_duplicate_similarity",
    "sentiment",
    "first_person_plural_rate",
)
USER_FEATURES = (
    "log_account_age",
    "log_follower_count",
    "posts_per_day",
    "inter_reply_interval_s",
    "like_to_comment_ratio",
)
MARKET_FEATURES = (
    "hourly_volatility",
    "recent_60m_return",
    "log_normalized_volume",
    "regime_level",
)
FEATURE_NAMES = TEXT_FEATURES + USER_FEATURES + MARKET_FEATURES
TRUST_FEATURE = "author_trust_score"
N_FEATURES = len(FEATURE_NAMES)
N_TEXT = len(TEXT_FEATURES)
SALIENCE_INDEX = FEATURE_NAMES.index("traditional_keyword_salience")
RECENT_RETURN_INDEX = FEATURE_NAMES.index("recent_60m_return")

_SENTENCE_SPLIT = re.compile(r"[.!?]+")
_NUMERIC_RETURN = re.compile(r"\b\d+(?:\.\d+)?\s*(?:%|x\b)", re.IGNORECASE)
_PUNCT = ".,!?;:\"'()[]{}"


def feature_index_map(include_trust: bool = False) -> dict[str, int]:
    names = FEATURE_NAMES + ((TRUST_FEATURE,) if include_trust else ())
    return {name: i for i, name in enumerate(names)}


def _alpha_words(text: str) -> list[str]:
    out = []
    for tok in text.split():
        w = tok.strip(_PUNCT)
        if len(w) >= 2 and w.isalpha():
            out.append(w)
    return out


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def text_features(text: str, siblings: Sequence[frozenset] = (), lex: Lexicon | None = None) -> list[float]:
    lex = lex or default_lexicon()
    if not text:
        return [0.0] * N_TEXT
    sentences = [s for s in _SENTENCE_SPLIT.split(text) if s.strip()]
    exaggerated = sum(1 for s in sentences if lex.exaggeration_re.search(s))
    alpha = _alpha_words(text)
    caps = sum(1 for w in alpha if w.isupper())
    ws = words(text)
    wset = frozenset(ws)
    return [
        exaggerated / len(sentences) if sentences else 0.0,
        1.0 if lex.attribution_re.search(text) else 0.0,
        float(count_matches(lex.urgency_re, text)),
        float(count_matches(lex.social_proof_re, text)),
        text.count("!") / len(text),
        caps / len(alpha) if alpha else 0.0,
        float(count_matches(lex.keyword_re, text)),
        float(count_matches(lex.synonym_re, text)),
        1.0 if _NUMERIC_RETURN.search(text) else 0.0,
        float(len(lex.token_re.findall(text))),
        1.0 if "?" in text else 0.0,
        math.log1p(len(text)),
        max((jaccard(wset, s) for s in siblings), default=0.0),
        sentiment_score(text, lex),
        sum(1 for w in ws if w in lex.first_person_plural) / len(ws) if ws else 0.0,
    ]


def user_features(u: UserProfile, interval_s: float = 0.0, like_ratio: float = 0.0) -> list[float]:
    return [
        math.log1p(u.account_age_days),
        math.log1p(u.follower_count),
        float(u.posts_per_day),
        float(interval_s),
        float(like_ratio),
    ]


def like_share(likes: int, n_comments: int) -> float:
    """Likes as a share of likes plus comments, which keeps the ratio in [0, 1]."""
    total = likes + n_comments
    return likes / total if total else 0.0


def market_features(mkt: MarketSnapshot | None) -> list[float]:
    if mkt is None:
        return [0.0] * len(MARKET_FEATURES)
    return [mkt.hourly_volatility, mkt.recent_return, mkt.log_volume, mkt.regime.index / 2.0]


def encode_comment(c: Comment, u: UserProfile, mkt: MarketSnapshot | None, *,
                   prev_timestamp: int | None = None, siblings: Sequence[frozenset] = (),
                   like_ratio: float = 0.0, trust: float | None = None,
                   lex: Lexicon | None = None) -> np.ndarray:
    """One comment's feature vector.

    ``prev_timestamp`` is the previous comment's (or the root's) timestamp and
    ``siblings`` the word sets of earlier comments in the thread.
    """
    interval = 0.0 if prev_timestamp is None else 60.0 * (c.timestamp - prev_timestamp)
    vec = text_features(c.text, siblings, lex) + user_features(u, interval, like_ratio) + market_features(mkt)
    if trust is not None:
        vec.append(trust)
    return np.asarray(vec, dtype=np.float64)


@dataclass(frozen=True)
class StateMatrix:
    """Per-comment feature rows plus the pooled (mean) row used by the value head."""

    rows: np.ndarray
    pooled: np.ndarray

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return np.vstack([self.rows, self.pooled[None, :]])


def encode_state(e: DiscourseEpisode, mkt: MarketSnapshot | None = None, *,
                 trust: float | None = None, lex: Lexicon | None = None) -> StateMatrix:
    mkt = mkt if mkt is not None else e.market
    users = {u.user_id: u for u in e.users}
    like_ratio = like_share(e.likes_total, len(e.comments))
    dim = N_FEATURES + (trust is not None)
    rows = np.zeros((len(e.comments), dim))
    prev = e.root.timestamp
    seen: list[frozenset] = []
    for i, c in enumerate(e.comments):
        rows[i] = encode_comment(c, users[c.author_id], mkt, prev_timestamp=prev, siblings=seen,
                                 like_ratio=like_ratio, trust=trust, lex=lex)
        prev = c.timestamp
        seen.append(frozenset(words(c.text)))
    pooled = rows.mean(axis=0) if len(rows) else np.zeros(dim)
    return StateMatrix(rows, pooled)


def post_direction(post: RootPost | str, dim: int = INTEREST_DIM) -> np.ndarray:
    """Signed hash projection of the post's words onto ``dim`` axes, unit-normalised."""
    text = post if isinstance(post, str) else post.text
    v = np.zeros(dim)
    for w in words(text):
        h = zlib.crc32(w.encode("utf-8"))
        v[h % dim] += 1.0 if (h >> 16) & 1 else -1.0
    n = np.linalg.norm(v)
    return v / n if n > 0 else v
