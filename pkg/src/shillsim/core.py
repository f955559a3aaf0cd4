"""Domain types shared by every module, plus validation and JSON Lines I/O.

All types are frozen dataclasses. Construction does not validate; call
:func:`validate_episode` (or the per-type validators) on anything that came
from outside the generator.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import (
    EpisodeInvalid,
    LabelInconsistency,
    NonPositivePrice,
    UnorderedTimestamps,
)

INTEREST_DIM = 8
DEFAULT_DELTA_MINUTES = 90


class UserKind(str, Enum):
    ORGANIC = "Organic"
    BOT = "Bot"
    SHILLER = "Shiller"


class Regime(str, Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"

    @property
    def index(self) -> int:
        return ("Low", "Medium", "High").index(self.value)


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    kind: UserKind
    account_age_days: int
    follower_count: int
    posts_per_day: float
    interest_profile: tuple[float, ...]
    # logged so the follower-growth compliance rule is evaluable
    follower_growth_24h: float = 0.0


@dataclass(frozen=True)
class RootPost:
    post_id: str
    author_id: str
    text: str
    template_id: int | None
    manipulation_intensity: float
    sentiment: float
    timestamp: int
    token: str = ""


@dataclass(frozen=True)
class Comment:
    comment_id: str
    author_id: str
    text: str
    timestamp: int
    true_label: int


@dataclass(frozen=True)
class MarketSnapshot:
    """Market context at the root post's timestamp."""

    regime: Regime
    hourly_volatility: float
    recent_return: float
    log_volume: float


@dataclass(frozen=True)
class DiscourseEpisode:
    root: RootPost
    comments: tuple[Comment, ...]
    users: tuple[UserProfile, ...]
    price_before: float
    price_after: float
    delta_minutes: int = DEFAULT_DELTA_MINUTES
    thread_label: int | None = None
    market: MarketSnapshot | None = None
    likes_total: int = 0
    likes_in_window: int = 0

    def __post_init__(self):
        if self.thread_label is None:
            object.__setattr__(self, "thread_label", derive_thread_label(self.comments))

    def user(self, user_id: str) -> UserProfile:
        for u in self.users:
            if u.user_id == user_id:
                return u
        raise KeyError(user_id)

    @property
    def labels(self) -> list[int]:
        return [c.true_label for c in self.comments]


@dataclass(frozen=True)
class Outcome:
    """One buffered detection outcome for a KOL."""

    flagged_fraction: float
    relative_move: float
    salience: float


@dataclass(frozen=True)
class KOLProfile:
    kol_id: str
    threads_total: int = 0
    threads_flagged: int = 0
    attn_exploit: float = 0.0
    content_quality: float = 1.0
    signal_salience: float = 0.0
    trust_score: float = 0.0
    buffer: tuple[Outcome, ...] = field(default=())


@dataclass(frozen=True)
class PriceSeries:
    start_minute: int
    prices: tuple[float, ...]
    volumes: tuple[float, ...]


def derive_thread_label(comments: Iterable[Comment]) -> int:
    return max((c.true_label for c in comments), default=0)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_user(u: UserProfile, dim: int = INTEREST_DIM) -> None:
    if u.account_age_days < 0 or u.follower_count < 0 or u.posts_per_day < 0:
        raise EpisodeInvalid(f"user {u.user_id}: negative metadata", "user_metadata")
    if len(u.interest_profile) != dim:
        raise EpisodeInvalid(f"user {u.user_id}: interest dim {len(u.interest_profile)}", "interest_dim")
    norm = math.sqrt(sum(v * v for v in u.interest_profile))
    if norm != 0.0 and abs(norm - 1.0) > 1e-9:
        raise EpisodeInvalid(f"user {u.user_id}: interest norm {norm}", "interest_norm")


def validate_price_series(s: PriceSeries) -> None:
    if not s.prices or any(not p > 0 for p in s.prices):
        raise NonPositivePrice("price series must be non-empty and positive")
    if len(s.volumes) != len(s.prices) or any(v < 0 for v in s.volumes):
        raise EpisodeInvalid("volumes must match prices and be non-negative", "volumes")


def validate_episode(e: DiscourseEpisode, dim: int = INTEREST_DIM) -> None:
    """Raise the first violated invariant; return None when the episode is well formed."""
    if not (e.price_before > 0 and e.price_after > 0):
        raise NonPositivePrice(f"prices {e.price_before}, {e.price_after}")
    if e.delta_minutes <= 0:
        raise EpisodeInvalid("delta_minutes must be positive", "positive_delta")
    r = e.root
    if not 0.0 <= r.manipulation_intensity <= 1.0:
        raise EpisodeInvalid("manipulation_intensity outside [0,1]", "intensity_range")
    if not -1.0 <= r.sentiment <= 1.0:
        raise EpisodeInvalid("sentiment outside [-1,1]", "sentiment_range")
    users = {u.user_id: u for u in e.users}
    for u in e.users:
        validate_user(u, dim)
    author = users.get(r.author_id)
    if author is not None and (r.template_id is not None) != (author.kind is UserKind.SHILLER):
        raise EpisodeInvalid("template_id present iff author is a shiller", "template_author")
    prev = r.timestamp
    for c in e.comments:
        if c.timestamp < prev:
            raise UnorderedTimestamps(f"comment {c.comment_id} at {c.timestamp} before {prev}")
        prev = c.timestamp
    for c in e.comments:
        if c.true_label not in (0, 1):
            raise EpisodeInvalid(f"comment {c.comment_id} label {c.true_label}", "binary_label")
    if e.thread_label != derive_thread_label(e.comments):
        raise LabelInconsistency(f"thread_label {e.thread_label} != max comment label")


def episode_violation(e: DiscourseEpisode) -> str | None:
    """Name of the first violated invariant, or None."""
    try:
        validate_episode(e)
    except EpisodeInvalid as exc:
        return exc.invariant
    return None


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def episode_to_dict(e: DiscourseEpisode) -> dict:
    d = asdict(e)
    for u in d["users"]:
        u["kind"] = u["kind"].value
        u["interest_profile"] = list(u["interest_profile"])
    d["comments"] = list(d["comments"])
    d["users"] = list(d["users"])
    if d["market"] is not None:
        d["market"]["regime"] = d["market"]["regime"].value
    return d


def episode_from_dict(d: dict) -> DiscourseEpisode:
    market = d.get("market")
    return DiscourseEpisode(
        root=RootPost(**d["root"]),
        comments=tuple(Comment(**c) for c in d["comments"]),
        users=tuple(
            UserProfile(**{**u, "kind": UserKind(u["kind"]), "interest_profile": tuple(u["interest_profile"])})
            for u in d["users"]
        ),
        price_before=d["price_before"],
        price_after=d["price_after"],
        delta_minutes=d["delta_minutes"],
        thread_label=d.get("thread_label"),
        market=None if market is None else MarketSnapshot(**{**market, "regime": Regime(market["regime"])}),
        likes_total=d.get("likes_total", 0),
        likes_in_window=d.get("likes_in_window", 0),
    )


def dumps_episode(e: DiscourseEpisode) -> str:
    # float repr is the shortest string that round-trips bit-exactly
    return json.dumps(episode_to_dict(e), separators=(",", ":"), allow_nan=False)


def loads_episode(line: str) -> DiscourseEpisode:
    return episode_from_dict(json.loads(line))


def write_episodes(path: str | Path, episodes: Iterable[DiscourseEpisode]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in episodes:
            fh.write(dumps_episode(e))
            fh.write("\n")
            n += 1
    return n


def read_episodes(path: str | Path) -> Iterator[DiscourseEpisode]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield loads_episode(line)


def with_prices(e: DiscourseEpisode, price_before: float, price_after: float) -> DiscourseEpisode:
    return replace(e, price_before=price_before, price_after=price_after)
