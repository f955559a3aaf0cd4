import numpy as np
import pytest

from shillsim.core import Comment, DiscourseEpisode, MarketSnapshot, Regime, RootPost, UserKind, UserProfile
from shillsim.discourse import DiscourseGenerator, GenConfig
from shillsim.market import MarketConfig


def make_user(uid="u1", kind=UserKind.ORGANIC, **kw):
    base = dict(account_age_days=400, follower_count=120, posts_per_day=2.0,
                interest_profile=(1.0,) + (0.0,) * 7)
    base.update(kw)
    return UserProfile(uid, kind, **base)


def make_episode(texts=("nice project",), labels=None, *, likes_total=0, price_before=100.0,
                 price_after=101.0, author_kind=UserKind.ORGANIC, template_id=None, token="XYZ",
                 root_text="XYZ update", timestamps=None, users=None):
    labels = labels if labels is not None else [0] * len(texts)
    timestamps = timestamps if timestamps is not None else [10 + 3 * i for i in range(len(texts))]
    author = make_user("kol", author_kind)
    if users is None:
        users = [make_user(f"u{i}") for i in range(len(texts))]
    comments = tuple(Comment(f"c{i}", users[i].user_id, t, ts, lab)
                     for i, (t, ts, lab) in enumerate(zip(texts, timestamps, labels)))
    root = RootPost("p0", "kol", root_text, template_id, 0.0, 0.0, 0, token)
    return DiscourseEpisode(root, comments, tuple([author, *users]), price_before, price_after,
                            market=MarketSnapshot(Regime.MEDIUM, 0.05, 0.0, 0.0), likes_total=likes_total)


@pytest.fixture(scope="session")
def small_generator():
    return DiscourseGenerator(GenConfig(), MarketConfig(), seed=3)


@pytest.fixture(scope="session")
def small_threads(small_generator):
    return list(DiscourseGenerator(GenConfig(prevalence=0.3), MarketConfig(), seed=3).generate(150))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
