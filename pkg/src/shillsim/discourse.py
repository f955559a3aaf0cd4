"""Discourse episode generation: shiller root posts, follower comments, bot floods.

Three follower rulesets drive each thread:

* organic users reply when the post direction is close enough to their interest
  profile, with a threshold that drops as volatility rises;
* bots flood shiller threads that collect enough early likes and read positive;
* once a thread's bot share exceeds the cap, bot activation on the next shiller
  thread is scaled down.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .core import (
    DEFAULT_DELTA_MINUTES,
    INTEREST_DIM,
    Comment,
    DiscourseEpisode,
    PriceSeries,
    Regime,
    RootPost,
    UserKind,
    UserProfile,
)
from .errors import ConfigError, EmptyBank
from .features import post_direction
from .lexicons import Lexicon, default_lexicon, default_pools, load_json, sentiment_score
from .market import MarketConfig, apply_discourse_impact, baseline_path, market_context, simulate_volumes

STYLES = ("Traditional", "Stealth")


@dataclass(frozen=True)
class Template:
    template_id: int
    pattern: str
    style: str
    regime_weights: dict
    base_intensity: float

    def __post_init__(self):
        if not any(ph in self.pattern for ph in ("[TOKEN]", "[RETURN]", "[URGENCY]")):
            raise ValueError(f"template {self.template_id} has no placeholder")
        if self.style not in STYLES:
            raise ValueError(f"template {self.template_id}: unknown style {self.style}")
        if any(not w > 0 for w in self.regime_weights.values()):
            raise ValueError(f"template {self.template_id}: regime weights must be positive")
        if not 0.0 <= self.base_intensity <= 1.0:
            raise ValueError(f"template {self.template_id}: base_intensity outside [0,1]")

    def weight(self, regime: Regime) -> float:
        return float(self.regime_weights[Regime(regime).value])


@dataclass(frozen=True)
class TemplateBank:
    templates: tuple[Template, ...]
    placeholders: dict

    def __len__(self):
        return len(self.templates)

    def by_id(self, template_id: int) -> Template:
        for t in self.templates:
            if t.template_id == template_id:
                return t
        raise KeyError(template_id)

    def of_style(self, style: str) -> "TemplateBank":
        return TemplateBank(tuple(t for t in self.templates if t.style == style), self.placeholders)


@lru_cache(maxsize=None)
def _default_bank() -> TemplateBank:
    d = load_json(None, "templates.json")
    return TemplateBank(tuple(Template(**t) for t in d["templates"]), d["placeholders"])


def load_bank(path: str | Path | None = None) -> TemplateBank:
    if path is None:
        return _default_bank()
    d = load_json(path, "templates.json")
    return TemplateBank(tuple(Template(**t) for t in d["templates"]), d["placeholders"])


@dataclass(frozen=True)
class GenConfig:
    n_templates: int = 20
    obfuscation_rate: float = 0.65
    bot_fraction: float = 0.30
    bot_like_threshold: int = 10
    bot_window_minutes: int = 5
    bot_share_cap: float = 0.30
    bot_suppression_multiplier: float = 0.25
    bot_activation_prob: float = 1.0
    bot_flood_share: tuple[float, float] = (0.2, 0.45)
    organic_base_threshold: float = 0.25
    volatility_scaling: float = 0.4
    comments_per_thread: tuple[int, int] = (8, 16)
    sock_comments: tuple[int, int] = (1, 3)
    prevalence: float = 0.087
    n_followers: int = 500
    n_shiller_kols: int = 4
    n_organic_kols: int = 8
    socks_per_kol: int = 6
    like_rate: float = 1.0
    interest_dim: int = INTEREST_DIM
    delta_minutes: int = DEFAULT_DELTA_MINUTES
    suppression_enabled: bool = True
    template_bank: str | None = None
    lexicon: str | None = None

    def __post_init__(self):
        for name in ("bot_flood_share", "comments_per_thread", "sock_comments"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def validate(self, prefix: str = "gen") -> None:
        for name in ("obfuscation_rate", "bot_fraction", "bot_share_cap", "bot_suppression_multiplier",
                     "bot_activation_prob", "prevalence"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{prefix}.{name}", f"probability {v} outside [0,1]")
        for name in ("bot_like_threshold", "bot_window_minutes", "n_followers", "delta_minutes",
                     "interest_dim", "n_shiller_kols", "n_organic_kols", "socks_per_kol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{prefix}.{name}", "must be positive")
        if not 0.0 < self.organic_base_threshold < 1.0:
            raise ConfigError(f"{prefix}.organic_base_threshold", "must lie in (0,1)")
        if not 0.0 <= self.volatility_scaling <= 1.0:
            raise ConfigError(f"{prefix}.volatility_scaling", "must lie in [0,1]")
        if self.like_rate < 0:
            raise ConfigError(f"{prefix}.like_rate", "must be >= 0")
        lo, hi = self.comments_per_thread
        if not 0 <= lo <= hi:
            raise ConfigError(f"{prefix}.comments_per_thread", "need 0 <= min <= max")
        lo, hi = self.sock_comments
        if not 0 <= lo <= hi:
            raise ConfigError(f"{prefix}.sock_comments", "need 0 <= min <= max")
        lo, hi = self.bot_flood_share
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigError(f"{prefix}.bot_flood_share", "need 0 <= min <= max <= 1")


# ---------------------------------------------------------------------------
# Root posts
# ---------------------------------------------------------------------------

def compute_sentiment(text: str, lex: Lexicon | None = None) -> float:
    return sentiment_score(text, lex)


def fill_placeholders(pattern: str, token: str, style: str, placeholders: dict, rng) -> str:
    text = pattern.replace("[TOKEN]", token)
    if "[RETURN]" in text:
        choices = placeholders["RETURN"][style]
        text = text.replace("[RETURN]", choices[rng.integers(len(choices))])
    if "[URGENCY]" in text:
        choices = placeholders["URGENCY"][style]
        text = text.replace("[URGENCY]", choices[rng.integers(len(choices))])
    return text


def render(pattern: str, token: str, style: str, placeholders: dict, rng, obfuscation_rate: float,
           lex: Lexicon) -> str:
    text = fill_placeholders(pattern, token, style, placeholders, rng)
    # stealth content never carries a traditional keyword
    rate = 1.0 if style == "Stealth" else obfuscation_rate
    return lex.obfuscate(text, rate, rng)


def select_template(bank: TemplateBank, regime: Regime, rng) -> Template:
    if len(bank) == 0:
        raise EmptyBank("template bank is empty")
    w = np.array([t.weight(regime) for t in bank.templates])
    return bank.templates[int(rng.choice(len(w), p=w / w.sum()))]


def shiller_generate(bank: TemplateBank, regime: Regime, token: str, rng, *,
                     obfuscation_rate: float = 0.65, author_id: str = "shiller", post_id: str = "p0",
                     timestamp: int = 0, lex: Lexicon | None = None) -> RootPost:
    lex = lex or default_lexicon()
    t = select_template(bank, regime, rng)
    text = render(t.pattern, token, t.style, bank.placeholders, rng, obfuscation_rate, lex)
    return RootPost(
        post_id=post_id,
        author_id=author_id,
        text=text,
        template_id=t.template_id,
        manipulation_intensity=t.base_intensity,
        sentiment=compute_sentiment(text, lex),
        timestamp=timestamp,
        token=token,
    )


# ---------------------------------------------------------------------------
# Follower rules
# ---------------------------------------------------------------------------

def organic_threshold(base: float, volatility_scaling: float, volatility: float) -> float:
    return base * (1.0 - volatility_scaling * min(1.0, max(0.0, volatility)))


def follower_respond(post: RootPost, user: UserProfile, volatility: float, rng, *,
                     cfg: GenConfig = GenConfig(), direction: np.ndarray | None = None,
                     comment_id: str | None = None, pools: dict | None = None) -> Comment | None:
    """Organic reply rule; None when the user stays silent."""
    if user.kind is not UserKind.ORGANIC:
        raise ValueError("follower_respond applies to organic users only")
    d = post_direction(post, cfg.interest_dim) if direction is None else direction
    similarity = float(np.dot(d, np.asarray(user.interest_profile)))
    if not similarity > organic_threshold(cfg.organic_base_threshold, cfg.volatility_scaling, volatility):
        return None
    pool = (pools or default_pools())["organic_comments"]
    text = pool[rng.integers(len(pool))].replace("[TOKEN]", post.token)
    delay = 1 + int(min(cfg.delta_minutes - 1, rng.exponential(25.0)))
    return Comment(comment_id or f"{post.post_id}-{user.user_id}", user.user_id, text,
                   post.timestamp + delay, 0)


@dataclass(frozen=True)
class Engagement:
    """Engagement counters a bot watches on a fresh post."""

    likes_in_window: int
    window_minutes: int


def bot_triggered(state: Engagement, post: RootPost, cfg: GenConfig) -> bool:
    return (state.window_minutes <= cfg.bot_window_minutes
            and state.likes_in_window >= cfg.bot_like_threshold
            and post.sentiment > 0)


def paraphrase(text: str, rng, pools: dict) -> str:
    p = pools["bot_paraphrase"]
    pre = p["prefixes"][rng.integers(len(p["prefixes"]))]
    suf = p["suffixes"][rng.integers(len(p["suffixes"]))]
    return f"{pre}{text}{suf}"


def bot_amplify(state: Engagement, post: RootPost, rng, *, cfg: GenConfig = GenConfig(),
                bots: Sequence[UserProfile] = (), n_comments: int = 4, style: str = "Traditional",
                suppression: float = 1.0, pools: dict | None = None, placeholders: dict | None = None,
                lex: Lexicon | None = None) -> list[Comment]:
    """Flood a triggered thread with near-duplicate positive comments (label 1)."""
    if not bot_triggered(state, post, cfg):
        return []
    if rng.random() >= cfg.bot_activation_prob * suppression:
        return []
    if not bots:
        return []
    pools = pools or default_pools()
    lex = lex or default_lexicon()
    placeholders = placeholders or load_bank().placeholders
    k = min(n_comments, len(bots))
    chosen = rng.choice(len(bots), size=k, replace=False)
    base_pool = pools["bot_comments"][style]
    # a campaign reuses one or two base messages
    bases = [base_pool[i] for i in rng.choice(len(base_pool), size=min(2, len(base_pool)), replace=False)]
    rate = 1.0 if style == "Stealth" else 0.0
    start = post.timestamp + cfg.bot_window_minutes
    out = []
    for j, b in enumerate(chosen):
        base = fill_placeholders(bases[rng.integers(len(bases))], post.token, style, placeholders, rng)
        text = paraphrase(lex.obfuscate(base, rate, rng), rng, pools)
        ts = start + int(rng.integers(0, 3))
        out.append(Comment(f"{post.post_id}-b{j}", bots[b].user_id, text, ts, 1))
    return out


def suppress_bots(comments: Sequence[Comment], kinds: dict, cfg: GenConfig = GenConfig()) -> float:
    """Activation multiplier for the next shiller thread given this thread's bot share."""
    if not comments:
        raise ValueError("suppress_bots needs at least one comment")
    n_bot = sum(1 for c in comments if kinds[c.author_id] is UserKind.BOT)
    share = n_bot / len(comments)
    return 1.0 if share <= cfg.bot_share_cap else cfg.bot_suppression_multiplier


# ---------------------------------------------------------------------------
# Population and episodes
# ---------------------------------------------------------------------------

def _unit(rng, dim: int) -> tuple[float, ...]:
    v = rng.standard_normal(dim)
    v = v / np.linalg.norm(v)
    return tuple(float(x) for x in v)


@dataclass(frozen=True)
class Population:
    organic: tuple[UserProfile, ...]
    bots: tuple[UserProfile, ...]
    shiller_kols: tuple[UserProfile, ...]
    organic_kols: tuple[UserProfile, ...]
    socks: dict = field(default_factory=dict)


def build_population(cfg: GenConfig, rng) -> Population:
    dim = cfg.interest_dim
    zero = (0.0,) * dim
    n_bots = int(round(cfg.bot_fraction * cfg.n_followers))
    organic = []
    for i in range(cfg.n_followers - n_bots):
        new = rng.random() < 0.1
        age = int(rng.integers(1, 60)) if new else int(max(1.0, rng.lognormal(math.log(700), 0.8)))
        followers = int(rng.lognormal(math.log(40 if new else 300), 1.2))
        burst = rng.random() < 0.1
        organic.append(UserProfile(
            f"o{i}", UserKind.ORGANIC, age, followers, float(rng.uniform(0.2, 15.0)), _unit(rng, dim),
            float(rng.uniform(0.0, 2.0) if burst else rng.uniform(0.0, 0.3))))
    bots = []
    for i in range(n_bots):
        small = rng.random() < 0.8
        aged = rng.random() < 0.25
        bots.append(UserProfile(
            f"b{i}", UserKind.BOT,
            int(rng.integers(90, 900)) if aged else int(rng.integers(1, 90)),
            int(rng.integers(0, 100)) if small else int(rng.integers(100, 3000)),
            float(rng.uniform(50.0, 300.0)) if small else float(rng.uniform(5.0, 50.0)),
            zero, float(rng.uniform(0.0, 2.5))))
    shiller_kols, socks = [], {}
    for k in range(cfg.n_shiller_kols):
        kol = UserProfile(f"kol_s{k}", UserKind.SHILLER, int(rng.integers(200, 2000)),
                          int(rng.integers(20_000, 200_000)), float(rng.uniform(5.0, 30.0)), zero,
                          float(rng.uniform(0.0, 0.5)))
        shiller_kols.append(kol)
        socks[kol.user_id] = tuple(
            UserProfile(f"{kol.user_id}_sock{j}", UserKind.SHILLER, int(rng.integers(5, 300)),
                        int(rng.integers(50, 1500)), float(rng.uniform(5.0, 60.0)), zero,
                        float(rng.uniform(0.3, 3.0)))
            for j in range(cfg.socks_per_kol))
    organic_kols = tuple(
        UserProfile(f"kol_o{k}", UserKind.ORGANIC, int(rng.integers(200, 3000)),
                    int(rng.integers(10_000, 150_000)), float(rng.uniform(2.0, 20.0)), _unit(rng, dim),
                    float(rng.uniform(0.0, 0.2)))
        for k in range(cfg.n_organic_kols))
    return Population(tuple(organic), tuple(bots), tuple(shiller_kols), organic_kols, socks)


def like_rate(cfg: GenConfig, sentiment: float, followers: int) -> float:
    """Poisson likes per minute on a root post."""
    return cfg.like_rate * (0.1 + abs(sentiment)) * math.log10(1.0 + followers)


@dataclass
class ThreadResult:
    episode: DiscourseEpisode
    series: PriceSeries
    style: str | None


def generate_episode(cfg: GenConfig, bank: TemplateBank, regime: Regime, price_ctx: float, rng, *,
                     population: Population, market_cfg: MarketConfig = MarketConfig(),
                     index: int = 0, suppression: float = 1.0, force_shiller: bool | None = None,
                     force_style: str | None = None, lex: Lexicon | None = None,
                     pools: dict | None = None) -> ThreadResult:
    """One thread: root post, comments, labels, and the delayed price reaction."""
    lex = lex or default_lexicon()
    pools = pools or default_pools()
    regime = Regime(regime)
    is_shill = rng.random() < cfg.prevalence if force_shiller is None else force_shiller
    token = lex.tokens[rng.integers(len(lex.tokens))]

    history, snapshot = market_context(price_ctx, regime, market_cfg.history_minutes, rng)
    p_before = history.prices[-1]
    t0 = market_cfg.history_minutes
    pid = f"e{index}"

    style = None
    if is_shill:
        author = population.shiller_kols[rng.integers(len(population.shiller_kols))]
        use_bank = bank if force_style is None else bank.of_style(force_style)
        root = shiller_generate(use_bank, regime, token, rng, obfuscation_rate=cfg.obfuscation_rate,
                                author_id=author.user_id, post_id=pid, timestamp=t0, lex=lex)
        style = bank.by_id(root.template_id).style
    else:
        author = population.organic_kols[rng.integers(len(population.organic_kols))]
        pool = pools["organic_roots"]
        text = pool[rng.integers(len(pool))].replace("[TOKEN]", token)
        root = RootPost(pid, author.user_id, text, None, 0.0, compute_sentiment(text, lex), t0, token)

    lo, hi = cfg.comments_per_thread
    n_target = int(rng.integers(lo, hi + 1))
    rate = like_rate(cfg, root.sentiment, author.follower_count)
    likes_window = int(rng.poisson(rate * cfg.bot_window_minutes))
    likes_total = likes_window + int(rng.poisson(rate * max(0, cfg.delta_minutes - cfg.bot_window_minutes)))

    comments: list[Comment] = []
    users = {author.user_id: author}
    if is_shill:
        socks = population.socks[author.user_id]
        s_lo, s_hi = cfg.sock_comments
        k = min(int(rng.integers(s_lo, s_hi + 1)), len(socks), n_target)
        sock_pool = pools["sock_comments"][style]
        for j, si in enumerate(rng.choice(len(socks), size=k, replace=False)):
            sock = socks[si]
            text = render(sock_pool[rng.integers(len(sock_pool))], token, style, bank.placeholders, rng,
                          cfg.obfuscation_rate, lex)
            comments.append(Comment(f"{pid}-s{j}", sock.user_id, text, t0 + int(rng.integers(1, 11)), 1))
            users[sock.user_id] = sock
        f_lo, f_hi = cfg.bot_flood_share
        n_bots = max(1, int(round(rng.uniform(f_lo, f_hi) * n_target)))
        n_bots = min(n_bots, n_target - len(comments))
        flood = bot_amplify(Engagement(likes_window, cfg.bot_window_minutes), root, rng, cfg=cfg,
                            bots=population.bots, n_comments=n_bots, style=style,
                            suppression=suppression, pools=pools, placeholders=bank.placeholders, lex=lex)
        for c in flood:
            users[c.author_id] = next(b for b in population.bots if b.user_id == c.author_id)
        comments.extend(flood)
        likes_total += 8 * len(flood)

    direction = post_direction(root, cfg.interest_dim)
    order = rng.permutation(len(population.organic))
    for oi in order:
        if len(comments) >= n_target:
            break
        u = population.organic[oi]
        c = follower_respond(root, u, snapshot.hourly_volatility, rng, cfg=cfg, direction=direction,
                             comment_id=f"{pid}-{u.user_id}", pools=pools)
        if c is not None:
            comments.append(c)
            users[u.user_id] = u

    comments.sort(key=lambda c: c.timestamp)
    comments = [Comment(f"{pid}-c{i}", c.author_id, c.text, c.timestamp, c.true_label)
                for i, c in enumerate(comments)]

    post_path = baseline_path(p_before, cfg.delta_minutes, regime, rng)
    p_after = apply_discourse_impact(float(post_path[-1]), root.sentiment, root.manipulation_intensity,
                                     market_cfg, rng)
    post_path[-1] = p_after
    volumes = simulate_volumes(post_path, rng)
    series = PriceSeries(0, history.prices + tuple(float(x) for x in post_path[1:]),
                         history.volumes + tuple(float(v) for v in volumes[1:]))

    episode = DiscourseEpisode(
        root=root,
        comments=tuple(comments),
        users=tuple(users.values()),
        price_before=float(p_before),
        price_after=float(p_after),
        delta_minutes=cfg.delta_minutes,
        market=snapshot,
        likes_total=likes_total,
        likes_in_window=likes_window,
    )
    return ThreadResult(episode, series, style)


def episode_rng(seed: int, index: int, stream: int = 1) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream, int(index)]))


class DiscourseGenerator:
    """Seeded source of discourse episodes.

    The population depends only on the master seed and each episode draws from
    its own stream keyed by ``(seed, index)``. The one piece of carried state is
    the bot-suppression multiplier, updated after every shiller thread.
    """

    def __init__(self, cfg: GenConfig, market_cfg: MarketConfig, seed: int, *, start_price: float = 1.0):
        cfg.validate()
        self.cfg = cfg
        self.market_cfg = market_cfg
        self.seed = int(seed)
        self.start_price = start_price
        self.bank = load_bank(cfg.template_bank)
        if cfg.lexicon is None:
            self.lex = default_lexicon()
        else:
            self.lex = Lexicon.from_dict(load_json(cfg.lexicon, "lexicons.json"))
        self.pools = default_pools()
        self.population = build_population(cfg, np.random.default_rng(np.random.SeedSequence([self.seed, 0])))
        self.kinds = {u.user_id: u.kind for u in self._all_users()}
        self.suppression = 1.0

    def _all_users(self):
        p = self.population
        yield from p.organic
        yield from p.bots
        yield from p.shiller_kols
        yield from p.organic_kols
        for socks in p.socks.values():
            yield from socks

    def episode(self, index: int, *, force_shiller: bool | None = None,
                force_style: str | None = None) -> ThreadResult:
        rng = episode_rng(self.seed, index)
        res = generate_episode(self.cfg, self.bank, self.market_cfg.regime, self.start_price, rng,
                               population=self.population, market_cfg=self.market_cfg, index=index,
                               suppression=self.suppression, force_shiller=force_shiller,
                               force_style=force_style, lex=self.lex, pools=self.pools)
        e = res.episode
        if self.cfg.suppression_enabled and e.root.template_id is not None and e.comments:
            self.suppression = suppress_bots(e.comments, self.kinds, self.cfg)
        return res

    def generate(self, n: int, start: int = 0, **kw) -> Iterator[ThreadResult]:
        for i in range(start, start + n):
            yield self.episode(i, **kw)

    def stealth_posts(self, n: int, style: str = "Stealth", stream: int = 7) -> list[RootPost]:
        """Standalone shiller posts of one template style."""
        bank = self.bank.of_style(style)
        out = []
        for i in range(n):
            rng = episode_rng(self.seed, i, stream)
            kol = self.population.shiller_kols[rng.integers(len(self.population.shiller_kols))]
            token = self.lex.tokens[rng.integers(len(self.lex.tokens))]
            out.append(shiller_generate(bank, self.market_cfg.regime, token, rng,
                                        obfuscation_rate=self.cfg.obfuscation_rate, author_id=kol.user_id,
                                        post_id=f"{style[0].lower()}{i}", lex=self.lex))
        return out
