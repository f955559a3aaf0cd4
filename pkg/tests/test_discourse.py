import numpy as np
import pytest

from shillsim.core import Comment, Regime, RootPost, UserKind
from shillsim.discourse import (
    DiscourseGenerator, Engagement, GenConfig, Template, TemplateBank, bot_amplify, bot_triggered,
    compute_sentiment, fill_placeholders, follower_respond, load_bank, organic_threshold, shiller_generate,
    suppress_bots,
)
from shillsim.errors import ConfigError, EmptyBank
from shillsim.features import post_direction
from shillsim.lexicons import default_lexicon
from shillsim.market import MarketConfig

from conftest import make_user


def test_placeholder_fill_matches_template_example(rng):
    ph = {"RETURN": {"Traditional": ["500%"]}, "URGENCY": {"Traditional": ["now"]}}
    out = fill_placeholders("Invest in [TOKEN] now for a guaranteed [RETURN] gain!", "XYZ", "Traditional", ph, rng)
    assert out == "Invest in XYZ now for a guaranteed 500% gain!"


def test_obfuscation_replaces_buy(rng):
    lex = default_lexicon()
    out = lex.obfuscate("Time to buy XYZ", 1.0, rng)
    assert "portfolio addition" in out
    assert "buy" not in out.lower().split()


def test_obfuscation_keeps_leading_capital(rng):
    assert default_lexicon().obfuscate("Buy it", 1.0, rng).startswith("Portfolio addition")


def test_single_template_bank_always_chosen(rng):
    t = Template(7, "Look at [TOKEN]", "Traditional", {"Low": 1, "Medium": 1, "High": 1}, 0.5)
    bank = TemplateBank((t,), load_bank().placeholders)
    for _ in range(20):
        assert shiller_generate(bank, Regime.HIGH, "XYZ", rng).template_id == 7


def test_empty_bank(rng):
    with pytest.raises(EmptyBank):
        shiller_generate(TemplateBank((), {}), Regime.LOW, "XYZ", rng)


def test_template_bank_shape():
    bank = load_bank()
    assert len(bank) == 20
    assert len(bank.of_style("Stealth")) == 10
    assert len(bank.of_style("Traditional")) == 10


class TestSentiment:
    def test_empty(self):
        assert compute_sentiment("") == 0.0

    def test_all_positive(self):
        assert compute_sentiment("great bullish gains") == 1.0

    def test_two_positive_one_negative(self):
        assert compute_sentiment("great gains but risky") == pytest.approx(1 / 3, abs=1e-15)


class TestFollower:
    def _post(self, text="alpha beta gamma"):
        return RootPost("p", "k", text, None, 0.0, 0.0, 0, "XYZ")

    def test_aligned_user_responds(self, rng):
        post = self._post()
        d = post_direction(post)
        u = make_user(interest_profile=tuple(d))
        cfg = GenConfig(organic_base_threshold=0.5)
        assert follower_respond(post, u, 0.0, rng, cfg=cfg) is not None

    def test_orthogonal_user_silent(self, rng):
        post = self._post()
        d = post_direction(post)
        orth = np.zeros_like(d)
        orth[int(np.argmin(np.abs(d)))] = 1.0
        orth -= orth.dot(d) * d
        orth /= np.linalg.norm(orth)
        u = make_user(interest_profile=tuple(orth))
        cfg = GenConfig(organic_base_threshold=0.5)
        assert follower_respond(post, u, 0.0, rng, cfg=cfg) is None

    def test_volatility_lowers_threshold(self):
        assert organic_threshold(0.5, 0.4, 0.10) == pytest.approx(0.48, abs=1e-15)

    def test_only_organic(self, rng):
        with pytest.raises(ValueError):
            follower_respond(self._post(), make_user(kind=UserKind.BOT), 0.0, rng)


class TestBots:
    cfg = GenConfig()

    def _post(self, s):
        return RootPost("p", "k", "XYZ", 1, 0.5, s, 0, "XYZ")

    def test_activation(self):
        assert bot_triggered(Engagement(12, 4), self._post(0.3), self.cfg)

    def test_negative_sentiment_blocks(self):
        assert not bot_triggered(Engagement(12, 4), self._post(-0.2), self.cfg)

    def test_few_likes_block(self):
        assert not bot_triggered(Engagement(3, 5), self._post(0.3), self.cfg)

    def test_flood_is_labeled_and_filled(self, rng):
        bots = [make_user(f"b{i}", UserKind.BOT) for i in range(6)]
        out = bot_amplify(Engagement(12, 4), self._post(0.3), rng, bots=bots, n_comments=4)
        assert len(out) == 4
        assert all(c.true_label == 1 for c in out)
        assert not any("[" in c.text for c in out)

    @pytest.mark.parametrize("n_bot, expected", [(1, 1.0), (7, 0.25), (6, 1.0)])
    def test_suppression(self, n_bot, expected):
        # 10, 20 and 20 comments give shares 0.10, 0.35 and exactly 0.30
        total = {1: 10, 7: 20, 6: 20}[n_bot]
        comments = [Comment(f"c{i}", "bot" if i < n_bot else "org", "x", i, 0) for i in range(total)]
        kinds = {"bot": UserKind.BOT, "org": UserKind.ORGANIC}
        assert suppress_bots(comments, kinds, self.cfg) == expected


@pytest.mark.parametrize("prev, expected", [(0.0, 0), (1.0, 1)])
def test_prevalence_extremes(prev, expected):
    gen = DiscourseGenerator(GenConfig(prevalence=prev), MarketConfig(), seed=1)
    assert {r.episode.thread_label for r in gen.generate(60)} == {expected}


def test_prevalence_concentration():
    gen = DiscourseGenerator(GenConfig(), MarketConfig(), seed=11)
    share = np.mean([r.episode.thread_label for r in gen.generate(10_000)])
    assert abs(share - 0.087) <= 0.01


def test_label_soundness(small_threads):
    gen = DiscourseGenerator(GenConfig(prevalence=0.3), MarketConfig(), seed=3)
    for t in small_threads:
        for c in t.episode.comments:
            kind = gen.kinds[c.author_id]
            assert c.true_label == (kind in (UserKind.BOT, UserKind.SHILLER))


def test_seeded_determinism():
    a = [r.episode for r in DiscourseGenerator(GenConfig(), MarketConfig(), 5).generate(50)]
    b = [r.episode for r in DiscourseGenerator(GenConfig(), MarketConfig(), 5).generate(50)]
    c = [r.episode for r in DiscourseGenerator(GenConfig(), MarketConfig(), 6).generate(50)]
    assert a == b
    assert a != c


def test_bot_share_stays_near_cap():
    gen = DiscourseGenerator(GenConfig(prevalence=1.0), MarketConfig(), seed=2)
    shares = []
    for r in gen.generate(400):
        cs = r.episode.comments
        if cs:
            shares.append(sum(gen.kinds[c.author_id] is UserKind.BOT for c in cs) / len(cs))
    assert np.mean(shares[100:]) < GenConfig().bot_share_cap + 0.10


def test_stealth_posts_carry_no_traditional_keyword():
    gen = DiscourseGenerator(GenConfig(), MarketConfig(), seed=4)
    lex = gen.lex
    for post in gen.stealth_posts(300):
        assert lex.keyword_re.search(post.text) is None, post.text
    trad = gen.stealth_posts(300, "Traditional")
    assert any(lex.keyword_re.search(p.text) for p in trad)


def test_config_validation():
    with pytest.raises(ConfigError) as exc:
        GenConfig(prevalence=1.5).validate()
    assert exc.value.field == "gen.prevalence"
