import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shillsim.core import KOLProfile, Outcome
from shillsim.errors import ConfigError
from shillsim.trust import TrustConfig, TrustStore, rank_kols, record_outcome, trust_score

CLEAN = Outcome(0.0, 0.01, 0.0)
HIT = Outcome(0.5, 0.10, 1.0)


def test_single_clean_thread():
    p = record_outcome(KOLProfile("k"), CLEAN)
    assert p.attn_exploit == 0.0
    assert p.threads_total == 1 and p.threads_flagged == 0


def test_exploit_fraction():
    p = KOLProfile("k")
    for o in [HIT] * 4 + [CLEAN] * 6:
        p = record_outcome(p, o)
    assert p.attn_exploit == pytest.approx(0.4, abs=1e-15)


def test_flag_without_impact_is_not_exploitation():
    p = record_outcome(KOLProfile("k"), Outcome(1.0, 0.01, 0.0))
    assert p.attn_exploit == 0.0
    assert p.threads_flagged == 1


def test_fifo_eviction():
    cfg = TrustConfig(buffer_capacity=3)
    p = KOLProfile("k")
    for o in [HIT, CLEAN, CLEAN, CLEAN]:
        p = record_outcome(p, o, cfg)
    assert len(p.buffer) == 3
    assert p.attn_exploit == 0.0
    assert p.threads_total == 4 and p.threads_flagged == 1


class TestScore:
    def test_maximum(self):
        assert trust_score(KOLProfile("k", attn_exploit=0.0, content_quality=1.0, signal_salience=1.0)) == 1.0

    def test_minimum(self):
        assert trust_score(KOLProfile("k", attn_exploit=1.0, content_quality=0.0, signal_salience=0.0)) == 0.0

    def test_weighted(self):
        p = KOLProfile("k", attn_exploit=0.2, content_quality=0.6, signal_salience=0.5)
        assert trust_score(p) == pytest.approx(0.68, abs=1e-12)

    def test_frequency_variant(self):
        p = record_outcome(KOLProfile("k"), Outcome(1.0, 0.0, 0.0))
        cfg = TrustConfig(variant="frequency")
        assert trust_score(p, cfg) == pytest.approx(0.5 * 0.0 + 0.3 * 0.0 + 0.2 * 0.0)
        assert trust_score(p) == pytest.approx(0.5)


class TestRanking:
    def test_single(self):
        p = KOLProfile("a", trust_score=0.3)
        assert rank_kols([p]) == [p]

    def test_order(self):
        lo, hi = KOLProfile("a", trust_score=0.1), KOLProfile("b", trust_score=0.9)
        assert rank_kols([lo, hi]) == [hi, lo]

    def test_ties_by_id(self):
        ps = [KOLProfile(k, trust_score=0.5) for k in ("c", "a", "b")]
        assert [p.kol_id for p in rank_kols(ps)] == ["a", "b", "c"]

    def test_weight_scaling_preserves_ranking(self):
        rng = np.random.default_rng(0)
        ps = [KOLProfile(f"k{i}", attn_exploit=rng.random(), content_quality=rng.random(),
                         signal_salience=rng.random()) for i in range(20)]
        base = TrustConfig(0.5, 0.3, 0.2)
        scaled = TrustConfig(1.5, 0.9, 0.6).normalized()
        order = lambda cfg: [p.kol_id for p in rank_kols(  # noqa: E731
            [KOLProfile(p.kol_id, trust_score=trust_score(p, cfg)) for p in ps])]
        assert order(base) == order(scaled)


def test_store():
    s = TrustStore()
    s.record("a", HIT)
    s.record("b", CLEAN)
    assert s.trust("missing") is None
    assert [p.kol_id for p in s.ranked()] == ["b", "a"]


def test_weights_must_sum_to_one():
    with pytest.raises(ConfigError):
        TrustConfig(0.5, 0.5, 0.5).validate()


outcomes = st.builds(Outcome, st.floats(0, 1), st.floats(0, 2), st.floats(0, 50))


@settings(max_examples=300, deadline=None)
@given(st.lists(outcomes, min_size=1, max_size=40))
def test_bounded_components(seq):
    p = KOLProfile("k")
    for o in seq:
        p = record_outcome(p, o, TrustConfig(buffer_capacity=16))
        for v in (p.trust_score, p.attn_exploit, p.content_quality, p.signal_salience):
            assert 0.0 <= v <= 1.0
        assert p.threads_flagged <= p.threads_total


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_exploit_monotone(e1, e2, q, s):
    lo, hi = sorted((e1, e2))
    a = trust_score(KOLProfile("k", attn_exploit=lo, content_quality=q, signal_salience=s))
    b = trust_score(KOLProfile("k", attn_exploit=hi, content_quality=q, signal_salience=s))
    assert b <= a
