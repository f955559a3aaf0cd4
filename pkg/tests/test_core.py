import dataclasses

import pytest
from hypothesis import given, settings, strategies as st

from shillsim.core import (
    Comment, DiscourseEpisode, dumps_episode, episode_violation, loads_episode, read_episodes,
    validate_episode, write_episodes,
)
from shillsim.errors import EpisodeInvalid, LabelInconsistency, NonPositivePrice, UnorderedTimestamps

from conftest import make_episode


def test_well_formed_episode_validates():
    assert validate_episode(make_episode()) is None
    assert episode_violation(make_episode()) is None


def test_zero_price_rejected():
    with pytest.raises(NonPositivePrice):
        validate_episode(make_episode(price_before=0.0))


def test_label_inconsistency():
    e = make_episode(("a", "b"), [0, 1])
    bad = dataclasses.replace(e, thread_label=0)
    with pytest.raises(LabelInconsistency):
        validate_episode(bad)
    assert e.thread_label == 1


def test_unordered_timestamps():
    with pytest.raises(UnorderedTimestamps):
        validate_episode(make_episode(("a", "b"), timestamps=[9, 5]))


def test_comment_before_root_rejected():
    e = make_episode(("a",), timestamps=[5])
    e = dataclasses.replace(e, root=dataclasses.replace(e.root, timestamp=6))
    with pytest.raises(UnorderedTimestamps):
        validate_episode(e)


def test_template_requires_shiller_author():
    with pytest.raises(EpisodeInvalid) as exc:
        validate_episode(make_episode(template_id=3))
    assert exc.value.invariant == "template_author"


def test_generated_episodes_validate(small_threads):
    for t in small_threads:
        validate_episode(t.episode)


def test_jsonl_round_trip(tmp_path, small_threads):
    episodes = [t.episode for t in small_threads[:40]]
    path = tmp_path / "e.jsonl"
    assert write_episodes(path, episodes) == 40
    assert list(read_episodes(path)) == episodes


texts = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=40)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(texts, st.integers(0, 1), st.integers(0, 5)), max_size=6),
       st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_round_trip_property(rows, p0, p1):
    ts, out = 0, []
    for text, label, gap in rows:
        ts += gap
        out.append((text, label, ts))
    e = make_episode(tuple(r[0] for r in out), [r[1] for r in out], timestamps=[r[2] for r in out],
                     price_before=p0, price_after=p1)
    back = loads_episode(dumps_episode(e))
    assert back == e
    assert dumps_episode(back) == dumps_episode(e)


def test_thread_label_is_max_of_comment_labels():
    assert make_episode(("a", "b"), [0, 0]).thread_label == 0
    assert make_episode(("a", "b"), [1, 0]).thread_label == 1
    assert make_episode((), []).thread_label == 0
    assert isinstance(make_episode(("a",)).comments[0], Comment)
    assert isinstance(make_episode(), DiscourseEpisode)
