import numpy as np
import pytest

from shillsim.grpo import Algo, TrainConfig
from shillsim.policy import PolicyParams
from shillsim.reward import RewardConfig
from shillsim.train import (
    DIAGNOSTIC_FIELDS, Corpus, Normalizer, expected_reward, f1_score, read_diagnostics, train,
    write_diagnostics,
)


@pytest.fixture(scope="module")
def corpus(small_threads):
    return Corpus.from_episodes([t.episode for t in small_threads])


def test_corpus_layout(corpus, small_threads):
    assert corpus.n == len(small_threads)
    assert corpus.X.shape[0] == corpus.offsets[-1] == corpus.labels.size
    rows, seg = corpus.rows_of(np.array([2, 0]))
    n2, n0 = np.diff(corpus.offsets)[[2, 0]]
    assert rows.tolist() == list(range(corpus.offsets[2], corpus.offsets[3])) + list(range(n0))
    assert seg.tolist() == [0] * n2 + [1] * n0


def test_zero_episodes_returns_initialization(corpus):
    res = train(corpus, TrainConfig(episodes=0), RewardConfig(), seed=4)
    init = PolicyParams.init(corpus.X.shape[1], 16, np.random.default_rng(np.random.SeedSequence([4, 2])))
    assert np.array_equal(res.params.theta, init.theta)
    assert res.diagnostics == []


def test_training_is_deterministic(corpus):
    cfg = TrainConfig(episodes=320, lr_policy=0.05)
    a = train(corpus, cfg, RewardConfig(), seed=1, probe=corpus)
    b = train(corpus, cfg, RewardConfig(), seed=1, probe=corpus)
    assert np.array_equal(a.params.theta, b.params.theta)
    assert a.diagnostics == b.diagnostics


def test_ppo_and_grpo_share_schema(corpus):
    base = TrainConfig(episodes=128, group_size=32)
    g = train(corpus, base, RewardConfig(), seed=2)
    p = train(corpus, base.with_algo(Algo.PPO), RewardConfig(), seed=2)
    assert len(g.diagnostics) == len(p.diagnostics) == 4
    assert [set(r) for r in g.diagnostics] == [set(r) for r in p.diagnostics]
    assert [r["episodes"] for r in g.diagnostics] == [r["episodes"] for r in p.diagnostics]


def test_training_improves_probe_reward(corpus):
    res = train(corpus, TrainConfig(episodes=32 * 150, lr_policy=0.05), RewardConfig(), seed=0, probe=corpus)
    first, last = res.diagnostics[0]["probe_reward"], res.diagnostics[-1]["probe_reward"]
    assert last > first


def test_diagnostics_round_trip(tmp_path, corpus):
    res = train(corpus, TrainConfig(episodes=96), RewardConfig(), seed=0, probe=corpus)
    path = tmp_path / "d.csv"
    write_diagnostics(path, res.diagnostics, "abc123")
    header, rows = read_diagnostics(path)
    assert header == {"diagnostics_version": "1", "config_hash": "abc123"}
    assert list(rows[0]) == list(DIAGNOSTIC_FIELDS)
    assert rows == res.diagnostics


def test_normalizer_round_trip(rng):
    X = rng.normal(3.0, 2.0, size=(200, 4))
    X[:, 2] = 1.0
    n = Normalizer.fit(X)
    Z = n(X)
    assert np.allclose(Z[:, [0, 1, 3]].mean(axis=0), 0.0, atol=1e-12)
    assert np.all(Z[:, 2] == 0.0)
    back = Normalizer.from_dict(n.to_dict(), 4)
    assert np.array_equal(back(X), Z)


def test_expected_reward_bounds(corpus):
    norm = Normalizer.fit(corpus.X)
    r = expected_reward(PolicyParams.zeros(corpus.X.shape[1], 4), corpus, norm)
    full = float(np.mean(np.diff(corpus.offsets) * corpus.weight))
    assert r == pytest.approx(0.5 * full)


def test_f1_score():
    assert f1_score([1, 1, 0, 0], [1, 0, 1, 0]) == 0.5
    assert f1_score([0, 0], [1, 1]) == 0.0
