import json

import numpy as np
import pytest

from shillsim import experiment as ex
from shillsim.cli import EXIT_CONFIG, EXIT_RUNTIME, OUTPUT_ENV, main
from shillsim.config import load_config

SMALL = {
    "seed": 11,
    "train": {"corpus_size": 150, "episodes": 256, "group_size": 32, "probe_episodes": 64},
    "eval": {"heldout_episodes": 120, "ser_posts": 60, "causal_runs": 2, "causal_buckets": 300,
             "causal_pool": 200, "compare_seeds": 2},
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(SMALL))
    return p


def run(cfg_path, out, *args):
    cmd, *rest = args
    return main([cmd, "--config", str(cfg_path), "--output-dir", str(out), *rest])


def test_gen_data_is_byte_identical(cfg_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(cfg_path, a, "gen-data") == 0
    assert run(cfg_path, b, "gen-data") == 0
    for name in (ex.EPISODES_FILE, ex.PRICES_FILE, ex.MANIFEST_FILE):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_full_pipeline(cfg_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert run(cfg_path, out, "gen-data") == 0
    assert run(cfg_path, out, "train") == 0
    assert run(cfg_path, out, "eval") == 0
    assert run(cfg_path, out, "eval", "--detector", "rule_based") == 0
    assert run(cfg_path, out, "causal") == 0
    assert run(cfg_path, out, "report") == 0
    report = (out / "report.md").read_text()
    assert "| Model | Precision | Recall | F1 | AUC-ROC | SER (Traditional) | SER (Stealth) |" in report
    assert "rule_based" in report and "Granger" in report
    d = json.loads((out / "eval_policy.json").read_text())
    assert d["config_hash"] == load_config(cfg_path).hash
    assert (out / "trust_policy.csv").read_text().startswith("# config_hash=")


def test_invalid_config_exits_2(cfg_path, tmp_path):
    assert run(cfg_path, tmp_path / "x", "gen-data", "--set", "train.lr_policy=-1") == EXIT_CONFIG
    assert run(cfg_path, tmp_path / "x", "gen-data", "--set", "nope=1") == EXIT_CONFIG


def test_hash_mismatch_exits_3(cfg_path, tmp_path):
    out = tmp_path / "run"
    assert run(cfg_path, out, "gen-data") == 0
    assert run(cfg_path, out, "train", "--set", "seed=12") == EXIT_RUNTIME


def test_tampered_corpus_exits_3(cfg_path, tmp_path):
    out = tmp_path / "run"
    assert run(cfg_path, out, "gen-data") == 0
    with open(out / ex.EPISODES_FILE, "a") as fh:
        fh.write("\n")
    assert run(cfg_path, out, "train") == EXIT_RUNTIME


def test_train_without_corpus_exits_3(cfg_path, tmp_path):
    assert run(cfg_path, tmp_path / "empty", "train") == EXIT_RUNTIME
    assert run(cfg_path, tmp_path / "gen", "train", "--generate") == 0


def test_report_without_inputs_exits_3(cfg_path, tmp_path):
    assert run(cfg_path, tmp_path / "empty", "report") == EXIT_RUNTIME


def test_describe_features(capsys):
    assert main(["describe-features"]) == 0
    plain = json.loads(capsys.readouterr().out)
    assert main(["describe-features", "--include-trust"]) == 0
    with_trust = json.loads(capsys.readouterr().out)
    assert len(with_trust) > len(plain)


def test_env_sets_output_dir(cfg_path, tmp_path, monkeypatch):
    out = tmp_path / "from_env"
    monkeypatch.setenv(OUTPUT_ENV, str(out))
    assert main(["gen-data", "--config", str(cfg_path)]) == 0
    assert (out / ex.MANIFEST_FILE).exists()


def test_zero_episodes_checkpoint_is_initialization(cfg_path, tmp_path):
    out = tmp_path / "run"
    assert run(cfg_path, out, "train", "--generate", "--set", "train.episodes=0") == 0
    cfg = load_config(cfg_path, ["train.episodes=0"])
    params, _, _ = ex.load_training(out, cfg)
    init = ex.untrained_detector(cfg, [t.episode for t in ex.generate_threads(cfg)]).params
    np.testing.assert_array_equal(params.theta, init.theta)


def test_compare_and_mixed_diagnostics(cfg_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert run(cfg_path, out, "compare") == 0
    assert "GRPO vs PPO" in capsys.readouterr().out
    files = sorted(str(p) for p in (out / "compare").glob("*.csv"))
    assert len(files) == 4
    assert run(cfg_path, out, "compare", "--diagnostics", *files) == 0
    bad = tmp_path / "ppo_seed99.csv"
    text = (out / "compare" / "ppo_seed11.csv").read_text()
    bad.write_text(text.replace("diagnostics_version=", "diagnostics_version=9", 1))
    assert run(cfg_path, out, "compare", "--diagnostics", *files, str(bad)) == EXIT_RUNTIME
