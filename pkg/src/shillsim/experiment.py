"""Pipeline stages shared by the CLI and the acceptance suite.

Each stage is a pure function of an :class:`ExperimentConfig`; the file-writing
wrappers add the config hash to every artifact and refuse inputs stamped with
a different hash.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import binomtest

from .config import ExperimentConfig
from .core import DiscourseEpisode, KOLProfile, read_episodes, write_episodes
from .discourse import DiscourseGenerator, ThreadResult
from .errors import SchemaMismatch
from .features import SALIENCE_INDEX, encode_state
from .grpo import Algo
from .market import series_rows, write_price_csv
from .policy import PolicyParams, ValueParams, load_checkpoint, save_checkpoint
from .train import DIAGNOSTICS_VERSION, Corpus, Normalizer, TrainResult, read_diagnostics, train, write_diagnostics
from .trust import TRUST_FIELDS, TrustStore, outcome_from_thread
from .eval.causal import ThreadPool, causal_study, rejection_rate
from .eval.evaluate import PolicyDetector, RuleDetector, evaluate_detector, evasion_rate
from .eval.granger import GrangerResult
from .eval.metrics import EvalReport, StabilityMetrics, ses, stability_from_diagnostics

# Seed offsets for the independent data streams of one experiment.
PROBE_SEED_OFFSET = 500
CAUSAL_SEED_OFFSET = 2000

EPISODES_FILE = "episodes.jsonl"
PRICES_FILE = "prices.csv"
MANIFEST_FILE = "manifest.json"
CHECKPOINT_FILE = "checkpoint.json"
DIAGNOSTICS_FILE = "diagnostics.csv"
EVAL_FILE = "eval_report.json"
CAUSAL_FILE = "granger.json"
COMPARE_FILE = "compare.json"
TRUST_FILE = "trust.csv"


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def check_hash(found: str | None, cfg: ExperimentConfig, what: str) -> None:
    if found != cfg.hash:
        raise SchemaMismatch(f"{what} was produced under config {found}, current config is {cfg.hash}")


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------

def generator(cfg: ExperimentConfig, offset: int = 0) -> DiscourseGenerator:
    return DiscourseGenerator(cfg.gen, cfg.market, cfg.seed + offset)


def generate_threads(cfg: ExperimentConfig, n: int | None = None) -> list[ThreadResult]:
    n = cfg.train.corpus_size if n is None else n
    return list(generator(cfg).generate(n))


def heldout_episodes(cfg: ExperimentConfig) -> list[DiscourseEpisode]:
    g = generator(cfg, cfg.eval.heldout_seed_offset)
    return [r.episode for r in g.generate(cfg.eval.heldout_episodes)]


def probe_corpus(cfg: ExperimentConfig) -> Corpus:
    return Corpus.generate(generator(cfg, PROBE_SEED_OFFSET), cfg.train.probe_episodes)


def labeled_share(episodes: Sequence[DiscourseEpisode]) -> float:
    """Share of threads carrying the shill label."""
    return float(np.mean([e.thread_label for e in episodes])) if episodes else 0.0


def write_corpus(out: str | Path, cfg: ExperimentConfig, threads: Sequence[ThreadResult]) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    episodes = [t.episode for t in threads]
    write_episodes(out / EPISODES_FILE, episodes)
    rows = (row for k, t in enumerate(threads) for row in series_rows(t.series, episode=k))
    write_price_csv(out / PRICES_FILE, rows, with_episode=True)
    labels = [lab for e in episodes for lab in e.labels]
    manifest = {
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "n_episodes": len(episodes),
        "n_comments": len(labels),
        "labeled_share": labeled_share(episodes),
        "comment_positive_share": float(np.mean(labels)) if labels else 0.0,
        "files": {name: _sha256(out / name) for name in (EPISODES_FILE, PRICES_FILE)},
    }
    (out / MANIFEST_FILE).write_text(_dump(manifest), encoding="utf-8")
    return manifest


def read_corpus(out: str | Path, cfg: ExperimentConfig) -> list[DiscourseEpisode]:
    out = Path(out)
    manifest = json.loads((out / MANIFEST_FILE).read_text(encoding="utf-8"))
    check_hash(manifest.get("config_hash"), cfg, MANIFEST_FILE)
    if _sha256(out / EPISODES_FILE) != manifest["files"][EPISODES_FILE]:
        raise SchemaMismatch(f"{EPISODES_FILE} does not match its manifest digest")
    return list(read_episodes(out / EPISODES_FILE))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train_detector(cfg: ExperimentConfig, episodes: Sequence[DiscourseEpisode], *,
                   algo: Algo | str | None = None, seed: int | None = None,
                   probe: Corpus | None = None) -> TrainResult:
    tcfg = cfg.train.with_algo(algo or cfg.train.algo)
    return train(Corpus.from_episodes(episodes), tcfg, cfg.reward, cfg.seed if seed is None else seed,
                 probe=probe)


def untrained_detector(cfg: ExperimentConfig, episodes: Sequence[DiscourseEpisode]) -> TrainResult:
    """The policy initialisation a training run would start from."""
    return train(Corpus.from_episodes(episodes), replace(cfg.train, episodes=0), cfg.reward, cfg.seed)


def save_training(out: str | Path, cfg: ExperimentConfig, result: TrainResult) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    extra = {"config_hash": cfg.hash, "algo": cfg.train.algo.value, **result.norm.to_dict()}
    save_checkpoint(out / CHECKPOINT_FILE, result.params, result.value, seed=cfg.seed,
                    episode_count=result.episodes_seen, extra=extra)
    write_diagnostics(out / DIAGNOSTICS_FILE, result.diagnostics, cfg.hash)


def load_training(out: str | Path, cfg: ExperimentConfig) -> tuple[PolicyParams, ValueParams, Normalizer]:
    params, vp, meta = load_checkpoint(Path(out) / CHECKPOINT_FILE)
    check_hash(meta.get("config_hash"), cfg, CHECKPOINT_FILE)
    return params, vp, Normalizer.from_dict(meta, params.input_dim)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def build_detector(cfg: ExperimentConfig, kind: str, params: PolicyParams | None = None,
                   norm: Normalizer | None = None):
    if kind == "rule_based":
        return RuleDetector()
    if params is None or norm is None:
        raise ValueError(f"{kind} detector needs policy parameters and a normaliser")
    return PolicyDetector(params, norm, cfg.eval.threshold, name=kind)


def evaluate(cfg: ExperimentConfig, detector, heldout: Sequence[DiscourseEpisode] | None = None,
             diagnostics: Sequence[dict] | None = None) -> EvalReport:
    """Held-out detection scores, SER on both template styles, and training summaries."""
    heldout = heldout_episodes(cfg) if heldout is None else heldout
    s = evaluate_detector(detector, heldout)
    g = generator(cfg)
    report = EvalReport(
        detector=detector.name,
        precision=s.precision,
        recall=s.recall,
        f1=s.f1,
        auc_roc=s.auc_roc,
        ser_traditional=evasion_rate(detector, g.stealth_posts(cfg.eval.ser_posts, "Traditional")),
        ser_stealth=evasion_rate(detector, g.stealth_posts(cfg.eval.ser_posts, "Stealth")),
        n_comments=s.n_comments,
        config_hash=cfg.hash,
    )
    if diagnostics and len(diagnostics) >= 2:
        stab = stability_from_diagnostics(diagnostics, cfg.train.group_size, warmup=cfg.eval.warmup_steps,
                                          smooth_window=cfg.eval.smooth_window)
        report.reward_variance_pct = stab.reward_variance_pct
        report.mean_policy_oscillation = stab.mean_policy_oscillation
        report.convergence_episodes = stab.convergence_episodes
        f1_curve = [r["f1_eval"] for r in diagnostics if r["f1_eval"] == r["f1_eval"]]
        if f1_curve:
            step = ses(f1_curve)
            report.ses_episodes = None if step is None else (step + 1) * cfg.train.group_size * cfg.train.eval_every
    report.validate()
    return report


# ---------------------------------------------------------------------------
# Causal study
# ---------------------------------------------------------------------------

def causal_pool(cfg: ExperimentConfig, detector) -> ThreadPool:
    g = generator(cfg, CAUSAL_SEED_OFFSET)
    episodes = [r.episode for r in g.generate(cfg.eval.causal_pool)]
    return ThreadPool.from_episodes(episodes, detector=detector.predict)


def run_causal(cfg: ExperimentConfig, detector, pool: ThreadPool | None = None) -> list[GrangerResult]:
    pool = causal_pool(cfg, detector) if pool is None else pool
    e = cfg.eval
    return causal_study(pool, e.causal_buckets, cfg.market, cfg.seed, e.causal_runs, e.aic_model,
                        e.arrival_prob, e.delay_buckets)


def causal_summary(cfg: ExperimentConfig, results: Sequence[GrangerResult], detector_name: str) -> dict:
    return {
        "config_hash": cfg.hash,
        "detector": detector_name,
        "alpha": cfg.market.alpha,
        "beta": cfg.market.beta,
        "runs": len(results),
        "rejection_rate_01": rejection_rate(results, 0.01),
        "rejection_rate_05": rejection_rate(results, 0.05),
        "results": [r.to_dict() for r in results],
    }


# ---------------------------------------------------------------------------
# GRPO vs PPO
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeedComparison:
    seed: int
    grpo: StabilityMetrics
    ppo: StabilityMetrics


def stability_run(cfg: ExperimentConfig, seed: int, algo: Algo | str) -> list[dict]:
    """Train one algorithm on the environment of ``seed`` and return its diagnostics."""
    env = replace(cfg, seed=seed)
    corpus = Corpus.from_episodes([t.episode for t in generate_threads(env)])
    return train(corpus, cfg.train.with_algo(algo), cfg.reward, seed).diagnostics


def summarize(cfg: ExperimentConfig, rows: Sequence[dict]) -> StabilityMetrics:
    return stability_from_diagnostics(rows, cfg.train.group_size, warmup=cfg.eval.warmup_steps,
                                      smooth_window=cfg.eval.smooth_window)


def compare_algorithms(cfg: ExperimentConfig, seeds: Sequence[int] | None = None,
                       out: str | Path | None = None) -> list[SeedComparison]:
    """GRPO (the configured variant) against PPO on shared environments and seeds."""
    grpo_algo = cfg.train.algo if cfg.train.algo is not Algo.PPO else Algo.GRPO_NORMALIZED
    seeds = range(cfg.seed, cfg.seed + cfg.eval.compare_seeds) if seeds is None else seeds
    rows = []
    for s in seeds:
        runs = {}
        for name, algo in (("grpo", grpo_algo), ("ppo", Algo.PPO)):
            diag = stability_run(cfg, s, algo)
            if out is not None:
                Path(out).mkdir(parents=True, exist_ok=True)
                write_diagnostics(Path(out) / f"{name}_seed{s}.csv", diag, cfg.hash)
            runs[name] = summarize(cfg, diag)
        rows.append(SeedComparison(int(s), runs["grpo"], runs["ppo"]))
    return rows


def load_compare_diagnostics(paths: Sequence[str | Path]) -> dict[str, list[list[dict]]]:
    """Group diagnostics CSVs by algorithm prefix, refusing mixed schema versions or configs."""
    if not paths:
        raise SchemaMismatch("no diagnostics files")
    groups: dict[str, list[list[dict]]] = {}
    hashes = set()
    for p in sorted(paths, key=str):
        header, rows = read_diagnostics(p)
        if header.get("diagnostics_version") != str(DIAGNOSTICS_VERSION):
            raise SchemaMismatch(f"{p}: diagnostics version {header.get('diagnostics_version')}, "
                                 f"expected {DIAGNOSTICS_VERSION}")
        hashes.add(header.get("config_hash"))
        groups.setdefault(Path(p).name.split("_")[0], []).append(rows)
    if len(hashes) > 1:
        raise SchemaMismatch(f"diagnostics from {len(hashes)} different configs")
    return groups


def comparison_summary(cfg: ExperimentConfig, rows: Sequence[SeedComparison]) -> dict:
    """Per-seed table plus the sign test on reward variance and the convergence ratio."""
    if not rows:
        raise SchemaMismatch("no seeds to compare")
    wins = sum(r.grpo.reward_variance_pct < r.ppo.reward_variance_pct for r in rows)
    sign_p = binomtest(wins, len(rows), 0.5, alternative="greater").pvalue
    mean = lambda xs: float(np.mean(xs))  # noqa: E731
    conv_g = mean([r.grpo.convergence_episodes for r in rows])
    conv_p = mean([r.ppo.convergence_episodes for r in rows])
    return {
        "config_hash": cfg.hash,
        "seeds": len(rows),
        "grpo_lower_variance": wins,
        "sign_test_p": float(sign_p),
        "convergence_ratio": conv_g / conv_p,
        "table": [
            {"method": name,
             "reward_variance_pct": mean([getattr(r, key).reward_variance_pct for r in rows]),
             "mean_policy_oscillation": mean([getattr(r, key).mean_policy_oscillation for r in rows]),
             "convergence_episodes": mean([getattr(r, key).convergence_episodes for r in rows])}
            for name, key in (("GRPO", "grpo"), ("PPO", "ppo"))
        ],
        "per_seed": [
            {"seed": r.seed,
             "grpo": [r.grpo.reward_variance_pct, r.grpo.mean_policy_oscillation, r.grpo.convergence_episodes],
             "ppo": [r.ppo.reward_variance_pct, r.ppo.mean_policy_oscillation, r.ppo.convergence_episodes]}
            for r in rows
        ],
    }


# ---------------------------------------------------------------------------
# Reputation
# ---------------------------------------------------------------------------

def trust_table(cfg: ExperimentConfig, detector, episodes: Sequence[DiscourseEpisode]) -> list[KOLProfile]:
    """Feed each thread's detection outcome into its author's reputation buffer, in corpus order."""
    store = TrustStore(cfg.trust)
    for e in episodes:
        flags = detector.predict(e) if e.comments else np.zeros(0)
        sal = encode_state(e).rows[:, SALIENCE_INDEX] if e.comments else np.zeros(0)
        store.record(e.root.author_id, outcome_from_thread(flags, e.price_before, e.price_after, sal))
    return store.ranked()


def write_trust(path: str | Path, cfg: ExperimentConfig, profiles: Sequence[KOLProfile]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg.hash}\n")
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUST_FIELDS)
        for p in profiles:
            w.writerow([p.kol_id, p.threads_total] + [repr(float(getattr(p, f))) for f in TRUST_FIELDS[2:]])
