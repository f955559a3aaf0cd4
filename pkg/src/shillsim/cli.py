"""Command-line runner: ``shillsim <command> --config cfg.json [--set key=value ...]``.

Artifacts go to the configured output directory (``--output-dir`` or the
``SHILLSIM_OUTPUT_DIR`` environment variable take precedence). Exit status is
0 on success, 2 for configuration errors and 3 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import experiment as ex
from .config import ExperimentConfig, load_config
from .errors import ConfigError, SchemaMismatch, ShillSimError
from .eval.report import load_inputs, render_report
from .features import feature_index_map
from .train import read_diagnostics

OUTPUT_ENV = "SHILLSIM_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.set or [])
    out = args.output_dir or os.environ.get(OUTPUT_ENV)
    return replace(cfg, output_dir=out) if out else cfg


def _out(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _training_episodes(cfg: ExperimentConfig, out: Path, generate: bool):
    if (out / ex.MANIFEST_FILE).exists():
        return ex.read_corpus(out, cfg)
    if not generate:
        raise FileNotFoundError(f"no corpus in {out}; run gen-data or pass --generate")
    return [t.episode for t in ex.generate_threads(cfg)]


def cmd_gen_data(args) -> int:
    cfg = resolve_config(args)
    manifest = ex.write_corpus(_out(cfg), cfg, ex.generate_threads(cfg))
    print(f"wrote {manifest['n_episodes']} episodes to {cfg.output_dir} "
          f"(labeled share {manifest['labeled_share']:.4f}, config {cfg.hash})")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = _out(cfg)
    episodes = _training_episodes(cfg, out, args.generate)
    result = ex.train_detector(cfg, episodes, probe=ex.probe_corpus(cfg))
    ex.save_training(out, cfg, result)
    last = result.diagnostics[-1] if result.diagnostics else None
    tail = f", final probe F1 {last['f1_eval']:.3f}" if last else ""
    print(f"trained {cfg.train.algo.value} for {result.episodes_seen} episodes{tail}")
    return EXIT_OK


def _detector(cfg: ExperimentConfig, out: Path, kind: str, generate: bool):
    """Detector plus the training diagnostics that belong to it."""
    if kind == "rule_based":
        return ex.build_detector(cfg, kind), None
    if kind == "untrained":
        res = ex.untrained_detector(cfg, _training_episodes(cfg, out, generate))
        return ex.build_detector(cfg, kind, res.params, res.norm), None
    params, _, norm = ex.load_training(out, cfg)
    header, rows = read_diagnostics(out / ex.DIAGNOSTICS_FILE)
    ex.check_hash(header.get("config_hash"), cfg, ex.DIAGNOSTICS_FILE)
    return ex.build_detector(cfg, kind, params, norm), rows


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    out = _out(cfg)
    kind = args.detector or cfg.eval.detector
    detector, diagnostics = _detector(cfg, out, kind, args.generate)
    heldout = ex.heldout_episodes(cfg)
    report = ex.evaluate(cfg, detector, heldout, diagnostics)
    report.write(out / f"eval_{kind}.json")
    ex.write_trust(out / f"trust_{kind}.csv", cfg, ex.trust_table(cfg, detector, heldout))
    print(f"{kind}: P {report.precision:.3f} R {report.recall:.3f} F1 {report.f1:.3f} "
          f"SER stealth {report.ser_stealth:.3f} traditional {report.ser_traditional:.3f}")
    return EXIT_OK


def cmd_causal(args) -> int:
    cfg = resolve_config(args)
    out = _out(cfg)
    kind = args.detector or cfg.eval.detector
    detector, _ = _detector(cfg, out, kind, args.generate)
    results = ex.run_causal(cfg, detector)
    summary = ex.causal_summary(cfg, results, kind)
    (out / f"granger_{kind}.json").write_text(ex._dump(summary), encoding="utf-8")
    print(f"Granger ({kind}, beta={cfg.market.beta}): p<0.01 in {summary['rejection_rate_01']:.2f}, "
          f"p<0.05 in {summary['rejection_rate_05']:.2f} of {len(results)} runs")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = resolve_config(args)
    out = _out(cfg)
    if args.diagnostics:
        groups = ex.load_compare_diagnostics(args.diagnostics)
        if set(groups) != {"grpo", "ppo"} or len(groups["grpo"]) != len(groups["ppo"]):
            raise SchemaMismatch("need matching grpo_*.csv and ppo_*.csv files")
        rows = [ex.SeedComparison(k, ex.summarize(cfg, g), ex.summarize(cfg, p))
                for k, (g, p) in enumerate(zip(groups["grpo"], groups["ppo"]))]
    else:
        rows = ex.compare_algorithms(cfg, out=out / "compare")
    summary = ex.comparison_summary(cfg, rows)
    (out / ex.COMPARE_FILE).write_text(ex._dump(summary), encoding="utf-8")
    print(render_report([], compare=summary))
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = resolve_config(args)
    out = _out(cfg)
    paths = args.inputs
    if not paths:
        paths = sorted(str(p) for p in out.glob("*.json") if p.name.startswith(("eval_", "granger_", "compare")))
    reports, causal, compare = load_inputs(paths)
    text = render_report(reports, causal, compare)
    (out / "report.md").write_text(text, encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_describe_features(args) -> int:
    print(json.dumps(feature_index_map(args.include_trust), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="experiment config JSON")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key by dotted path; value parsed as JSON")
    common.add_argument("--output-dir", "-o", help="artifact directory")

    parser = argparse.ArgumentParser(prog="shillsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate the episode corpus")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train the detector policy")
    p.add_argument("--generate", action="store_true", help="generate the corpus if none is on disk")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "evaluate a detector on held-out episodes"),
                                 ("causal", cmd_causal, "Granger study of detector flags against price moves")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--detector", choices=("policy", "rule_based", "untrained"))
        p.add_argument("--generate", action="store_true", help="generate the corpus if none is on disk")
        p.set_defaults(func=func)

    p = sub.add_parser("compare", parents=[common], help="GRPO vs PPO stability over seeds")
    p.add_argument("--diagnostics", nargs="+", help="aggregate existing grpo_*/ppo_* diagnostics CSVs")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", parents=[common], help="Markdown rollup of JSON outputs")
    p.add_argument("inputs", nargs="*", help="eval/granger/compare JSON files")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("describe-features", help="print the feature index map")
    p.add_argument("--include-trust", action="store_true")
    p.set_defaults(func=cmd_describe_features)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ShillSimError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
