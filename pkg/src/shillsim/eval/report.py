"""Markdown rollup of evaluation, causal and comparison outputs."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from ..errors import SchemaMismatch
from .metrics import EvalReport

DETECTION_COLUMNS = ("Model", "Precision", "Recall", "F1", "AUC-ROC", "SER (Traditional)", "SER (Stealth)")
STABILITY_COLUMNS = ("Method", "Reward variance (%)", "Policy oscillation", "Convergence (episodes)")


def _fmt(x, digits: int = 3) -> str:
    if x is None:
        return "n/a"
    if isinstance(x, int):
        return str(x)
    return f"{x:.{digits}f}"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return lines


def detection_table(reports: Sequence[EvalReport]) -> list[str]:
    rows = [(r.detector, _fmt(r.precision), _fmt(r.recall), _fmt(r.f1), _fmt(r.auc_roc),
             _fmt(r.ser_traditional), _fmt(r.ser_stealth)) for r in reports]
    return _table(DETECTION_COLUMNS, rows)


def render_report(reports: Sequence[EvalReport], causal: Sequence[dict] = (), compare: dict | None = None) -> str:
    if not reports and not causal and not compare:
        raise SchemaMismatch("nothing to report")
    hashes = {r.config_hash for r in reports} | {c["config_hash"] for c in causal}
    if compare:
        hashes.add(compare["config_hash"])
    if len(hashes) > 1:
        raise SchemaMismatch(f"inputs come from {len(hashes)} different configs")
    out = [f"# Experiment report (config {hashes.pop()})", ""]
    if reports:
        out += ["## Detection", ""] + detection_table(reports) + [""]
        extra = [r for r in reports if r.convergence_episodes is not None]
        if extra:
            out += ["## Training", ""]
            out += _table(("Model", "Reward variance (%)", "Policy oscillation", "Convergence (episodes)",
                           "SES (episodes)"),
                          [(r.detector, _fmt(r.reward_variance_pct, 1), _fmt(r.mean_policy_oscillation, 4),
                            _fmt(r.convergence_episodes), _fmt(r.ses_episodes)) for r in extra])
            out.append("")
    if causal:
        out += ["## Granger causality", ""]
        out += _table(("Detector", "alpha", "beta", "Runs", "Reject @ 0.01", "Reject @ 0.05"),
                      [(c["detector"], _fmt(c["alpha"], 2), _fmt(c["beta"], 2), str(c["runs"]),
                        _fmt(c["rejection_rate_01"], 2), _fmt(c["rejection_rate_05"], 2)) for c in causal])
        out.append("")
    if compare:
        out += [f"## GRPO vs PPO ({compare['seeds']} seeds)", ""]
        out += _table(STABILITY_COLUMNS,
                      [(t["method"], _fmt(t["reward_variance_pct"], 1), _fmt(t["mean_policy_oscillation"], 4),
                        _fmt(t["convergence_episodes"], 0)) for t in compare["table"]])
        out += ["", f"GRPO lower variance on {compare['grpo_lower_variance']}/{compare['seeds']} seeds "
                    f"(sign test p = {compare['sign_test_p']:.2g}); convergence ratio "
                    f"{compare['convergence_ratio']:.2f}.", ""]
    return "\n".join(out)


def load_inputs(paths: Sequence[str | Path]) -> tuple[list[EvalReport], list[dict], dict | None]:
    """Sort JSON files into evaluation reports, causal summaries and a comparison."""
    reports, causal, compare = [], [], None
    for p in paths:
        d = json.loads(Path(p).read_text(encoding="utf-8"))
        if "rejection_rate_01" in d:
            causal.append(d)
        elif "sign_test_p" in d:
            compare = d
        elif "detector" in d and "f1" in d:
            reports.append(EvalReport(**d))
        else:
            raise SchemaMismatch(f"{p}: unrecognised report")
    return reports, causal, compare
