"""KOL reputation: a bounded buffer of detection outcomes summarised into a trust score.

Per KOL the buffer yields three components in [0, 1]:

* attention exploitation, the share of buffered threads that were flagged and
  also moved the price beyond the impact threshold;
* content quality, one minus the mean flagged fraction;
* signal salience, the mean thread keyword salience squashed into [0, 1].

The trust score is their weighted combination, with exploitation entering as
``1 - attn_exploit``. An alternate weighting replaces exploitation with the
ungated flag frequency.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import KOLProfile, Outcome
from .errors import ConfigError


@dataclass(frozen=True)
class TrustConfig:
    w_alpha: float = 0.5
    w_beta: float = 0.3
    w_gamma: float = 0.2
    buffer_capacity: int = 256
    impact_threshold: float = 0.05
    variant: str = "attention"  # "attention" or "frequency"
    salience_scale: float = 1.0

    def validate(self, prefix: str = "trust") -> None:
        ws = (self.w_alpha, self.w_beta, self.w_gamma)
        if any(w < 0 for w in ws):
            raise ConfigError(f"{prefix}.w_alpha", "weights must be non-negative")
        if abs(sum(ws) - 1.0) > 1e-12:
            raise ConfigError(f"{prefix}.w_alpha", f"weights sum to {sum(ws)}, expected 1")
        if self.buffer_capacity < 1:
            raise ConfigError(f"{prefix}.buffer_capacity", "must be >= 1")
        if self.impact_threshold < 0:
            raise ConfigError(f"{prefix}.impact_threshold", "must be >= 0")
        if self.variant not in ("attention", "frequency"):
            raise ConfigError(f"{prefix}.variant", "must be 'attention' or 'frequency'")
        if not self.salience_scale > 0:
            raise ConfigError(f"{prefix}.salience_scale", "must be > 0")

    def normalized(self) -> "TrustConfig":
        s = self.w_alpha + self.w_beta + self.w_gamma
        return replace(self, w_alpha=self.w_alpha / s, w_beta=self.w_beta / s, w_gamma=self.w_gamma / s)


def squash_salience(x: float, scale: float = 1.0) -> float:
    """Map a non-negative keyword count into [0, 1)."""
    return 1.0 - math.exp(-max(0.0, x) / scale)


def trust_score(profile: KOLProfile, cfg: TrustConfig = TrustConfig()) -> float:
    exploit = profile.attn_exploit
    if cfg.variant == "frequency":
        exploit = flag_frequency(profile)
    s = cfg.w_alpha * (1.0 - exploit) + cfg.w_beta * profile.content_quality + cfg.w_gamma * profile.signal_salience
    return min(1.0, max(0.0, s))


def flag_frequency(profile: KOLProfile) -> float:
    if not profile.buffer:
        return 0.0
    return sum(1 for o in profile.buffer if o.flagged_fraction > 0) / len(profile.buffer)


def record_outcome(profile: KOLProfile, outcome: Outcome, cfg: TrustConfig = TrustConfig()) -> KOLProfile:
    """Append one thread outcome (FIFO eviction) and recompute every component."""
    if not 0.0 <= outcome.flagged_fraction <= 1.0:
        raise ValueError("flagged_fraction outside [0,1]")
    buf = (profile.buffer + (outcome,))[-cfg.buffer_capacity:]
    n = len(buf)
    exploit = sum(1 for o in buf if o.flagged_fraction > 0 and o.relative_move > cfg.impact_threshold) / n
    quality = 1.0 - sum(o.flagged_fraction for o in buf) / n
    salience = sum(squash_salience(o.salience, cfg.salience_scale) for o in buf) / n
    flagged = 1 if outcome.flagged_fraction > 0 else 0
    updated = replace(
        profile,
        threads_total=profile.threads_total + 1,
        threads_flagged=profile.threads_flagged + flagged,
        attn_exploit=exploit,
        content_quality=min(1.0, max(0.0, quality)),
        signal_salience=min(1.0, max(0.0, salience)),
        buffer=buf,
    )
    return replace(updated, trust_score=trust_score(updated, cfg))


def rank_kols(profiles: Iterable[KOLProfile]) -> list[KOLProfile]:
    return sorted(profiles, key=lambda p: (-p.trust_score, p.kol_id))


class TrustStore:
    """Single-writer map of KOL profiles."""

    def __init__(self, cfg: TrustConfig = TrustConfig()):
        cfg.validate()
        self.cfg = cfg
        self.profiles: dict[str, KOLProfile] = {}

    def record(self, kol_id: str, outcome: Outcome) -> KOLProfile:
        p = self.profiles.get(kol_id, KOLProfile(kol_id))
        p = record_outcome(p, outcome, self.cfg)
        self.profiles[kol_id] = p
        return p

    def trust(self, kol_id: str) -> float | None:
        p = self.profiles.get(kol_id)
        return None if p is None else p.trust_score

    def ranked(self) -> list[KOLProfile]:
        return rank_kols(self.profiles.values())


TRUST_FIELDS = ("kol_id", "threads_total", "attn_exploit", "content_quality", "signal_salience", "trust_score")


def write_trust_csv(path: str | Path, profiles: Sequence[KOLProfile]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUST_FIELDS)
        for p in profiles:
            w.writerow([p.kol_id, p.threads_total] + [repr(float(getattr(p, f))) for f in TRUST_FIELDS[2:]])


def outcome_from_thread(flags: np.ndarray, p_before: float, p_after: float, salience: np.ndarray) -> Outcome:
    """Summarise one detected thread for the reputation buffer."""
    flags = np.asarray(flags)
    frac = float(flags.mean()) if flags.size else 0.0
    move = abs(p_after - p_before) / p_before
    sal = float(np.mean(salience)) if np.size(salience) else 0.0
    return Outcome(frac, move, sal)
