"""Experiment configuration: one JSON document with a section per module.

Keys mirror the dataclass fields. ``--set section.field=value`` overrides are
parsed as JSON when possible, else taken as strings. The config hash is the
SHA-256 of the canonical JSON of the fully resolved config.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .discourse import GenConfig
from .errors import ConfigError
from .grpo import TrainConfig
from .market import MarketConfig
from .reward import RewardConfig
from .trust import TrustConfig


@dataclass(frozen=True)
class EvalConfig:
    heldout_episodes: int = 2000
    heldout_seed_offset: int = 1000
    ser_posts: int = 1000
    threshold: float = 0.5
    causal_runs: int = 100
    causal_buckets: int = 2000
    causal_pool: int = 3000
    arrival_prob: float = 1.0
    delay_buckets: int = 1
    aic_model: str = "restricted"
    detector: str = "policy"  # "policy", "rule_based" or "untrained"
    compare_seeds: int = 30
    warmup_steps: int = 20
    smooth_window: int = 10

    def validate(self, prefix: str = "eval") -> None:
        for name in ("heldout_episodes", "ser_posts", "causal_runs", "causal_buckets", "causal_pool",
                     "compare_seeds", "smooth_window"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{prefix}.{name}", "must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"{prefix}.threshold", "must lie in (0,1)")
        if not 0.0 < self.arrival_prob <= 1.0:
            raise ConfigError(f"{prefix}.arrival_prob", "must lie in (0,1]")
        if self.delay_buckets < 0:
            raise ConfigError(f"{prefix}.delay_buckets", "must be >= 0")
        if self.aic_model not in ("restricted", "unrestricted", "var"):
            raise ConfigError(f"{prefix}.aic_model", "must be restricted, unrestricted or var")
        if self.detector not in ("policy", "rule_based", "untrained"):
            raise ConfigError(f"{prefix}.detector", "must be policy, rule_based or untrained")
        if self.warmup_steps < 0:
            raise ConfigError(f"{prefix}.warmup_steps", "must be >= 0")


SECTIONS = {
    "gen": GenConfig,
    "market": MarketConfig,
    "reward": RewardConfig,
    "train": TrainConfig,
    "trust": TrustConfig,
    "eval": EvalConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    gen: GenConfig = field(default_factory=GenConfig)
    market: MarketConfig = field(default_factory=MarketConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    trust: TrustConfig = field(default_factory=TrustConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str = "out"

    def validate(self) -> None:
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must be an integer in [0, 2^64)")
        for name in SECTIONS:
            getattr(self, name).validate(name)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def canonical_json(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        return json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=False)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:16]


def _plain(x: Any) -> Any:
    if isinstance(x, Enum):
        return x.value
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(prefix, "expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{prefix}.{sorted(unknown)[0]}", "unknown key")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(prefix, str(exc)) from exc


def config_from_dict(d: dict) -> ExperimentConfig:
    if "seed" not in d:
        raise ConfigError("seed", "required")
    unknown = set(d) - {"seed", "output_dir", *SECTIONS}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    kw = {name: _build(cls, d.get(name, {}), name) for name, cls in SECTIONS.items()}
    cfg = ExperimentConfig(seed=d["seed"], output_dir=d.get("output_dir", "out"), **kw)
    cfg.validate()
    return cfg


def apply_override(d: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like key.path=value")
    path, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.split(".")
    node = d
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(path, "cannot descend into a scalar")
    node[keys[-1]] = value


def load_config(path: str | Path | None, overrides: list[str] = ()) -> ExperimentConfig:
    d: dict = {}
    if path is not None:
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    for o in overrides:
        apply_override(d, o)
    return config_from_dict(d)
