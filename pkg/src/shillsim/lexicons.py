"""Lexicon tables and the compiled matchers built from them.

Phrases match case-insensitively on word boundaries. A table's phrases are
compiled into one alternation ordered longest first, so overlapping entries
("right now" / "now") are counted once.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

WORD_RE = re.compile(r"[a-z0-9']+(?:-[a-z0-9]+)*")


def load_asset(name: str) -> dict:
    return json.loads(resources.files("shillsim.assets").joinpath(name).read_text(encoding="utf-8"))


def load_json(path: str | Path | None, default_asset: str) -> dict:
    if path is None:
        return load_asset(default_asset)
    return json.loads(Path(path).read_text(encoding="utf-8"))


def phrase_regex(phrases) -> re.Pattern | None:
    items = sorted({p.lower() for p in phrases}, key=len, reverse=True)
    if not items:
        return None
    alt = "|".join(re.escape(p) for p in items)
    return re.compile(rf"(?<![\w$])(?:{alt})(?![\w])", re.IGNORECASE)


def count_matches(pattern: re.Pattern | None, text: str) -> int:
    if pattern is None or not text:
        return 0
    return sum(1 for _ in pattern.finditer(text))


def words(text: str) -> list[str]:
    return WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class Lexicon:
    traditional_keywords: tuple[str, ...]
    obfuscation: dict
    positive_words: frozenset
    negative_words: frozenset
    first_person_plural: frozenset
    tokens: tuple[str, ...]
    keyword_re: re.Pattern
    synonym_re: re.Pattern
    urgency_re: re.Pattern
    social_proof_re: re.Pattern
    attribution_re: re.Pattern
    exaggeration_re: re.Pattern
    token_re: re.Pattern

    @classmethod
    def from_dict(cls, d: dict) -> "Lexicon":
        missing = set(d["traditional_keywords"]) - set(d["obfuscation"])
        if missing:
            raise ValueError(f"traditional keywords without an obfuscation synonym: {sorted(missing)}")
        tokens = tuple(d["tokens"])
        token_alt = "|".join(re.escape(t) for t in sorted(tokens, key=len, reverse=True))
        return cls(
            traditional_keywords=tuple(d["traditional_keywords"]),
            obfuscation=dict(d["obfuscation"]),
            positive_words=frozenset(d["positive_words"]),
            negative_words=frozenset(d["negative_words"]),
            first_person_plural=frozenset(d["first_person_plural"]),
            tokens=tokens,
            keyword_re=phrase_regex(d["traditional_keywords"]),
            synonym_re=phrase_regex(d["obfuscation"].values()),
            urgency_re=phrase_regex(d["urgency_phrases"]),
            social_proof_re=phrase_regex(d["social_proof_phrases"]),
            attribution_re=phrase_regex(d["false_attribution_phrases"]),
            exaggeration_re=phrase_regex(d["exaggeration_lexemes"]),
            token_re=re.compile(rf"\$[A-Za-z][A-Za-z0-9]{{1,9}}\b|\b(?:{token_alt})\b"),
        )

    def obfuscate(self, text: str, rate: float, rng) -> str:
        """Replace each keyword occurrence with its synonym with probability ``rate``."""
        if rate <= 0.0:
            return text

        def sub(m: re.Match) -> str:
            if rate >= 1.0 or rng.random() < rate:
                syn = self.obfuscation[m.group(0).lower()]
                return syn[:1].upper() + syn[1:] if m.group(0)[:1].isupper() else syn
            return m.group(0)

        return self.keyword_re.sub(sub, text)


@lru_cache(maxsize=None)
def default_lexicon() -> Lexicon:
    return Lexicon.from_dict(load_asset("lexicons.json"))


@lru_cache(maxsize=None)
def default_pools() -> dict:
    return load_asset("pools.json")


def sentiment_score(text: str, lex: Lexicon | None = None) -> float:
    """(positive hits - negative hits) / max(1, total hits), clamped to [-1, 1]."""
    lex = lex or default_lexicon()
    pos = neg = 0
    for w in words(text):
        if w in lex.positive_words:
            pos += 1
        elif w in lex.negative_words:
            neg += 1
    s = (pos - neg) / max(1, pos + neg)
    return min(1.0, max(-1.0, s))
