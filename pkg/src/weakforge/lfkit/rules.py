"""The native rule DSL: keyword / regex / length / case-fraction predicates.

A rule program is an ordered list of (condition, vote) rules evaluated
first-match-wins, with a default vote (class index or -1 for abstain) when
no rule fires. Keyword matching is case-insensitive substring containment;
the document text is lowercased before matching, so rule authors should
write keywords in lowercase.

Schema (JSON):

    {"rules": [{"if": <condition>, "emit": <vote>}, ...], "default": <vote>}

Conditions are single-key objects:

    {"keyword_any": ["free", "win"]}
    {"regex": "\\\\bhttps?://"}
    {"length_cmp": {"op": "<", "threshold": 20}}
    {"fraction_upper_cmp": {"op": ">=", "threshold": 0.5}}
    {"and": [<condition>, ...]}   {"or": [<condition>, ...]}   {"not": <condition>}
"""

from __future__ import annotations

import functools
import json
import math
import re
from dataclasses import dataclass
from typing import Union

from weakforge.votes import ABSTAIN

_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


class RuleParseError(ValueError):
    """A rule-program document violates the DSL schema."""


@functools.lru_cache(maxsize=512)
def _compiled(pattern: str) -> re.Pattern:
    return re.compile(pattern)


@dataclass(frozen=True)
class KeywordAny:
    keywords: tuple[str, ...]

    def matches(self, text: str) -> bool:
        lowered = text.lower()
        return any(kw in lowered for kw in self.keywords)


@dataclass(frozen=True)
class Regex:
    pattern: str

    def matches(self, text: str) -> bool:
        return _compiled(self.pattern).search(text) is not None


@dataclass(frozen=True)
class LengthCmp:
    op: str
    threshold: float

    def matches(self, text: str) -> bool:
        return _OPS[self.op](len(text), self.threshold)


@dataclass(frozen=True)
class FractionUpperCmp:
    """Compares the uppercase fraction among alphabetic characters (0 if none)."""

    op: str
    threshold: float

    def matches(self, text: str) -> bool:
        alpha = [c for c in text if c.isalpha()]
        frac = sum(1 for c in alpha if c.isupper()) / len(alpha) if alpha else 0.0
        return _OPS[self.op](frac, self.threshold)


@dataclass(frozen=True)
class And:
    parts: tuple["Condition", ...]

    def matches(self, text: str) -> bool:
        return all(p.matches(text) for p in self.parts)


@dataclass(frozen=True)
class Or:
    parts: tuple["Condition", ...]

    def matches(self, text: str) -> bool:
        return any(p.matches(text) for p in self.parts)


@dataclass(frozen=True)
class Not:
    part: "Condition"

    def matches(self, text: str) -> bool:
        return not self.part.matches(text)


Condition = Union[KeywordAny, Regex, LengthCmp, FractionUpperCmp, And, Or, Not]


@dataclass(frozen=True)
class Rule:
    condition: Condition
    emit: int


@dataclass(frozen=True)
class RuleProgram:
    """First-match-wins rule list with a default vote."""

    rules: tuple[Rule, ...]
    default: int = ABSTAIN

    def __post_init__(self) -> None:
        object.__setattr__(self, "rules", tuple(self.rules))
        if not self.rules and self.default == ABSTAIN:
            raise RuleParseError("program needs at least one rule or a non-abstain default")

    def evaluate(self, text: str) -> int:
        for rule in self.rules:
            if rule.condition.matches(text):
                return rule.emit
        return self.default


def _parse_vote(raw: object, k: int, where: str) -> int:
    if not isinstance(raw, int) or isinstance(raw, bool):
        raise RuleParseError(f"{where}: vote must be an integer, got {raw!r}")
    if raw != ABSTAIN and not 0 <= raw < k:
        raise RuleParseError(f"{where}: vote {raw} out of range for k={k}")
    return raw


def _parse_cmp(raw: object, where: str) -> tuple[str, float]:
    if not isinstance(raw, dict) or set(raw) != {"op", "threshold"}:
        raise RuleParseError(f"{where}: expected {{'op', 'threshold'}}")
    op = raw["op"]
    if op not in _OPS:
        raise RuleParseError(f"{where}: unknown op {op!r} (use <, <=, >, >=)")
    threshold = raw["threshold"]
    if not isinstance(threshold, (int, float)) or not math.isfinite(threshold):
        raise RuleParseError(f"{where}: threshold must be finite, got {threshold!r}")
    return op, float(threshold)


def _parse_condition(raw: object, where: str) -> Condition:
    if not isinstance(raw, dict) or len(raw) != 1:
        raise RuleParseError(f"{where}: condition must be a single-key object")
    key, value = next(iter(raw.items()))
    if key == "keyword_any":
        if not isinstance(value, list) or not value or not all(isinstance(s, str) and s for s in value):
            raise RuleParseError(f"{where}: keyword_any needs a non-empty list of strings")
        return KeywordAny(tuple(s.lower() for s in value))
    if key == "regex":
        if not isinstance(value, str):
            raise RuleParseError(f"{where}: regex pattern must be a string")
        try:
            _compiled(value)
        except re.error as e:
            raise RuleParseError(f"{where}: regex compile: {e}") from e
        return Regex(value)
    if key == "length_cmp":
        return LengthCmp(*_parse_cmp(value, f"{where}.length_cmp"))
    if key == "fraction_upper_cmp":
        op, threshold = _parse_cmp(value, f"{where}.fraction_upper_cmp")
        if not 0.0 <= threshold <= 1.0:
            raise RuleParseError(f"{where}: fraction threshold must lie in [0, 1]")
        return FractionUpperCmp(op, threshold)
    if key in ("and", "or"):
        if not isinstance(value, list) or not value:
            raise RuleParseError(f"{where}: {key} needs a non-empty list of conditions")
        parts = tuple(_parse_condition(v, f"{where}.{key}[{i}]") for i, v in enumerate(value))
        return And(parts) if key == "and" else Or(parts)
    if key == "not":
        return Not(_parse_condition(value, f"{where}.not"))
    raise RuleParseError(f"{where}: unknown predicate {key!r}")


def parse_rule_program(document: dict | str, k: int) -> RuleProgram:
    """Parse and validate a rule-program document against a k-class space."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise RuleParseError(f"invalid JSON: {e.msg}") from e
    if not isinstance(document, dict):
        raise RuleParseError("rule program must be an object")
    unknown = set(document) - {"rules", "default", "name"}
    if unknown:
        raise RuleParseError(f"unknown fields: {sorted(unknown)}")
    raw_rules = document.get("rules", [])
    if not isinstance(raw_rules, list):
        raise RuleParseError("'rules' must be a list")
    rules = tuple(
        Rule(
            condition=_parse_condition(r.get("if") if isinstance(r, dict) else None, f"rules[{i}]"),
            emit=_parse_vote(r.get("emit") if isinstance(r, dict) else None, k, f"rules[{i}]"),
        )
        for i, r in enumerate(raw_rules)
    )
    default = _parse_vote(document.get("default", ABSTAIN), k, "default")
    return RuleProgram(rules=rules, default=default)


def _condition_to_dict(cond: Condition) -> dict:
    if isinstance(cond, KeywordAny):
        return {"keyword_any": list(cond.keywords)}
    if isinstance(cond, Regex):
        return {"regex": cond.pattern}
    if isinstance(cond, LengthCmp):
        return {"length_cmp": {"op": cond.op, "threshold": cond.threshold}}
    if isinstance(cond, FractionUpperCmp):
        return {"fraction_upper_cmp": {"op": cond.op, "threshold": cond.threshold}}
    if isinstance(cond, And):
        return {"and": [_condition_to_dict(p) for p in cond.parts]}
    if isinstance(cond, Or):
        return {"or": [_condition_to_dict(p) for p in cond.parts]}
    if isinstance(cond, Not):
        return {"not": _condition_to_dict(cond.part)}
    raise TypeError(f"unknown condition type {type(cond).__name__}")


def rule_program_to_dict(program: RuleProgram) -> dict:
    return {
        "rules": [{"if": _condition_to_dict(r.condition), "emit": r.emit} for r in program.rules],
        "default": program.default,
    }
