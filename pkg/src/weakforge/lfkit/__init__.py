"""Labeling functions: the native rule DSL and external script handles."""

from weakforge.lfkit.apply import ApplyOptions, ApplyReport, apply_all, apply_lf
from weakforge.lfkit.rules import (
    Rule,
    RuleParseError,
    RuleProgram,
    parse_rule_program,
    rule_program_to_dict,
)
from weakforge.lfkit.scripting import (
    RunnerRegistry,
    RunnerUnavailable,
    ScriptSession,
    SessionError,
)
from weakforge.lfkit.types import LabelingFunction, ScriptHandle, load_lf_file, save_lf_file

__all__ = [
    "ApplyOptions",
    "ApplyReport",
    "LabelingFunction",
    "Rule",
    "RuleParseError",
    "RuleProgram",
    "RunnerRegistry",
    "RunnerUnavailable",
    "ScriptHandle",
    "ScriptSession",
    "SessionError",
    "apply_all",
    "apply_lf",
    "load_lf_file",
    "parse_rule_program",
    "rule_program_to_dict",
    "save_lf_file",
]
