"""End-to-end orchestration: synthesize, apply, fit, combine, train, report."""

from weakforge.pipeline.artifacts import PseudoEntry, PseudoLabeledSet, from_posterior
from weakforge.pipeline.combine import combine_union
from weakforge.pipeline.report import RunReport, render_report_text, report_from_dict, report_to_dict
from weakforge.pipeline.run import RunConfig, StageError, run

__all__ = [
    "PseudoEntry",
    "PseudoLabeledSet",
    "RunConfig",
    "RunReport",
    "StageError",
    "combine_union",
    "from_posterior",
    "render_report_text",
    "report_from_dict",
    "report_to_dict",
    "run",
]
