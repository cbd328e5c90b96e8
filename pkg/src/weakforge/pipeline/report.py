"""Run reports: assembly, lossless JSON form, and text tables.

The JSON form contains only numbers recomputable from the persisted
intermediates, so two runs with identical inputs produce byte-identical
files; wall-clock timings go to a sidecar ``timings.json`` instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

# Paper-style column order for the model tables (Snorkel is out of scope).
_CANONICAL_KIND_ORDER = ("wmv", "mv", "ds", "fs")


@dataclass(frozen=True)
class RunReport:
    config_echo: dict
    metric: str
    lf_stats: dict = field(default_factory=dict)       # source -> stats dict
    label_models: dict = field(default_factory=dict)   # {"per_model", "average", "coverage"}
    end_models: dict = field(default_factory=dict)     # {"per_model", "average", "coverage"}
    error_tallies: dict = field(default_factory=dict)  # source -> {lf: count}
    combine_mode: str | None = None
    warnings: tuple[str, ...] = ()


def report_to_dict(report: RunReport) -> dict:
    return {
        "config": report.config_echo,
        "metric": report.metric,
        "lf_stats": report.lf_stats,
        "label_models": report.label_models,
        "end_models": report.end_models,
        "error_tallies": report.error_tallies,
        "combine_mode": report.combine_mode,
        "warnings": list(report.warnings),
    }


def report_from_dict(doc: dict) -> RunReport:
    return RunReport(
        config_echo=doc["config"],
        metric=doc["metric"],
        lf_stats=doc["lf_stats"],
        label_models=doc["label_models"],
        end_models=doc["end_models"],
        error_tallies=doc["error_tallies"],
        combine_mode=doc.get("combine_mode"),
        warnings=tuple(doc.get("warnings", ())),
    )


def render_report_json(report: RunReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def _ordered_kinds(per_model: dict) -> list[str]:
    ordered = [k for k in _CANONICAL_KIND_ORDER if k in per_model]
    return ordered + [k for k in sorted(per_model) if k not in ordered]


def _model_table(title: str, block: dict, metric: str) -> list[str]:
    per_model = block.get("per_model", {})
    if not per_model:
        return [title, "  (no models evaluated)"]
    kinds = _ordered_kinds(per_model)
    header = "  ".join(f"{k.upper():>8}" for k in kinds) + f"  {'Average':>8}  {'Coverage':>8}"
    values = "  ".join(f"{per_model[k][metric]:>8.3f}" for k in kinds)
    avg = block.get("average")
    cov = block.get("coverage")
    values += f"  {avg:>8.3f}" if avg is not None else f"  {'-':>8}"
    values += f"  {cov:>8.3f}" if cov is not None else f"  {'-':>8}"
    return [title, header, values]


def render_report_text(report: RunReport) -> str:
    from weakforge.lfstats import render_stats, stats_from_dict

    lines: list[str] = []
    lines.append(f"run: {report.config_echo.get('run_id', '?')}")
    lines.append(f"metric: {report.metric}")
    if report.combine_mode:
        lines.append(f"combine mode: {report.combine_mode}")
    for source in sorted(report.lf_stats):
        stats = stats_from_dict(report.lf_stats[source])
        lines.append("")
        lines.append(f"LF statistics [{source}] (n={stats.n})")
        if stats.m == 0:
            lines.append("  warning: empty LF set")
        else:
            lines.append(render_stats(stats))
    lines.append("")
    lines.extend(_model_table("Label models (test)", report.label_models, report.metric))
    lines.append("")
    lines.extend(_model_table("End models (test)", report.end_models, report.metric))
    total_errors = sum(sum(t.values()) for t in report.error_tallies.values())
    lines.append("")
    lines.append(f"script-LF errors: {total_errors}")
    for source, tallies in sorted(report.error_tallies.items()):
        for lf_name, count in sorted(tallies.items()):
            lines.append(f"  [{source}] {lf_name}: {count}")
    for warning in report.warnings:
        lines.append(f"warning: {warning}")
    return "\n".join(lines) + "\n"
