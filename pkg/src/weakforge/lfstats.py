"""Per-LF diagnostics: coverage, overlap, conflict, and accuracy.

Definitions (fractions of the n points unless noted):

- coverage: points where the LF votes (non-abstain)
- overlap:  points where the LF votes and at least one other LF also votes
- conflict: points where the LF votes and some other LF votes differently
- accuracy: correct votes over the LF's *covered* points (absent when the
  LF never votes, or when no gold labels are supplied)

Accuracy uses the covered-set denominator; dividing by n instead would
shrink low-coverage LFs toward zero, which is noted in rendered reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from weakforge.corpus import ClassSpace
from weakforge.votes import ABSTAIN, VoteMatrix


@dataclass(frozen=True)
class LFRecord:
    name: str
    coverage: float
    overlap: float
    conflict: float
    accuracy: float | None


@dataclass(frozen=True)
class LFStatistics:
    n: int
    m: int
    per_lf: tuple[LFRecord, ...]
    avg_coverage: float
    avg_overlap: float
    avg_conflict: float
    avg_accuracy: float | None

    def __post_init__(self) -> None:
        for rec in self.per_lf:
            if not rec.conflict <= rec.overlap + 1e-12 or not rec.overlap <= rec.coverage + 1e-12:
                raise ValueError(
                    f"LF {rec.name!r}: conflict <= overlap <= coverage violated "
                    f"({rec.conflict}, {rec.overlap}, {rec.coverage})"
                )


def compute_stats(
    matrix: VoteMatrix,
    gold: Sequence[int] | None = None,
    classes: ClassSpace | None = None,
) -> LFStatistics:
    """Coverage/overlap/conflict (and accuracy when gold labels are given)."""
    votes = matrix.votes
    n, m = votes.shape
    if n == 0:
        raise ValueError("cannot compute LF statistics on an empty split")
    if classes is not None:
        matrix.validate_for(classes.k)
    gold_arr: np.ndarray | None = None
    if gold is not None:
        gold_arr = np.asarray(list(gold), dtype=np.int64)
        if len(gold_arr) != n:
            raise ValueError(f"gold has {len(gold_arr)} labels for {n} points")

    voted = votes != ABSTAIN
    votes_per_point = voted.sum(axis=1)
    records = []
    for a in range(m):
        col = votes[:, a]
        col_voted = voted[:, a]
        others_voted = (votes_per_point - col_voted.astype(np.int64)) > 0
        overlap_mask = col_voted & others_voted
        # Conflict: some other LF voted a different non-abstain label.
        disagree = voted & (votes != col[:, None])
        disagree[:, a] = False
        conflict_mask = col_voted & disagree.any(axis=1)
        coverage = int(col_voted.sum()) / n
        overlap = int(overlap_mask.sum()) / n
        conflict = int(conflict_mask.sum()) / n
        accuracy = None
        if gold_arr is not None and col_voted.any():
            accuracy = int((col[col_voted] == gold_arr[col_voted]).sum()) / int(col_voted.sum())
        records.append(
            LFRecord(
                name=matrix.lf_names[a],
                coverage=coverage,
                overlap=overlap,
                conflict=conflict,
                accuracy=accuracy,
            )
        )

    accuracies = [r.accuracy for r in records if r.accuracy is not None]
    return LFStatistics(
        n=n,
        m=m,
        per_lf=tuple(records),
        avg_coverage=sum(r.coverage for r in records) / m if m else 0.0,
        avg_overlap=sum(r.overlap for r in records) / m if m else 0.0,
        avg_conflict=sum(r.conflict for r in records) / m if m else 0.0,
        avg_accuracy=sum(accuracies) / len(accuracies) if accuracies else None,
    )


def stats_to_dict(stats: LFStatistics) -> dict:
    return {
        "n": stats.n,
        "m": stats.m,
        "per_lf": [
            {
                "name": r.name,
                "coverage": r.coverage,
                "overlap": r.overlap,
                "conflict": r.conflict,
                "accuracy": r.accuracy,
            }
            for r in stats.per_lf
        ],
        "averages": {
            "coverage": stats.avg_coverage,
            "overlap": stats.avg_overlap,
            "conflict": stats.avg_conflict,
            "accuracy": stats.avg_accuracy,
        },
    }


def stats_from_dict(doc: dict) -> LFStatistics:
    return LFStatistics(
        n=int(doc["n"]),
        m=int(doc["m"]),
        per_lf=tuple(
            LFRecord(
                name=r["name"],
                coverage=r["coverage"],
                overlap=r["overlap"],
                conflict=r["conflict"],
                accuracy=r.get("accuracy"),
            )
            for r in doc["per_lf"]
        ),
        avg_coverage=doc["averages"]["coverage"],
        avg_overlap=doc["averages"]["overlap"],
        avg_conflict=doc["averages"]["conflict"],
        avg_accuracy=doc["averages"]["accuracy"],
    )


def _fmt(value: float | None) -> str:
    return f"{value:.3f}" if value is not None else "  -  "


def render_stats(stats: LFStatistics, per_lf: bool = True) -> str:
    """Text table in the column order #LFs, Avg.Coverage/Overlap/Conflict/Accuracy."""
    lines = [
        "#LFs  Avg.Coverage  Avg.Overlap  Avg.Conflict  Avg.Accuracy",
        f"{stats.m:<4d}  {stats.avg_coverage:>12.3f}  {stats.avg_overlap:>11.3f}  "
        f"{stats.avg_conflict:>12.3f}  {_fmt(stats.avg_accuracy):>12}",
    ]
    if per_lf and stats.per_lf:
        width = max(len(r.name) for r in stats.per_lf)
        lines.append("")
        lines.append(f"{'LF':<{width}}  coverage  overlap  conflict  accuracy")
        for r in stats.per_lf:
            lines.append(
                f"{r.name:<{width}}  {r.coverage:>8.3f}  {r.overlap:>7.3f}  "
                f"{r.conflict:>8.3f}  {_fmt(r.accuracy):>8}"
            )
    lines.append("")
    lines.append("accuracy denominator: covered points per LF (not n)")
    return "\n".join(lines)
