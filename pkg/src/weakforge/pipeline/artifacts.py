"""Pseudolabeled training sets and their on-disk form.

A pseudolabeled set holds one entry per *covered* document (at least one
non-abstain vote): the hard pseudolabel, the full posterior row, and the
origin of the labeling (human or synthesized LFs). Files are line-delimited:
a header ``{"n": ..., "coverage": ...}`` followed by one entry per line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from weakforge.labelmodels import Posterior

_ROW_TOL = 1e-9

ORIGINS = ("human", "synthesized")


@dataclass(frozen=True)
class PseudoEntry:
    doc_id: str
    label: int
    posterior: tuple[float, ...]
    origin: str

    def __post_init__(self) -> None:
        if self.origin not in ORIGINS:
            raise ValueError(f"origin must be one of {ORIGINS}, got {self.origin!r}")
        if not math.isclose(sum(self.posterior), 1.0, abs_tol=_ROW_TOL):
            raise ValueError(f"posterior for {self.doc_id!r} sums to {sum(self.posterior)}")


@dataclass(frozen=True)
class PseudoLabeledSet:
    entries: tuple[PseudoEntry, ...]
    n_split: int

    def __post_init__(self) -> None:
        ids = [e.doc_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise ValueError(f"duplicate pseudolabel entry for id {dup!r}")
        if len(self.entries) > self.n_split:
            raise ValueError("more entries than points in the split")

    @property
    def coverage(self) -> float:
        return len(self.entries) / self.n_split if self.n_split else 0.0

    def by_id(self) -> dict[str, PseudoEntry]:
        return {e.doc_id: e for e in self.entries}


def from_posterior(
    posterior: Posterior, doc_ids: Sequence[str], origin: str
) -> PseudoLabeledSet:
    """Entries for every covered point, in split order."""
    if len(doc_ids) != posterior.n:
        raise ValueError(f"{len(doc_ids)} ids for {posterior.n} posterior rows")
    entries = tuple(
        PseudoEntry(
            doc_id=doc_ids[i],
            label=int(posterior.hard[i]),
            posterior=tuple(float(p) for p in posterior.probs[i]),
            origin=origin,
        )
        for i in range(posterior.n)
        if posterior.covered[i]
    )
    return PseudoLabeledSet(entries=entries, n_split=posterior.n)


def save_pseudolabels(pls: PseudoLabeledSet, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        f.write(json.dumps({"n": pls.n_split, "coverage": pls.coverage}) + "\n")
        for e in pls.entries:
            f.write(
                json.dumps(
                    {
                        "id": e.doc_id,
                        "label": e.label,
                        "posterior": list(e.posterior),
                        "origin": e.origin,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_pseudolabels(path: str | Path) -> PseudoLabeledSet:
    p = Path(path)
    with p.open("r", encoding="utf-8") as f:
        header_line = f.readline()
        if not header_line.strip():
            raise ValueError(f"{p}: missing pseudolabel header")
        header = json.loads(header_line)
        entries = []
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{p}:{lineno} malformed entry: {e.msg}") from e
            entries.append(
                PseudoEntry(
                    doc_id=str(raw["id"]),
                    label=int(raw["label"]),
                    posterior=tuple(float(x) for x in raw["posterior"]),
                    origin=str(raw["origin"]),
                )
            )
    return PseudoLabeledSet(entries=tuple(entries), n_split=int(header["n"]))
