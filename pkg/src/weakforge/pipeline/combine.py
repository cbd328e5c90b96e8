"""Combining human and synthesized pseudolabel coverage.

The union rule keeps the human-derived label wherever human LFs covered a
point and fills the remaining points from the synthesized set, so a
human-labeled point's label and posterior are never altered. The
alternative "refit" mode (one model over the concatenated LF sets) lives in
the run module because it needs the vote matrices, not just the labels.
"""

from __future__ import annotations

from typing import Sequence

from weakforge.pipeline.artifacts import PseudoEntry, PseudoLabeledSet


def combine_union(
    human: PseudoLabeledSet,
    synthesized: PseudoLabeledSet,
    all_ids: Sequence[str],
) -> PseudoLabeledSet:
    """Human-priority union over one split, ordered by ``all_ids``."""
    if human.n_split != len(all_ids) or synthesized.n_split != len(all_ids):
        raise ValueError(
            f"split size mismatch: human={human.n_split}, "
            f"synthesized={synthesized.n_split}, ids={len(all_ids)}"
        )
    id_set = set(all_ids)
    for source_name, source in (("human", human), ("synthesized", synthesized)):
        for e in source.entries:
            if e.doc_id not in id_set:
                raise ValueError(
                    f"{source_name} entry {e.doc_id!r} is not a document of this split"
                )
    by_human = human.by_id()
    by_synth = synthesized.by_id()
    entries: list[PseudoEntry] = []
    for doc_id in all_ids:
        if doc_id in by_human:
            entries.append(by_human[doc_id])
        elif doc_id in by_synth:
            entries.append(by_synth[doc_id])
    return PseudoLabeledSet(entries=tuple(entries), n_split=len(all_ids))
