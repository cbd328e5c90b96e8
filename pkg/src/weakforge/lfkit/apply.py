"""Applying labeling functions to document splits to produce vote matrices.

Script-form LFs run batched: one runner process per LF per split, documents
streamed in order. Script failures never abort a run; the affected votes
degrade to ABSTAIN and are tallied per LF so broken LFs can be pruned.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from weakforge.corpus import ClassSpace, Document
from weakforge.lfkit.rules import RuleProgram
from weakforge.lfkit.scripting import (
    RunnerRegistry,
    ScriptSession,
    SessionError,
)
from weakforge.lfkit.types import LabelingFunction, ScriptHandle, check_unique_names
from weakforge.votes import ABSTAIN, VoteMatrix

_MAX_ERROR_SAMPLES = 5


@dataclass(frozen=True)
class ApplyOptions:
    timeout_s: float = 5.0
    max_restarts: int = 3
    max_workers: int = 1


@dataclass
class ApplyReport:
    """A vote matrix plus per-LF script-error accounting."""

    matrix: VoteMatrix
    error_tallies: dict[str, int] = field(default_factory=dict)
    error_samples: dict[str, list[str]] = field(default_factory=dict)
    timeout_s: float = 5.0

    @property
    def total_errors(self) -> int:
        return sum(self.error_tallies.values())


def _emit_rule_vote(program: RuleProgram, text: str, k: int, lf_name: str) -> int:
    vote = program.evaluate(text)
    if vote != ABSTAIN and not 0 <= vote < k:
        raise ValueError(f"rule LF {lf_name!r} emitted {vote}, out of range for k={k}")
    return vote


def _apply_script_column(
    lf: LabelingFunction,
    docs: Sequence[Document],
    k: int,
    registry: RunnerRegistry,
    options: ApplyOptions,
) -> tuple[list[int], int, list[str]]:
    handle = lf.body
    assert isinstance(handle, ScriptHandle)
    argv_prefix = registry.resolve(handle.runtime_id)  # fatal if unregistered
    votes: list[int] = []
    errors = 0
    samples: list[str] = []

    def note(msg: str) -> None:
        nonlocal errors
        errors += 1
        if len(samples) < _MAX_ERROR_SAMPLES:
            samples.append(msg)

    if not handle.path.exists():
        for _ in docs:
            note(f"script {handle.path} does not exist")
            votes.append(ABSTAIN)
        return votes, errors, samples

    session: ScriptSession | None = None
    restarts = 0
    try:
        for doc in docs:
            if session is None:
                if restarts > options.max_restarts:
                    note(f"runner gave up after {options.max_restarts} restarts")
                    votes.append(ABSTAIN)
                    continue
                try:
                    session = ScriptSession(
                        argv_prefix, handle.path, handle.entrypoint, k, options.timeout_s
                    )
                except SessionError as e:
                    restarts += 1
                    note(f"session start failed: {e}")
                    votes.append(ABSTAIN)
                    continue
            try:
                reply = session.label(doc.id, doc.text)
            except SessionError as e:
                session.close()
                session = None
                restarts += 1
                note(f"session died on doc {doc.id!r}: {e}")
                votes.append(ABSTAIN)
                continue
            if reply.error is not None:
                note(f"doc {doc.id!r}: {reply.error}")
            votes.append(reply.label)
    finally:
        if session is not None:
            session.close()
    return votes, errors, samples


def apply_lf(
    lf: LabelingFunction,
    doc: Document,
    classes: ClassSpace,
    registry: RunnerRegistry | None = None,
    options: ApplyOptions = ApplyOptions(),
) -> int:
    """Vote of one LF on one document (-1 = abstain).

    Rule programs evaluate in-process and are pure; script handles spin up a
    one-document runner session, so prefer :func:`apply_all` for whole splits.
    """
    if isinstance(lf.body, RuleProgram):
        return _emit_rule_vote(lf.body, doc.text, classes.k, lf.name)
    if registry is None:
        raise ValueError(f"LF {lf.name!r} is script-form; a runner registry is required")
    votes, _, _ = _apply_script_column(lf, [doc], classes.k, registry, options)
    return votes[0]


def apply_all(
    lfs: Sequence[LabelingFunction],
    docs: Sequence[Document],
    classes: ClassSpace,
    registry: RunnerRegistry | None = None,
    options: ApplyOptions = ApplyOptions(),
) -> ApplyReport:
    """Apply every LF to every document, column by column.

    Column ``a`` of the result equals ``apply_lf(lfs[a], doc)`` over the split
    in order. LF columns are independent; with ``options.max_workers > 1``
    they are evaluated concurrently with identical results.
    """
    if not lfs:
        raise ValueError("apply_all needs at least one labeling function")
    check_unique_names(list(lfs))
    k = classes.k

    def one_column(lf: LabelingFunction) -> tuple[list[int], int, list[str]]:
        if isinstance(lf.body, RuleProgram):
            return [_emit_rule_vote(lf.body, d.text, k, lf.name) for d in docs], 0, []
        if registry is None:
            raise ValueError(f"LF {lf.name!r} is script-form; a runner registry is required")
        return _apply_script_column(lf, docs, k, registry, options)

    if options.max_workers > 1 and len(lfs) > 1:
        with ThreadPoolExecutor(max_workers=options.max_workers) as pool:
            columns = list(pool.map(one_column, lfs))
    else:
        columns = [one_column(lf) for lf in lfs]

    votes = np.full((len(docs), len(lfs)), ABSTAIN, dtype=np.int64)
    tallies: dict[str, int] = {}
    samples: dict[str, list[str]] = {}
    for a, (col, errors, msgs) in enumerate(columns):
        votes[:, a] = col
        if errors:
            tallies[lfs[a].name] = errors
            samples[lfs[a].name] = msgs
    matrix = VoteMatrix(votes, tuple(lf.name for lf in lfs))
    matrix.validate_for(k)
    return ApplyReport(
        matrix=matrix,
        error_tallies=tallies,
        error_samples=samples,
        timeout_s=options.timeout_s,
    )
