"""Turning completions into validated labeling functions, with a content cache.

Cache layout: ``<cache_dir>/<prompt_hash>.json`` holds one GenerationRecord.
The hash covers the rendered prompt *and* the generation parameters, so a
temperature change is a cache miss. Writes are atomic (temp file + rename);
a crashed run never leaves a truncated record. A cache hit returns the
stored record without touching the client, which makes re-labeling new data
with previously synthesized LFs free.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from weakforge.corpus import ClassSpace
from weakforge.lfkit.rules import RuleParseError, parse_rule_program, rule_program_to_dict
from weakforge.lfkit.scripting import RunnerRegistry, ScriptSession, SessionError
from weakforge.lfkit.types import LabelingFunction, ScriptHandle
from weakforge.promptforge.build import PromptBundle

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.S)


class AllCompletionsRejected(RuntimeError):
    """Every completion failed validation; the record was still persisted."""

    def __init__(self, record: "GenerationRecord") -> None:
        reasons = ", ".join(reason for _, reason in record.rejected) or "no completions"
        super().__init__(f"all completions rejected ({reasons})")
        self.record = record


@dataclass(frozen=True)
class AcceptedLF:
    name: str
    kind: str  # "rule_program" | "script"
    program: dict | None = None
    script_source: str | None = None
    entrypoint: str | None = None


@dataclass(frozen=True)
class GenerationRecord:
    prompt_hash: str
    strategy: str
    raw_completions: tuple[str, ...]
    accepted: tuple[AcceptedLF, ...]
    rejected: tuple[tuple[str, str], ...]
    timestamp: float
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.accepted) + len(self.rejected) != len(self.raw_completions):
            raise ValueError("accepted + rejected must account for every completion")


@dataclass(frozen=True)
class RecordSummary:
    prompt_hash: str
    strategy: str
    n_completions: int
    n_accepted: int
    n_rejected: int
    timestamp: float


def extract_code(completion: str, form: str) -> str:
    """Pull the code out of a completion.

    Takes the first fenced block when present, else the whole text. Rule
    programs are trimmed to the outermost braces; scripts drop trailing
    prose after their last ``return`` line.
    """
    match = _FENCE_RE.search(completion)
    text = match.group(1) if match else completion
    if form == "rule_program":
        start, end = text.find("{"), text.rfind("}")
        if start != -1 and end > start:
            text = text[start : end + 1]
        return text.strip()
    lines = text.splitlines()
    last_return = None
    for i, line in enumerate(lines):
        stripped = line.strip()
        if stripped == "return" or stripped.startswith("return "):
            last_return = i
    if last_return is not None:
        lines = lines[: last_return + 1]
    return "\n".join(lines).strip()


def _normalize_source(code: str) -> str:
    return " ".join(code.split())


def _dry_run_script(
    source: str, entrypoint: str, k: int, registry: RunnerRegistry, runtime_id: str
) -> str | None:
    """Handshake a throwaway runner session against the script; None if OK."""
    try:
        argv_prefix = registry.resolve(runtime_id)
    except Exception as e:  # noqa: BLE001 - reported as a rejection reason
        return str(e)
    with tempfile.TemporaryDirectory(prefix="weakforge-dryrun-") as tmp:
        script_path = Path(tmp) / "candidate.py"
        script_path.write_text(source, encoding="utf-8")
        try:
            session = ScriptSession(argv_prefix, script_path, entrypoint, k)
        except SessionError as e:
            return f"runner handshake failed: {e}"
        session.close()
    return None


def _validate_completion(
    completion: str,
    form: str,
    entrypoint: str,
    k: int,
    registry: RunnerRegistry | None,
    runtime_id: str,
    dry_run_scripts: bool,
) -> tuple[dict | str | None, str | None]:
    """Returns (payload, rejection_reason); exactly one is non-None."""
    code = extract_code(completion, form)
    if not code:
        return None, "empty completion"
    if form == "rule_program":
        try:
            doc = json.loads(code)
        except json.JSONDecodeError as e:
            return None, f"invalid JSON: {e.msg}"
        try:
            program = parse_rule_program(doc, k)
        except RuleParseError as e:
            reason = str(e)
            if "out of range" in reason:
                reason = "vote out of range"
            return None, reason
        return rule_program_to_dict(program), None
    if entrypoint not in code:
        return None, f"missing entrypoint {entrypoint!r}"
    if dry_run_scripts:
        if registry is None:
            return None, "script validation requires a runner registry"
        failure = _dry_run_script(code, entrypoint, k, registry, runtime_id)
        if failure:
            return None, failure
    return code, None


def synthesize(
    client,
    bundle: PromptBundle,
    classes: ClassSpace,
    cache_dir: str | Path,
    output_form: str = "rule_program",
    entrypoint: str | None = None,
    registry: RunnerRegistry | None = None,
    runtime_id: str = "default",
    dry_run_scripts: bool = True,
) -> GenerationRecord:
    """Generate, validate, and cache labeling functions for one prompt bundle.

    On a cache hit the stored record is returned without a client call, even
    if it holds no accepted LFs. A fresh generation whose completions are all
    rejected persists the record and then raises
    :class:`AllCompletionsRejected` so the failure is visible.
    """
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    record_path = cache / f"{bundle.prompt_hash}.json"
    if record_path.exists():
        return _load_record(record_path)

    if output_form == "script" and entrypoint is None:
        raise ValueError("script output needs an entrypoint name")
    completions = client.complete(bundle.text, bundle.params)

    accepted: list[AcceptedLF] = []
    rejected: list[tuple[str, str]] = []
    seen_sources: set[str] = set()
    for completion in completions:
        payload, reason = _validate_completion(
            completion, output_form, entrypoint or "", classes.k, registry, runtime_id, dry_run_scripts
        )
        if reason is not None:
            rejected.append((completion, reason))
            continue
        normalized = _normalize_source(
            json.dumps(payload, sort_keys=True) if isinstance(payload, dict) else payload
        )
        if normalized in seen_sources:
            rejected.append((completion, "duplicate of an accepted completion"))
            continue
        seen_sources.add(normalized)
        name = f"{bundle.strategy}_{bundle.prompt_hash[:8]}_{len(accepted):02d}"
        if output_form == "rule_program":
            accepted.append(AcceptedLF(name=name, kind="rule_program", program=payload))
        else:
            accepted.append(
                AcceptedLF(name=name, kind="script", script_source=payload, entrypoint=entrypoint)
            )

    record = GenerationRecord(
        prompt_hash=bundle.prompt_hash,
        strategy=bundle.strategy,
        raw_completions=tuple(completions),
        accepted=tuple(accepted),
        rejected=tuple(rejected),
        timestamp=time.time(),
        params={
            "temperature": bundle.params.temperature,
            "max_tokens": bundle.params.max_tokens,
            "n_samples": bundle.params.n_samples,
            "model_name": bundle.params.model_name,
            "output_form": output_form,
        },
    )
    _write_record(record, record_path)
    if not accepted:
        raise AllCompletionsRejected(record)
    return record


def record_to_lfs(
    record: GenerationRecord,
    classes: ClassSpace,
    scripts_dir: str | Path | None = None,
    runtime_id: str = "default",
) -> list[LabelingFunction]:
    """Materialize a record's accepted completions as executable LFs.

    Script sources are written under ``scripts_dir`` (required when the
    record holds script-form LFs).
    """
    lfs: list[LabelingFunction] = []
    for item in record.accepted:
        if item.kind == "rule_program":
            body = parse_rule_program(dict(item.program), classes.k)
        else:
            if scripts_dir is None:
                raise ValueError("script-form record needs a scripts_dir to materialize")
            d = Path(scripts_dir)
            d.mkdir(parents=True, exist_ok=True)
            script_path = d / f"{item.name}.py"
            script_path.write_text(item.script_source, encoding="utf-8")
            body = ScriptHandle(path=script_path, entrypoint=item.entrypoint, runtime_id=runtime_id)
        lfs.append(
            LabelingFunction(
                name=item.name,
                source="synthesized",
                body=body,
                strategy_tag=record.strategy,
                provenance=record.prompt_hash,
            )
        )
    return lfs


def _record_to_dict(record: GenerationRecord) -> dict:
    return {
        "prompt_hash": record.prompt_hash,
        "strategy": record.strategy,
        "params": record.params,
        "raw_completions": list(record.raw_completions),
        "accepted": [
            {
                "name": a.name,
                "kind": a.kind,
                "program": a.program,
                "script_source": a.script_source,
                "entrypoint": a.entrypoint,
            }
            for a in record.accepted
        ],
        "rejected": [[c, r] for c, r in record.rejected],
        "timestamp": record.timestamp,
    }


def _record_from_dict(doc: dict) -> GenerationRecord:
    return GenerationRecord(
        prompt_hash=doc["prompt_hash"],
        strategy=doc["strategy"],
        raw_completions=tuple(doc["raw_completions"]),
        accepted=tuple(
            AcceptedLF(
                name=a["name"],
                kind=a["kind"],
                program=a.get("program"),
                script_source=a.get("script_source"),
                entrypoint=a.get("entrypoint"),
            )
            for a in doc["accepted"]
        ),
        rejected=tuple((c, r) for c, r in doc["rejected"]),
        timestamp=float(doc["timestamp"]),
        params=doc.get("params", {}),
    )


def _write_record(record: GenerationRecord, path: Path) -> None:
    # Atomic publish: a concurrent reader sees either no record or a full one.
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".tmp-record-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(_record_to_dict(record), f, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def _load_record(path: Path) -> GenerationRecord:
    try:
        return _record_from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ValueError(f"{path}: unreadable generation record: {e}") from e


def list_cached(cache_dir: str | Path) -> tuple[list[RecordSummary], list[str]]:
    """Summaries of every readable record, oldest first, plus skip warnings."""
    d = Path(cache_dir)
    if not d.is_dir():
        raise ValueError(f"cache directory {d} does not exist")
    summaries: list[RecordSummary] = []
    warnings: list[str] = []
    for path in sorted(d.glob("*.json")):
        try:
            record = _load_record(path)
        except ValueError as e:
            warnings.append(str(e))
            continue
        summaries.append(
            RecordSummary(
                prompt_hash=record.prompt_hash,
                strategy=record.strategy,
                n_completions=len(record.raw_completions),
                n_accepted=len(record.accepted),
                n_rejected=len(record.rejected),
                timestamp=record.timestamp,
            )
        )
    summaries.sort(key=lambda s: (s.timestamp, s.prompt_hash))
    return summaries, warnings
