"""Labeling-function records: native rule programs or external script handles.

On disk each LF is one JSON document. Rule form carries the program inline
(fields ``name``, ``rules``, ``default``); script form points at a script
file next to the document (fields ``name``, ``script``, ``entrypoint``,
``runtime_id``). Synthesized LFs additionally carry the prompt hash that
produced them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from weakforge.lfkit.rules import RuleProgram, parse_rule_program, rule_program_to_dict

SOURCES = ("human", "synthesized")


@dataclass(frozen=True)
class ScriptHandle:
    """Pointer to a script-form LF executed through a registered runner."""

    path: Path
    entrypoint: str
    runtime_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "path", Path(self.path))
        if not self.entrypoint:
            raise ValueError("entrypoint must be non-empty")
        if not self.runtime_id:
            raise ValueError("runtime_id must be non-empty")


@dataclass(frozen=True)
class LabelingFunction:
    name: str
    source: str
    body: RuleProgram | ScriptHandle
    strategy_tag: str | None = None
    provenance: str | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("LF name must be non-empty")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.source == "synthesized" and not self.provenance:
            raise ValueError(f"synthesized LF {self.name!r} must carry a provenance hash")

    @property
    def is_script(self) -> bool:
        return isinstance(self.body, ScriptHandle)


def check_unique_names(lfs: list[LabelingFunction]) -> None:
    names = [lf.name for lf in lfs]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise ValueError(f"duplicate LF name {dup!r}")


def save_lf_file(lf: LabelingFunction, path: str | Path) -> None:
    """Write the LF document; script bodies reference their file by relative path."""
    p = Path(path)
    doc: dict = {
        "name": lf.name,
        "source": lf.source,
        "strategy_tag": lf.strategy_tag,
        "provenance": lf.provenance,
    }
    if isinstance(lf.body, RuleProgram):
        doc["kind"] = "rule_program"
        doc.update(rule_program_to_dict(lf.body))
    else:
        doc["kind"] = "script"
        script_path = lf.body.path
        try:
            script_ref = str(script_path.relative_to(p.parent))
        except ValueError:
            script_ref = str(script_path)
        doc["script"] = script_ref
        doc["entrypoint"] = lf.body.entrypoint
        doc["runtime_id"] = lf.body.runtime_id
    p.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_lf_file(path: str | Path, k: int) -> LabelingFunction:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"{p}: invalid LF document: {e.msg}") from e
    if not isinstance(doc, dict) or "name" not in doc:
        raise ValueError(f"{p}: LF document needs a 'name'")
    kind = doc.get("kind", "rule_program")
    body: RuleProgram | ScriptHandle
    if kind == "rule_program":
        body = parse_rule_program(
            {"rules": doc.get("rules", []), "default": doc.get("default", -1)}, k
        )
    elif kind == "script":
        script = Path(doc["script"])
        if not script.is_absolute():
            script = p.parent / script
        body = ScriptHandle(
            path=script,
            entrypoint=doc["entrypoint"],
            runtime_id=doc.get("runtime_id", "default"),
        )
    else:
        raise ValueError(f"{p}: unknown LF kind {kind!r}")
    return LabelingFunction(
        name=str(doc["name"]),
        source=doc.get("source", "human"),
        body=body,
        strategy_tag=doc.get("strategy_tag"),
        provenance=doc.get("provenance"),
    )


def load_lf_dir(dir_path: str | Path, k: int) -> list[LabelingFunction]:
    """Load every ``*.json`` LF document in a directory, sorted by filename."""
    d = Path(dir_path)
    if not d.is_dir():
        raise ValueError(f"LF directory {d} does not exist")
    lfs = [load_lf_file(p, k) for p in sorted(d.glob("*.json"))]
    if not lfs:
        raise ValueError(f"no LF documents in {d}")
    check_unique_names(lfs)
    return lfs
