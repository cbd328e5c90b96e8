"""Prompt assembly for the five strategies.

Every prompt layers strategy-specific blocks over the same four-component
skeleton (language line, task description, function signature, labeling
instructions), in this order:

    language line
    mission statement        (mission_statement strategy)
    task description
    heuristics block         (human_heuristic strategy)
    exemplar block           (lf_exemplars / data_exemplars strategies)
    function signature
    labeling instructions

so the general components always appear verbatim in richer prompts.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

STRATEGIES = ("general", "mission_statement", "human_heuristic", "lf_exemplars", "data_exemplars")

OUTPUT_FORMS = ("script", "rule_program")

_TEMPERATURE_MAX = 0.2


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 512
    n_samples: int = 1
    model_name: str = "mock"

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be at least 1")


@dataclass(frozen=True)
class TaskSpec:
    """Everything a prompt can draw on for one dataset."""

    language_line: str
    task_description: str
    function_signature: str
    labeling_instructions: str
    mission: str | None = None
    heuristics: tuple[str, ...] | None = None
    lf_exemplars: tuple[str, ...] | None = None
    data_exemplars: tuple[tuple[str, str], ...] | None = None
    output_form: str = "rule_program"

    def __post_init__(self) -> None:
        for name in ("language_line", "task_description", "function_signature", "labeling_instructions"):
            if not getattr(self, name).strip():
                raise ValueError(f"general prompt component {name!r} must be non-empty")
        if self.output_form not in OUTPUT_FORMS:
            raise ValueError(f"output_form must be one of {OUTPUT_FORMS}")
        for name in ("heuristics", "lf_exemplars", "data_exemplars"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(tuple(v) if isinstance(v, list) else v for v in value))
                if not value:
                    raise ValueError(f"{name} must be non-empty when present")


@dataclass(frozen=True)
class PromptBundle:
    strategy: str
    text: str
    params: GenerationParams
    prompt_hash: str


def entrypoint_from_signature(signature: str) -> str:
    """Function name from a signature like ``def label_comment(comment):``."""
    match = re.search(r"(?:def\s+)?([A-Za-z_][A-Za-z0-9_]*)\s*\(", signature)
    if not match:
        raise ValueError(f"cannot find a function name in signature {signature!r}")
    return match.group(1)


def _hash_bundle(text: str, params: GenerationParams) -> str:
    payload = json.dumps(
        {
            "text": text,
            "params": {
                "temperature": params.temperature,
                "max_tokens": params.max_tokens,
                "n_samples": params.n_samples,
                "model_name": params.model_name,
            },
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_prompt(
    strategy: str,
    task: TaskSpec,
    params: GenerationParams = GenerationParams(),
    allow_any_temperature: bool = False,
) -> PromptBundle:
    """Render the prompt for one strategy. Pure: equal inputs, byte-equal text."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r} (choose from {STRATEGIES})")
    if not allow_any_temperature and not 0.0 <= params.temperature <= _TEMPERATURE_MAX:
        raise ValueError(
            f"temperature {params.temperature} outside [0, {_TEMPERATURE_MAX}]; "
            "pass allow_any_temperature to override"
        )
    blocks = [task.language_line]
    if strategy == "mission_statement":
        if not task.mission:
            raise ValueError("mission_statement strategy requires a mission text")
        blocks.append(task.mission)
    blocks.append(task.task_description)
    if strategy == "human_heuristic":
        if not task.heuristics:
            raise ValueError("human_heuristic strategy requires heuristics")
        blocks.append("Known heuristics:\n" + "\n".join(f"- {h}" for h in task.heuristics))
    if strategy == "lf_exemplars":
        if not task.lf_exemplars:
            raise ValueError("lf_exemplars strategy requires labeling-function exemplars")
        blocks.append(
            "Example labeling functions:\n" + "\n\n".join(task.lf_exemplars)
        )
    if strategy == "data_exemplars":
        if not task.data_exemplars:
            raise ValueError("data_exemplars strategy requires labeled data exemplars")
        blocks.append(
            "Labeled examples:\n"
            + "\n".join(f"{text!r} -> {label}" for text, label in task.data_exemplars)
        )
    blocks.append(task.function_signature)
    blocks.append(task.labeling_instructions)
    text = "\n\n".join(blocks)
    return PromptBundle(
        strategy=strategy,
        text=text,
        params=params,
        prompt_hash=_hash_bundle(text, params),
    )


def load_task_spec(path: str | Path) -> TaskSpec:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"{p}: invalid task spec: {e.msg}") from e
    data_exemplars = doc.get("data_exemplars")
    return TaskSpec(
        language_line=doc["language_line"],
        task_description=doc["task_description"],
        function_signature=doc["function_signature"],
        labeling_instructions=doc["labeling_instructions"],
        mission=doc.get("mission"),
        heuristics=tuple(doc["heuristics"]) if doc.get("heuristics") else None,
        lf_exemplars=tuple(doc["lf_exemplars"]) if doc.get("lf_exemplars") else None,
        data_exemplars=(
            tuple((str(t), str(l)) for t, l in data_exemplars) if data_exemplars else None
        ),
        output_form=doc.get("output_form", "rule_program"),
    )


def save_task_spec(task: TaskSpec, path: str | Path) -> None:
    doc = {
        "language_line": task.language_line,
        "task_description": task.task_description,
        "function_signature": task.function_signature,
        "labeling_instructions": task.labeling_instructions,
        "mission": task.mission,
        "heuristics": list(task.heuristics) if task.heuristics else None,
        "lf_exemplars": list(task.lf_exemplars) if task.lf_exemplars else None,
        "data_exemplars": [list(p) for p in task.data_exemplars] if task.data_exemplars else None,
        "output_form": task.output_form,
    }
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
