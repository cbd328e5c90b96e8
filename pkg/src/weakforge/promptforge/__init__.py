"""Prompt assembly, generation clients, and the completion cache."""

from weakforge.promptforge.build import (
    STRATEGIES,
    GenerationParams,
    PromptBundle,
    TaskSpec,
    build_prompt,
    entrypoint_from_signature,
    load_task_spec,
)
from weakforge.promptforge.clients import (
    GenerationClient,
    HTTPCompletionClient,
    MockCompletionClient,
    TransportError,
)
from weakforge.promptforge.synth import (
    AllCompletionsRejected,
    GenerationRecord,
    RecordSummary,
    extract_code,
    list_cached,
    record_to_lfs,
    synthesize,
)

__all__ = [
    "AllCompletionsRejected",
    "GenerationClient",
    "GenerationParams",
    "GenerationRecord",
    "HTTPCompletionClient",
    "MockCompletionClient",
    "PromptBundle",
    "RecordSummary",
    "STRATEGIES",
    "TaskSpec",
    "TransportError",
    "build_prompt",
    "entrypoint_from_signature",
    "extract_code",
    "list_cached",
    "load_task_spec",
    "record_to_lfs",
    "synthesize",
]
