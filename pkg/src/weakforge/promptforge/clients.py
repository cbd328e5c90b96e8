"""Generation clients: an HTTP completion endpoint and a deterministic mock.

The mock replays canned completions from a fixture directory so the whole
pipeline runs offline and in CI. The HTTP client targets a plain completion
endpoint (POST JSON in, ``{"choices": [{"text": ...}]}`` out) with the auth
token read from the ``SCRIPTORIUM_API_TOKEN`` environment variable.
"""

from __future__ import annotations

import json
import os
import time
import urllib.error
import urllib.request
from pathlib import Path
from typing import Callable, Protocol

from weakforge.promptforge.build import GenerationParams

TOKEN_ENV_VAR = "SCRIPTORIUM_API_TOKEN"

_BACKOFF_S = (1.0, 2.0, 4.0)


class TransportError(RuntimeError):
    """The completion endpoint stayed unreachable through all retries."""


class GenerationClient(Protocol):
    calls: int

    def complete(self, prompt: str, params: GenerationParams) -> list[str]: ...


class MockCompletionClient:
    """Replays fixture files (sorted by name) as completions.

    ``calls`` counts transport round-trips, which the cache-idempotence
    contract relies on: a cache hit must leave it untouched.
    """

    def __init__(self, fixture_dir: str | Path) -> None:
        self.fixture_dir = Path(fixture_dir)
        if not self.fixture_dir.is_dir():
            raise ValueError(f"mock fixture directory {self.fixture_dir} does not exist")
        self.calls = 0

    def complete(self, prompt: str, params: GenerationParams) -> list[str]:
        self.calls += 1
        paths = sorted(
            p for p in self.fixture_dir.iterdir() if p.is_file() and not p.name.startswith(".")
        )
        if not paths:
            raise ValueError(f"no completion fixtures in {self.fixture_dir}")
        texts = [p.read_text(encoding="utf-8") for p in paths]
        return texts[: params.n_samples]


class HTTPCompletionClient:
    """Minimal completion-endpoint client with bounded retries.

    ``transport`` may be swapped for testing; it takes (url, body bytes,
    headers, timeout) and returns response bytes.
    """

    def __init__(
        self,
        endpoint: str,
        transport: Callable[[str, bytes, dict, float], bytes] | None = None,
        timeout_s: float = 30.0,
        retries: int = 3,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self.retries = retries
        self.calls = 0
        self._transport = transport or self._urllib_transport
        self._sleep = sleep

    @staticmethod
    def _urllib_transport(url: str, body: bytes, headers: dict, timeout: float) -> bytes:
        req = urllib.request.Request(url, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                return resp.read()
        except (urllib.error.URLError, OSError) as e:
            raise TransportError(str(e)) from e

    def complete(self, prompt: str, params: GenerationParams) -> list[str]:
        payload = json.dumps(
            {
                "model": params.model_name,
                "prompt": prompt,
                "max_tokens": params.max_tokens,
                "temperature": params.temperature,
                "n": params.n_samples,
            }
        ).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(TOKEN_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last_error: Exception | None = None
        for attempt in range(self.retries):
            self.calls += 1
            try:
                raw = self._transport(self.endpoint, payload, headers, self.timeout_s)
                break
            except TransportError as e:
                last_error = e
                if attempt < self.retries - 1:
                    self._sleep(_BACKOFF_S[min(attempt, len(_BACKOFF_S) - 1)])
        else:
            raise TransportError(
                f"completion endpoint failed after {self.retries} attempts: {last_error}"
            )
        try:
            doc = json.loads(raw.decode("utf-8"))
            return [str(choice["text"]) for choice in doc["choices"]]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise TransportError(f"malformed completion response: {e}") from e
