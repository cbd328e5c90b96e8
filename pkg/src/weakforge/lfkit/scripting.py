"""Engine side of the script-runner wire protocol.

A runner is an external executable speaking line-delimited JSON over its
standard streams:

- engine sends ``{"hello": {"entrypoint": str, "k": int}}``; runner replies
  ``{"ready": true}`` or ``{"error": str}``.
- engine sends ``{"id": str, "text": str}`` per document; runner replies
  ``{"id": str, "label": int}`` (-1 = abstain), optionally with an ``"error"``
  field when the script raised on that document.
- runner exits 0 when the engine closes its input.

Runners are registered by ``runtime_id`` as argv prefixes; a session invokes
``<prefix> <script_path> <entrypoint>``. No sandboxing is attempted beyond
process isolation and the per-call timeout.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from dataclasses import dataclass
from pathlib import Path

from weakforge.votes import ABSTAIN


class RunnerUnavailable(RuntimeError):
    """No runner registered under the requested runtime_id (fatal)."""


class SessionError(RuntimeError):
    """The runner session died or broke protocol; the session must be discarded."""


class RunnerRegistry:
    """Maps runtime ids to the argv prefix that launches the runner."""

    def __init__(self) -> None:
        self._runners: dict[str, tuple[str, ...]] = {}

    def register(self, runtime_id: str, argv_prefix: list[str] | tuple[str, ...]) -> None:
        if not argv_prefix:
            raise ValueError("argv prefix must be non-empty")
        self._runners[runtime_id] = tuple(argv_prefix)

    def resolve(self, runtime_id: str) -> tuple[str, ...]:
        try:
            return self._runners[runtime_id]
        except KeyError:
            raise RunnerUnavailable(
                f"no runner registered for runtime_id {runtime_id!r}"
            ) from None

    def known(self) -> list[str]:
        return sorted(self._runners)


@dataclass
class LabelReply:
    label: int
    error: str | None = None


class _LineReader:
    """Background reader so response waits can time out without blocking."""

    _EOF = object()

    def __init__(self, stream) -> None:
        self._queue: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._pump, args=(stream,), daemon=True)
        self._thread.start()

    def _pump(self, stream) -> None:
        try:
            for line in stream:
                self._queue.put(line)
        except (ValueError, OSError):
            pass
        self._queue.put(self._EOF)

    def read(self, timeout: float) -> str:
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise SessionError(f"runner response timed out after {timeout:.1f}s") from None
        if item is self._EOF:
            raise SessionError("runner closed its output stream")
        return item


class ScriptSession:
    """One runner process serving one script for a stream of documents."""

    def __init__(
        self,
        argv_prefix: tuple[str, ...],
        script_path: str | Path,
        entrypoint: str,
        k: int,
        timeout_s: float = 5.0,
    ) -> None:
        self.k = k
        self.timeout_s = timeout_s
        argv = list(argv_prefix) + [str(script_path), entrypoint]
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise SessionError(f"failed to launch runner {argv[0]!r}: {e}") from e
        self._reader = _LineReader(self._proc.stdout)
        self._handshake(entrypoint)

    def _send(self, payload: dict) -> None:
        try:
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as e:
            raise SessionError(f"runner stdin closed: {e}") from e

    def _recv(self) -> dict:
        line = self._reader.read(self.timeout_s)
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as e:
            raise SessionError(f"runner sent invalid JSON: {line!r}") from e
        if not isinstance(reply, dict):
            raise SessionError(f"runner sent non-object reply: {line!r}")
        return reply

    def _handshake(self, entrypoint: str) -> None:
        try:
            self._send({"hello": {"entrypoint": entrypoint, "k": self.k}})
            reply = self._recv()
        except SessionError:
            self.close()
            raise
        if reply.get("ready") is not True:
            self.close()
            raise SessionError(f"runner handshake failed: {reply.get('error', reply)}")

    def label(self, doc_id: str, text: str) -> LabelReply:
        """Label one document; script-level failures come back as abstain+error."""
        self._send({"id": doc_id, "text": text})
        reply = self._recv()
        if reply.get("id") != doc_id:
            raise SessionError(
                f"runner reply id {reply.get('id')!r} does not match request {doc_id!r}"
            )
        label = reply.get("label")
        if not isinstance(label, int) or isinstance(label, bool):
            return LabelReply(ABSTAIN, f"non-integer label {label!r}")
        if reply.get("error") is not None:
            return LabelReply(ABSTAIN, str(reply["error"]))
        if label != ABSTAIN and not 0 <= label < self.k:
            return LabelReply(ABSTAIN, f"label {label} out of range for k={self.k}")
        return LabelReply(label)

    def close(self) -> None:
        proc = self._proc
        if proc.stdin and not proc.stdin.closed:
            try:
                proc.stdin.close()
            except OSError:
                pass
        try:
            proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self) -> "ScriptSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
