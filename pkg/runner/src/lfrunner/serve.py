"""Serve one labeling-function script over the stdin/stdout wire protocol.

Invocation: ``runner <script_path> <entrypoint>``.

Protocol, in order:

1. engine -> runner: ``{"hello": {"entrypoint": str, "k": int}}``
2. runner -> engine: ``{"ready": true}`` on success, or ``{"error": str}``
   followed by a nonzero exit when the script cannot be served
3. engine -> runner: one ``{"id": str, "text": str}`` per line; runner
   replies ``{"id": ..., "label": int}`` with the label coerced to int.
   A document that makes the script raise yields
   ``{"id": ..., "label": -1, "error": "<ExcType>: <msg>"}`` and the
   session keeps serving.
4. engine closes stdin; runner exits 0.

Replies are emitted one per request, in request order. The runner does not
validate label ranges (the engine owns that) and provides no sandboxing
beyond living in its own process; the engine's per-call timeout is the
backstop for runaway scripts.
"""

from __future__ import annotations

import importlib.util
import json
import sys
from pathlib import Path
from typing import Callable

ABSTAIN = -1


class HandshakeFailure(Exception):
    """The script cannot be served; reported to the engine before exiting."""


def _emit(stream, payload: dict) -> None:
    stream.write(json.dumps(payload) + "\n")
    stream.flush()


def _load_entrypoint(script_path: str, entrypoint: str) -> Callable:
    path = Path(script_path)
    if not path.is_file():
        raise HandshakeFailure(f"script {script_path!r} does not exist")
    spec = importlib.util.spec_from_file_location("weakforge_lf_script", path)
    if spec is None or spec.loader is None:
        raise HandshakeFailure(f"cannot build an import spec for {script_path!r}")
    module = importlib.util.module_from_spec(spec)
    try:
        spec.loader.exec_module(module)
    except Exception as e:  # surface import-time crashes as handshake errors
        raise HandshakeFailure(f"script failed to load: {type(e).__name__}: {e}") from e
    fn = getattr(module, entrypoint, None)
    if fn is None:
        raise HandshakeFailure(f"script has no attribute {entrypoint!r}")
    if not callable(fn):
        raise HandshakeFailure(f"{entrypoint!r} is not callable")
    return fn


def _read_hello(line: str, expected_entrypoint: str) -> None:
    try:
        hello = json.loads(line)
    except json.JSONDecodeError as e:
        raise HandshakeFailure(f"invalid handshake line: {e.msg}") from e
    body = hello.get("hello") if isinstance(hello, dict) else None
    if not isinstance(body, dict) or "entrypoint" not in body or "k" not in body:
        raise HandshakeFailure("handshake must be {'hello': {'entrypoint', 'k'}}")
    if body["entrypoint"] != expected_entrypoint:
        raise HandshakeFailure(
            f"handshake entrypoint {body['entrypoint']!r} does not match "
            f"argv entrypoint {expected_entrypoint!r}"
        )


def serve(script_path: str, entrypoint: str, stdin=None, stdout=None) -> int:
    """Run the session until the input stream closes. Returns the exit code."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    hello_line = stdin.readline()
    try:
        if not hello_line:
            raise HandshakeFailure("engine closed the stream before the handshake")
        _read_hello(hello_line, entrypoint)
        fn = _load_entrypoint(script_path, entrypoint)
    except HandshakeFailure as e:
        _emit(stdout, {"error": str(e)})
        return 1
    _emit(stdout, {"ready": True})

    for line in stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
            doc_id = request["id"]
            text = request["text"]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            # A malformed request has no id to echo; report and keep serving.
            _emit(stdout, {"error": f"bad request line: {type(e).__name__}: {e}"})
            continue
        try:
            label = int(fn(text))
            _emit(stdout, {"id": doc_id, "label": label})
        except Exception as e:  # per-document failures never end the session
            _emit(stdout, {"id": doc_id, "label": ABSTAIN, "error": f"{type(e).__name__}: {e}"})
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = argv if argv is not None else sys.argv[1:]
    if len(argv) != 2:
        print("usage: runner <script_path> <entrypoint>", file=sys.stderr)
        return 2
    return serve(argv[0], argv[1])


if __name__ == "__main__":
    sys.exit(main())
