"""Shared fixtures data and the test-side protocol driver."""

from __future__ import annotations

import json
import queue
import subprocess
import sys
import threading
from pathlib import Path

FIXTURES = Path(__file__).parent / "fixtures"

# (script filename, entrypoint) for the five conformance fixtures.
FIXTURE_LFS = [
    ("kw_spam.py", "label_comment"),
    ("length_short.py", "label_by_length"),
    ("regex_url.py", "label_links"),
    ("shouty.py", "label_shouting"),
    ("flaky_empty.py", "label_strict"),
]

DOCUMENTS = [
    "please subscribe to my channel",
    "check out my new video",
    "great song, love it",
    "WIN A FREE CRUISE NOW",
    "see you at the station",
    "http://promo.example/claim",
    "visit www.deals.example today",
    "short note",
    "this message is definitely longer than twenty characters",
    "ALL CAPS SHOUTING HERE",
    "mixed Case Message With Some Caps",
    "",
    "the meeting moved to three",
    "txt YES to 80082 for a deal",
    "lunch tomorrow?",
    "Subscribe now!",
    "numbers 123 456",
    "CHECK OUT www.example.com",
    "a",
    "final notice about your prize",
]


class RunnerSession:
    """Test-side driver for the wire protocol with a read timeout.

    Replies are drained by a background thread so heavy pipelining can never
    deadlock on a full pipe, and reads can time out cleanly.
    """

    _EOF = object()

    def __init__(self, script: Path, entrypoint: str, k: int = 2, handshake: bool = True):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "lfrunner", str(script), entrypoint],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        if handshake:
            self.send({"hello": {"entrypoint": entrypoint, "k": k}})

    def _pump(self) -> None:
        try:
            for line in self.proc.stdout:
                self._lines.put(line)
        except (OSError, ValueError):
            pass
        self._lines.put(self._EOF)

    def send(self, payload: dict) -> None:
        self.proc.stdin.write(json.dumps(payload) + "\n")
        self.proc.stdin.flush()

    def send_raw(self, line: str) -> None:
        self.proc.stdin.write(line)
        self.proc.stdin.flush()

    def recv(self, timeout: float = 10.0) -> dict:
        try:
            item = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError("no reply from runner") from None
        if item is self._EOF:
            raise EOFError("runner closed stdout")
        return json.loads(item)

    def close(self) -> int:
        if not self.proc.stdin.closed:
            self.proc.stdin.close()
        try:
            return self.proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            raise
