from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for protocol_driver

from protocol_driver import RunnerSession  # noqa: E402


@pytest.fixture
def session_factory():
    sessions: list[RunnerSession] = []

    def make(script_name, entrypoint: str, **kwargs) -> RunnerSession:
        from protocol_driver import FIXTURES

        script = Path(script_name)
        if not script.is_absolute():
            script = FIXTURES / script_name
        session = RunnerSession(script, entrypoint, **kwargs)
        sessions.append(session)
        return session

    yield make
    for session in sessions:
        if session.proc.poll() is None:
            session.proc.kill()
            session.proc.wait()
