import sys

import pytest

from doeflow.common.checks import (
    HandshakeTimeout,
    ProtocolViolation,
    RunnerError,
    RunnerSpawnFailure,
    RunTimeout,
)
from doeflow.runner.session import resolve_command, spawn_session
from doeflow.spec_model.schema import RunnerBinding
from tests.conftest import ECHO_RUNNER


def _echo(*options: str, timeout: float = 10.0, **environment: str) -> RunnerBinding:
    return RunnerBinding(
        command=("{python}", str(ECHO_RUNNER)) + options,
        environment=dict(environment),
        timeout=timeout,
    )


def test_resolve_command() -> None:
    assert resolve_command(["{python}", "-m", "doeflow.example_sut"]) == [
        sys.executable,
        "-m",
        "doeflow.example_sut",
    ]


class TestRunnerSession:
    def test_runs_are_answered(self) -> None:
        with spawn_session(_echo(), ["A", "B"], ["out_A"]) as session:
            assert session.alive
            reply = session.request(1, 99, {"A": 2.5, "B": 1.0})
            assert reply.status == "ok"
            assert reply.responses == {"out_A": 2.5}
            assert session.request(2, 100, {"A": -1.0, "B": 0.0}).responses == {"out_A": -1.0}
        assert not session.alive

    def test_environment_reaches_the_runner(self, tmp_path) -> None:
        log = tmp_path / "runs.log"
        with spawn_session(_echo(ECHO_RUN_LOG=str(log)), ["A"], ["out_A"]) as session:
            session.request(7, 0, {"A": 1.0})
        assert log.read_text().split() == ["7"]

    def test_garbage_handshake(self) -> None:
        with pytest.raises(ProtocolViolation) as error:
            spawn_session(_echo("--garbage"), ["A"], ["out_A"])
        assert error.value.line == "this is not a protocol message"

    def test_command_not_found(self, tmp_path) -> None:
        binding = RunnerBinding(command=(str(tmp_path / "no-such-runner"),))
        with pytest.raises(RunnerSpawnFailure):
            spawn_session(binding, ["A"], ["out_A"])

    def test_runner_exits_before_handshake(self) -> None:
        binding = RunnerBinding(command=("{python}", "-c", "pass"), timeout=10.0)
        with pytest.raises(RunnerError):
            spawn_session(binding, ["A"], ["out_A"])

    def test_handshake_timeout(self) -> None:
        binding = RunnerBinding(
            command=("{python}", "-c", "import time; time.sleep(30)"), timeout=0.5
        )
        with pytest.raises(HandshakeTimeout):
            spawn_session(binding, ["A"], ["out_A"])

    def test_run_timeout(self) -> None:
        session = spawn_session(_echo("--sleep-on", "1", timeout=2.0), ["A"], ["out_A"])
        try:
            with pytest.raises(RunTimeout):
                session.request(1, 0, {"A": 1.0})
        finally:
            session.kill()
        assert not session.alive

    def test_runner_exits_during_run(self) -> None:
        session = spawn_session(_echo("--exit-on", "2"), ["A"], ["out_A"])
        try:
            session.request(1, 0, {"A": 1.0})
            with pytest.raises(RunnerError, match="exited with code 1"):
                session.request(2, 0, {"A": 1.0})
        finally:
            session.kill()
