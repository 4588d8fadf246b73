import json
import math

import pytest

from doeflow.common.checks import ProtocolViolation
from doeflow.runner.protocol import (
    decode,
    encode,
    error_message,
    init_message,
    ready_metrics,
    run_message,
    run_reply,
    shutdown_message,
)


class TestFraming:
    def test_one_line_per_message(self) -> None:
        line = encode(run_message(3, 17, {"K": 2.0, "priority": "q"}))
        assert line.endswith("\n")
        assert line.count("\n") == 1
        assert json.loads(line) == {
            "type": "run",
            "run_id": 3,
            "seed": 17,
            "treatment": {"K": 2.0, "priority": "q"},
        }

    def test_non_finite_values_are_rejected(self) -> None:
        with pytest.raises(ValueError):
            encode({"type": "result", "responses": {"y": math.nan}})

    def test_messages(self) -> None:
        assert init_message(("A",), ["y"]) == {"type": "init", "factors": ["A"], "metrics": ["y"]}
        assert shutdown_message() == {"type": "shutdown"}
        assert error_message("bad", '{"x"') == {"type": "error", "message": "bad", "line": '{"x"'}

    @pytest.mark.parametrize("line", ["not json", "[1, 2]", '{"type": "hello"}', '{"run_id": 1}'])
    def test_decode_rejects(self, line: str) -> None:
        with pytest.raises(ProtocolViolation) as error:
            decode(line + "\n")
        assert error.value.line == line
        assert repr(line) in str(error.value)


class TestReadyMetrics:
    def test_declares_expected_metrics(self) -> None:
        reply = {"type": "ready", "metrics": ["y", "z"]}
        assert ready_metrics(reply, ["y"]) == ["y", "z"]

    def test_missing_metric(self) -> None:
        with pytest.raises(ProtocolViolation, match="does not provide metrics"):
            ready_metrics({"type": "ready", "metrics": ["y"]}, ["y", "z"])

    def test_wrong_reply(self) -> None:
        with pytest.raises(ProtocolViolation):
            ready_metrics({"type": "result"}, ["y"])
        with pytest.raises(ProtocolViolation):
            ready_metrics({"type": "ready", "metrics": "y"}, ["y"])


class TestRunReply:
    def test_ok(self) -> None:
        reply = run_reply(
            {"type": "result", "run_id": 4, "status": "ok", "responses": {"y": 1, "z": 2.5}},
            4,
            ["y"],
        )
        assert reply.status == "ok"
        assert reply.responses == {"y": 1.0}

    def test_error_reply_is_a_runner_error(self) -> None:
        reply = run_reply({"type": "error", "message": "diverged"}, 4, ["y"])
        assert (reply.status, reply.reason) == ("runner_error", "diverged")

    @pytest.mark.parametrize(
        "responses",
        [{}, {"y": "1.0"}, {"y": True}, {"y": None}, [1.0]],
    )
    def test_invalid_responses(self, responses) -> None:
        message = {"type": "result", "run_id": 1, "status": "ok", "responses": responses}
        reply = run_reply(message, 1, ["y"])
        assert reply.status == "invalid_response"
        assert reply.responses == {}

    def test_runner_reported_failure_keeps_its_reason(self) -> None:
        message = {"type": "result", "run_id": 2, "status": "runner_error", "reason": "crash"}
        reply = run_reply(message, 2, ["y"])
        assert (reply.status, reply.reason) == ("runner_error", "crash")

    def test_out_of_step(self) -> None:
        with pytest.raises(ProtocolViolation):
            run_reply({"type": "result", "run_id": 5, "status": "ok"}, 4, ["y"])
        with pytest.raises(ProtocolViolation):
            run_reply({"type": "ready", "metrics": []}, 4, ["y"])
        with pytest.raises(ProtocolViolation):
            run_reply({"type": "result", "run_id": 4, "status": "timeout"}, 4, ["y"])
