"""
The wire protocol between the toolkit and an experiment process: newline-delimited JSON objects
over the process's standard input and output, UTF-8 encoded, one message per line.

    toolkit -> runner   {"type": "init", "factors": [...], "metrics": [...]}
    runner -> toolkit   {"type": "ready", "metrics": [...]}
    toolkit -> runner   {"type": "run", "run_id": N, "seed": S, "treatment": {...}}
    runner -> toolkit   {"type": "result", "run_id": N, "status": "ok", "responses": {...}}
    toolkit -> runner   {"type": "shutdown"}

A runner that cannot process a message answers `{"type": "error", "message": "..."}` and keeps
the session open. A result whose status is not `ok` may carry a `reason`.
"""
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence

from doeflow.common.checks import ProtocolViolation


class MessageType(str, Enum):
    INIT = "init"
    READY = "ready"
    RUN = "run"
    RESULT = "result"
    ERROR = "error"
    SHUTDOWN = "shutdown"


# Statuses a runner may report for a run. Timeouts are only ever decided by the toolkit.
RUNNER_STATUSES = ("ok", "invalid_response", "runner_error")


def encode(message: Mapping[str, Any]) -> str:
    """One protocol line, newline included. Non-finite reals are not valid JSON and are
    rejected."""
    return json.dumps(dict(message), allow_nan=False, separators=(",", ":")) + "\n"


def decode(line: str) -> Dict[str, Any]:
    """Parses one protocol line.

    # Raises

    `ProtocolViolation`, carrying the offending line, if it is not a JSON object with a known
    `type`.
    """
    text = line.strip()
    try:
        message = json.loads(text)
    except json.JSONDecodeError:
        raise ProtocolViolation("Runner sent a line that is not JSON", line=text)
    if not isinstance(message, dict):
        raise ProtocolViolation("Runner sent a JSON value that is not an object", line=text)
    kind = message.get("type")
    if kind not in {member.value for member in MessageType}:
        raise ProtocolViolation(f"Runner sent an unknown message type {kind!r}", line=text)
    return message


def init_message(factors: Sequence[str], metrics: Sequence[str]) -> Dict[str, Any]:
    return {"type": MessageType.INIT.value, "factors": list(factors), "metrics": list(metrics)}


def run_message(run_id: int, seed: int, treatment: Mapping[str, Any]) -> Dict[str, Any]:
    return {
        "type": MessageType.RUN.value,
        "run_id": run_id,
        "seed": seed,
        "treatment": dict(treatment),
    }


def shutdown_message() -> Dict[str, Any]:
    return {"type": MessageType.SHUTDOWN.value}


def ready_metrics(message: Mapping[str, Any], expected: Sequence[str]) -> List[str]:
    """The metrics a `ready` reply declares.

    # Raises

    `ProtocolViolation` if the reply is not `ready` or does not declare every expected metric.
    """
    line = json.dumps(message, sort_keys=True)
    if message.get("type") != MessageType.READY.value:
        raise ProtocolViolation(f"Expected a ready reply, got {message.get('type')!r}", line)
    metrics = message.get("metrics")
    if not isinstance(metrics, list) or not all(isinstance(m, str) for m in metrics):
        raise ProtocolViolation("The ready reply must list metric names", line)
    missing = [metric for metric in expected if metric not in metrics]
    if missing:
        raise ProtocolViolation(f"The runner does not provide metrics {missing}", line)
    return metrics


@dataclass(frozen=True)
class RunReply:
    status: str
    responses: Dict[str, float]
    reason: str = ""


def _finite_number(value: Any) -> bool:
    return (
        isinstance(value, (int, float))
        and not isinstance(value, bool)
        and math.isfinite(float(value))
    )


def run_reply(message: Mapping[str, Any], run_id: int, metrics: Sequence[str]) -> RunReply:
    """Interprets the reply to a run message.

    An `error` reply becomes a `runner_error`. An `ok` result that lacks a declared metric, or
    reports one that is not a finite number, becomes an `invalid_response`: both are recorded in
    the run's row.

    # Raises

    `ProtocolViolation` for a reply to another run or of the wrong type, which means the
    session is out of step with the runner.
    """
    line = json.dumps(message, sort_keys=True)
    kind = message.get("type")
    if kind == MessageType.ERROR.value:
        return RunReply("runner_error", {}, str(message.get("message", "")))
    if kind != MessageType.RESULT.value:
        raise ProtocolViolation(f"Expected a result for run {run_id}, got {kind!r}", line)
    if message.get("run_id") != run_id:
        raise ProtocolViolation(
            f"Expected a result for run {run_id}, got one for run {message.get('run_id')!r}",
            line,
        )
    status = message.get("status")
    if status not in RUNNER_STATUSES:
        raise ProtocolViolation(f"Unknown run status {status!r}", line)
    reason = str(message.get("reason", ""))
    if status != "ok":
        return RunReply(status, {}, reason)
    responses = message.get("responses")
    if not isinstance(responses, dict):
        return RunReply("invalid_response", {}, "responses must be an object")
    missing = [metric for metric in metrics if metric not in responses]
    if missing:
        return RunReply("invalid_response", {}, f"missing metrics {missing}")
    bad = [metric for metric in metrics if not _finite_number(responses[metric])]
    if bad:
        return RunReply("invalid_response", {}, f"metrics {bad} are not finite numbers")
    return RunReply("ok", {metric: float(responses[metric]) for metric in metrics}, reason)


def error_message(text: str, line: Optional[str] = None) -> Dict[str, Any]:
    message: Dict[str, Any] = {"type": MessageType.ERROR.value, "message": text}
    if line is not None:
        message["line"] = line
    return message
