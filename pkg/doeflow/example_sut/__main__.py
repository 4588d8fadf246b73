"""
Serves the fault ride-through analog over the runner protocol on stdin/stdout:

    python -m doeflow.example_sut [--config sut.json] [--describe]

Log output goes to stderr; stdout carries protocol messages only.
"""
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, TextIO

import typer

from doeflow.common.checks import ProtocolViolation
from doeflow.example_sut.model import METRIC_NAMES, SutConfig, SutTreatment, describe, simulate
from doeflow.runner.protocol import MessageType, decode, encode, error_message

logger = logging.getLogger(__name__)

app = typer.Typer()


def handle(message: Dict[str, Any], config: SutConfig) -> Optional[Dict[str, Any]]:
    """The reply to one decoded message, `None` for `shutdown`."""
    kind = message["type"]
    if kind == MessageType.INIT.value:
        unknown = [name for name in message.get("metrics", []) if name not in METRIC_NAMES]
        if unknown:
            return error_message(f"metrics {unknown} are not provided")
        return {"type": MessageType.READY.value, "metrics": list(METRIC_NAMES)}
    if kind == MessageType.RUN.value:
        run_id = message.get("run_id")
        try:
            treatment = SutTreatment.from_values(message.get("treatment") or {})
            seed = int(message.get("seed", 0))
        except (TypeError, ValueError) as error:
            return {
                "type": MessageType.RESULT.value,
                "run_id": run_id,
                "status": "invalid_response",
                "reason": str(error),
            }
        metrics = simulate(config, treatment, seed)
        reply = {
            "type": MessageType.RESULT.value,
            "run_id": run_id,
            "status": "ok",
            "responses": metrics.responses(),
        }
        if not metrics.recovered:
            reply["reason"] = "not_recovered"
        return reply
    if kind == MessageType.SHUTDOWN.value:
        return None
    return error_message(f"unexpected message type {kind!r}")


def serve(config: SutConfig, stdin: TextIO, stdout: TextIO) -> None:
    """Answers messages until `shutdown` or end of input. A malformed message gets an `error`
    reply and the session continues."""
    for line in stdin:
        if not line.strip():
            continue
        try:
            message = decode(line)
        except ProtocolViolation as error:
            logger.warning("%s", error)
            reply: Optional[Dict[str, Any]] = error_message(str(error), line.strip())
        else:
            try:
                reply = handle(message, config)
            except Exception as error:
                logger.exception("Run failed")
                reply = error_message(f"{type(error).__name__}: {error}")
        if reply is None:
            return
        stdout.write(encode(reply))
        stdout.flush()


@app.command()
def main(
    config: Optional[Path] = typer.Option(
        None, "--config", help="JSON file overriding SutConfig fields.", exists=True
    ),
    describe_only: bool = typer.Option(
        False, "--describe", help="Print the factor and metric declarations and exit."
    ),
    verbose: bool = typer.Option(False, help="Log debug output to stderr."),
) -> None:
    """Serves the fault ride-through analog over the runner protocol."""
    logging.basicConfig(
        format="%(asctime)s : %(message)s",
        level=logging.DEBUG if verbose else logging.WARNING,
        stream=sys.stderr,
    )
    sut_config = SutConfig.load_file(config) if config is not None else SutConfig()
    if describe_only:
        typer.echo(json.dumps({**describe(), "config": sut_config.to_dict()}, indent=2))
        raise typer.Exit()
    serve(sut_config, sys.stdin, sys.stdout)


if __name__ == "__main__":
    app()
