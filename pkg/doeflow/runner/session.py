import logging
import os
import queue
import subprocess
import sys
import threading
from typing import Any, Dict, List, Mapping, Optional, Sequence

from doeflow.common.checks import (
    HandshakeTimeout,
    ProtocolViolation,
    RunnerError,
    RunnerSpawnFailure,
    RunTimeout,
)
from doeflow.runner.protocol import (
    RunReply,
    decode,
    encode,
    init_message,
    ready_metrics,
    run_message,
    run_reply,
    shutdown_message,
)
from doeflow.spec_model.schema import RunnerBinding

logger = logging.getLogger(__name__)

PYTHON_PLACEHOLDER = "{python}"
# Seconds a runner gets to exit after `shutdown` before it is killed.
SHUTDOWN_GRACE = 5.0


def resolve_command(command: Sequence[str]) -> List[str]:
    """The command with `{python}` replaced by the running interpreter."""
    return [part.replace(PYTHON_PLACEHOLDER, sys.executable) for part in command]


def runner_environment(extra: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    environment = os.environ.copy()
    if extra:
        environment.update(extra)
    return environment


class RunnerSession:
    """One experiment process and the protocol conversation with it. A session is owned by a
    single worker; it is not safe to call `request` from several threads at once.

    The child's stdout is read on a background thread into a queue so that every wait can time
    out, and its stderr is forwarded line by line to the DEBUG log.

    # Parameters

    binding : `RunnerBinding`
        The command, extra environment variables and per-message timeout.
    factors : `Sequence[str]`
        Factor names declared in the `init` message.
    metrics : `Sequence[str]`
        Metric names the runner must provide.
    """

    def __init__(
        self, binding: RunnerBinding, factors: Sequence[str], metrics: Sequence[str]
    ) -> None:
        self.binding = binding
        self.factors = list(factors)
        self.metrics = list(metrics)
        self.command = resolve_command(binding.command)
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        try:
            self.process = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                env=runner_environment(binding.environment),
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except (FileNotFoundError, PermissionError, NotADirectoryError) as error:
            raise RunnerSpawnFailure(f"Cannot start runner {' '.join(self.command)}: {error}")
        logger.debug("Started runner pid %d: %s", self.process.pid, " ".join(self.command))
        self._reader = threading.Thread(target=self._read_stdout, daemon=True)
        self._reader.start()
        self._drainer = threading.Thread(target=self._drain_stderr, daemon=True)
        self._drainer.start()

    def _read_stdout(self) -> None:
        assert self.process.stdout is not None
        for line in self.process.stdout:
            if line.strip():
                self._lines.put(line)
        self._lines.put(None)

    def _drain_stderr(self) -> None:
        assert self.process.stderr is not None
        for line in self.process.stderr:
            logger.debug("[runner %d] %s", self.process.pid, line.rstrip())

    @property
    def alive(self) -> bool:
        return self.process.poll() is None

    def _send(self, message: Mapping[str, Any]) -> None:
        assert self.process.stdin is not None
        try:
            self.process.stdin.write(encode(message))
            self.process.stdin.flush()
        except (BrokenPipeError, OSError) as error:
            raise RunnerError(f"Runner pid {self.process.pid} stopped reading: {error}")

    def _receive(self, timeout: float) -> Optional[str]:
        """The next non-empty line, or `None` once the runner closed its output.

        # Raises

        `queue.Empty` if nothing arrives within `timeout` seconds.
        """
        return self._lines.get(timeout=timeout)

    def _exit_description(self) -> str:
        try:
            code = self.process.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            return "closed its output"
        return f"exited with code {code}"

    def handshake(self) -> List[str]:
        """Sends `init` and waits for `ready`.

        # Raises

        `HandshakeTimeout` if no reply arrives within the binding's timeout,
        `RunnerSpawnFailure` if the runner exits first, `ProtocolViolation` if the reply is
        garbage or does not declare every metric.
        """
        self._send(init_message(self.factors, self.metrics))
        try:
            line = self._receive(self.binding.timeout)
        except queue.Empty:
            self.kill()
            raise HandshakeTimeout(
                f"Runner {' '.join(self.command)} did not reply to init within "
                f"{self.binding.timeout} s"
            )
        if line is None:
            raise RunnerSpawnFailure(
                f"Runner {' '.join(self.command)} {self._exit_description()} before the handshake"
            )
        try:
            declared = ready_metrics(decode(line), self.metrics)
        except ProtocolViolation:
            self.kill()
            raise
        logger.debug("Runner pid %d ready with metrics %s", self.process.pid, declared)
        return declared

    def request(self, run_id: int, seed: int, treatment: Mapping[str, Any]) -> RunReply:
        """Executes one run.

        # Raises

        `RunTimeout` if no reply arrives within the binding's timeout, `RunnerError` if the
        runner exits, `ProtocolViolation` for a reply that is garbage or out of step. After any
        of these the session is unusable and must be closed.
        """
        self._send(run_message(run_id, seed, treatment))
        try:
            line = self._receive(self.binding.timeout)
        except queue.Empty:
            raise RunTimeout(f"Run {run_id} got no reply within {self.binding.timeout} s")
        if line is None:
            raise RunnerError(f"Runner {self._exit_description()} during run {run_id}")
        return run_reply(decode(line), run_id, self.metrics)

    def kill(self) -> None:
        if self.alive:
            self.process.kill()
        self.process.wait()

    def close(self) -> None:
        """Asks the runner to shut down, killing it if it does not exit in time."""
        if self.alive:
            try:
                self._send(shutdown_message())
                assert self.process.stdin is not None
                self.process.stdin.close()
            except (RunnerError, OSError):
                pass
            try:
                self.process.wait(timeout=SHUTDOWN_GRACE)
            except subprocess.TimeoutExpired:
                logger.warning("Runner pid %d ignored shutdown; killing it", self.process.pid)
        self.kill()

    def __enter__(self) -> "RunnerSession":
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.close()


def spawn_session(
    binding: RunnerBinding, factors: Sequence[str], metrics: Sequence[str]
) -> RunnerSession:
    """Starts the runner process and completes the handshake.

    # Raises

    `RunnerSpawnFailure` if the command cannot be started, plus everything
    `RunnerSession.handshake` raises.
    """
    session = RunnerSession(binding, factors, metrics)
    try:
        session.handshake()
    except RunnerError:
        session.kill()
        raise
    return session
