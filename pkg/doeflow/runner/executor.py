import logging
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

from doeflow.common.checks import (
    PlanDigestMismatch,
    ProtocolViolation,
    RunnerError,
    RunTimeout,
)
from doeflow.design_gen.run_plan import Run, RunPlan, load_plan, plan_from_spec
from doeflow.runner.results import (
    ResultAppender,
    ResultRow,
    ResultSet,
    RunStatus,
    load_results,
    validate_rows,
)
from doeflow.runner.session import RunnerSession, spawn_session
from doeflow.spec_model.schema import ExperimentSpecification

logger = logging.getLogger(__name__)


@dataclass
class ExecutionOptions:
    """
    # Parameters

    parallelism : `int`, optional (default = `1`)
        Number of worker sessions. Physical experiments are serial; more than one worker is
        only for runners that are pure software.
    resume : `bool`, optional (default = `False`)
        Continue a partial results file written for the same plan, executing only the runs it
        does not hold yet.
    on_result : `Callable[[ResultRow], None]`, optional (default = `None`)
        Called with every row once it is persisted, from the worker thread that produced it.
    """

    parallelism: int = 1
    resume: bool = False
    on_result: Optional[Callable[[ResultRow], None]] = None


def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def experiment_plan(spec: ExperimentSpecification) -> RunPlan:
    """The plan an experiment specification asks for: the exported plan it references, or one
    generated from its test specification, master seed and replicate count."""
    setup = spec.experiment_design
    if setup.design is not None:
        path = Path(setup.design)
        if not path.is_absolute() and spec.base_dir is not None:
            path = spec.base_dir / path
        return load_plan(path)
    _, _, plan = plan_from_spec(spec.test_specification, setup.master_seed, setup.replicates)
    return plan


def _execute_run(session: RunnerSession, run: Run) -> Tuple[ResultRow, bool]:
    """Executes one run and reports whether the session is still usable afterwards. Run
    failures become the row's status; they never propagate."""
    started_at = timestamp()
    start = time.perf_counter()
    healthy = True
    responses: Dict[str, float] = {}
    try:
        reply = session.request(run.run_id, run.seed, run.treatment)
        status, responses, message = RunStatus(reply.status), reply.responses, reply.reason
    except RunTimeout as error:
        status, message, healthy = RunStatus.TIMEOUT, str(error), False
    except ProtocolViolation as error:
        status, message, healthy = RunStatus.INVALID_RESPONSE, str(error), False
    except RunnerError as error:
        status, message, healthy = RunStatus.RUNNER_ERROR, str(error), False
    row = ResultRow(
        run_id=run.run_id,
        treatment=dict(run.treatment),
        block=run.block,
        replicate=run.replicate,
        seed=run.seed,
        responses=responses,
        status=status,
        wall_time=time.perf_counter() - start,
        started_at=started_at,
        ended_at=timestamp(),
        message=message,
    )
    return row, healthy


def _resumable_rows(plan: RunPlan, path: Path) -> List[ResultRow]:
    existing = load_results(path, lenient=True)
    if existing.plan_digest != plan.digest():
        raise PlanDigestMismatch(
            f"Results {path} were written for plan {existing.plan_digest}, not {plan.digest()}; "
            f"refusing to resume"
        )
    validate_rows(existing, plan.run_ids)
    return existing.rows


def execute_plan(
    plan: RunPlan,
    spec: ExperimentSpecification,
    results_path: Union[str, Path],
    options: Optional[ExecutionOptions] = None,
) -> ResultSet:
    """Executes every run of `plan` against the experiment process `spec` binds, persisting
    each row as it completes.

    Runs are dispatched in plan order; rows are recorded in completion order, which with one
    worker is the plan order. Each worker owns one runner session for all its runs (or one per
    run with `fresh_process`) and starts a new one after a run that timed out, crashed the
    runner or got an out-of-step reply.

    # Parameters

    plan : `RunPlan`
    spec : `ExperimentSpecification`
        Provides the runner binding and the metrics every `ok` row must hold.
    results_path : `Union[str, Path]`
        Results CSV; its JSON sidecar is written next to it.
    options : `ExecutionOptions`, optional (default = `None`)

    # Raises

    `RunnerSpawnFailure`, `HandshakeTimeout` or `ProtocolViolation` if a runner session cannot
    be established (execution stops, completed rows stay persisted), `PlanDigestMismatch` if
    asked to resume results of another plan.
    """
    options = options or ExecutionOptions()
    if options.parallelism < 1:
        raise ValueError(f"parallelism must be at least 1, got {options.parallelism}")
    path = Path(results_path)
    binding = spec.experiment_setup
    metrics = spec.test_specification.metric_names

    rows: List[ResultRow] = []
    if options.resume and path.exists():
        rows = _resumable_rows(plan, path)
        logger.info("Resuming %s: %d of %d runs already done", path, len(rows), len(plan))
    elif path.exists():
        logger.warning("Overwriting existing results %s", path)
    path.parent.mkdir(parents=True, exist_ok=True)
    results = ResultSet(
        rows=list(rows),
        plan_digest=plan.digest(),
        runner_command=" ".join(binding.command),
        factor_names=plan.factor_names,
        metric_names=tuple(metrics),
        master_seed=plan.master_seed,
    )
    appender = ResultAppender(results, path)
    done = {row.run_id for row in rows}
    pending: "queue.Queue[Run]" = queue.Queue()
    for run in plan.runs:
        if run.run_id not in done:
            pending.put(run)
    total = len(plan)
    on_result = options.on_result
    stop = threading.Event()

    def work() -> None:
        session: Optional[RunnerSession] = None
        try:
            while not stop.is_set():
                try:
                    run = pending.get_nowait()
                except queue.Empty:
                    return
                if session is None:
                    session = spawn_session(binding, plan.factor_names, metrics)
                row, healthy = _execute_run(session, run)
                appender.append(row)
                if row.ok:
                    logger.info("Run %d done (%d/%d)", row.run_id, len(results.rows), total)
                else:
                    logger.warning(
                        "Run %d ended with %s: %s", row.run_id, row.status.value, row.message
                    )
                if on_result is not None:
                    on_result(row)
                if not healthy:
                    session.kill()
                    session = None
                elif binding.fresh_process:
                    session.close()
                    session = None
        except BaseException:
            stop.set()
            raise
        finally:
            if session is not None:
                session.close()

    workers = min(options.parallelism, max(pending.qsize(), 1))
    if workers == 1:
        work()
    else:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="doeflow-run") as pool:
            futures = [pool.submit(work) for _ in range(workers)]
        for future in futures:
            future.result()

    validate_rows(results, plan.run_ids)
    missing = sorted(set(plan.run_ids) - set(results.run_ids))
    if missing:
        raise RunnerError(f"Runs {missing} have no result row")
    logger.info("Executed %d runs: %s", total, results.status_counts())
    return results
