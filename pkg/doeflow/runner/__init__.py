from doeflow.runner.protocol import MessageType, RunReply
from doeflow.runner.results import (
    ResultAppender,
    ResultRow,
    ResultSet,
    RunStatus,
    load_results,
    persist_results,
)
from doeflow.runner.session import RunnerSession, spawn_session
from doeflow.runner.executor import ExecutionOptions, execute_plan, experiment_plan
