import json
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import pytest

from doeflow.runner.results import ResultRow, ResultSet, RunStatus
from doeflow.spec_model.parsing import parse_spec
from doeflow.spec_model.schema import ExperimentSpecification, TestSpecification

# Note: Most of these are scoped as "module" to prevent a warning from hypothesis
# about fixtures being reset between function calls.

DATA_DIR = Path(__file__).parents[1] / "doeflow" / "data"
ECHO_RUNNER = Path(__file__).parent / "fixtures" / "echo_runner.py"


@pytest.fixture(scope="module")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="module")
def frt_test_specification() -> TestSpecification:
    return parse_spec(DATA_DIR / "frt_test_specification.json")


@pytest.fixture(scope="module")
def frt_experiment_specification() -> ExperimentSpecification:
    return parse_spec(DATA_DIR / "frt_experiment_specification.json")


def echo_test_specification() -> Dict[str, Any]:
    """Two numeric factors, 2 x 3 levels, echoed back as `out_A` and `out_B`."""
    return {
        "kind": "test_specification",
        "version": 1,
        "test_case": {
            "name": "echo",
            "purpose_of_investigation": "verification",
            "test_criteria": ["the treatment comes back unchanged"],
        },
        "factors": [
            {
                "name": "A",
                "role": "treatment_experimental",
                "domain": {"type": "continuous", "low": 0.0, "high": 1.0},
                "levels": [0.0, 1.0],
            },
            {
                "name": "B",
                "role": "treatment_experimental",
                "domain": {"type": "continuous", "low": 0.0, "high": 10.0},
                "levels": [0.0, 5.0, 10.0],
            },
        ],
        "responses": [{"name": "out_A"}, {"name": "out_B"}],
        "test_design": {"family": "full_factorial"},
    }


@pytest.fixture()
def echo_experiment(tmp_path) -> Callable[..., ExperimentSpecification]:
    """Writes an experiment specification bound to the echo runner and parses it back.
    Keyword arguments go to the runner as options, e.g. `exit_on=3`."""

    def make(
        timeout: float = 10.0,
        replicates: int = 1,
        master_seed: int = 7,
        fresh_process: bool = False,
        environment: Optional[Dict[str, str]] = None,
        **runner_options: Any,
    ) -> ExperimentSpecification:
        command = ["{python}", str(ECHO_RUNNER)]
        for name, value in runner_options.items():
            flag = "--" + name.replace("_", "-")
            command.extend([flag] if value is True else [flag, str(value)])
        data = {
            "kind": "experiment_specification",
            "version": 1,
            "test_specification": echo_test_specification(),
            "experiment_setup": {
                "command": command,
                "environment": environment or {},
                "timeout": timeout,
                "fresh_process": fresh_process,
            },
            "experiment_design": {"master_seed": master_seed, "replicates": replicates},
        }
        path = tmp_path / "echo_experiment.json"
        path.write_text(json.dumps(data))
        return parse_spec(path)

    return make


@pytest.fixture(scope="module")
def make_results() -> Callable[..., ResultSet]:
    """Builds a `ResultSet` from treatments and one response column per metric."""

    def make(
        treatments: Sequence[Dict[str, Any]],
        responses: Dict[str, Sequence[float]],
        statuses: Optional[Sequence[RunStatus]] = None,
    ) -> ResultSet:
        metric_names = tuple(responses)
        rows: List[ResultRow] = []
        for i, treatment in enumerate(treatments):
            status = statuses[i] if statuses is not None else RunStatus.OK
            rows.append(
                ResultRow(
                    run_id=i + 1,
                    treatment=dict(treatment),
                    block=None,
                    replicate=1,
                    seed=i,
                    responses={name: float(responses[name][i]) for name in metric_names}
                    if status == RunStatus.OK
                    else {},
                    status=status,
                    wall_time=0.0,
                    started_at="",
                    ended_at="",
                )
            )
        return ResultSet(
            rows=rows,
            plan_digest="0" * 64,
            runner_command="test",
            factor_names=tuple(treatments[0]),
            metric_names=metric_names,
        )

    return make
