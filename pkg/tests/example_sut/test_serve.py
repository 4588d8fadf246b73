import io
import json

from typer.testing import CliRunner

from doeflow.example_sut.__main__ import app, handle, serve
from doeflow.example_sut.model import METRIC_NAMES, SutConfig
from doeflow.runner.session import spawn_session
from doeflow.spec_model.schema import RunnerBinding

TREATMENT = {"K_aRCI": 2.0, "limit_priority": "q", "R_p": 5.0}


class TestHandle:
    def test_init(self) -> None:
        reply = handle({"type": "init", "factors": [], "metrics": ["voltage_nadir"]}, SutConfig())
        assert reply == {"type": "ready", "metrics": list(METRIC_NAMES)}

    def test_init_with_unknown_metric(self) -> None:
        reply = handle({"type": "init", "metrics": ["frequency"]}, SutConfig())
        assert reply["type"] == "error"
        assert "frequency" in reply["message"]

    def test_run(self) -> None:
        reply = handle({"type": "run", "run_id": 4, "seed": 1, "treatment": TREATMENT}, SutConfig())
        assert reply["type"] == "result"
        assert reply["run_id"] == 4
        assert reply["status"] == "ok"
        assert set(reply["responses"]) == set(METRIC_NAMES)
        assert "reason" not in reply

    def test_unrecovered_run_carries_a_reason(self) -> None:
        treatment = dict(TREATMENT, R_p=0.01)
        reply = handle(
            {"type": "run", "run_id": 1, "seed": 0, "treatment": treatment},
            SutConfig(settle_time=1.0),
        )
        assert reply["status"] == "ok"
        assert reply["reason"] == "not_recovered"
        assert reply["responses"]["recovery_time"] == 1.0

    def test_invalid_treatment(self) -> None:
        treatment = dict(TREATMENT, K_aRCI=-1.0)
        reply = handle({"type": "run", "run_id": 2, "treatment": treatment}, SutConfig())
        assert reply["status"] == "invalid_response"
        assert "K_aRCI" in reply["reason"]

    def test_shutdown(self) -> None:
        assert handle({"type": "shutdown"}, SutConfig()) is None


def test_serve_survives_bad_lines() -> None:
    lines = [
        json.dumps({"type": "init", "factors": list(TREATMENT), "metrics": list(METRIC_NAMES)}),
        "not json",
        json.dumps({"type": "ready", "metrics": []}),
        json.dumps({"type": "run", "run_id": 1, "seed": 3, "treatment": TREATMENT}),
        json.dumps({"type": "shutdown"}),
        json.dumps({"type": "run", "run_id": 2, "seed": 3, "treatment": TREATMENT}),
    ]
    stdout = io.StringIO()
    serve(SutConfig(), io.StringIO("\n".join(lines) + "\n"), stdout)
    replies = [json.loads(line) for line in stdout.getvalue().splitlines()]
    assert [reply["type"] for reply in replies] == ["ready", "error", "error", "result"]
    assert replies[1]["line"] == "not json"
    assert replies[3]["run_id"] == 1


def test_runs_as_a_runner_process() -> None:
    binding = RunnerBinding(command=("{python}", "-m", "doeflow.example_sut"), timeout=30.0)
    with spawn_session(binding, list(TREATMENT), list(METRIC_NAMES)) as session:
        first = session.request(1, 8, TREATMENT)
        second = session.request(2, 8, TREATMENT)
    assert first.status == "ok"
    assert first.responses == second.responses


def test_describe() -> None:
    result = CliRunner().invoke(app, ["--describe"])
    assert result.exit_code == 0
    description = json.loads(result.stdout)
    assert [factor["name"] for factor in description["factors"]] == [
        "K_aRCI",
        "limit_priority",
        "R_p",
    ]
    assert description["config"]["retained_voltage"] == 0.5
