import copy
import json
from typing import Any, Dict

import pytest
from allennlp.common.checks import ConfigurationError

from doeflow.common.checks import MalformedFile, SchemaViolation, UnknownKind
from doeflow.spec_model.parsing import (
    check_unique_test_case_names,
    parse_spec,
    parse_spec_data,
    serialize_spec,
    spec_kind,
    write_spec,
)
from doeflow.spec_model.schema import (
    Categorical,
    ContinuousRange,
    DesignFamily,
    ExperimentSpecification,
    FactorRole,
    PreliminaryPurpose,
    PurposeOfInvestigation,
    TestCase,
    TestSpecification,
)
from tests.conftest import echo_test_specification


def _test_case(**overrides: Any) -> Dict[str, Any]:
    data = {
        "kind": "test_case",
        "version": 1,
        "name": "tc",
        "purpose_of_investigation": "validation",
        "test_criteria": ["criterion"],
    }
    data.update(overrides)
    return data


class TestParseSpec:
    def test_bundled_test_case(self, data_dir) -> None:
        test_case = parse_spec(data_dir / "frt_test_case.json")
        assert isinstance(test_case, TestCase)
        assert test_case.name == "frt_wind_plant_support"
        assert test_case.purpose_of_investigation == PurposeOfInvestigation.VERIFICATION
        assert len(test_case.test_criteria) == 3

    def test_bundled_test_specification(self, frt_test_specification) -> None:
        spec = frt_test_specification
        assert isinstance(spec, TestSpecification)
        assert spec.test_case_ref == "frt_test_case.json"
        assert spec.preliminary_purpose == PreliminaryPurpose.SCREENING
        assert [f.name for f in spec.factors] == ["K_aRCI", "limit_priority", "R_p"]
        assert spec.factor("K_aRCI").levels == (0.0, 0.5, 1.0, 2.0)
        assert spec.factor("limit_priority").domain == Categorical(("d", "q"))
        assert spec.factor("R_p").domain == ContinuousRange(0.1, 10.0, "pu/s")
        assert spec.test_design.family == DesignFamily.FULL_FACTORIAL
        assert spec.test_design.block_factor == "limit_priority"
        assert spec.test_design.advice.max_treatments == 30
        assert spec.metric_names == ["peak_speed_dev", "voltage_nadir", "recovery_time"]

    def test_bundled_experiment_specification(self, frt_experiment_specification) -> None:
        spec = frt_experiment_specification
        assert isinstance(spec, ExperimentSpecification)
        assert spec.experiment_setup.command == ("{python}", "-m", "doeflow.example_sut")
        assert spec.experiment_design.master_seed == 2018
        assert spec.experiment_design.replicates == 1
        assert spec.test_specification.test_case.name == "frt_wind_plant_support"

    def test_missing_file(self, tmp_path) -> None:
        with pytest.raises(MalformedFile):
            parse_spec(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path) -> None:
        path = tmp_path / "bad.json"
        path.write_text('{"kind": ')
        with pytest.raises(MalformedFile, match="invalid JSON"):
            parse_spec(path)

    def test_top_level_must_be_object(self, tmp_path) -> None:
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(MalformedFile):
            parse_spec(path)

    def test_unknown_kind(self) -> None:
        with pytest.raises(UnknownKind):
            parse_spec_data({"kind": "test_plan", "version": 1})

    def test_errors_are_configuration_errors(self) -> None:
        with pytest.raises(ConfigurationError):
            parse_spec_data({"version": 1})


class TestSchemaViolations:
    def test_inverted_range_names_the_factor(self) -> None:
        data = echo_test_specification()
        data["factors"][1]["domain"] = {"type": "continuous", "low": 10.0, "high": 0.0}
        data["factors"][1].pop("levels")
        with pytest.raises(SchemaViolation) as error:
            parse_spec_data(data)
        assert any(
            v.startswith("factors.1.domain") and "'B' needs low < high" in v
            for v in error.value.violations
        )

    def test_collects_every_violation(self) -> None:
        data = _test_case(purpose_of_investigation="curiosity", test_criteria=[])
        data.pop("name")
        with pytest.raises(SchemaViolation) as error:
            parse_spec_data(data)
        paths = [violation.split(":")[0] for violation in error.value.violations]
        assert "name" in paths
        assert "purpose_of_investigation" in paths

    def test_empty_test_criteria(self) -> None:
        with pytest.raises(SchemaViolation, match="test_criteria"):
            parse_spec_data(_test_case(test_criteria=[]))

    def test_unsupported_version(self) -> None:
        with pytest.raises(SchemaViolation, match="version"):
            parse_spec_data(_test_case(version=2))

    def test_duplicate_factor_names(self) -> None:
        data = echo_test_specification()
        data["factors"][1]["name"] = "A"
        with pytest.raises(SchemaViolation, match="duplicate factor name 'A'"):
            parse_spec_data(data)

    def test_no_treatment_factor(self) -> None:
        data = echo_test_specification()
        for factor in data["factors"]:
            factor["role"] = "nuisance_unknown"
        with pytest.raises(SchemaViolation, match="at least one treatment factor"):
            parse_spec_data(data)

    def test_level_outside_domain(self) -> None:
        data = echo_test_specification()
        data["factors"][0]["levels"] = [0.0, 2.0]
        with pytest.raises(SchemaViolation, match="levels outside its domain"):
            parse_spec_data(data)

    def test_single_label(self) -> None:
        data = echo_test_specification()
        data["factors"][0] = {
            "name": "A",
            "role": "treatment_experimental",
            "domain": {"type": "categorical", "labels": ["only"]},
        }
        with pytest.raises(SchemaViolation, match="at least 2 distinct labels"):
            parse_spec_data(data)

    def test_unknown_block_factor(self) -> None:
        data = echo_test_specification()
        data["test_design"]["block_factor"] = "C"
        with pytest.raises(SchemaViolation, match="unknown factor 'C'"):
            parse_spec_data(data)

    def test_unknown_design_family(self) -> None:
        data = echo_test_specification()
        data["test_design"]["family"] = "taguchi"
        with pytest.raises(SchemaViolation, match="test_design.family"):
            parse_spec_data(data)

    def test_nested_violation_paths(self) -> None:
        data = echo_test_specification()
        data["test_case"]["test_criteria"] = []
        with pytest.raises(SchemaViolation) as error:
            parse_spec_data(data)
        assert any(v.startswith("test_case.test_criteria") for v in error.value.violations)


class TestStrictness:
    def test_unknown_field_is_a_violation_when_strict(self) -> None:
        with pytest.raises(SchemaViolation, match="colour: unknown field"):
            parse_spec_data(_test_case(colour="blue"))

    def test_unknown_field_is_logged_when_lenient(self, caplog) -> None:
        test_case = parse_spec_data(_test_case(colour="blue"), strict=False)
        assert test_case.name == "tc"
        assert "colour" in caplog.text


class TestReferences:
    def test_relative_reference(self, tmp_path) -> None:
        (tmp_path / "case.json").write_text(json.dumps(_test_case()))
        data = echo_test_specification()
        data["test_case"] = "case.json"
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(data))
        spec = parse_spec(path)
        assert spec.test_case.name == "tc"
        assert spec.test_case_ref == "case.json"

    def test_reference_of_the_wrong_kind(self, tmp_path) -> None:
        (tmp_path / "spec.json").write_text(json.dumps(echo_test_specification()))
        data = echo_test_specification()
        data["test_case"] = "spec.json"
        path = tmp_path / "outer.json"
        path.write_text(json.dumps(data))
        with pytest.raises(SchemaViolation, match="not a test_case"):
            parse_spec(path)

    def test_missing_reference(self, tmp_path) -> None:
        data = echo_test_specification()
        data["test_case"] = "missing.json"
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(data))
        with pytest.raises(SchemaViolation, match="test_case"):
            parse_spec(path)


class TestSerialization:
    def test_round_trip_inline(self) -> None:
        spec = parse_spec_data(echo_test_specification())
        assert parse_spec_data(serialize_spec(spec)) == spec

    def test_round_trip_through_file(self, tmp_path, frt_test_specification) -> None:
        # The reference is kept, so the copy must sit next to the test case.
        data = serialize_spec(frt_test_specification)
        assert data["test_case"] == "frt_test_case.json"
        inline = copy.deepcopy(data)
        inline["test_case"] = serialize_spec(frt_test_specification.test_case)
        path = tmp_path / "copy.json"
        path.write_text(json.dumps(inline))
        reparsed = parse_spec(path)
        assert reparsed.factors == frt_test_specification.factors
        assert reparsed.test_design == frt_test_specification.test_design

    def test_write_spec(self, tmp_path) -> None:
        test_case = parse_spec_data(_test_case())
        path = tmp_path / "tc.json"
        write_spec(test_case, path)
        assert parse_spec(path) == test_case

    def test_spec_kind(self, frt_test_specification) -> None:
        assert spec_kind(frt_test_specification) == "test_specification"
        with pytest.raises(ValueError):
            spec_kind(object())


class TestUniqueNames:
    def test_bundled_directory_passes(self, data_dir) -> None:
        check_unique_test_case_names(data_dir)

    def test_duplicate_names(self, tmp_path) -> None:
        (tmp_path / "a.json").write_text(json.dumps(_test_case()))
        (tmp_path / "b.json").write_text(json.dumps(_test_case()))
        with pytest.raises(SchemaViolation, match="'tc' used by a.json and b.json"):
            check_unique_test_case_names(tmp_path)


def test_factor_roles() -> None:
    assert FactorRole.TREATMENT_CLASSIFICATION.is_treatment
    assert FactorRole.NUISANCE_KNOWN_UNCONTROLLABLE.is_nuisance
    assert not FactorRole.NUISANCE_UNKNOWN.is_treatment
