import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

from allennlp.common import Params
from allennlp.common.file_utils import cached_path
from validators.url import url

from doeflow.common.checks import MalformedFile, SchemaViolation, UnknownKind
from doeflow.spec_model.schema import (
    KINDS,
    SPEC_VERSION,
    Categorical,
    ContinuousRange,
    DesignAdvice,
    DesignFamily,
    DesignRequest,
    ExperimentDesign,
    ExperimentSpecification,
    Factor,
    FactorRole,
    PreliminaryPurpose,
    PurposeOfInvestigation,
    ResponseMetric,
    RunnerBinding,
    Spec,
    TestCase,
    TestSpecification,
)

logger = logging.getLogger(__name__)

_REQUIRED = object()


def _read_json(path: Union[str, Path]) -> Tuple[Dict[str, Any], Optional[Path]]:
    """Loads a JSON object from a local path or URL. Returns it with the directory relative
    references should be resolved against (`None` for URLs)."""
    path = str(path)
    base_dir = None
    if url(path):
        local_path = cached_path(path)
    else:
        local_path = path
        base_dir = Path(path).resolve().parent
    try:
        text = Path(local_path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as error:
        raise MalformedFile(f"{path}: cannot be read ({error})")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as error:
        raise MalformedFile(f"{path}: invalid JSON at line {error.lineno}: {error.msg}")
    if not isinstance(data, dict):
        raise MalformedFile(f"{path}: top level must be a JSON object")
    return data, base_dir


class _SpecReader:
    """Pops typed fields out of `Params` while collecting every problem, keyed by the field
    path `Params.history` tracks, instead of stopping at the first one."""

    def __init__(self, strict: bool, base_dir: Optional[Path], source: Optional[str]) -> None:
        self.strict = strict
        self.base_dir = base_dir
        self.source = source
        self.violations: List[str] = []

    def fail(self, params: Params, key: str, message: str) -> None:
        self.violations.append(f"{params.history}{key}: {message}")

    def _pop(self, params: Params, key: str, default: Any) -> Any:
        if key not in params:
            if default is _REQUIRED:
                self.fail(params, key, "required field is missing")
            return None if default is _REQUIRED else default
        return params.pop(key)

    def text(self, params: Params, key: str, default: Any = _REQUIRED) -> Optional[str]:
        value = self._pop(params, key, default)
        if value is None or isinstance(value, str):
            return value
        self.fail(params, key, f"expected text, got {value!r}")
        return None

    def texts(self, params: Params, key: str, default: Any = _REQUIRED) -> Tuple[str, ...]:
        value = self._pop(params, key, default)
        if value is None:
            return ()
        if not isinstance(value, list) or not all(isinstance(item, str) for item in value):
            self.fail(params, key, f"expected a list of text, got {value!r}")
            return ()
        return tuple(value)

    def real(self, params: Params, key: str, default: Any = _REQUIRED) -> Optional[float]:
        value = self._pop(params, key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(params, key, f"expected a number, got {value!r}")
            return None
        return float(value)

    def integer(self, params: Params, key: str, default: Any = _REQUIRED) -> Optional[int]:
        value = self._pop(params, key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(params, key, f"expected an integer, got {value!r}")
            return None
        return value

    def boolean(self, params: Params, key: str, default: Any = _REQUIRED) -> Optional[bool]:
        value = self._pop(params, key, default)
        if value is None or isinstance(value, bool):
            return value
        self.fail(params, key, f"expected true or false, got {value!r}")
        return None

    def enum(self, params: Params, key: str, enum_type, default: Any = _REQUIRED):
        value = self._pop(params, key, default)
        if value is None:
            return None
        try:
            return enum_type(value)
        except ValueError:
            choices = ", ".join(member.value for member in enum_type)
            self.fail(params, key, f"{value!r} is not one of {{{choices}}}")
            return None

    def obj(self, params: Params, key: str, default: Any = _REQUIRED) -> Optional[Params]:
        value = self._pop(params, key, default)
        if value is None or isinstance(value, Params):
            return value
        self.fail(params, key, f"expected an object, got {value!r}")
        return None

    def objects(self, params: Params, key: str) -> List[Params]:
        value = self._pop(params, key, _REQUIRED)
        if value is None:
            return []
        if not isinstance(value, list) or not all(isinstance(item, Params) for item in value):
            self.fail(params, key, "expected a list of objects")
            return []
        return value

    def finish(self, params: Params) -> None:
        """Unknown fields are violations in strict mode and logged otherwise."""
        for key in list(params.keys()):
            if self.strict:
                self.fail(params, key, "unknown field")
            else:
                logger.warning("Ignoring unknown field '%s%s'", params.history, key)
            params.pop(key)

    def check(self, params: Params, problems: Iterable[str]) -> None:
        self.violations.extend(f"{params.history}{problem}" for problem in problems)

    def raise_if_invalid(self) -> None:
        if self.violations:
            raise SchemaViolation(self.violations, source=self.source)

    # Spec objects

    def test_case(self, params: Params) -> Optional[TestCase]:
        name = self.text(params, "name")
        object_under_investigation = self.text(params, "object_under_investigation", "")
        system_under_test = self.text(params, "system_under_test", "")
        functions_under_test = self.texts(params, "functions_under_test", [])
        poi = self.enum(params, "purpose_of_investigation", PurposeOfInvestigation)
        test_criteria = self.texts(params, "test_criteria")
        qualification_strategy = self.text(params, "qualification_strategy", None)
        self.finish(params)
        if name is None or poi is None:
            return None
        test_case = TestCase(
            name=name,
            object_under_investigation=object_under_investigation or "",
            system_under_test=system_under_test or "",
            functions_under_test=functions_under_test,
            purpose_of_investigation=poi,
            test_criteria=test_criteria,
            qualification_strategy=qualification_strategy,
        )
        self.check(params, test_case.violations())
        return test_case

    def domain(self, params: Params):
        domain_type = self.text(params, "type")
        if domain_type == "continuous":
            low = self.real(params, "low")
            high = self.real(params, "high")
            unit = self.text(params, "unit", "")
            self.finish(params)
            if low is None or high is None:
                return None
            return ContinuousRange(low=low, high=high, unit=unit or "")
        if domain_type == "categorical":
            labels = self.texts(params, "labels")
            self.finish(params)
            return Categorical(labels=labels)
        if domain_type is not None:
            self.fail(params, "type", f"{domain_type!r} is not one of {{continuous, categorical}}")
        return None

    def factor(self, params: Params) -> Optional[Factor]:
        name = self.text(params, "name")
        role = self.enum(params, "role", FactorRole)
        domain_params = self.obj(params, "domain")
        domain = self.domain(domain_params) if domain_params is not None else None
        levels = params.pop("levels", None) if "levels" in params else None
        self.finish(params)
        if levels is not None:
            if not isinstance(levels, list):
                self.fail(params, "levels", f"expected a list, got {levels!r}")
                levels = None
            elif isinstance(domain, ContinuousRange):
                if any(
                    isinstance(level, bool) or not isinstance(level, (int, float))
                    for level in levels
                ):
                    self.fail(params, "levels", "continuous factor levels must be numbers")
                    levels = None
                else:
                    levels = tuple(float(level) for level in levels)
            else:
                levels = tuple(levels)
        if name is None or role is None or domain is None:
            return None
        factor = Factor(name=name, role=role, domain=domain, levels=levels)
        self.check(params, factor.violations())
        return factor

    def response(self, params: Params) -> Optional[ResponseMetric]:
        name = self.text(params, "name")
        unit = self.text(params, "unit", "")
        description = self.text(params, "description", "")
        self.finish(params)
        if not name:
            return None
        return ResponseMetric(name=name, unit=unit or "", description=description or "")

    def design_request(self, params: Params) -> Optional[DesignRequest]:
        family = self.enum(params, "family", DesignFamily)
        parameters = self.obj(params, "parameters", None)
        block_factor = self.text(params, "block_factor", None)
        advice_params = self.obj(params, "advice", None)
        advice = None
        if advice_params is not None:
            max_treatments = self.integer(advice_params, "max_treatments")
            fluctuations = self.boolean(advice_params, "fluctuations_expected", False)
            nonlinear = self.boolean(advice_params, "nonlinear_expected", False)
            self.finish(advice_params)
            if max_treatments is not None:
                advice = DesignAdvice(max_treatments, bool(fluctuations), bool(nonlinear))
        self.finish(params)
        if family is None:
            return None
        return DesignRequest(
            family=family,
            parameters=parameters.as_dict(quiet=True) if parameters is not None else {},
            block_factor=block_factor,
            advice=advice,
        )

    def reference(self, params: Params, key: str, kind: str):
        """A nested spec given either inline or as a path relative to the containing file."""
        if key not in params:
            self.fail(params, key, "required field is missing")
            return None, None
        value = params.pop(key)
        if isinstance(value, str):
            path = Path(value)
            if not path.is_absolute() and self.base_dir is not None:
                path = self.base_dir / path
            try:
                nested = parse_spec(path, strict=self.strict)
            except SchemaViolation as error:
                self.violations.extend(f"{params.history}{key} -> {v}" for v in error.violations)
                return None, value
            except (MalformedFile, UnknownKind) as error:
                self.fail(params, key, str(error))
                return None, value
            if not isinstance(nested, KINDS[kind]):
                self.fail(params, key, f"{value} is not a {kind}")
                return None, value
            return nested, value
        if isinstance(value, Params):
            nested_kind = value.pop("kind", kind)
            if nested_kind != kind:
                self.fail(value, "kind", f"expected {kind!r}, got {nested_kind!r}")
                return None, None
            value.pop("version", None)
            return getattr(self, kind)(value), None
        self.fail(params, key, "expected an object or a relative path")
        return None, None

    def test_specification(self, params: Params) -> Optional[TestSpecification]:
        test_case, test_case_ref = self.reference(params, "test_case", "test_case")
        configuration = self.text(params, "test_system_configuration", "")
        factors = [self.factor(factor) for factor in self.objects(params, "factors")]
        responses = [self.response(response) for response in self.objects(params, "responses")]
        design_params = self.obj(params, "test_design")
        test_design = self.design_request(design_params) if design_params is not None else None
        preliminary = self.enum(params, "preliminary_purpose", PreliminaryPurpose, None)
        self.finish(params)
        if (
            test_case is None
            or test_design is None
            or any(factor is None for factor in factors)
            or any(response is None for response in responses)
        ):
            return None
        spec = TestSpecification(
            test_case=test_case,
            test_system_configuration=configuration or "",
            factors=tuple(factors),
            responses=tuple(responses),
            test_design=test_design,
            preliminary_purpose=preliminary,
            test_case_ref=test_case_ref,
        )
        self.check(params, spec.violations())
        return spec

    def experiment_specification(self, params: Params) -> Optional[ExperimentSpecification]:
        test_spec, test_spec_ref = self.reference(
            params, "test_specification", "test_specification"
        )
        setup = self.obj(params, "experiment_setup")
        binding = None
        if setup is not None:
            command = setup.pop("command", None) if "command" in setup else None
            if isinstance(command, str):
                command = command.split()
            if not isinstance(command, list) or not all(isinstance(c, str) for c in command):
                self.fail(setup, "command", "expected a command line (list of text)")
                command = None
            environment = self.obj(setup, "environment", None)
            timeout = self.real(setup, "timeout", 60.0)
            fresh_process = self.boolean(setup, "fresh_process", False)
            self.finish(setup)
            if command is not None and timeout is not None:
                binding = RunnerBinding(
                    command=tuple(command),
                    environment={
                        str(k): str(v)
                        for k, v in (environment or Params({})).as_dict(quiet=True).items()
                    },
                    timeout=timeout,
                    fresh_process=bool(fresh_process),
                )
        design_params = self.obj(params, "experiment_design")
        design = None
        if design_params is not None:
            master_seed = self.integer(design_params, "master_seed")
            replicates = self.integer(design_params, "replicates", 1)
            design_ref = self.text(design_params, "design", None)
            self.finish(design_params)
            if master_seed is not None and replicates is not None:
                design = ExperimentDesign(master_seed, replicates, design_ref)
        self.finish(params)
        if test_spec is None or binding is None or design is None:
            return None
        spec = ExperimentSpecification(
            test_specification=test_spec,
            experiment_setup=binding,
            experiment_design=design,
            test_specification_ref=test_spec_ref,
            base_dir=self.base_dir,
        )
        self.check(params, spec.violations())
        return spec


def parse_spec_data(
    data: Dict[str, Any],
    strict: bool = True,
    base_dir: Optional[Path] = None,
    source: Optional[str] = None,
) -> Spec:
    """Validates an already-loaded spec object. See `parse_spec`."""
    if "kind" not in data:
        raise SchemaViolation(["kind: required field is missing"], source=source)
    kind = data["kind"]
    if kind not in KINDS:
        raise UnknownKind(
            f"{source + ': ' if source else ''}unknown kind {kind!r}, expected one of "
            f"{sorted(KINDS)}"
        )
    params = Params(dict(data))
    params.pop("kind")
    reader = _SpecReader(strict=strict, base_dir=base_dir, source=source)
    version = reader.integer(params, "version")
    if version is not None and version != SPEC_VERSION:
        reader.fail(params, "version", f"unsupported version {version}, expected {SPEC_VERSION}")
    spec = getattr(reader, kind)(params)
    reader.raise_if_invalid()
    return spec


def parse_spec(path: Union[str, Path], strict: bool = True) -> Spec:
    """Loads and validates a test case, test specification or experiment specification file.

    # Parameters

    path : `Union[str, Path]`
        A local file or a URL. Nested specs referenced by relative path are resolved against the
        file's directory.
    strict : `bool`, optional (default = `True`)
        When `False`, unknown fields are logged and ignored instead of being violations.

    # Raises

    `MalformedFile` if the file cannot be read or is not a JSON object, `UnknownKind` if the
    `kind` is not recognised, `SchemaViolation` listing every failed invariant by field path.
    """
    data, base_dir = _read_json(path)
    return parse_spec_data(data, strict=strict, base_dir=base_dir, source=str(path))


def _serialize_factor(factor: Factor) -> Dict[str, Any]:
    if isinstance(factor.domain, ContinuousRange):
        domain: Dict[str, Any] = {
            "type": "continuous",
            "low": factor.domain.low,
            "high": factor.domain.high,
            "unit": factor.domain.unit,
        }
    else:
        domain = {"type": "categorical", "labels": list(factor.domain.labels)}
    data = {"name": factor.name, "role": factor.role.value, "domain": domain}
    if factor.levels is not None:
        data["levels"] = list(factor.levels)
    return data


def _serialize_body(spec: Spec) -> Dict[str, Any]:
    if isinstance(spec, TestCase):
        return {
            "name": spec.name,
            "object_under_investigation": spec.object_under_investigation,
            "system_under_test": spec.system_under_test,
            "functions_under_test": list(spec.functions_under_test),
            "purpose_of_investigation": spec.purpose_of_investigation.value,
            "test_criteria": list(spec.test_criteria),
            "qualification_strategy": spec.qualification_strategy,
        }
    if isinstance(spec, TestSpecification):
        request = spec.test_design
        design: Dict[str, Any] = {
            "family": request.family.value,
            "parameters": dict(request.parameters),
            "block_factor": request.block_factor,
        }
        if request.advice is not None:
            design["advice"] = {
                "max_treatments": request.advice.max_treatments,
                "fluctuations_expected": request.advice.fluctuations_expected,
                "nonlinear_expected": request.advice.nonlinear_expected,
            }
        return {
            "test_case": spec.test_case_ref or _serialize_body(spec.test_case),
            "test_system_configuration": spec.test_system_configuration,
            "factors": [_serialize_factor(factor) for factor in spec.factors],
            "responses": [
                {"name": r.name, "unit": r.unit, "description": r.description}
                for r in spec.responses
            ],
            "test_design": design,
            "preliminary_purpose": spec.preliminary_purpose.value
            if spec.preliminary_purpose
            else None,
        }
    setup = spec.experiment_setup
    return {
        "test_specification": spec.test_specification_ref
        or _serialize_body(spec.test_specification),
        "experiment_setup": {
            "command": list(setup.command),
            "environment": dict(setup.environment),
            "timeout": setup.timeout,
            "fresh_process": setup.fresh_process,
        },
        "experiment_design": {
            "design": spec.experiment_design.design,
            "master_seed": spec.experiment_design.master_seed,
            "replicates": spec.experiment_design.replicates,
        },
    }


def spec_kind(spec: Spec) -> str:
    for kind, spec_type in KINDS.items():
        if isinstance(spec, spec_type):
            return kind
    raise ValueError(f"Not a spec object: {spec!r}")


def serialize_spec(spec: Spec) -> Dict[str, Any]:
    """The JSON object `parse_spec_data` turns back into `spec`."""
    return {"kind": spec_kind(spec), "version": SPEC_VERSION, **_serialize_body(spec)}


def write_spec(spec: Spec, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(serialize_spec(spec), indent=2) + "\n", encoding="utf-8")


def check_unique_test_case_names(directory: Union[str, Path]) -> None:
    """Raises `SchemaViolation` if two test case files in `directory` share a name."""
    seen: Dict[str, str] = {}
    problems = []
    for path in sorted(Path(directory).glob("*.json")):
        try:
            data, _ = _read_json(path)
        except MalformedFile:
            continue
        if data.get("kind") != "test_case" or not isinstance(data.get("name"), str):
            continue
        name = data["name"]
        if name in seen:
            problems.append(f"name: test case name '{name}' used by {seen[name]} and {path.name}")
        else:
            seen[name] = path.name
    if problems:
        raise SchemaViolation(problems, source=str(directory))
