#!/usr/bin/env python3
"""
The `doeflow` command line: validate specifications, choose and generate designs, build run
plans, execute them against an experiment process, and analyse the results.

Exit codes are 0 on success, 2 for invalid specifications or design requests, 3 for execution
errors and 4 for analysis errors.
"""
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, List, NoReturn, Optional

import typer
from allennlp.common.checks import ConfigurationError

from doeflow.analysis.report import AnalysisReport, Decision, analyze_results, write_report
from doeflow.common.checks import (
    AnalysisError,
    DesignError,
    MalformedFile,
    RunnerError,
    SchemaViolation,
)
from doeflow.common.util import canonical_json, sha256_text
from doeflow.design_gen.aliasing import alias_structure, default_model_terms, detect_confounding
from doeflow.design_gen.run_plan import (
    design_factors,
    load_plan,
    plan_from_spec,
    write_design,
    write_plan,
)
from doeflow.example_sut.model import SutConfig
from doeflow.runner.executor import ExecutionOptions, execute_plan, experiment_plan
from doeflow.runner.results import ResultRow, load_results
from doeflow.spec_model.parsing import check_unique_test_case_names, parse_spec, serialize_spec
from doeflow.spec_model.recommenders import (
    recommend_analysis,
    recommend_design,
    recommend_nuisance_handling,
)
from doeflow.spec_model.schema import (
    DesignFamily,
    ExperimentSpecification,
    FactorRole,
    PurposeOfInvestigation,
    Spec,
    TestSpecification,
)

app = typer.Typer(help="Design of experiments workflow: specify, design, run, analyse.")
recommend_app = typer.Typer(help="Look up the analysis, design and nuisance-factor guidelines.")
app.add_typer(recommend_app, name="recommend")

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 2
EXIT_EXECUTION = 3
EXIT_ANALYSIS = 4

DATA_DIR = Path(__file__).parent / "data"
FRT_EXPERIMENT = DATA_DIR / "frt_experiment_specification.json"
SCREENING_METRIC = "peak_speed_dev"

# Emoji's used in typer.secho calls
WARNING = "\U000026A0"
SUCCESS = "\U00002705"
RUNNING = "\U000023F3"
SAVING = "\U0001F4BE"
SCORE = "\U0001F4CB"


class OutputFormat(str, Enum):
    TEXT = "text"
    JSON = "json"


@dataclass(frozen=True)
class CliOptions:
    seed: Optional[int]
    out_dir: Path
    lenient: bool
    format: OutputFormat

    @property
    def json(self) -> bool:
        return self.format == OutputFormat.JSON


def _options(ctx: typer.Context) -> CliOptions:
    if ctx.obj is None:
        ctx.obj = CliOptions(None, Path("doeflow_out"), False, OutputFormat.TEXT)
    return ctx.obj


def _say(options: CliOptions, message: str, **style: Any) -> None:
    """Status output; kept off stdout when stdout carries JSON."""
    typer.secho(message, err=options.json, **style)


def _emit(options: CliOptions, data: Dict[str, Any], lines: List[str]) -> None:
    if options.json:
        typer.echo(json.dumps(data, indent=2, sort_keys=True))
    else:
        for line in lines:
            typer.echo(line)


def _fail(message: str, code: int) -> NoReturn:
    typer.secho(f"{WARNING} {message}", fg=typer.colors.RED, bold=True, err=True)
    raise typer.Exit(code)


@contextmanager
def _exit_codes() -> Iterator[None]:
    """Maps the error families to the documented exit codes."""
    try:
        yield
    except (ConfigurationError, DesignError) as error:
        _fail(str(error), EXIT_VALIDATION)
    except RunnerError as error:
        _fail(str(error), EXIT_EXECUTION)
    except AnalysisError as error:
        _fail(str(error), EXIT_ANALYSIS)


def _load_spec(path: Path, options: CliOptions) -> Spec:
    return parse_spec(path, strict=not options.lenient)


def _test_specification(spec: Spec, path: Path) -> TestSpecification:
    if isinstance(spec, ExperimentSpecification):
        return spec.test_specification
    if isinstance(spec, TestSpecification):
        return spec
    raise SchemaViolation(["kind: expected a test or experiment specification"], str(path))


def _experiment_specification(spec: Spec, path: Path) -> ExperimentSpecification:
    if not isinstance(spec, ExperimentSpecification):
        raise SchemaViolation(["kind: expected an experiment specification"], str(path))
    return spec


def spec_digest(spec: Spec) -> str:
    """Digest of a specification's canonical form, nested references resolved."""
    return sha256_text(canonical_json(serialize_spec(spec)))


def _parse_parameter(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


@app.callback()
def main(
    ctx: typer.Context,
    seed: Optional[int] = typer.Option(
        None, help="Master seed; defaults to the experiment specification's, else 0."
    ),
    out_dir: Path = typer.Option(Path("doeflow_out"), help="Directory for every output file."),
    lenient: bool = typer.Option(
        False, help="Ignore unknown spec fields and tolerate a partial last results row."
    ),
    format: OutputFormat = typer.Option(OutputFormat.TEXT, help="Output format of results."),
    verbose: bool = typer.Option(False, help="Log debug output."),
) -> None:
    """Design of experiments workflow: specify, design, run, analyse."""
    if verbose:
        logging.basicConfig(format="%(asctime)s : %(message)s", level=logging.DEBUG)
    ctx.obj = CliOptions(seed=seed, out_dir=out_dir, lenient=lenient, format=format)


@app.command()
def validate(
    ctx: typer.Context,
    paths: List[Path] = typer.Argument(..., help="Spec files, or directories of spec files."),
) -> None:
    """Validates specification files. Test case names must be unique per directory."""
    options = _options(ctx)
    files: List[Path] = []
    failures: Dict[str, List[str]] = {}
    for path in paths:
        if path.is_dir():
            files.extend(sorted(path.glob("*.json")))
            try:
                check_unique_test_case_names(path)
            except SchemaViolation as error:
                failures[str(path)] = error.violations
        else:
            files.append(path)
    for path in files:
        try:
            _load_spec(path, options)
        except MalformedFile as error:
            failures[str(path)] = [f"unreadable: {error}"]
        except SchemaViolation as error:
            failures[str(path)] = error.violations
        except ConfigurationError as error:
            failures[str(path)] = [str(error)]
    lines = []
    for path in files:
        if str(path) not in failures:
            lines.append(f"{SUCCESS} {path}: valid")
    for source, problems in failures.items():
        lines.append(f"{WARNING} {source}: invalid")
        lines.extend(f"    {problem}" for problem in problems)
    _emit(
        options,
        {"valid": [str(p) for p in files if str(p) not in failures], "invalid": failures},
        lines,
    )
    if failures:
        raise typer.Exit(EXIT_VALIDATION)


@app.command()
def design(
    ctx: typer.Context,
    spec_path: Path = typer.Argument(..., help="Test or experiment specification."),
    family: Optional[DesignFamily] = typer.Option(None, help="Override the design family."),
    param: List[str] = typer.Option(
        None, help="Override a family parameter, as key=value (JSON values allowed)."
    ),
    block: Optional[str] = typer.Option(None, help="Block on this factor."),
    replicates: int = typer.Option(1, help="Treatment reproductions (within each block)."),
    plan: bool = typer.Option(False, help="Also write the randomized (or blocked) run plan."),
) -> None:
    """Generates the design a specification asks for and writes it to the output directory."""
    options = _options(ctx)
    with _exit_codes():
        spec = _load_spec(spec_path, options)
        test_spec = _test_specification(spec, spec_path)
        request = test_spec.test_design
        if family is not None:
            request = replace(request, family=family, parameters={})
        if param:
            parameters = dict(request.parameters)
            for item in param:
                key, separator, value = item.partition("=")
                if not separator:
                    raise ConfigurationError(f"--param expects key=value, got {item!r}")
                parameters[key.strip()] = _parse_parameter(value.strip())
            request = replace(request, parameters=parameters)
        if block is not None:
            request = replace(request, block_factor=block)
        test_spec = replace(test_spec, test_design=request)
        seed = options.seed
        if seed is None:
            seed = (
                spec.experiment_design.master_seed
                if isinstance(spec, ExperimentSpecification)
                else 0
            )

        factors, _ = design_factors(test_spec)
        advice_lines = []
        advice = None
        if request.advice is not None:
            advice = recommend_design(
                len(factors),
                request.advice.max_treatments,
                request.advice.fluctuations_expected,
                request.advice.nonlinear_expected,
            )
            advice_lines = [
                f"{SCORE} Recommended: {advice.category.value} designs "
                f"({', '.join(f.value for f in advice.suggested_families)})",
                f"    {advice.rationale}",
            ]
        generated, treatments, run_plan = plan_from_spec(test_spec, seed, replicates)

        options.out_dir.mkdir(parents=True, exist_ok=True)
        design_path = options.out_dir / "design.csv"
        write_design(generated, treatments, design_path)
        plan_path = options.out_dir / "plan.csv"
        if plan:
            write_plan(run_plan, plan_path)

        aliases: Dict[str, List[str]] = {}
        confounded: List[Dict[str, Any]] = []
        if generated.is_two_level:
            aliases = {term: sorted(chain) for term, chain in alias_structure(generated).items()}
            if generated.family == DesignFamily.FRACTIONAL_FACTORIAL:
                pairs = detect_confounding(generated, default_model_terms(generated.factor_names))
                confounded = [
                    {"term_a": p.term_a, "term_b": p.term_b, "correlation": p.correlation}
                    for p in pairs
                ]

    lines = list(advice_lines)
    lines.append(
        f"{SUCCESS} {generated.family.value} design: {generated.n_runs} treatments over "
        f"{', '.join(generated.factor_names)}"
    )
    if generated.metadata.resolution is not None:
        lines.append(f"    resolution {generated.metadata.resolution}")
    if aliases:
        lines.append(f"{SCORE} Alias structure")
        for term, chain in aliases.items():
            lines.append(f"    {term} = {' = '.join(chain) if chain else '(clear)'}")
    for pair in confounded:
        lines.append(
            f"{WARNING} {pair['term_a']} is confounded with {pair['term_b']} "
            f"(|r| = {pair['correlation']:.3f})"
        )
    lines.append(f"{SAVING} Design saved to: {design_path}")
    if plan:
        lines.append(
            f"{SAVING} Plan of {len(run_plan)} runs saved to: {plan_path} "
            f"(digest {run_plan.digest()})"
        )
    _emit(
        options,
        {
            "family": generated.family.value,
            "n_treatments": generated.n_runs,
            "n_runs": len(run_plan),
            "seed": seed,
            "design": generated.to_dict(),
            "aliases": aliases,
            "confounded": confounded,
            "advice": None
            if advice is None
            else {
                "category": advice.category.value,
                "families": [f.value for f in advice.suggested_families],
                "rationale": advice.rationale,
            },
            "design_path": str(design_path),
            "plan_path": str(plan_path) if plan else None,
            "plan_digest": run_plan.digest(),
        },
        lines,
    )


def _progress(options: CliOptions, total: int):
    def report(row: ResultRow) -> None:
        if row.ok:
            _say(options, f"{RUNNING} run {row.run_id}/{total} ok")
        else:
            _say(
                options,
                f"{WARNING} run {row.run_id}/{total} {row.status.value}: {row.message}",
                fg=typer.colors.YELLOW,
            )

    return report


@app.command()
def run(
    ctx: typer.Context,
    experiment: Path = typer.Argument(..., help="Experiment specification."),
    plan: Optional[Path] = typer.Option(
        None, help="Run plan written by `design --plan`; generated from the spec by default."
    ),
    results: Optional[Path] = typer.Option(
        None, help="Results CSV; <out-dir>/results.csv by default."
    ),
    parallel: int = typer.Option(1, min=1, help="Number of concurrent runner sessions."),
    resume: bool = typer.Option(False, help="Continue an interrupted execution of the plan."),
) -> None:
    """Executes a run plan against the experiment process the specification binds."""
    options = _options(ctx)
    results_path = results or options.out_dir / "results.csv"
    with _exit_codes():
        spec = _experiment_specification(_load_spec(experiment, options), experiment)
        if plan is not None:
            try:
                run_plan = load_plan(plan)
            except (OSError, ValueError, KeyError) as error:
                raise DesignError(f"Cannot load plan {plan}: {error}")
        else:
            if options.seed is not None:
                setup = replace(spec.experiment_design, master_seed=options.seed)
                spec = replace(spec, experiment_design=setup)
            run_plan = experiment_plan(spec)
        _say(options, f"{RUNNING} Executing {len(run_plan)} runs", bold=True)
        result_set = execute_plan(
            run_plan,
            spec,
            results_path,
            ExecutionOptions(
                parallelism=parallel,
                resume=resume,
                on_result=_progress(options, len(run_plan)),
            ),
        )
    counts = result_set.status_counts()
    failed = len(result_set.rows) - counts["ok"]
    lines = [
        f"{SUCCESS} Executed {len(result_set.rows)} runs: "
        + ", ".join(f"{status} {count}" for status, count in counts.items()),
        f"{SAVING} Results saved to: {results_path}",
    ]
    if failed:
        lines.append(f"{WARNING} {failed} runs failed and will be excluded from the analysis")
    _emit(
        options,
        {
            "results_path": str(results_path),
            "plan_digest": result_set.plan_digest,
            "status_counts": counts,
        },
        lines,
    )


def _write_and_show(options: CliOptions, report: AnalysisReport, name: str) -> None:
    json_path, text_path = write_report(report, options.out_dir, name)
    if options.json:
        typer.echo(report.to_json(), nl=False)
    else:
        typer.echo(report.render_text(), nl=False)
    _say(options, f"{SAVING} Report saved to: {json_path} and {text_path}", bold=True)


@app.command()
def analyze(
    ctx: typer.Context,
    results: Path = typer.Argument(..., help="Results CSV written by `run`."),
    spec: Optional[Path] = typer.Option(
        None, help="Test or experiment specification; needed by --method auto."
    ),
    method: str = typer.Option("auto", help="auto, anova, regression or ancova."),
    alpha: float = typer.Option(0.05, help="Significance level."),
    metric: List[str] = typer.Option(None, help="Metric to analyse; all by default."),
    term: List[str] = typer.Option(None, help="Model term, such as A, A:B, A^2, grp(A)."),
    name: str = typer.Option("analysis", help="Base name of the report files."),
) -> None:
    """Analyses a results file as the purpose of investigation (or --method) calls for."""
    options = _options(ctx)
    with _exit_codes():
        if method not in ("auto", "anova", "regression", "ancova"):
            raise AnalysisError(f"Unknown method {method!r}")
        test_spec = None
        digest = None
        if spec is not None:
            loaded = _load_spec(spec, options)
            test_spec = _test_specification(loaded, spec)
            digest = spec_digest(loaded)
        result_set = load_results(results, lenient=options.lenient)
        report = analyze_results(
            result_set,
            test_spec,
            method=method,
            alpha=alpha,
            metrics=metric or None,
            terms=term or None,
            seed=options.seed or 0,
            spec_digest=digest,
        )
        if report.recommendation is not None:
            _say(options, f"{SCORE} Table row fired: {report.recommendation.row}")
    _write_and_show(options, report, name)


def screening_conclusions(report: AnalysisReport, metric: str = SCREENING_METRIC) -> List[str]:
    """What the screening means for the next test specification, judged on `metric`."""
    analysis = report.metric(metric)
    conclusions = [verdict.describe() for verdict in analysis.verdicts]
    for followup in analysis.followups:
        if followup.underpowered:
            advice = (
                f"{followup.suggested_replicates} replicates reach power {followup.target_power}"
                if followup.suggested_replicates
                else "more replicates are needed"
            )
            conclusions.append(
                f"{followup.factor}: low power ({followup.estimate.power:.2f}) to detect its "
                f"observed effect; {advice}"
            )
    dropped = [v.factor for v in analysis.verdicts if v.decision == Decision.DROP]
    if dropped:
        conclusions.append(f"Treatment factors left for the main experiment exclude {dropped}")
    return conclusions


@app.command("screen-demo")
def screen_demo(
    ctx: typer.Context,
    noise: float = typer.Option(0.001, min=0.0, help="Noise sd added to every metric."),
    replicates: int = typer.Option(2, min=1, help="Treatment reproductions per block."),
    parallel: int = typer.Option(1, min=1, help="Number of concurrent runner sessions."),
    alpha: float = typer.Option(0.05, help="Significance level."),
) -> None:
    """Screens the bundled fault ride-through case end to end: design, run, analyse."""
    options = _options(ctx)
    out_dir = options.out_dir
    with _exit_codes():
        spec = _experiment_specification(parse_spec(FRT_EXPERIMENT), FRT_EXPERIMENT)
        out_dir.mkdir(parents=True, exist_ok=True)
        config_path = out_dir / "sut_config.json"
        config = replace(SutConfig(), noise_sd=noise)
        config_path.write_text(
            json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        binding = spec.experiment_setup
        spec = replace(
            spec,
            experiment_setup=replace(
                binding, command=binding.command + ("--config", str(config_path.resolve()))
            ),
        )
        seed = options.seed if options.seed is not None else spec.experiment_design.master_seed
        test_spec = spec.test_specification
        _, _, run_plan = plan_from_spec(test_spec, seed, replicates)
        plan_path = out_dir / "screen_plan.csv"
        write_plan(run_plan, plan_path)
        _say(options, f"{RUNNING} Screening with {len(run_plan)} runs (seed {seed})", bold=True)
        result_set = execute_plan(
            run_plan,
            spec,
            out_dir / "screen_results.csv",
            ExecutionOptions(parallelism=parallel, on_result=_progress(options, len(run_plan))),
        )
        report = analyze_results(
            result_set,
            test_spec,
            alpha=alpha,
            seed=seed,
            spec_digest=spec_digest(spec),
        )
        report.conclusions = screening_conclusions(report)
    _write_and_show(options, report, "screen_report")


@recommend_app.command("analysis")
def recommend_analysis_command(
    ctx: typer.Context,
    poi: Optional[PurposeOfInvestigation] = typer.Option(
        None, help="Purpose of investigation of the test case."
    ),
    screening: bool = typer.Option(False, help="Preliminary screening experiment."),
    nonlinearity_check: bool = typer.Option(False, help="Preliminary nonlinearity check."),
) -> None:
    """The analysis methods a purpose of investigation calls for."""
    options = _options(ctx)
    try:
        plan = recommend_analysis(poi, screening, nonlinearity_check)
    except (ConfigurationError, ValueError) as error:
        _fail(str(error), EXIT_VALIDATION)
    methods = [method.value for method in plan.methods]
    _emit(
        options,
        {"row": plan.row, "methods": methods, "note": plan.note},
        [f"{SCORE} {plan.row}: {', '.join(methods)}", f"    {plan.note}"],
    )


@recommend_app.command("design")
def recommend_design_command(
    ctx: typer.Context,
    factors: int = typer.Option(..., help="Number of treatment factors."),
    max_treatments: int = typer.Option(..., help="Treatment budget."),
    fluctuations: bool = typer.Option(False, help="Fluctuations in the responses are expected."),
    nonlinear: bool = typer.Option(False, help="Nonlinear behaviour is expected."),
) -> None:
    """The design category and families that suit a treatment budget."""
    options = _options(ctx)
    try:
        advice = recommend_design(factors, max_treatments, fluctuations, nonlinear)
    except ValueError as error:
        _fail(str(error), EXIT_VALIDATION)
    families = [family.value for family in advice.suggested_families]
    lines = [
        f"{SCORE} {advice.category.value}: {', '.join(families)}",
        f"    {advice.rationale}",
    ]
    if advice.infeasible_budget:
        lines.insert(0, f"{WARNING} The budget cannot estimate every main effect")
    _emit(
        options,
        {
            "category": advice.category.value,
            "families": families,
            "rationale": advice.rationale,
            "infeasible_budget": advice.infeasible_budget,
        },
        lines,
    )


@recommend_app.command("nuisance")
def recommend_nuisance_command(
    ctx: typer.Context,
    role: FactorRole = typer.Argument(..., help="Role of the nuisance factor."),
) -> None:
    """How a nuisance factor should be handled."""
    options = _options(ctx)
    concept = recommend_nuisance_handling(role)
    _emit(
        options,
        {"role": role.value, "handling": concept.value},
        [f"{SCORE} {role.value}: {concept.value}"],
    )


if __name__ == "__main__":
    app()
