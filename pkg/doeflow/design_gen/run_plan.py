import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from doeflow.common.checks import CardinalityMismatch, DesignError, RangeMissing, WrongRole
from doeflow.common.util import SplitMix64, canonical_json, format_value, mix, sha256_text
from doeflow.design_gen.design import Coding, Design, level_grid
from doeflow.design_gen.generators import build_design
from doeflow.spec_model.schema import (
    ContinuousRange,
    Factor,
    FactorRole,
    TestSpecification,
)

logger = logging.getLogger(__name__)

RANDOMIZATION_GENERATOR = "splitmix64"
# Coded values within this distance of the design region still count as inside it.
_RANGE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Treatment:
    """One assignment of a value to every design factor, in engineering units. `out_of_range`
    names the factors whose value lies outside the declared range (CCD axial points)."""

    values: Dict[str, Any]
    out_of_range: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Run:
    run_id: int
    treatment: Dict[str, Any]
    replicate: int
    seed: int
    block: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "treatment": dict(self.treatment),
            "block": self.block,
            "replicate": self.replicate,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class RunPlan:
    """The ordered list of runs to execute.

    # Parameters

    runs : `Tuple[Run, ...]`
        Run ids are 1..n in execution order.
    master_seed : `int`
        Every run seed is `mix(master_seed, run_id)`.
    factor_names : `Tuple[str, ...]`
        Treatment columns, the block factor (if any) last.
    provenance : `Dict[str, Any]`
        The design's metadata and the randomization record (generator name, drawn order).
    """

    runs: Tuple[Run, ...]
    master_seed: int
    factor_names: Tuple[str, ...]
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.runs)

    @property
    def run_ids(self) -> List[int]:
        return [run.run_id for run in self.runs]

    def blocks(self) -> Dict[str, List[Run]]:
        blocks: Dict[str, List[Run]] = {}
        for run in self.runs:
            blocks.setdefault(run.block, []).append(run)
        return blocks

    def to_dict(self) -> Dict[str, Any]:
        return {
            "master_seed": self.master_seed,
            "factor_names": list(self.factor_names),
            "provenance": self.provenance,
            "runs": [run.to_dict() for run in self.runs],
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form of the plan."""
        return sha256_text(canonical_json(self.to_dict()))


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_range(factor: Factor) -> ContinuousRange:
    domain = factor.domain
    if not isinstance(domain, ContinuousRange):
        raise RangeMissing(f"Factor '{factor.name}' has no continuous range to scale into")
    if not (math.isfinite(domain.low) and math.isfinite(domain.high)):
        raise RangeMissing(
            f"Factor '{factor.name}' needs a finite range, got [{domain.low}, {domain.high}]"
        )
    return domain


def _is_level_grid(distinct: Sequence[float], count: int) -> bool:
    """Whether `distinct` is exactly the `count` equally spaced points of [-1, +1]."""
    if count < 2 or len(distinct) != count:
        return False
    grid = level_grid(count)
    return bool(np.all(np.abs(np.asarray(distinct) - grid) <= _RANGE_TOLERANCE))


def _scale_column(
    column: np.ndarray, coding: Coding, factor: Factor
) -> Tuple[List[Any], List[bool]]:
    levels = factor.level_values()
    n = len(column)
    if coding == Coding.UNIT_CUBE_01:
        if levels is not None:
            index = np.minimum((column * len(levels)).astype(int), len(levels) - 1)
            return [levels[i] for i in index], [False] * n
        domain = _check_range(factor)
        return [domain.low + u * (domain.high - domain.low) for u in column], [False] * n

    if coding == Coding.CATEGORICAL_INDEX:
        if levels is None or column.max() >= len(levels):
            raise CardinalityMismatch(
                f"Factor '{factor.name}' needs {int(column.max()) + 1} levels to map level indices"
            )
        return [levels[int(i)] for i in column], [False] * n

    distinct = sorted(set(column.tolist()))
    on_grid = levels is not None and _is_level_grid(distinct, len(levels))
    if factor.is_categorical or on_grid:
        if levels is None or len(levels) != len(distinct):
            raise CardinalityMismatch(
                f"Factor '{factor.name}' has {len(levels or [])} levels but its design column "
                f"has {len(distinct)}"
            )
        if not on_grid:
            raise CardinalityMismatch(
                f"Factor '{factor.name}' has labels but its {coding.value} column values "
                f"{distinct} are not {len(levels)} equally spaced points in [-1, +1]"
            )
        # Grid index to declared level.
        return [levels[distinct.index(c)] for c in column], [False] * n

    domain = _check_range(factor)
    if levels is not None:
        logger.debug(
            "Factor '%s' declares %d levels, its %s column has %d; scaling affinely",
            factor.name,
            len(levels),
            coding.value,
            len(distinct),
        )
    # The coded extremes land exactly on the range ends.
    values = [
        domain.low
        if c == -1.0
        else domain.high
        if c == 1.0
        else domain.low + (c + 1.0) / 2.0 * (domain.high - domain.low)
        for c in column
    ]
    flags = [abs(c) > 1.0 + _RANGE_TOLERANCE for c in column]
    return values, flags


def scale_to_ranges(design: Design, factors: Sequence[Factor]) -> List[Treatment]:
    """Maps a coded design to engineering units, column `j` onto `factors[j]`.

    Level-coded columns map -1 to the factor's low end and +1 to its high end; points beyond
    (CCD axial points) are kept and flagged in `Treatment.out_of_range`, never clipped. When a
    factor declares L explicit levels or labels and its column holds exactly the L equally
    spaced points of [-1, +1], the i-th grid point maps to the i-th declared level; any other
    column (a rotatable CCD's five values, say) is scaled affinely. Unit-cube columns map
    [0, 1) onto the range, or onto the declared levels in equal-width bins.

    # Raises

    `CardinalityMismatch` if the factor count or level counts do not match, `RangeMissing` if
    a continuous mapping is needed for a factor without a finite range.
    """
    if len(factors) != design.k:
        raise CardinalityMismatch(
            f"Design has {design.k} columns but {len(factors)} factors were given"
        )
    columns = []
    flag_columns = []
    for j, factor in enumerate(factors):
        values, flags = _scale_column(design.matrix[:, j], design.coding[j], factor)
        columns.append(values)
        flag_columns.append(flags)
    treatments = []
    for i in range(design.n_runs):
        values = {}
        for j, factor in enumerate(factors):
            value = columns[j][i]
            values[factor.name] = float(value) if _is_number(value) else value
        out = tuple(factor.name for j, factor in enumerate(factors) if flag_columns[j][i])
        treatments.append(Treatment(values=values, out_of_range=out))
    n_flagged = sum(1 for treatment in treatments if treatment.out_of_range)
    if n_flagged:
        logger.warning("%d treatment(s) lie outside the declared factor ranges", n_flagged)
    return treatments


def _values(treatment: Union[Treatment, Dict[str, Any]]) -> Dict[str, Any]:
    return dict(treatment.values) if isinstance(treatment, Treatment) else dict(treatment)


def randomize_order(
    treatments: Sequence[Union[Treatment, Dict[str, Any]]], master_seed: int, replicates: int = 1
) -> RunPlan:
    """Executes every treatment `replicates` times in an order drawn by a Fisher-Yates shuffle
    driven by `SplitMix64(master_seed)`. The randomization record stores, for each run, the
    index `replicate_index * len(treatments) + treatment_index` it came from."""
    if not treatments:
        raise DesignError("Cannot plan an experiment without treatments")
    if replicates < 1:
        raise DesignError(f"replicates must be >= 1, got {replicates}")
    base = [_values(treatment) for treatment in treatments]
    order = list(range(len(base) * replicates))
    SplitMix64(master_seed).shuffle(order)
    runs = []
    for position, index in enumerate(order):
        run_id = position + 1
        replicate, treatment_index = divmod(index, len(base))
        runs.append(
            Run(
                run_id=run_id,
                treatment=dict(base[treatment_index]),
                replicate=replicate + 1,
                seed=mix(master_seed, run_id),
            )
        )
    return RunPlan(
        runs=tuple(runs),
        master_seed=master_seed,
        factor_names=tuple(base[0]),
        provenance={
            "randomization": {
                "generator": RANDOMIZATION_GENERATOR,
                "replicates": replicates,
                "order": order,
            }
        },
    )


def block_design(
    treatments: Sequence[Union[Treatment, Dict[str, Any]]],
    block_factor: Factor,
    master_seed: int,
    replicates: int = 1,
) -> RunPlan:
    """Reproduces the full treatment set (times `replicates`) in one block per level of
    `block_factor`, in declared level order, with the order inside each block independently
    randomized. All blocks draw from one `SplitMix64(master_seed)` stream, block after block.
    Each run's treatment also carries the block factor's level.

    # Raises

    `WrongRole` unless `block_factor` is a known, controllable nuisance factor.
    """
    if block_factor.role != FactorRole.NUISANCE_KNOWN_CONTROLLABLE:
        raise WrongRole(
            f"Only {FactorRole.NUISANCE_KNOWN_CONTROLLABLE.value} factors can be blocked, "
            f"'{block_factor.name}' is {block_factor.role.value}"
        )
    levels = block_factor.level_values()
    if levels is None or len(levels) < 2:
        raise DesignError(f"Block factor '{block_factor.name}' needs at least 2 explicit levels")
    if not treatments:
        raise DesignError("Cannot plan an experiment without treatments")
    if replicates < 1:
        raise DesignError(f"replicates must be >= 1, got {replicates}")

    base = [_values(treatment) for treatment in treatments]
    generator = SplitMix64(master_seed)
    runs: List[Run] = []
    orders = []
    for level in levels:
        order = list(range(len(base) * replicates))
        generator.shuffle(order)
        orders.append(order)
        for index in order:
            run_id = len(runs) + 1
            replicate, treatment_index = divmod(index, len(base))
            treatment = dict(base[treatment_index])
            treatment[block_factor.name] = level
            runs.append(
                Run(
                    run_id=run_id,
                    treatment=treatment,
                    replicate=replicate + 1,
                    seed=mix(master_seed, run_id),
                    block=str(level),
                )
            )
    return RunPlan(
        runs=tuple(runs),
        master_seed=master_seed,
        factor_names=tuple(base[0]) + (block_factor.name,),
        provenance={
            "randomization": {
                "generator": RANDOMIZATION_GENERATOR,
                "replicates": replicates,
                "block_factor": block_factor.name,
                "blocks": [str(level) for level in levels],
                "order": orders,
            }
        },
    )


def design_factors(spec: TestSpecification) -> Tuple[List[Factor], Optional[Factor]]:
    """The factors the design spans and the block factor, if the request names one.

    Blocking a factor declared as a treatment factor (fixing a screened factor for further
    analysis) re-declares it as a known, controllable nuisance factor.
    """
    block_name = spec.test_design.block_factor
    block_factor = None
    if block_name is not None:
        block_factor = spec.factor(block_name)
        if block_factor.role.is_treatment:
            logger.warning(
                "Blocking treatment factor '%s'; it is handled as a %s factor from here on",
                block_name,
                FactorRole.NUISANCE_KNOWN_CONTROLLABLE.value,
            )
            block_factor = replace(block_factor, role=FactorRole.NUISANCE_KNOWN_CONTROLLABLE)
    factors = [
        factor for factor in spec.factors if factor.is_treatment and factor.name != block_name
    ]
    if not factors:
        raise DesignError("No treatment factors left to design over")
    return factors, block_factor


def plan_from_spec(
    spec: TestSpecification, master_seed: int, replicates: int = 1
) -> Tuple[Design, List[Treatment], RunPlan]:
    """Design, scaled treatments and run plan for a test specification."""
    factors, block_factor = design_factors(spec)
    design = build_design(spec.test_design, factors, master_seed)
    treatments = scale_to_ranges(design, factors)
    if block_factor is not None:
        plan = block_design(treatments, block_factor, master_seed, replicates)
    else:
        plan = randomize_order(treatments, master_seed, replicates)
    plan = replace(plan, provenance={**plan.provenance, "design": design.to_dict()})
    return design, treatments, plan


def _write_csv(path: Union[str, Path], header: List[str], rows: List[List[Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])


def _write_json(path: Union[str, Path], data: Dict[str, Any]) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_design(design: Design, treatments: Sequence[Treatment], path: Union[str, Path]) -> None:
    """Writes the scaled treatments to `path` (CSV) and the design metadata to a JSON sidecar
    next to it."""
    path = Path(path)
    names = list(design.factor_names)
    _write_csv(path, names, [[t.values[name] for name in names] for t in treatments])
    sidecar = design.to_dict()
    sidecar["out_of_range"] = [
        {"row": i + 1, "factors": list(t.out_of_range)}
        for i, t in enumerate(treatments)
        if t.out_of_range
    ]
    _write_json(path.with_suffix(".json"), sidecar)


def write_plan(plan: RunPlan, path: Union[str, Path]) -> None:
    """Writes the plan to `path` (CSV: run_id, block, replicate, seed, factors...) and its full
    JSON form, which `load_plan` reads back, to a sidecar next to it."""
    path = Path(path)
    names = list(plan.factor_names)
    _write_csv(
        path,
        ["run_id", "block", "replicate", "seed"] + names,
        [
            [run.run_id, run.block, run.replicate, run.seed] + [run.treatment[n] for n in names]
            for run in plan.runs
        ],
    )
    _write_json(path.with_suffix(".json"), {**plan.to_dict(), "plan_digest": plan.digest()})


def plan_from_dict(data: Dict[str, Any]) -> RunPlan:
    runs = tuple(
        Run(
            run_id=int(run["run_id"]),
            treatment=dict(run["treatment"]),
            replicate=int(run["replicate"]),
            seed=int(run["seed"]),
            block=run.get("block"),
        )
        for run in data["runs"]
    )
    return RunPlan(
        runs=runs,
        master_seed=int(data["master_seed"]),
        factor_names=tuple(data["factor_names"]),
        provenance=dict(data.get("provenance", {})),
    )


def load_plan(path: Union[str, Path]) -> RunPlan:
    """Reads a plan written by `write_plan`. Either the CSV or its JSON sidecar may be given."""
    path = Path(path)
    if path.suffix != ".json":
        path = path.with_suffix(".json")
    data = json.loads(path.read_text(encoding="utf-8"))
    plan = plan_from_dict(data)
    recorded = data.get("plan_digest")
    if recorded is not None and recorded != plan.digest():
        raise DesignError(
            f"Plan file {path} is inconsistent: digest {recorded} != {plan.digest()}"
        )
    return plan
