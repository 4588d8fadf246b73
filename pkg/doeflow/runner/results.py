import csv
import io
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from doeflow import __version__
from doeflow.common.checks import CorruptResults
from doeflow.common.util import canonical_json, format_value, sha256_file, sha256_text

logger = logging.getLogger(__name__)

FIXED_LEADING_COLUMNS = ["run_id", "block", "replicate", "seed"]
FIXED_TRAILING_COLUMNS = ["status", "wall_time_s", "started_at", "ended_at"]


class RunStatus(str, Enum):
    OK = "ok"
    RUNNER_ERROR = "runner_error"
    TIMEOUT = "timeout"
    INVALID_RESPONSE = "invalid_response"


@dataclass(frozen=True)
class ResultRow:
    run_id: int
    treatment: Dict[str, Any]
    block: Optional[str]
    replicate: int
    seed: int
    responses: Dict[str, float]
    status: RunStatus
    wall_time: float
    started_at: str
    ended_at: str
    # Failure reason, logged but not persisted.
    message: str = field(default="", compare=False)

    @property
    def ok(self) -> bool:
        return self.status == RunStatus.OK


@dataclass
class ResultSet:
    """Per-run outcomes of executing a plan, in completion order.

    # Parameters

    rows : `List[ResultRow]`
    plan_digest : `str`
        Digest of the executed plan; a resumed execution must match it.
    runner_command : `str`
    factor_names : `Tuple[str, ...]`
    metric_names : `Tuple[str, ...]`
    master_seed : `int`, optional (default = `None`)
        Lets every row's seed be recomputed from the sidecar.
    """

    rows: List[ResultRow]
    plan_digest: str
    runner_command: str
    factor_names: Tuple[str, ...]
    metric_names: Tuple[str, ...]
    master_seed: Optional[int] = None

    @property
    def run_ids(self) -> List[int]:
        return [row.run_id for row in self.rows]

    def ok_rows(self) -> List[ResultRow]:
        return [row for row in self.rows if row.ok]

    def sorted_rows(self) -> List[ResultRow]:
        return sorted(self.rows, key=lambda row: row.run_id)

    def status_counts(self) -> Dict[str, int]:
        counts = {status.value: 0 for status in RunStatus}
        for row in self.rows:
            counts[row.status.value] += 1
        return counts

    def responses_digest(self) -> str:
        """Digest of what the runs produced, independent of timing and completion order:
        treatments, statuses and responses sorted by run id."""
        table = [
            {
                "run_id": row.run_id,
                "treatment": row.treatment,
                "block": row.block,
                "replicate": row.replicate,
                "seed": row.seed,
                "status": row.status.value,
                "responses": row.responses,
            }
            for row in self.sorted_rows()
        ]
        return sha256_text(canonical_json(table))

    def factor_types(self) -> Dict[str, str]:
        """`"real"` or `"label"` per factor column, so CSV cells can be read back typed."""
        types = {}
        for name in self.factor_names:
            values = [row.treatment.get(name) for row in self.rows]
            types[name] = "label" if any(isinstance(v, str) for v in values) else "real"
        return types

    def header(self) -> List[str]:
        return (
            FIXED_LEADING_COLUMNS
            + list(self.factor_names)
            + list(self.metric_names)
            + FIXED_TRAILING_COLUMNS
        )

    def sidecar(self, csv_digest: str) -> Dict[str, Any]:
        return {
            "plan_digest": self.plan_digest,
            "runner_command": self.runner_command,
            "toolkit_version": __version__,
            "factor_names": list(self.factor_names),
            "factor_types": self.factor_types(),
            "metric_names": list(self.metric_names),
            "master_seed": self.master_seed,
            "n_rows": len(self.rows),
            "results_digest": csv_digest,
        }


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".json")


def _csv_line(results: ResultSet, row: ResultRow) -> str:
    cells = (
        [row.run_id, row.block, row.replicate, row.seed]
        + [row.treatment.get(name) for name in results.factor_names]
        + [row.responses.get(name) for name in results.metric_names]
        + [row.status.value, row.wall_time, row.started_at, row.ended_at]
    )
    buffer = io.StringIO()
    csv.writer(buffer, lineterminator="\n").writerow([format_value(cell) for cell in cells])
    return buffer.getvalue()


def _header_line(results: ResultSet) -> str:
    buffer = io.StringIO()
    csv.writer(buffer, lineterminator="\n").writerow(results.header())
    return buffer.getvalue()


def _write_sidecar(results: ResultSet, path: Path) -> None:
    """Atomically replaces the sidecar of the CSV at `path`."""
    target = sidecar_path(path)
    temporary = target.with_suffix(".json.tmp")
    temporary.write_text(
        json.dumps(results.sidecar(sha256_file(path)), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    os.replace(temporary, target)


def persist_results(results: ResultSet, path: Union[str, Path]) -> None:
    """Writes `results` to `path` (CSV) and its JSON sidecar. Reals are written with 17
    significant digits so the round trip through `load_results` is lossless."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(_header_line(results))
        for row in results.rows:
            f.write(_csv_line(results, row))
    _write_sidecar(results, path)


class ResultAppender:
    """Appends rows to a results file one at a time. Each row is flushed and fsynced before the
    sidecar is updated, so after a crash the file holds every completed row and at most the
    sidecar lags one row behind. Safe to call from several worker threads.
    """

    def __init__(self, results: ResultSet, path: Union[str, Path]) -> None:
        self.results = results
        self.path = Path(path)
        self._lock = threading.Lock()
        persist_results(results, self.path)

    def append(self, row: ResultRow) -> None:
        with self._lock:
            self.results.rows.append(row)
            with open(self.path, "a", encoding="utf-8", newline="") as f:
                f.write(_csv_line(self.results, row))
                f.flush()
                os.fsync(f.fileno())
            _write_sidecar(self.results, self.path)


def _parse_real(text: str) -> Optional[float]:
    return None if text == "" else float(text)


def _parse_factor(text: str, kind: str) -> Any:
    if kind == "label":
        return text
    return _parse_real(text)


def load_results(path: Union[str, Path], lenient: bool = False) -> ResultSet:
    """Reads a results CSV and its sidecar back into a `ResultSet`.

    # Parameters

    path : `Union[str, Path]`
    lenient : `bool`, optional (default = `False`)
        Used when resuming an interrupted execution: a trailing partial line is dropped and the
        row count and digest checks are skipped. The sidecar's plan digest is still returned for
        the caller to check.

    # Raises

    `CorruptResults` if the sidecar is missing, a row is malformed, or (in strict mode) the row
    count or the content digest disagree with the sidecar.
    """
    path = Path(path)
    try:
        sidecar = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
        text = path.read_text(encoding="utf-8")
    except (OSError, json.JSONDecodeError) as error:
        raise CorruptResults(f"Cannot read results {path}: {error}")

    if not lenient:
        actual = sha256_file(path)
        if actual != sidecar.get("results_digest"):
            raise CorruptResults(
                f"Results {path} do not match their sidecar: digest {actual} != recorded "
                f"{sidecar.get('results_digest')}"
            )

    lines = text.split("\n")
    complete = lines[:-1]
    if lines[-1] != "":
        if not lenient:
            raise CorruptResults(f"Results {path} end in a partial line")
        logger.warning("Dropping partial last line of %s", path)

    factor_names = tuple(sidecar["factor_names"])
    metric_names = tuple(sidecar["metric_names"])
    factor_types = sidecar.get("factor_types", {})
    results = ResultSet(
        rows=[],
        plan_digest=sidecar["plan_digest"],
        runner_command=sidecar.get("runner_command", ""),
        factor_names=factor_names,
        metric_names=metric_names,
        master_seed=sidecar.get("master_seed"),
    )
    reader = csv.reader(complete)
    header = next(reader, None)
    if header != results.header():
        raise CorruptResults(f"Results {path} have header {header}, expected {results.header()}")
    n_factors, n_metrics = len(factor_names), len(metric_names)
    for number, cells in enumerate(reader, start=2):
        if len(cells) != len(header):
            if lenient and number == len(complete):
                logger.warning("Dropping malformed last row of %s", path)
                break
            raise CorruptResults(f"Results {path} line {number} has {len(cells)} fields")
        try:
            factor_cells = cells[4 : 4 + n_factors]
            metric_cells = cells[4 + n_factors : 4 + n_factors + n_metrics]
            status, wall_time, started_at, ended_at = cells[4 + n_factors + n_metrics :]
            responses = {
                name: float(cell) for name, cell in zip(metric_names, metric_cells) if cell != ""
            }
            results.rows.append(
                ResultRow(
                    run_id=int(cells[0]),
                    block=cells[1] or None,
                    replicate=int(cells[2]),
                    seed=int(cells[3]),
                    treatment={
                        name: _parse_factor(cell, factor_types.get(name, "real"))
                        for name, cell in zip(factor_names, factor_cells)
                    },
                    responses=responses,
                    status=RunStatus(status),
                    wall_time=float(wall_time),
                    started_at=started_at,
                    ended_at=ended_at,
                )
            )
        except ValueError as error:
            raise CorruptResults(f"Results {path} line {number} is malformed: {error}")

    if not lenient and len(results.rows) != sidecar.get("n_rows"):
        raise CorruptResults(
            f"Results {path} hold {len(results.rows)} rows, sidecar records {sidecar.get('n_rows')}"
        )
    run_ids = results.run_ids
    if len(set(run_ids)) != len(run_ids):
        raise CorruptResults(f"Results {path} contain duplicate run ids")
    return results


def validate_rows(results: ResultSet, plan_run_ids: Sequence[int]) -> None:
    """Checks the result rows against the plan and the declared metrics."""
    allowed = set(plan_run_ids)
    stray = [run_id for run_id in results.run_ids if run_id not in allowed]
    if stray:
        raise CorruptResults(f"Result rows {stray} are not in the plan")
    for row in results.rows:
        missing = [name for name in results.metric_names if name not in row.responses]
        if row.ok and missing:
            raise CorruptResults(f"Run {row.run_id} is ok but lacks responses {missing}")
