"""Benchmark harness: run suites, time phases, classify results.

A suite file lists one run per line, with the same lexical rules as the
model format (``#`` comments, blank lines ignored):

    <model-path> <objective-spec> <algorithm-spec> [reference | -]

Objective specs follow ``reach:{min|max}:<label>`` or
``reward:{min|max}``.  Algorithm specs are ``name`` or
``name[key=value,...]`` with name one of vi, ovi, pi, lp, topo; topo
takes a ``backend=`` option plus that backend's own options.

Each run is reported as one CSV row with columns
``model,objective,algorithm,config,status,value,time_ms,iterations``.
``time_ms`` covers the solve phase only; loading and preprocessing are
timed separately (the hardness report re-measures them from the model
path, since the CSV carries no build column).  Statuses:

- ``correct`` / ``incorrect``: solver finished and a reference value
  was available.  A result counts as incorrect when its deviation from
  the reference exceeds one thousandth of the reference, except when
  both numbers lie below 1e-8, where noise dominates and the run is
  accepted.
- ``no-reference``: solver finished, nothing to compare against.
- ``timeout``: the per-run deadline fired at an iteration boundary;
  the partial iteration count is reported.
- ``error``: any other failure (bad file, infeasible option combination).

Runs execute sequentially in suite order, so rerunning a deterministic
suite reproduces every column except the timings.
"""

from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from gmpy2 import mpq

from .formats import ParseError, _content_lines, _rational, parse_model
from .graph import collapse_mecs
from .model import (
    BadParameter,
    ModelError,
    Objective,
    Rational,
    SparseMdp,
    TimeoutExceeded,
    is_infinite,
    rat,
    rat_from_float,
)
from .topo import BACKENDS, run_backend, solve_topological

CSV_COLUMNS = ("model", "objective", "algorithm", "config", "status", "value", "time_ms", "iterations")

STATUS_CORRECT = "correct"
STATUS_INCORRECT = "incorrect"
STATUS_TIMEOUT = "timeout"
STATUS_ERROR = "error"
STATUS_NO_REFERENCE = "no-reference"

RELATIVE_TOLERANCE = mpq(1, 1000)
SMALL_VALUE_FLOOR = mpq(1, 10**8)


def parse_objective_spec(spec: str) -> Objective:
    """Parse ``reach:{min|max}:<label>`` or ``reward:{min|max}``."""
    parts = spec.split(":", 2)
    if parts[0] == "reach" and len(parts) == 3:
        kind, opt, label = parts
        if opt in Objective.OPTS and label:
            return Objective.reach(opt, label=label)
    elif parts[0] == "reward" and len(parts) == 2 and parts[1] in Objective.OPTS:
        return Objective.total_reward(parts[1])
    raise BadParameter(
        f"bad objective spec {spec!r}; use reach:{{min|max}}:<label> or reward:{{min|max}}"
    )


_FLOAT_KEYS = frozenset(
    ["epsilon", "improvement_tolerance", "guess_factor", "budget_factor",
     "padding", "feasibility", "pivot"]
)
_INT_KEYS = frozenset(["max_iterations", "warm_iterations", "max_rounds"])
_BOOL_KEYS = frozenset(["unique_action_equality"])

_ALGORITHM_KEYS: Dict[str, frozenset] = {
    "vi": frozenset(["epsilon", "mode", "max_iterations"]),
    "ovi": frozenset(["epsilon", "guess_factor", "budget_factor", "max_rounds", "padding"]),
    "pi": frozenset(["evaluator", "epsilon", "mode", "improvement_tolerance", "warm_iterations"]),
    "lp": frozenset(
        ["field", "bounds_mode", "warm_iterations", "objective_mode",
         "unique_action_equality", "feasibility", "pivot"]
    ),
}

ALGORITHMS = tuple(sorted(_ALGORITHM_KEYS)) + ("topo",)


def _convert_option(algorithm: str, key: str, text: str):
    if key not in _ALGORITHM_KEYS[algorithm]:
        raise BadParameter(f"algorithm {algorithm!r} has no option {key!r}")
    try:
        if key in _FLOAT_KEYS:
            return float(text)
        if key in _INT_KEYS:
            return int(text)
    except ValueError:
        raise BadParameter(f"option {key}={text!r} is not a number") from None
    if key in _BOOL_KEYS:
        if text.lower() in ("true", "false"):
            return text.lower() == "true"
        raise BadParameter(f"option {key}={text!r} is not true/false")
    return text


def _format_option(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


@dataclass(frozen=True)
class AlgorithmSpec:
    """A parsed algorithm choice plus its typed option values."""

    name: str
    options: dict = field(default_factory=dict)

    @property
    def config(self) -> str:
        """Canonical option string: sorted keys, ``;`` separated."""
        return ";".join(f"{k}={_format_option(v)}" for k, v in sorted(self.options.items()))

    def spec_string(self) -> str:
        if not self.options:
            return self.name
        return f"{self.name}[{self.config.replace(';', ',')}]"


def parse_algorithm_spec(spec: str) -> AlgorithmSpec:
    """Parse ``name`` or ``name[key=value,...]`` into a typed spec."""
    spec = spec.strip()
    body = ""
    name = spec
    if "[" in spec:
        if not spec.endswith("]"):
            raise BadParameter(f"unbalanced '[' in algorithm spec {spec!r}")
        name, _, body = spec[:-1].partition("[")
        name = name.strip()
    if name not in ALGORITHMS:
        raise BadParameter(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")

    raw = {}
    for item in body.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise BadParameter(f"expected key=value, got {item!r}")
        if key in raw:
            raise BadParameter(f"duplicate option {key!r}")
        raw[key] = value

    if name == "topo":
        backend = raw.pop("backend", "pi")
        if backend not in BACKENDS:
            raise BadParameter(f"unknown backend {backend!r}; choose from {', '.join(BACKENDS)}")
        options = {k: _convert_option(backend, k, v) for k, v in raw.items()}
        options["backend"] = backend
    else:
        options = {k: _convert_option(name, k, v) for k, v in raw.items()}
    return AlgorithmSpec(name, options)


@dataclass
class CheckOutcome:
    """One solved query with phase timings, bounds and bookkeeping."""

    value: object
    status: str  # solver status: exact | certified | unsound
    iterations: int
    lower: object = None
    upper: object = None
    flags: tuple = ()
    build_ms: float = 0.0
    solve_ms: float = 0.0
    num_states: int = 0
    num_core: int = 0


def check_model(
    mdp: SparseMdp,
    objective: Objective,
    algorithm,
    deadline: Optional[float] = None,
) -> CheckOutcome:
    """Preprocess and solve one query; ``algorithm`` is a spec or string.

    The deadline (absolute monotonic time) applies to the solve phase
    and is checked cooperatively at iteration boundaries.
    """
    if isinstance(algorithm, str):
        algorithm = parse_algorithm_spec(algorithm)
    objective.validate_for(mdp)

    t0 = time.perf_counter()
    quotient = collapse_mecs(mdp, objective)
    build_ms = (time.perf_counter() - t0) * 1000.0

    t1 = time.perf_counter()
    if algorithm.name == "topo":
        options = dict(algorithm.options)
        backend = options.pop("backend", "pi")
        result = solve_topological(
            quotient, objective, backend=backend, options=options, deadline=deadline
        )
    else:
        result = run_backend(
            quotient, objective, algorithm.name, options=algorithm.options, deadline=deadline
        )
    solve_ms = (time.perf_counter() - t1) * 1000.0

    lower = upper = None
    if result.lower is not None:
        # certificate vectors stay in quotient coordinates
        iq = quotient.initial_quotient_state
        lower, upper = result.lower[iq], result.upper[iq]
    return CheckOutcome(
        value=result.value,
        status=result.status,
        iterations=result.iterations,
        lower=lower,
        upper=upper,
        flags=result.flags,
        build_ms=build_ms,
        solve_ms=solve_ms,
        num_states=mdp.num_states,
        num_core=quotient.num_core,
    )


def classify(value, reference) -> str:
    """Grade a finished result against a reference value.

    Deviations above one thousandth of the reference are incorrect,
    unless both the result and the reference are below 1e-8.  The
    comparison is exact: floats convert to the rational they denote.
    """
    reference = rat(reference)
    if is_infinite(value):
        return STATUS_INCORRECT
    v = rat_from_float(value) if isinstance(value, float) else rat(value)
    if abs(v - reference) > reference * RELATIVE_TOLERANCE:
        if v < SMALL_VALUE_FLOOR and reference < SMALL_VALUE_FLOOR:
            return STATUS_CORRECT
        return STATUS_INCORRECT
    return STATUS_CORRECT


@dataclass(frozen=True)
class SuiteRow:
    """One benchmark run: model path, query, algorithm, optional truth."""

    model: str
    objective: Objective
    objective_spec: str
    algorithm: AlgorithmSpec
    algorithm_spec: str
    reference: Optional[Rational] = None


def parse_suite(text: str) -> List[SuiteRow]:
    """Parse a suite file; any malformed row aborts before runs start."""
    rows = []
    for lineno, toks in _content_lines(text):
        if len(toks) not in (3, 4):
            raise ParseError(lineno, "expected: <model> <objective> <algorithm> [reference]")
        model, ospec, aspec = toks[:3]
        try:
            objective = parse_objective_spec(ospec)
            algorithm = parse_algorithm_spec(aspec)
        except BadParameter as exc:
            raise ParseError(lineno, str(exc)) from None
        reference = None
        if len(toks) == 4 and toks[3] != "-":
            reference = _rational(lineno, toks[3])
        rows.append(SuiteRow(model, objective, ospec, algorithm, aspec, reference))
    return rows


@dataclass
class RunRecord:
    """One executed suite row, ready for CSV serialization."""

    model: str
    objective: str
    algorithm: str
    config: str
    status: str
    value: object = None
    time_ms: float = 0.0
    iterations: int = 0
    solver_status: str = ""
    build_ms: float = 0.0
    error: str = ""

    def csv_row(self) -> list:
        return [
            self.model,
            self.objective,
            self.algorithm,
            self.config,
            self.status,
            format_value(self.value),
            f"{self.time_ms:.3f}",
            self.iterations,
        ]


def format_value(value) -> str:
    if value is None:
        return ""
    if is_infinite(value):
        return "inf"
    if isinstance(value, float):
        return repr(float(value))  # plain float repr, also for numpy scalars
    return str(value)


def run_suite_row(
    row: SuiteRow,
    timeout: Optional[float] = None,
    base_dir: str = ".",
) -> RunRecord:
    """Execute one suite row; never raises, failures become the status."""
    record = RunRecord(
        model=row.model,
        objective=row.objective_spec,
        algorithm=row.algorithm.name,
        config=row.algorithm.config,
        status=STATUS_ERROR,
    )
    try:
        path = row.model if os.path.isabs(row.model) else os.path.join(base_dir, row.model)
        with open(path, "r", encoding="utf-8") as handle:
            mdp = parse_model(handle.read())
        deadline = time.monotonic() + timeout if timeout is not None else None
        outcome = check_model(mdp, row.objective, row.algorithm, deadline=deadline)
    except TimeoutExceeded as exc:
        record.status = STATUS_TIMEOUT
        record.iterations = exc.iterations or 0
        record.time_ms = (timeout or 0.0) * 1000.0
        return record
    except (ModelError, OSError) as exc:
        record.error = str(exc)
        return record
    record.value = outcome.value
    record.iterations = outcome.iterations
    record.time_ms = outcome.solve_ms
    record.build_ms = outcome.build_ms
    record.solver_status = outcome.status
    if row.reference is None:
        record.status = STATUS_NO_REFERENCE
    else:
        record.status = classify(outcome.value, row.reference)
    return record


def run_suite(
    rows: Sequence[SuiteRow],
    timeout: Optional[float] = None,
    base_dir: str = ".",
) -> List[RunRecord]:
    """Run all rows sequentially in suite order."""
    return [run_suite_row(row, timeout=timeout, base_dir=base_dir) for row in rows]


def write_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for record in records:
        writer.writerow(record.csv_row())
    return buf.getvalue()


def is_hard(solve_ms: float, build_ms: float, floor_ms: float = 1000.0) -> bool:
    """Whether a run qualifies as numerically hard: the solve phase
    dominates construction and the two together clear the floor."""
    return solve_ms > build_ms and solve_ms + build_ms >= floor_ms


@dataclass(frozen=True)
class HardInstance:
    model: str
    objective: str
    solve_ms: float
    build_ms: float


def hardness_report(
    csv_text: str,
    floor_ms: float = 1000.0,
    base_dir: str = ".",
) -> List[HardInstance]:
    """Filter a results CSV down to the hard value-iteration instances.

    Build time is re-measured by loading and preprocessing each model,
    since result rows only carry the solve time.  Rows for other
    algorithms and error rows are skipped; each (model, objective) pair
    is reported at most once.
    """
    reader = csv.DictReader(io.StringIO(csv_text))
    out = []
    seen = set()
    for row in reader or ():
        if row.get("algorithm") != "vi" or row.get("status") == STATUS_ERROR:
            continue
        key = (row["model"], row["objective"])
        if key in seen:
            continue
        seen.add(key)
        path = row["model"] if os.path.isabs(row["model"]) else os.path.join(base_dir, row["model"])
        objective = parse_objective_spec(row["objective"])
        t0 = time.perf_counter()
        with open(path, "r", encoding="utf-8") as handle:
            mdp = parse_model(handle.read())
        collapse_mecs(mdp, objective)
        build_ms = (time.perf_counter() - t0) * 1000.0
        solve_ms = float(row["time_ms"])
        if is_hard(solve_ms, build_ms, floor_ms):
            out.append(HardInstance(row["model"], row["objective"], solve_ms, build_ms))
    return out


__all__ = [
    "ALGORITHMS",
    "CSV_COLUMNS",
    "AlgorithmSpec",
    "CheckOutcome",
    "HardInstance",
    "RunRecord",
    "SuiteRow",
    "check_model",
    "classify",
    "format_value",
    "hardness_report",
    "is_hard",
    "parse_algorithm_spec",
    "parse_objective_spec",
    "parse_suite",
    "run_suite",
    "run_suite_row",
    "write_csv",
]
