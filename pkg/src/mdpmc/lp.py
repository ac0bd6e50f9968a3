"""Linear-programming route: encode a preprocessed model, solve with a
built-in simplex.

The encoding has one variable per remaining (core) state.  Maximising
values are the least solution of the per-action inequalities, so the LP
minimises subject to >= rows; minimising values dually maximise subject
to <= rows.  Probability mass onto the folded target enters the
right-hand side, as does the state reward.  Options cover variable
bounds (trivial or sound warm lower bounds), the objective (sum over all
states or the initial state only), and extra flipped rows pinning
single-action states to equality.

The solver is a two-phase primal simplex over bounded variables: row
slacks carry the relation (ranged bounds instead of extra rows), entering
and leaving choices follow Bland's smallest-index rule, so degenerate
ties cannot cycle.  It runs either on exact rationals or on floats with
configurable comparison tolerances; float results are flagged unsound.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence

from gmpy2 import mpq

from .graph import Quotient
from .model import (
    STATUS_EXACT,
    STATUS_UNSOUND,
    BadParameter,
    DimensionMismatch,
    IterationLimit,
    ModelError,
    Objective,
    Rational,
    SolveResult,
    TimeoutExceeded,
    rat,
)

GE = ">="
LE = "<="
EQ = "="

_RELATIONS = (GE, LE, EQ)


class Infeasible(ModelError):
    """No point satisfies all constraints and bounds."""


class Unbounded(ModelError):
    """The objective improves without limit over the feasible set."""


class InfiniteValueState(ModelError):
    """A state with unbounded expected reward reached the encoder; the
    finiteness precheck removes these, so this guards misuse only."""


@dataclass(frozen=True)
class LpRow:
    coeffs: dict
    relation: str
    rhs: Rational

    def __post_init__(self):
        if self.relation not in _RELATIONS:
            raise BadParameter(f"unknown relation {self.relation!r}")


@dataclass(frozen=True)
class LpProblem:
    """Bounded-variable LP in inequality form.

    ``bounds[j]`` is a pair (lower, upper); ``None`` means unbounded on
    that side.  ``sense`` is 'minimize' or 'maximize' over dense
    ``objective`` coefficients.
    """

    bounds: tuple
    rows: tuple
    sense: str
    objective: tuple

    def __post_init__(self):
        if self.sense not in ("minimize", "maximize"):
            raise BadParameter(f"unknown sense {self.sense!r}")
        if len(self.objective) != len(self.bounds):
            raise DimensionMismatch("objective length does not match variables")
        for lo, hi in self.bounds:
            if lo is not None and hi is not None and lo > hi:
                raise BadParameter("variable lower bound exceeds upper bound")
        n = len(self.bounds)
        for row in self.rows:
            for j in row.coeffs:
                if not 0 <= j < n:
                    raise BadParameter(f"constraint references unknown variable {j}")

    @property
    def num_vars(self) -> int:
        return len(self.bounds)


@dataclass(frozen=True)
class LpOptions:
    """Formulation switches for the encoder."""

    bounds_mode: str = "trivial"
    warm_estimates: Optional[Sequence] = None
    objective_mode: str = "all_states"
    unique_action_equality: bool = False

    def __post_init__(self):
        if self.bounds_mode not in ("trivial", "warm"):
            raise BadParameter(f"unknown bounds mode {self.bounds_mode!r}")
        if self.objective_mode not in ("all_states", "initial_only"):
            raise BadParameter(f"unknown objective mode {self.objective_mode!r}")
        if self.bounds_mode == "warm" and self.warm_estimates is None:
            raise BadParameter("warm bounds need estimates")


@dataclass(frozen=True)
class SimplexTolerances:
    feasibility: float = 1e-9
    pivot: float = 1e-9

    def __post_init__(self):
        if not self.feasibility >= 0:
            raise BadParameter("feasibility tolerance cannot be negative")
        if not self.pivot >= 0:
            raise BadParameter("pivot tolerance cannot be negative")


@dataclass(frozen=True)
class LpSolution:
    values: tuple
    objective_value: object
    iterations: int
    field: str


# ---------------------------------------------------------------------------
# encoding


def build_lp(quotient: Quotient, objective: Objective, options: LpOptions = LpOptions()) -> LpProblem:
    """Encode the core of a preprocessed model as a bounded-variable LP."""
    q = quotient
    own = q.objective
    if objective.kind != own.kind or objective.opt != own.opt:
        raise BadParameter("objective does not match the preprocessed model")
    if q.infinite_states is None:
        raise InfiniteValueState("model lacks the reward finiteness analysis")
    num_core = q.num_core
    is_reach = objective.is_reach
    maximizing = not objective.is_min

    if options.bounds_mode == "warm":
        estimates = [rat(v) for v in options.warm_estimates]
        if len(estimates) != num_core:
            raise DimensionMismatch(
                f"warm estimates cover {len(estimates)} states, core has {num_core}"
            )
    else:
        estimates = None

    upper = mpq(1) if is_reach else None
    bounds = []
    for s in range(num_core):
        lo = estimates[s] if estimates is not None else mpq(0)
        if upper is not None and lo > upper:
            raise BadParameter("warm lower bound exceeds the trivial upper bound")
        bounds.append((lo, upper))

    relation = GE if maximizing else LE
    flipped = LE if maximizing else GE
    rows = []
    for s in range(num_core):
        actions = q.mdp.actions[s]
        unique = options.unique_action_equality and len(actions) == 1
        for action in actions:
            coeffs = {s: mpq(1)}
            const = q.mdp.rewards[s] if not is_reach else mpq(0)
            for t, p in action:
                if t == q.target:
                    const += p
                elif t == q.sink:
                    continue
                else:
                    coeffs[t] = coeffs.get(t, mpq(0)) - p
            coeffs = {j: v for j, v in coeffs.items() if v != 0}
            rows.append(LpRow(coeffs, relation, const))
            if unique:
                rows.append(LpRow(coeffs, flipped, const))

    objective_row = [mpq(0)] * num_core
    if options.objective_mode == "all_states":
        objective_row = [mpq(1)] * num_core
    else:
        init = q.initial_quotient_state
        if init < num_core:
            objective_row[init] = mpq(1)
    sense = "minimize" if maximizing else "maximize"
    return LpProblem(tuple(bounds), tuple(rows), sense, tuple(objective_row))


def export_text(lp: LpProblem) -> str:
    """Human-readable rendering, one constraint per line (debug aid)."""

    def term(j, v, first):
        mag = abs(v)
        coef = "" if mag == 1 else f"{mag} "
        if first:
            sign = "-" if v < 0 else ""
            return f"{sign}{coef}x{j}"
        return f"{'-' if v < 0 else '+'} {coef}x{j}"

    def combo(pairs):
        if not pairs:
            return "0"
        out = []
        for k, (j, v) in enumerate(pairs):
            out.append(term(j, v, k == 0))
        return " ".join(out)

    lines = [lp.sense]
    lines.append("  " + combo([(j, v) for j, v in enumerate(lp.objective) if v != 0]))
    lines.append("subject to")
    for i, row in enumerate(lp.rows):
        body = combo(sorted(row.coeffs.items()))
        lines.append(f"  r{i}: {body} {row.relation} {row.rhs}")
    lines.append("bounds")
    for j, (lo, hi) in enumerate(lp.bounds):
        left = "-inf" if lo is None else str(lo)
        right = "+inf" if hi is None else str(hi)
        lines.append(f"  {left} <= x{j} <= {right}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# bounded-variable two-phase primal simplex

_BASIC = 0
_LOWER = 1
_UPPER = 2


class _Simplex:
    """Dense tableau engine; field picked by the converted coefficients."""

    def __init__(
        self,
        lp: LpProblem,
        field: str,
        tol: SimplexTolerances,
        max_pivots: int,
        deadline: Optional[float] = None,
    ):
        self.field = field
        self.deadline = deadline
        if field == "rational":
            conv = rat
            self.ptol = mpq(0)
            self.ftol = mpq(0)
        elif field == "float":
            conv = float
            self.ptol = tol.pivot
            self.ftol = tol.feasibility
        else:
            raise BadParameter(f"unknown simplex field {field!r}")
        self.zero = conv(0)
        self.one = conv(1)
        self.max_pivots = max_pivots
        self.pivots = 0

        n = lp.num_vars
        m = len(lp.rows)
        self.num_struct = n
        self.num_rows = m
        cv = lambda v: None if v is None else conv(v)
        self.lb = [cv(lo) for lo, _ in lp.bounds]
        self.ub = [cv(hi) for _, hi in lp.bounds]
        for lo, hi in zip(self.lb, self.ub):
            if lo is None and hi is None:
                raise BadParameter("free variables are not supported")
        # one slack per row carries the relation through its bounds
        self.rows = []
        self.rhs = []
        for i, row in enumerate(lp.rows):
            dense = [self.zero] * (n + m)
            for j, v in row.coeffs.items():
                dense[j] = conv(v)
            dense[n + i] = self.one
            self.rows.append(dense)
            self.rhs.append(conv(row.rhs))
            if row.relation == LE:
                self.lb.append(self.zero)
                self.ub.append(None)
            elif row.relation == GE:
                self.lb.append(None)
                self.ub.append(self.zero)
            else:
                self.lb.append(self.zero)
                self.ub.append(self.zero)
        self.num_cols = n + m
        self.dead = [False] * self.num_cols
        sense = 1 if lp.sense == "minimize" else -1
        self.cost = [sense * conv(v) for v in lp.objective] + [self.zero] * m
        self.sense = sense
        self.stat = [_LOWER] * self.num_cols
        self.basis = []
        self.xb = []
        self.cbar = None

    # -- setup ------------------------------------------------------------

    def _nonbasic_value(self, j):
        if self.stat[j] == _LOWER:
            v = self.lb[j]
        else:
            v = self.ub[j]
        return self.zero if v is None else v

    def _try_bound_start(self, which) -> bool:
        """Structurals parked on one bound, slacks basic; accepted when
        every slack lands inside its own bounds."""
        n, m = self.num_struct, self.num_rows
        stat = []
        for j in range(n):
            bound = self.lb[j] if which == _LOWER else self.ub[j]
            if bound is None:
                return False
            stat.append(which)
        values = [self._bound_of(j, stat[j]) for j in range(n)]
        slack = []
        for i in range(m):
            acc = self.rhs[i]
            row = self.rows[i]
            for j in range(n):
                if row[j]:
                    acc -= row[j] * values[j]
            lo, hi = self.lb[n + i], self.ub[n + i]
            if lo is not None and acc < lo - self.ftol:
                return False
            if hi is not None and acc > hi + self.ftol:
                return False
            slack.append(acc)
        self.stat[:n] = stat
        for i in range(m):
            self.stat[n + i] = _BASIC
        self.basis = [n + i for i in range(m)]
        self.xb = slack
        return True

    def _bound_of(self, j, which):
        v = self.lb[j] if which == _LOWER else self.ub[j]
        return self.zero if v is None else v

    def _artificial_start(self):
        """Phase-1 basis: slacks where feasible, artificials elsewhere."""
        n, m = self.num_struct, self.num_rows
        for j in range(n):
            self.stat[j] = _LOWER if self.lb[j] is not None else _UPPER
        values = [self._nonbasic_value(j) for j in range(n)]
        self.basis = [None] * m
        self.xb = [self.zero] * m
        artificial = []
        for i in range(m):
            acc = self.rhs[i]
            row = self.rows[i]
            for j in range(n):
                if row[j]:
                    acc -= row[j] * values[j]
            s = n + i
            lo, hi = self.lb[s], self.ub[s]
            if (lo is None or acc >= lo) and (hi is None or acc <= hi):
                self.basis[i] = s
                self.xb[i] = acc
                continue
            parked = hi if (hi is not None and acc > hi) else lo
            self.stat[s] = _UPPER if parked is hi else _LOWER
            resid = acc - parked
            col = self.num_cols + len(artificial)
            sign = self.one if resid > 0 else -self.one
            for k in range(m):
                self.rows[k].append(sign if k == i else self.zero)
            self.lb.append(self.zero)
            self.ub.append(None)
            self.stat.append(_BASIC)
            self.dead.append(False)
            self.cost.append(self.zero)
            self.basis[i] = col
            self.xb[i] = abs(resid)
            artificial.append(col)
        self.num_cols += len(artificial)
        return artificial

    def _reduced_costs(self, cost):
        cbar = list(cost)
        for i, b in enumerate(self.basis):
            cb = cost[b]
            if cb:
                row = self.rows[i]
                for j in range(self.num_cols):
                    if row[j]:
                        cbar[j] -= cb * row[j]
        for b in self.basis:
            cbar[b] = self.zero
        self.cbar = cbar

    # -- pivoting ---------------------------------------------------------

    def _tick(self):
        self.pivots += 1
        if self.pivots > self.max_pivots:
            raise IterationLimit("simplex pivot budget exhausted", iterations=self.pivots)
        if self.deadline is not None and (self.pivots & 0x3F) == 0:
            if time.monotonic() > self.deadline:
                raise TimeoutExceeded("simplex deadline exceeded", iterations=self.pivots)

    def _entering(self):
        for j in range(self.num_cols):
            if self.stat[j] == _BASIC or self.dead[j]:
                continue
            lo, hi = self.lb[j], self.ub[j]
            if lo is not None and hi is not None and lo == hi:
                continue  # fixed variable, flipping it would cycle
            r = self.cbar[j]
            if self.stat[j] == _LOWER and r < -self.ptol:
                return j, 1
            if self.stat[j] == _UPPER and r > self.ptol:
                return j, -1
        return None, 0

    def _ratio(self, e, d):
        """Largest step for the entering variable; returns (step, row,
        bound-side) with row None for a bound flip."""
        best = None
        best_row = None
        best_side = None
        for i in range(self.num_rows):
            coef = self.rows[i][e]
            if self.field == "float":
                if abs(coef) <= self.ptol:
                    continue
            elif not coef:
                continue
            rate = -coef * d  # change of xb[i] per unit step
            b = self.basis[i]
            if rate < 0:
                limit = self.lb[b]
                if limit is None:
                    continue
                t = (self.xb[i] - limit) / (-rate)
                side = _LOWER
            else:
                limit = self.ub[b]
                if limit is None:
                    continue
                t = (limit - self.xb[i]) / rate
                side = _UPPER
            if t < 0:
                t = self.zero
            if best is None or t < best or (t == best and b < self.basis[best_row]):
                best, best_row, best_side = t, i, side
        lo, hi = self.lb[e], self.ub[e]
        if lo is not None and hi is not None:
            span = hi - lo
            if best is None or span < best:
                return span, None, None
        return best, best_row, best_side

    def _pivot(self, r, e):
        self._tick()
        prow = self.rows[r]
        piv = prow[e]
        inv = self.one / piv
        if inv != self.one:
            for k in range(self.num_cols):
                if prow[k]:
                    prow[k] = prow[k] * inv
        nz = [k for k in range(self.num_cols) if prow[k]]
        for i in range(self.num_rows):
            if i == r:
                continue
            row = self.rows[i]
            f = row[e]
            if f:
                for k in nz:
                    row[k] = row[k] - f * prow[k]
                row[e] = self.zero
        f = self.cbar[e]
        if f:
            for k in nz:
                self.cbar[k] = self.cbar[k] - f * prow[k]
            self.cbar[e] = self.zero

    def _step(self) -> bool:
        """One simplex iteration; False when optimal."""
        e, d = self._entering()
        if e is None:
            return False
        t, r, side = self._ratio(e, d)
        if t is None:
            raise Unbounded("objective is unbounded over the feasible set")
        delta = t if d > 0 else -t
        if delta:
            for i in range(self.num_rows):
                coef = self.rows[i][e]
                if coef:
                    self.xb[i] = self.xb[i] - coef * delta
        if r is None:
            # the entering variable runs to its other bound
            self.stat[e] = _UPPER if self.stat[e] == _LOWER else _LOWER
            self._tick()
            return True
        leaving = self.basis[r]
        entering_value = self._nonbasic_value(e) + delta
        self.stat[leaving] = side
        self.stat[e] = _BASIC
        self.basis[r] = e
        self._pivot(r, e)
        self.xb[r] = entering_value
        # park the leaving variable exactly on its bound (float drift)
        return True

    def _run(self):
        while self._step():
            pass

    # -- phases -----------------------------------------------------------

    def solve(self):
        if self.num_rows == 0:
            return self._solve_trivial()
        started = self._try_bound_start(_LOWER) or self._try_bound_start(_UPPER)
        artificial = []
        if not started:
            artificial = self._artificial_start()
            phase_cost = [self.zero] * self.num_cols
            for col in artificial:
                phase_cost[col] = self.one
            self._reduced_costs(phase_cost)
            self._run()
            art_set = set(artificial)
            residue = sum(
                (self.xb[i] for i, b in enumerate(self.basis) if b in art_set), self.zero
            )
            if residue > self.ftol:
                raise Infeasible("phase one ends with positive artificial residue")
            self._drive_out(art_set)
            for col in artificial:
                self.dead[col] = True
                self.stat[col] = _LOWER
        self._reduced_costs(self.cost)
        self._run()
        return self._extract()

    def _solve_trivial(self):
        values = []
        for j in range(self.num_struct):
            c = self.cost[j]
            if c > self.ptol:
                if self.lb[j] is None:
                    raise Unbounded("objective is unbounded over the feasible set")
                values.append(self.lb[j])
            elif c < -self.ptol:
                if self.ub[j] is None:
                    raise Unbounded("objective is unbounded over the feasible set")
                values.append(self.ub[j])
            else:
                values.append(self._bound_of(j, _LOWER if self.lb[j] is not None else _UPPER))
        return values

    def _drive_out(self, artificial):
        """Degenerate pivots replacing basic zero artificials by real
        columns; always possible since rows stay full-rank."""
        for i in range(self.num_rows):
            if self.basis[i] not in artificial:
                continue
            row = self.rows[i]
            col = None
            for j in range(self.num_cols):
                if j in artificial or self.stat[j] == _BASIC or self.dead[j]:
                    continue
                big_enough = abs(row[j]) > self.ptol if self.field == "float" else bool(row[j])
                if big_enough:
                    col = j
                    break
            if col is None:
                # fully redundant row: keep the artificial basic at zero
                self.xb[i] = self.zero
                continue
            old = self.basis[i]
            self.stat[old] = _LOWER
            self.stat[col] = _BASIC
            self.basis[i] = col
            self._pivot(i, col)
            self.xb[i] = self._nonbasic_value(col)

    def _extract(self):
        values = [self._nonbasic_value(j) for j in range(self.num_struct)]
        for i, b in enumerate(self.basis):
            if b < self.num_struct:
                values[b] = self.xb[i]
        return values


def simplex_solve(
    lp: LpProblem,
    field: str = "rational",
    tolerances: SimplexTolerances = SimplexTolerances(),
    max_pivots: int = 200_000,
    deadline: Optional[float] = None,
) -> LpSolution:
    """Solve a bounded-variable LP; exact over rationals, tolerance-based
    over floats.  Raises Infeasible, Unbounded or IterationLimit."""
    engine = _Simplex(lp, field, tolerances, max_pivots, deadline)
    values = engine.solve()
    conv = rat if field == "rational" else float
    total = sum((conv(c) * v for c, v in zip(lp.objective, values) if c), conv(0))
    return LpSolution(tuple(values), total, engine.pivots, field)


# ---------------------------------------------------------------------------
# composition


def solve_lp(
    quotient: Quotient,
    objective: Objective,
    options: LpOptions = LpOptions(),
    field: str = "rational",
    tolerances: SimplexTolerances = SimplexTolerances(),
    deadline: Optional[float] = None,
) -> SolveResult:
    """Encode, solve, and lift the optimum back to original states."""
    lp = build_lp(quotient, objective, options)
    q = quotient
    if lp.num_vars == 0:
        core_values = []
        iterations = 0
    else:
        solution = simplex_solve(lp, field=field, tolerances=tolerances, deadline=deadline)
        core_values = list(solution.values)
        iterations = solution.iterations
    if field == "rational":
        fill = [mpq(0)] * q.mdp.num_states
        status = STATUS_EXACT
    else:
        fill = [0.0] * q.mdp.num_states
        status = STATUS_UNSOUND
    for s, v in enumerate(core_values):
        fill[s] = v
    if q.target is not None:
        fill[q.target] = mpq(1) if field == "rational" else 1.0
    full = q.lift_values(fill)
    value = full[q.source.initial_state]
    flags = () if field == "rational" else ("float-simplex",)
    return SolveResult(
        value=value,
        values=full,
        status=status,
        iterations=iterations,
        flags=flags,
    )
