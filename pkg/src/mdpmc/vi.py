"""Bellman operator and value iteration, naive and optimistic.

The fast path runs on the model's cached CSR float view: one sparse
matrix-vector product per sweep followed by a segmented min/max over
each state's action rows (synchronous updates).  Absorbing target and
sink rows are plain self-loops, so their entries stay fixed without
special-casing.  A field-generic operator over exact rationals exists
alongside for property checks and warm-start estimates.

Naive value iteration stops on iterate change and is deliberately
unsound; optimistic value iteration certifies an enclosing interval by
guessing an upper vector and verifying it is an inductive bound.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from gmpy2 import mpq

from .graph import Quotient
from .model import (
    STATUS_CERTIFIED,
    STATUS_UNSOUND,
    BadParameter,
    DimensionMismatch,
    IterationLimit,
    Objective,
    SolveResult,
    SparseMdp,
    TimeoutExceeded,
)


@dataclass(frozen=True)
class StoppingCriterion:
    """Iterate-change stopping rule.

    mode 'relative' accepts when |v'(s) - v(s)| <= epsilon * |v'(s)|
    for every state (so unchanged zero entries pass); mode 'absolute'
    compares against epsilon directly.
    """

    mode: str = "relative"
    epsilon: float = 1e-6
    max_iterations: Optional[int] = None

    def __post_init__(self):
        if self.mode not in ("absolute", "relative"):
            raise BadParameter(f"unknown stopping mode {self.mode!r}")
        if not self.epsilon > 0:
            raise BadParameter("epsilon must be positive")

    def accept(self, old: np.ndarray, new: np.ndarray) -> bool:
        diff = np.abs(new - old)
        if self.mode == "relative":
            return bool(np.all(diff <= self.epsilon * np.abs(new)))
        return bool(np.all(diff <= self.epsilon))


@dataclass(frozen=True)
class BoundedResult:
    """Certified enclosure of the value vector."""

    lower: np.ndarray
    upper: np.ndarray
    guarantee: bool

    def __post_init__(self):
        if np.any(self.lower > self.upper):
            raise BadParameter("lower bound exceeds upper bound")


@dataclass(frozen=True)
class OviConfig:
    """Knobs of the optimistic loop; defaults follow the guess-and-verify
    shape: guess upper = lower * (1 + epsilon), verify for as many sweeps
    as the preceding convergence phase took, halve the convergence
    threshold on failure.  ``padding`` is the relative slack added to the
    reported enclosure to absorb float rounding in the sweeps."""

    guess_factor: Optional[float] = None
    budget_factor: float = 1.0
    max_rounds: int = 50
    padding: float = 1e-9

    def __post_init__(self):
        if self.guess_factor is not None and not self.guess_factor > 0:
            raise BadParameter("guess_factor must be positive")
        if not self.budget_factor > 0:
            raise BadParameter("budget_factor must be positive")
        if self.max_rounds < 1:
            raise BadParameter("max_rounds must be at least 1")
        if self.padding < 0:
            raise BadParameter("padding cannot be negative")


# ---------------------------------------------------------------------------
# field-generic operator (exact rationals or plain floats)


def _detect_field(values):
    return "float" if isinstance(values[0], float) else "rational"


def action_backup(mdp: SparseMdp, values, objective: Objective, state: int, action: int, target=None):
    """One-step backed-up value of a single action.

    Reachability counts target mass as probability (entries of ``values``
    at target states are ignored); total reward adds the state reward.
    ``target`` may be passed to avoid re-resolving the objective's set.
    """
    if target is None:
        target = objective.target_set(mdp) if objective.is_reach else frozenset()
    use_float = isinstance(values[state], float)
    acc = 0.0 if use_float else mpq(0)
    for succ, p in mdp.actions[state][action]:
        if succ in target:
            acc += float(p) if use_float else p
        else:
            acc += (float(p) * values[succ]) if use_float else (p * values[succ])
    if objective.kind == "total_reward":
        rew = mdp.reward(state)
        acc += float(rew) if use_float else rew
    return acc


def bellman_apply(mdp: SparseMdp, values, objective: Objective):
    """One synchronous sweep of the optimality operator.

    Target entries are pinned to one (reachability); everything else
    becomes the min/max over its actions' backups.  Works on rational
    and on float vectors alike and returns the same kind.
    """
    if len(values) != mdp.num_states:
        raise DimensionMismatch(
            f"value vector has {len(values)} entries, model has {mdp.num_states} states"
        )
    target = objective.target_set(mdp) if objective.is_reach else frozenset()
    use_float = _detect_field(values)
    one = 1.0 if use_float == "float" else mpq(1)
    choose = min if objective.is_min else max
    out = []
    for s in range(mdp.num_states):
        if s in target:
            out.append(one)
            continue
        backups = [
            action_backup(mdp, values, objective, s, a, target=target)
            for a in range(mdp.num_actions(s))
        ]
        out.append(choose(backups))
    return out


# ---------------------------------------------------------------------------
# float kernel over a preprocessed quotient


class _Kernel:
    """Prepared sweep over a quotient's CSR float view."""

    def __init__(self, quotient: Quotient, objective: Objective):
        view = quotient.mdp.float_view()
        self.matrix = view.matrix
        self.starts = view.row_starts[:-1]
        self.row_reward = view.row_reward if objective.kind == "total_reward" else None
        self.reduce = np.minimum.reduceat if objective.is_min else np.maximum.reduceat
        self.quotient = quotient
        self.objective = objective

    def start_vector(self) -> np.ndarray:
        v = np.zeros(self.quotient.mdp.num_states)
        if self.quotient.target is not None:
            v[self.quotient.target] = 1.0
        return v

    def apply(self, v: np.ndarray) -> np.ndarray:
        y = self.matrix @ v
        if self.row_reward is not None:
            y += self.row_reward
        return self.reduce(y, self.starts)


def _check_objective(quotient: Quotient, objective: Objective):
    want = quotient.objective
    if objective.kind != want.kind or objective.opt != want.opt:
        raise BadParameter(
            f"objective {objective.kind}:{objective.opt} does not match the "
            f"preprocessed model's {want.kind}:{want.opt}"
        )


def _maybe_timeout(deadline, iterations):
    if deadline is not None and time.monotonic() > deadline:
        raise TimeoutExceeded("deadline exceeded during iteration", iterations=iterations)


def solve_vi(
    quotient: Quotient,
    objective: Objective,
    stop: StoppingCriterion,
    deadline: Optional[float] = None,
) -> SolveResult:
    """Naive value iteration from the zero vector: converges in the limit
    and stops on iterate change, so the result carries no guarantee."""
    _check_objective(quotient, objective)
    kernel = _Kernel(quotient, objective)
    v = kernel.start_vector()
    if quotient.num_core == 0:
        return SolveResult(
            value=v[quotient.mdp.initial_state],
            values=v,
            status=STATUS_UNSOUND,
            iterations=0,
        )
    iterations = 0
    while True:
        if iterations & 0x7F == 0:
            _maybe_timeout(deadline, iterations)
        if stop.max_iterations is not None and iterations >= stop.max_iterations:
            raise IterationLimit(
                f"no convergence within {stop.max_iterations} sweeps",
                iterations=iterations,
            )
        nv = kernel.apply(v)
        iterations += 1
        if stop.accept(v, nv):
            v = nv
            break
        v = nv
    return SolveResult(
        value=v[quotient.mdp.initial_state],
        values=v,
        status=STATUS_UNSOUND,
        iterations=iterations,
    )


def _vi_phase(kernel, v, criterion, deadline, max_iterations=None):
    """Iterate to the criterion from a given vector; returns (v, count)."""
    iterations = 0
    while True:
        if iterations & 0x7F == 0:
            _maybe_timeout(deadline, iterations)
        if max_iterations is not None and iterations >= max_iterations:
            raise IterationLimit("phase iteration limit", iterations=iterations)
        nv = kernel.apply(v)
        iterations += 1
        done = criterion.accept(v, nv)
        v = nv
        if done:
            return v, iterations


def solve_ovi(
    quotient: Quotient,
    objective: Objective,
    epsilon: float = 1e-6,
    config: OviConfig = OviConfig(),
    deadline: Optional[float] = None,
) -> SolveResult:
    """Optimistic value iteration with a certified relative enclosure.

    Phase one converges a lower iterate with the unsound relative rule,
    starting at half the target tolerance.  The candidate upper vector is
    the lower one inflated by the guess factor (the target tolerance, so
    a certified enclosure meets the relative-width contract); it
    certifies as soon as one more sweep maps it below itself (an
    inductive upper bound, hence above the unique fixpoint).
    Verification gets as many sweeps as phase one used; on failure the
    phase-one threshold is halved and iteration resumes from the current
    lower vector, so the remaining gap shrinks geometrically under the
    fixed guess margin and certification eventually succeeds.
    """
    _check_objective(quotient, objective)
    if not epsilon > 0:
        raise BadParameter("epsilon must be positive")
    kernel = _Kernel(quotient, objective)
    lower = kernel.start_vector()
    q = quotient
    if q.num_core == 0:
        return SolveResult(
            value=lower[q.mdp.initial_state],
            values=lower,
            status=STATUS_CERTIFIED,
            iterations=0,
            lower=lower.copy(),
            upper=lower.copy(),
        )
    is_reach = objective.is_reach
    pad = min(config.padding, epsilon / 8)
    if config.guess_factor is not None:
        factor = config.guess_factor
    else:
        factor = max(epsilon - 4 * pad, epsilon / 2)
    threshold = epsilon / 2
    total = 0
    for _ in range(config.max_rounds):
        phase_stop = StoppingCriterion("relative", threshold)
        lower, spent = _vi_phase(kernel, lower, phase_stop, deadline)
        total += spent
        upper = lower * (1.0 + factor)
        if is_reach:
            np.minimum(upper, 1.0, out=upper)
        if q.target is not None:
            upper[q.target] = 1.0
        upper[q.sink] = 0.0
        budget = max(1, int(round(config.budget_factor * max(spent, q.num_core))))
        certified = None
        for _ in range(budget):
            _maybe_timeout(deadline, total)
            swept = kernel.apply(upper)
            total += 1
            if np.all(swept <= upper):
                certified = swept
                break
            if np.all(swept >= upper) and np.any(swept > upper):
                break  # guess sits below the fixpoint, no point burning budget
            # Cap at the current candidate so the guess margin, and with it
            # the pointwise width bound, survives the sweeps.
            np.minimum(upper, swept, out=upper)
        if certified is not None:
            # Widen by a sliver on both sides: float sweeps round each
            # backup, so the raw iterates are only ulp-sound, not exact.
            lower = np.minimum(lower, certified) * (1.0 - pad)
            upper = certified * (1.0 + pad)
            if is_reach:
                np.minimum(upper, 1.0, out=upper)
            if q.target is not None:
                lower[q.target] = 1.0
                upper[q.target] = 1.0
            lower[q.sink] = 0.0
            upper[q.sink] = 0.0
            return SolveResult(
                value=lower[q.mdp.initial_state],
                values=lower,
                status=STATUS_CERTIFIED,
                iterations=total,
                lower=lower,
                upper=upper,
            )
        threshold /= 2
    raise IterationLimit(
        f"verification failed in {config.max_rounds} rounds", iterations=total
    )


def vi_estimates(quotient: Quotient, objective: Objective, iterations: int, field: str = "float"):
    """The k-th operator iterate from zero: a from-below estimate.

    In the rational field the returned vector is exactly the k-step
    value, pointwise below the true values; useful as sound warm-start
    lower bounds.  Returns a float array or a rational list.
    """
    _check_objective(quotient, objective)
    if iterations < 0:
        raise BadParameter("iteration count must be >= 0")
    if field == "float":
        kernel = _Kernel(quotient, objective)
        v = kernel.start_vector()
        for _ in range(iterations):
            v = kernel.apply(v)
        return v
    if field != "rational":
        raise BadParameter(f"unknown field {field!r}")
    qobj = quotient.quotient_objective()
    values = [mpq(0)] * quotient.mdp.num_states
    if quotient.target is not None:
        values[quotient.target] = mpq(1)
    for _ in range(iterations):
        values = bellman_apply(quotient.mdp, values, qobj)
    return values


def bounded(result: SolveResult) -> BoundedResult:
    """View a solver result as a certified enclosure."""
    if result.lower is None or result.upper is None:
        raise BadParameter("result carries no bounds")
    return BoundedResult(result.lower, result.upper, result.status == STATUS_CERTIFIED)
