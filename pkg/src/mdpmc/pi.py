"""Policy iteration with pluggable induced-chain evaluators.

The policy is evaluated on its induced chain by exact rational
elimination, floating-point elimination, or value iteration to a
tolerance; the policy then switches, state by state, to actions whose
one-step backup beats the current action's backup by more than an
improvement threshold.  With exact evaluation and strict improvement
the final policy and values are exactly optimal.  With approximate
evaluation the threshold masks improvements smaller than the evaluation
error, which is precisely how premature convergence happens; thresholds
default to the evaluator's own precision and remain configurable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from gmpy2 import mpq

from .graph import Quotient
from .model import (
    STATUS_EXACT,
    STATUS_UNSOUND,
    BadParameter,
    InducedMc,
    IterationLimit,
    Objective,
    Policy,
    SingularSystem,
    SolveResult,
    SparseMdp,
    TimeoutExceeded,
    induced_mc,
)
from .vi import StoppingCriterion, action_backup

EXACT_ELIMINATION = "exact_elimination"
FP_ELIMINATION = "fp_elimination"
ITERATIVE = "iterative"


@dataclass(frozen=True)
class Evaluator:
    """How the induced Markov chain is solved during policy iteration."""

    kind: str
    criterion: Optional[StoppingCriterion] = None

    def __post_init__(self):
        if self.kind not in (EXACT_ELIMINATION, FP_ELIMINATION, ITERATIVE):
            raise BadParameter(f"unknown evaluator kind {self.kind!r}")
        if self.kind == ITERATIVE and self.criterion is None:
            raise BadParameter("iterative evaluator needs a stopping criterion")

    @staticmethod
    def exact() -> "Evaluator":
        return Evaluator(EXACT_ELIMINATION)

    @staticmethod
    def fp() -> "Evaluator":
        return Evaluator(FP_ELIMINATION)

    @staticmethod
    def iterative(epsilon: float = 1e-6, mode: str = "relative") -> "Evaluator":
        return Evaluator(ITERATIVE, StoppingCriterion(mode, epsilon))

    def default_improvement_tolerance(self) -> float:
        """Strict improvement for exact evaluation; the evaluator's own
        epsilon for iterative evaluation (gaps below it are invisible);
        a small fixed cushion for float elimination."""
        if self.kind == EXACT_ELIMINATION:
            return 0.0
        if self.kind == ITERATIVE:
            return self.criterion.epsilon
        return 1e-8


def _self_absorbing(mdp: SparseMdp, state: int) -> bool:
    row = mdp.actions[state][0]
    return len(row) == 1 and row[0][0] == state


def _chain_structure(mc: InducedMc, objective: Objective):
    mdp = mc.mdp
    target = objective.target_set(mdp) if objective.is_reach else frozenset()
    absorbing = set()
    for s in range(mdp.num_states):
        if s in target:
            absorbing.add(s)
        elif _self_absorbing(mdp, s):
            if objective.kind == "total_reward" and mdp.reward(s) > 0:
                raise SingularSystem(
                    f"state {s} absorbs with positive reward; value diverges"
                )
            absorbing.add(s)
    unknown = [s for s in range(mdp.num_states) if s not in absorbing]
    return target, absorbing, unknown


def evaluate_policy(mc: InducedMc, objective: Objective, evaluator: Evaluator):
    """Exact or approximate per-state values of an induced chain.

    Target states evaluate to one, absorbing non-target states to zero;
    the remaining states form a linear system (I - P) x = b with b the
    one-step target mass or the state reward.  The iterative evaluator
    runs value iteration from zero and therefore under-approximates.

    Raises SingularSystem when the transient system cannot be solved,
    which means the chain was not preprocessed to be contracting.
    """
    target, absorbing, unknown = _chain_structure(mc, objective)
    mdp = mc.mdp
    if evaluator.kind == ITERATIVE:
        return _evaluate_iterative(mc, objective, target, evaluator.criterion)
    exact = evaluator.kind == EXACT_ELIMINATION

    if exact:
        values = [mpq(0)] * mdp.num_states
        one = mpq(1)
    else:
        values = [0.0] * mdp.num_states
        one = 1.0
    for t in target:
        values[t] = one
    if not unknown:
        return values

    pos = {s: k for k, s in enumerate(unknown)}
    n = len(unknown)
    if exact:
        rows = []
        for s in unknown:
            row = [mpq(0)] * (n + 1)
            row[pos[s]] = mpq(1)
            rhs = mdp.reward(s) if objective.kind == "total_reward" else mpq(0)
            for succ, p in mc.row(s):
                if succ in target and objective.is_reach:
                    rhs += p
                elif succ in pos:
                    row[pos[succ]] -= p
            row[n] = rhs
            rows.append(row)
        solved = _gauss_rational(rows, n)
        for s, k in pos.items():
            values[s] = solved[k]
        return values

    a = np.eye(n)
    b = np.zeros(n)
    for s in unknown:
        i = pos[s]
        if objective.kind == "total_reward":
            b[i] = float(mdp.reward(s))
        for succ, p in mc.row(s):
            if succ in target and objective.is_reach:
                b[i] += float(p)
            elif succ in pos:
                a[i, pos[succ]] -= float(p)
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    for s, k in pos.items():
        values[s] = float(x[k])
    return values


def _gauss_rational(rows, n):
    """Gaussian elimination over rationals, ascending-index pivots."""
    for col in range(n):
        pivot = next((r for r in range(col, n) if rows[r][col] != 0), None)
        if pivot is None:
            raise SingularSystem(f"no pivot in column {col}")
        rows[col], rows[pivot] = rows[pivot], rows[col]
        prow = rows[col]
        inv = 1 / prow[col]
        for k in range(col, n + 1):
            prow[k] *= inv
        for r in range(n):
            if r != col and rows[r][col] != 0:
                f = rows[r][col]
                row = rows[r]
                for k in range(col, n + 1):
                    row[k] -= f * prow[k]
    return [rows[k][n] for k in range(n)]


def _evaluate_iterative(mc, objective, target, criterion):
    mdp = mc.mdp
    values = [0.0] * mdp.num_states
    for t in target:
        values[t] = 1.0
    iterations = 0
    reward_kind = objective.kind == "total_reward"
    while True:
        if criterion.max_iterations is not None and iterations >= criterion.max_iterations:
            raise IterationLimit("policy evaluation iteration limit", iterations=iterations)
        new = list(values)
        for s in range(mdp.num_states):
            if s in target:
                continue
            acc = float(mdp.reward(s)) if reward_kind else 0.0
            for succ, p in mc.row(s):
                if succ in target and objective.is_reach:
                    acc += float(p)
                elif succ not in target:
                    acc += float(p) * values[succ]
            new[s] = acc
        iterations += 1
        old_arr, new_arr = np.asarray(values), np.asarray(new)
        values = new
        if criterion.accept(old_arr, new_arr):
            return values


def lowest_index_policy(mdp: SparseMdp) -> Policy:
    return Policy(tuple(0 for _ in range(mdp.num_states)))


def warm_start_policy(quotient: Quotient, estimates, objective: Optional[Objective] = None) -> Policy:
    """Greedy policy from a value estimate: one backup per action, pick
    the best, lowest action index on ties."""
    qobj = quotient.quotient_objective()
    if objective is not None and (
        objective.kind != qobj.kind or objective.opt != qobj.opt
    ):
        raise BadParameter("objective does not match the preprocessed model")
    mdp = quotient.mdp
    target = qobj.target_set(mdp) if qobj.is_reach else frozenset()
    choice = []
    for s in range(mdp.num_states):
        best_a = 0
        best = action_backup(mdp, estimates, qobj, s, 0, target=target)
        for a in range(1, mdp.num_actions(s)):
            val = action_backup(mdp, estimates, qobj, s, a, target=target)
            if (qobj.is_min and val < best) or (not qobj.is_min and val > best):
                best, best_a = val, a
        choice.append(best_a)
    return Policy(tuple(choice))


def solve_pi(
    quotient: Quotient,
    objective: Objective,
    evaluator: Evaluator = Evaluator.exact(),
    initial: Optional[Policy] = None,
    improvement_tolerance: Optional[float] = None,
    max_iterations: int = 10_000,
    deadline: Optional[float] = None,
) -> SolveResult:
    """Policy iteration on a preprocessed model.

    Starts from ``initial`` (default: lowest-index action everywhere),
    alternates evaluation and greedy improvement, and stops when no
    state switches.  A state switches only if some action's backup beats
    the current action's backup by more than the improvement tolerance
    (see ``Evaluator.default_improvement_tolerance``).  With the exact
    evaluator the result is exactly optimal and the final policy is a
    witness; otherwise the result is flagged unsound.
    """
    want = quotient.objective
    if objective.kind != want.kind or objective.opt != want.opt:
        raise BadParameter("objective does not match the preprocessed model")
    qobj = quotient.quotient_objective()
    mdp = quotient.mdp
    policy = initial if initial is not None else lowest_index_policy(mdp)
    policy.validate(mdp)
    exact = evaluator.kind == EXACT_ELIMINATION
    tol = (
        improvement_tolerance
        if improvement_tolerance is not None
        else evaluator.default_improvement_tolerance()
    )
    target = qobj.target_set(mdp) if qobj.is_reach else frozenset()
    sign = -1 if qobj.is_min else 1
    rounds = 0
    while True:
        if deadline is not None and time.monotonic() > deadline:
            raise TimeoutExceeded("deadline exceeded between evaluations", iterations=rounds)
        if rounds >= max_iterations:
            raise IterationLimit("policy iteration did not settle", iterations=rounds)
        mc = induced_mc(mdp, policy)
        values = evaluate_policy(mc, qobj, evaluator)
        rounds += 1
        switched = False
        new_choice = list(policy.choice)
        for s in range(mdp.num_states):
            if s in target or mdp.num_actions(s) == 1:
                continue
            current = action_backup(mdp, values, qobj, s, policy[s], target=target)
            best, best_a = current, policy[s]
            for a in range(mdp.num_actions(s)):
                if a == policy[s]:
                    continue
                val = action_backup(mdp, values, qobj, s, a, target=target)
                if not sign * (val - current) > tol:
                    continue  # improvement too small to count
                if best_a == policy[s] or sign * (val - best) > 0:
                    # first qualifying action wins ties (lowest index)
                    best, best_a = val, a
            if best_a != policy[s]:
                new_choice[s] = best_a
                switched = True
        if not switched:
            return SolveResult(
                value=values[mdp.initial_state],
                values=values,
                status=STATUS_EXACT if exact else STATUS_UNSOUND,
                iterations=rounds,
                policy=policy,
            )
        policy = Policy(tuple(new_choice))
