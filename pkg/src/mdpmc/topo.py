"""Topological orchestration over strongly connected components.

Components of the preprocessed core are solved successors-first, so
every transition leaving a component points at states whose values are
already known.  Those exits are folded away: for reachability the
value-weighted exit mass moves onto the folded target (remainder onto
the sink), for rewards it becomes a one-visit auxiliary state whose
reward carries the expected downstream contribution.  Singleton
components without a self-loop collapse to a single backup computed in
exact rational arithmetic, with no backend involved; everything else
goes to the chosen backend on a self-contained sub-model.

Backpropagated values are kept as exact rationals regardless of the
backend's field (float outputs convert exactly, floats being dyadic
rationals), so orchestration itself introduces no additional rounding.
Approximate backends receive the full epsilon on every component; the
result is flagged rather than silently tightened.
"""

from __future__ import annotations

from typing import Optional

from gmpy2 import mpq

from .graph import Quotient, _tarjan
from .lp import LpOptions, SimplexTolerances, solve_lp
from .model import (
    INF,
    STATUS_EXACT,
    BadParameter,
    Objective,
    SolveResult,
    SparseMdp,
    rat_from_float,
    weakest_status,
)
from .pi import Evaluator, solve_pi, warm_start_policy
from .vi import OviConfig, StoppingCriterion, solve_ovi, solve_vi, vi_estimates

BACKENDS = ("vi", "ovi", "pi", "lp")


def backend_is_exact(backend: str, options: Optional[dict] = None) -> bool:
    """Whether the configured backend produces exact rational values."""
    options = options or {}
    if backend == "pi":
        return options.get("evaluator", "exact") == "exact"
    if backend == "lp":
        return options.get("field", "rational") == "rational"
    if backend in ("vi", "ovi"):
        return False
    raise BadParameter(f"unknown backend {backend!r}")


def _lifted(quotient: Quotient, result: SolveResult) -> SolveResult:
    """Same result with the value vector translated to source states."""
    full = quotient.lift_values(result.values)
    return SolveResult(
        value=full[quotient.source.initial_state],
        values=full,
        status=result.status,
        iterations=result.iterations,
        policy=result.policy,
        lower=result.lower,
        upper=result.upper,
        flags=result.flags,
        time_ms=result.time_ms,
    )


def run_backend(
    quotient: Quotient,
    objective: Objective,
    backend: str,
    options: Optional[dict] = None,
    deadline: Optional[float] = None,
) -> SolveResult:
    """Dispatch one monolithic solve to a configured backend.

    The returned value vector is always lifted to source-model states
    (OVI's lower/upper certificates stay in quotient space).  Options
    are plain keyword dictionaries so callers (CLI, service, bench
    suites) can pass parsed configuration through unchanged:

    - vi: epsilon, mode, max_iterations
    - ovi: epsilon, guess_factor, budget_factor, max_rounds, padding
    - pi: evaluator (exact|fp|iterative), epsilon, mode,
      improvement_tolerance, warm_iterations
    - lp: field (rational|float), bounds_mode, warm_iterations,
      objective_mode, unique_action_equality, feasibility, pivot
    """
    options = dict(options or {})
    if backend == "vi":
        criterion = StoppingCriterion(
            options.get("mode", "relative"),
            float(options.get("epsilon", 1e-6)),
            options.get("max_iterations"),
        )
        return _lifted(quotient, solve_vi(quotient, objective, criterion, deadline=deadline))
    if backend == "ovi":
        config = OviConfig(
            **{
                k: options[k]
                for k in ("guess_factor", "budget_factor", "max_rounds", "padding")
                if k in options
            }
        )
        result = solve_ovi(
            quotient,
            objective,
            epsilon=float(options.get("epsilon", 1e-6)),
            config=config,
            deadline=deadline,
        )
        return _lifted(quotient, result)
    if backend == "pi":
        kind = options.get("evaluator", "exact")
        if kind == "exact":
            evaluator = Evaluator.exact()
        elif kind == "fp":
            evaluator = Evaluator.fp()
        elif kind == "iterative":
            evaluator = Evaluator.iterative(
                float(options.get("epsilon", 1e-6)), options.get("mode", "relative")
            )
        else:
            raise BadParameter(f"unknown policy evaluator {kind!r}")
        initial = None
        warm = int(options.get("warm_iterations", 0))
        if warm > 0:
            estimates = vi_estimates(quotient, objective, warm, field="rational")
            initial = warm_start_policy(quotient, estimates)
        result = solve_pi(
            quotient,
            objective,
            evaluator,
            initial=initial,
            improvement_tolerance=options.get("improvement_tolerance"),
            deadline=deadline,
        )
        return _lifted(quotient, result)
    if backend == "lp":
        field = options.get("field", "rational")
        bounds_mode = options.get("bounds_mode", "trivial")
        estimates = None
        if bounds_mode == "warm":
            k = int(options.get("warm_iterations", 10))
            full = vi_estimates(quotient, objective, k, field="rational")
            estimates = full[: quotient.num_core]
        lp_options = LpOptions(
            bounds_mode=bounds_mode,
            warm_estimates=estimates,
            objective_mode=options.get("objective_mode", "all_states"),
            unique_action_equality=bool(options.get("unique_action_equality", False)),
        )
        tolerances = SimplexTolerances(
            float(options.get("feasibility", 1e-9)), float(options.get("pivot", 1e-9))
        )
        return solve_lp(
            quotient,
            objective,
            lp_options,
            field=field,
            tolerances=tolerances,
            deadline=deadline,
        )
    raise BadParameter(f"unknown backend {backend!r}")


# ---------------------------------------------------------------------------
# orchestration


def _to_rational(value):
    if isinstance(value, mpq):
        return value
    if isinstance(value, int):
        return mpq(value)
    return rat_from_float(float(value))


def _core_components(quotient: Quotient):
    """SCCs of the core subgraph, successors-first."""
    num_core = quotient.num_core
    succ = []
    for s in range(num_core):
        inside = set()
        for action in quotient.mdp.actions[s]:
            inside.update(t for t, _ in action if t < num_core)
        succ.append(sorted(inside))
    return _tarjan(num_core, succ), succ


def _direct_backup(quotient: Quotient, values, state: int, is_reach: bool, minimize: bool):
    best = None
    for action in quotient.mdp.actions[state]:
        acc = mpq(0) if is_reach else quotient.mdp.rewards[state]
        for t, p in action:
            v = values[t]
            if v:
                acc += p * v
        if best is None or (acc < best if minimize else acc > best):
            best = acc
    return best


def _identity_subquotient(sub_mdp, target, sink, objective):
    n = sub_mdp.num_states
    origins = [
        [(s, a) for a in range(sub_mdp.num_actions(s))] for s in range(n)
    ]
    return Quotient(
        mdp=sub_mdp,
        state_map=list(range(n)),
        target=target,
        sink=sink,
        infinite_states=frozenset(),
        zero_states=frozenset(),
        one_states=frozenset(),
        objective=objective,
        source=sub_mdp,
        groups=[(s,) for s in range(n)],
        action_origin=origins,
    )


def _reach_submodel(quotient: Quotient, members, values, opt: str):
    """Sub-model over one component; exits split into target/sink mass
    weighted by the already-solved downstream values."""
    local = {s: i for i, s in enumerate(members)}
    k = len(members)
    t_local, s_local = k, k + 1
    actions = []
    for s in members:
        rows = []
        for action in quotient.mdp.actions[s]:
            weight = {}
            out = mpq(0)
            cmass = mpq(0)
            for t, p in action:
                if t in local:
                    j = local[t]
                    weight[j] = weight.get(j, mpq(0)) + p
                else:
                    out += p
                    v = values[t]
                    if v:
                        cmass += p * v
            if cmass < 0:
                cmass = mpq(0)
            elif cmass > out:
                cmass = out
            row = sorted(weight.items())
            if cmass:
                row.append((t_local, cmass))
            rest = out - cmass
            if rest:
                row.append((s_local, rest))
            rows.append(row)
        actions.append(rows)
    actions.append([[(t_local, mpq(1))]])
    actions.append([[(s_local, mpq(1))]])
    sub_mdp = SparseMdp(k + 2, actions, None, {"goal": frozenset({t_local})}, 0)
    objective = Objective.reach(opt, states=frozenset({t_local}))
    return _identity_subquotient(sub_mdp, t_local, s_local, objective), objective, k


def _reward_submodel(quotient: Quotient, members, values, opt: str):
    """Sub-model over one component; each action's downstream reward
    contribution rides on a one-visit auxiliary state."""
    local = {s: i for i, s in enumerate(members)}
    k = len(members)
    prepared = []
    aux_rewards = []
    for s in members:
        rows = []
        for action in quotient.mdp.actions[s]:
            weight = {}
            out = mpq(0)
            contribution = mpq(0)
            for t, p in action:
                if t in local:
                    j = local[t]
                    weight[j] = weight.get(j, mpq(0)) + p
                else:
                    out += p
                    v = values[t]
                    if v:
                        contribution += p * v
            aux = None
            if contribution > 0:
                aux = k + len(aux_rewards)
                aux_rewards.append(contribution / out)
            rows.append((sorted(weight.items()), out, aux))
        prepared.append(rows)
    sink = k + len(aux_rewards)
    actions = []
    for rows in prepared:
        concrete = []
        for row, out, aux in rows:
            row = list(row)
            if out:
                row.append((aux if aux is not None else sink, out))
            concrete.append(row)
        actions.append(concrete)
    for _ in aux_rewards:
        actions.append([[(sink, mpq(1))]])
    actions.append([[(sink, mpq(1))]])
    rewards = [quotient.mdp.rewards[s] for s in members] + aux_rewards + [mpq(0)]
    sub_mdp = SparseMdp(sink + 1, actions, rewards, None, 0)
    objective = Objective.total_reward(opt)
    return _identity_subquotient(sub_mdp, None, sink, objective), objective, k


def solve_topological(
    quotient: Quotient,
    objective: Objective,
    backend: str = "pi",
    options: Optional[dict] = None,
    deadline: Optional[float] = None,
) -> SolveResult:
    """Solve component-wise with the configured backend.

    The result's flags carry ``backend-calls=N`` (how many components
    actually reached the backend; acyclic cores need none) and, for
    approximate backends, ``per-scc-epsilon``.  With an LP backend the
    per-component objective always sums all states, since every value
    is substituted downstream.
    """
    q = quotient
    own = q.objective
    if objective.kind != own.kind or objective.opt != own.opt:
        raise BadParameter("objective does not match the preprocessed model")
    options = dict(options or {})
    exact = backend_is_exact(backend, options)
    sub_options = dict(options)
    if backend == "lp":
        sub_options["objective_mode"] = "all_states"

    is_reach = objective.is_reach
    minimize = objective.is_min
    values = [mpq(0)] * q.mdp.num_states
    if q.target is not None:
        values[q.target] = mpq(1)

    status = STATUS_EXACT
    iterations = 0
    backend_calls = 0
    if q.num_core:
        comps, succ = _core_components(q)
        for comp in comps:
            s = comp[0]
            if len(comp) == 1 and s not in succ[s]:
                values[s] = _direct_backup(q, values, s, is_reach, minimize)
                continue
            if is_reach:
                sub_q, sub_obj, k = _reach_submodel(q, comp, values, objective.opt)
            else:
                sub_q, sub_obj, k = _reward_submodel(q, comp, values, objective.opt)
            result = run_backend(sub_q, sub_obj, backend, sub_options, deadline)
            backend_calls += 1
            iterations += result.iterations
            status = weakest_status((status, result.status))
            for i, member in enumerate(comp):
                values[member] = _to_rational(result.values[i])

    full = q.lift_values(values)
    if not exact:
        full = [v if v is INF else float(v) for v in full]
    flags = [f"backend-calls={backend_calls}"]
    if not exact:
        flags.append("per-scc-epsilon")
    return SolveResult(
        value=full[q.source.initial_state],
        values=full,
        status=status,
        iterations=iterations,
        flags=tuple(flags),
    )
