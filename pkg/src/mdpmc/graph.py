"""Qualitative analysis and structural preprocessing.

Everything here is pure graph computation over exact models: value-0 and
value-1 state sets, strongly connected components in reverse topological
order, maximal end components, and the quotient construction that maps
value-1 states to one absorbing target, value-0 states to one absorbing
sink, and each end component to a single state carrying the actions that
leave it.  On the quotient every policy reaches target or sink almost
surely, which makes iterative solvers converge and linear systems
nonsingular.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from gmpy2 import mpq

from .model import (
    INF,
    ModelError,
    Objective,
    SparseMdp,
)


class RewardInMec(ModelError):
    """A positive-reward state sits in an end component that survives
    preprocessing; its minimising value would need in-component
    accumulation analysis, which this engine does not attempt."""


# ---------------------------------------------------------------------------
# adjacency helpers


def _forward_adjacency(mdp: SparseMdp, allowed: Optional[set] = None):
    """Per-state sorted successor lists; restricted to ``allowed`` states
    and to actions whose support stays inside it, when given."""
    adj = []
    for s in range(mdp.num_states):
        if allowed is not None and s not in allowed:
            adj.append([])
            continue
        succs = set()
        for action in mdp.actions[s]:
            if allowed is not None and any(t not in allowed for t, _ in action):
                continue
            succs.update(t for t, _ in action)
        adj.append(sorted(succs))
    return adj


def _existential_reach(mdp: SparseMdp, targets: Iterable[int], forbidden: Iterable[int] = ()) -> set:
    """States from which some action sequence can reach ``targets``.

    States in ``forbidden`` never join the set, so paths cannot pass
    through them (used to make absorbing states act absorbing)."""
    forbidden = set(forbidden)
    reached = set(targets) - forbidden
    reverse = [[] for _ in range(mdp.num_states)]
    for s in range(mdp.num_states):
        for action in mdp.actions[s]:
            for t, _ in action:
                reverse[t].append(s)
    frontier = sorted(reached)
    while frontier:
        nxt = []
        for t in frontier:
            for s in reverse[t]:
                if s not in reached and s not in forbidden:
                    reached.add(s)
                    nxt.append(s)
        frontier = sorted(nxt)
    return reached


# ---------------------------------------------------------------------------
# value-0 / value-1 sets


def prob0(mdp: SparseMdp, target: Iterable[int], opt: str) -> frozenset:
    """States whose reachability value is exactly 0.

    opt='max': no action sequence reaches the target at all.
    opt='min': some policy avoids the target forever.  Both are plain
    fixpoints, no numerics involved.
    """
    target = set(target)
    if opt == "max":
        return frozenset(range(mdp.num_states)) - frozenset(_existential_reach(mdp, target))
    # min: complement of the set from which every policy eventually
    # hits the target with positive probability
    forced = set(target)
    changed = True
    while changed:
        changed = False
        for s in range(mdp.num_states):
            if s in forced:
                continue
            if all(any(t in forced for t, _ in action) for action in mdp.actions[s]):
                forced.add(s)
                changed = True
    return frozenset(range(mdp.num_states)) - frozenset(forced)


def prob1(mdp: SparseMdp, target: Iterable[int], opt: str) -> frozenset:
    """States whose reachability value is exactly 1."""
    target = set(target)
    if opt == "min":
        avoid = prob0(mdp, target, "min")
        # first-hit semantics: escape routes may not pass through the
        # target, so target states stay in regardless of their actions
        tainted = _existential_reach(mdp, avoid, forbidden=target)
        return frozenset(range(mdp.num_states)) - frozenset(tainted)
    # max: greatest fixpoint; keep states having an action that stays in
    # the candidate set while retaining a route to the target
    candidate = set(range(mdp.num_states))
    while True:
        reach = set(target)
        grew = True
        while grew:
            grew = False
            for s in range(mdp.num_states):
                if s in reach or s not in candidate:
                    continue
                for action in mdp.actions[s]:
                    if all(t in candidate for t, _ in action) and any(
                        t in reach for t, _ in action
                    ):
                        reach.add(s)
                        grew = True
                        break
        if reach == candidate:
            return frozenset(candidate)
        candidate = reach


# ---------------------------------------------------------------------------
# strongly connected components


def _tarjan(num_states: int, successors) -> list:
    """Iterative Tarjan; components are emitted successors-first, which
    is exactly reverse topological order of the condensation."""
    index = [None] * num_states
    low = [0] * num_states
    on_stack = [False] * num_states
    stack = []
    components = []
    counter = 0
    for root in range(num_states):
        if index[root] is not None:
            continue
        work = [(root, 0)]
        while work:
            node, child = work.pop()
            if child == 0:
                index[node] = low[node] = counter
                counter += 1
                stack.append(node)
                on_stack[node] = True
            descend = False
            succ = successors[node]
            for ci in range(child, len(succ)):
                w = succ[ci]
                if index[w] is None:
                    work.append((node, ci + 1))
                    work.append((w, 0))
                    descend = True
                    break
                if on_stack[w]:
                    if index[w] < low[node]:
                        low[node] = index[w]
            if descend:
                continue
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == node:
                        break
                comp.sort()
                components.append(comp)
            if work:
                parent = work[-1][0]
                if low[node] < low[parent]:
                    low[parent] = low[node]
    return components


def scc_topological(mdp: SparseMdp) -> list:
    """SCCs of the full transition graph, successors before predecessors."""
    return _tarjan(mdp.num_states, _forward_adjacency(mdp))


# ---------------------------------------------------------------------------
# maximal end components


def mec_decomposition(mdp: SparseMdp, states: Optional[Iterable[int]] = None) -> list:
    """Maximal end components, optionally restricted to a state subset.

    Returns ``(member_set, retained)`` pairs where ``retained`` maps each
    member to the action indices whose support stays inside the
    component.  Classic refinement: restrict actions to the candidate,
    drop actionless states, split along SCCs, repeat until stable.
    Singleton states whose only internal action is a self-loop are
    end components; singletons without one are not.
    """
    if states is None:
        initial = set(range(mdp.num_states))
    else:
        initial = set(states)
    result = []
    candidates = [initial] if initial else []
    while candidates:
        cand = candidates.pop()
        # drop states until every remaining one keeps an internal action
        while True:
            removed = False
            kept_actions = {}
            for s in sorted(cand):
                acts = [
                    a
                    for a in range(mdp.num_actions(s))
                    if all(t in cand for t, _ in mdp.actions[s][a])
                ]
                if acts:
                    kept_actions[s] = acts
                else:
                    cand.discard(s)
                    removed = True
            if not removed:
                break
        if not cand:
            continue
        order = sorted(cand)
        pos = {s: k for k, s in enumerate(order)}
        succ = []
        for s in order:
            inside = set()
            for a in kept_actions[s]:
                inside.update(pos[t] for t, _ in mdp.actions[s][a])
            succ.append(sorted(inside))
        comps = _tarjan(len(order), succ)
        if len(comps) == 1 and len(comps[0]) == len(order):
            result.append((frozenset(cand), kept_actions))
        else:
            for comp in comps:
                candidates.append({order[k] for k in comp})
    result.sort(key=lambda pair: min(pair[0]))
    return result


# ---------------------------------------------------------------------------
# quotient construction


@dataclass
class Quotient:
    """Preprocessed model: collapsed quotient plus the book-keeping to
    translate values and policies back to the source model.

    Core states occupy quotient indices ``0..num_core-1``; the designated
    target (reachability only) and sink follow.  ``state_map`` is total:
    infinite-value states map to the sink but are listed separately and
    reported as INF at extraction.
    """

    mdp: SparseMdp
    state_map: list
    target: Optional[int]
    sink: int
    infinite_states: frozenset
    zero_states: frozenset
    one_states: frozenset
    objective: Objective
    source: SparseMdp
    groups: list
    action_origin: list

    @property
    def num_core(self) -> int:
        return self.target if self.target is not None else self.sink

    @property
    def initial_quotient_state(self) -> int:
        return self.state_map[self.source.initial_state]

    def quotient_objective(self) -> Objective:
        if self.objective.is_reach:
            return Objective.reach(self.objective.opt, states={self.target})
        return Objective.total_reward(self.objective.opt)

    def fixed_value(self, quotient_state: int):
        """Known value of a non-core quotient state (rational)."""
        if self.target is not None and quotient_state == self.target:
            return mpq(1)
        if quotient_state == self.sink:
            return mpq(0)
        raise KeyError(quotient_state)

    def lift_values(self, quotient_values) -> list:
        """Per-original-state values from a full quotient vector."""
        out = []
        for s in range(self.source.num_states):
            if s in self.infinite_states:
                out.append(INF)
            else:
                out.append(quotient_values[self.state_map[s]])
        return out

    def value_at(self, quotient_values, original_state: int):
        if original_state in self.infinite_states:
            return INF
        return quotient_values[self.state_map[original_state]]


def _group_core_states(maybe_states, mec_list):
    """Assign quotient indices to core groups, ascending by least member."""
    in_mec = {}
    for members, _ in mec_list:
        key = min(members)
        for s in members:
            in_mec[s] = key
    groups = []
    group_of = {}
    for s in sorted(maybe_states):
        key = in_mec.get(s, s)
        if key in group_of:
            continue
        if s in in_mec:
            members = tuple(sorted(next(m for m, _ in mec_list if min(m) == key)))
        else:
            members = (s,)
        group_of[key] = len(groups)
        groups.append(members)
    return groups, group_of, in_mec


def _quotient_actions(mdp, groups, state_map, internal):
    """Map member actions into quotient space, skipping internal ones."""
    actions = []
    origins = []
    for members in groups:
        acts = []
        orig = []
        for s in members:
            skip = internal.get(s, ())
            for a in range(mdp.num_actions(s)):
                if a in skip:
                    continue
                weight = {}
                for t, p in mdp.actions[s][a]:
                    q = state_map[t]
                    weight[q] = weight.get(q, mpq(0)) + p
                acts.append(sorted(weight.items()))
                orig.append((s, a))
        actions.append(acts)
        origins.append(orig)
    return actions, origins


def collapse_mecs(mdp: SparseMdp, objective: Objective) -> Quotient:
    """Full preprocessing pipeline producing a contracting quotient.

    Reachability: value-1 states become the absorbing target, value-0
    states the absorbing sink, end components among the remaining states
    collapse to single states keeping only their leaving actions.
    Total reward: infinite-value states are detected first (see
    :func:`reward_finiteness_check`), value-zero states go to the sink,
    and a surviving end component around a positive-reward state raises
    :class:`RewardInMec`.
    """
    objective.validate_for(mdp)
    if objective.is_reach:
        return _collapse_reach(mdp, objective)
    return _collapse_reward(mdp, objective)


preprocess = collapse_mecs


def _collapse_reach(mdp: SparseMdp, objective: Objective) -> Quotient:
    target_set = objective.target_set(mdp)
    p0 = prob0(mdp, target_set, objective.opt)
    p1 = prob1(mdp, target_set, objective.opt)
    maybe = set(range(mdp.num_states)) - p0 - p1
    mecs = mec_decomposition(mdp, states=maybe)
    groups, group_of, in_mec = _group_core_states(maybe, mecs)
    num_core = len(groups)
    target_idx, sink_idx = num_core, num_core + 1
    state_map = []
    for s in range(mdp.num_states):
        if s in p1:
            state_map.append(target_idx)
        elif s in p0:
            state_map.append(sink_idx)
        else:
            state_map.append(group_of[in_mec.get(s, s)])
    internal = {}
    for members, kept in mecs:
        for s, acts in kept.items():
            internal[s] = set(acts)
    actions, origins = _quotient_actions(mdp, groups, state_map, internal)
    actions.append([[(target_idx, mpq(1))]])
    actions.append([[(sink_idx, mpq(1))]])
    origins.append([])
    origins.append([])
    qmdp = SparseMdp(
        num_core + 2,
        actions,
        None,
        {"goal": frozenset({target_idx})},
        state_map[mdp.initial_state],
    )
    return Quotient(
        mdp=qmdp,
        state_map=state_map,
        target=target_idx,
        sink=sink_idx,
        infinite_states=frozenset(),
        zero_states=frozenset(p0),
        one_states=frozenset(p1),
        objective=objective,
        source=mdp,
        groups=groups,
        action_origin=origins,
    )


def reward_finiteness_check(mdp: SparseMdp, objective: Objective) -> frozenset:
    """States whose expected total reward is infinite.

    opt='max': states that can reach an end component containing a
    positive-reward state (ride it forever).  opt='min': states from
    which no policy reaches the zero-reward end-component region with
    probability 1, so every policy keeps collecting reward.
    """
    objective.validate_for(mdp)
    if objective.opt == "max":
        poisoned = set()
        for members, _ in mec_decomposition(mdp):
            if any(mdp.reward(s) > 0 for s in members):
                poisoned |= members
        if not poisoned:
            return frozenset()
        return frozenset(_existential_reach(mdp, poisoned))
    zero_states = {s for s in range(mdp.num_states) if mdp.reward(s) == 0}
    safe = set()
    for members, _ in mec_decomposition(mdp, states=zero_states):
        safe |= members
    if not safe:
        return frozenset(range(mdp.num_states))
    return frozenset(range(mdp.num_states)) - prob1(mdp, safe, "max")


def _collapse_reward(mdp: SparseMdp, objective: Objective) -> Quotient:
    infinite = set(reward_finiteness_check(mdp, objective))
    finite = [s for s in range(mdp.num_states) if s not in infinite]
    if objective.opt == "max":
        # actions of finite states never touch infinite states: touching
        # one would make the maximising value infinite too
        surviving = {s: list(range(mdp.num_actions(s))) for s in finite}
        positive = {s for s in finite if mdp.reward(s) > 0}
        reachers = _restricted_reach(mdp, surviving, positive)
        zero = set(finite) - reachers - positive
    else:
        surviving = {}
        for s in finite:
            acts = [
                a
                for a in range(mdp.num_actions(s))
                if all(t not in infinite for t, _ in mdp.actions[s][a])
            ]
            # a minimising policy with finite value avoids infinite
            # states almost surely, so at least one action remains
            surviving[s] = acts
        zero = {s for s in finite if mdp.reward(s) == 0}
        while True:
            shrunk = False
            for s in sorted(zero):
                if not any(
                    all(t in zero for t, _ in mdp.actions[s][a]) for a in surviving[s]
                ):
                    zero.discard(s)
                    shrunk = True
            if not shrunk:
                break
    maybe = set(finite) - zero
    restricted = _restricted_view(mdp, surviving, maybe)
    mecs = mec_decomposition(restricted, states=maybe) if maybe else []
    if objective.opt == "min":
        for members, _ in mecs:
            hot = [s for s in members if mdp.reward(s) > 0]
            if hot:
                raise RewardInMec(
                    f"positive-reward state(s) {hot} inside a surviving end component; "
                    "minimising total reward is undefined for this engine"
                )
    groups, group_of, in_mec = _group_core_states(maybe, mecs)
    num_core = len(groups)
    sink_idx = num_core
    state_map = []
    for s in range(mdp.num_states):
        if s in maybe:
            state_map.append(group_of[in_mec.get(s, s)])
        else:
            state_map.append(sink_idx)  # zero and infinite states both
    internal = {}
    kept_for = {}
    for members, kept in mecs:
        for s, acts in kept.items():
            # mec indices refer to the restricted view; translate back
            kept_for[s] = [surviving[s][a] for a in acts]
    for s in maybe:
        skip = set(kept_for.get(s, ()))
        dropped = set(range(mdp.num_actions(s))) - set(surviving[s])
        internal[s] = skip | dropped
    actions, origins = _quotient_actions(mdp, groups, state_map, internal)
    actions.append([[(sink_idx, mpq(1))]])
    origins.append([])
    rewards = []
    for members in groups:
        # collapsed components are zero-reward by construction
        rewards.append(mdp.reward(members[0]) if len(members) == 1 else mpq(0))
    rewards.append(mpq(0))
    qmdp = SparseMdp(
        num_core + 1,
        actions,
        rewards,
        {},
        state_map[mdp.initial_state],
    )
    return Quotient(
        mdp=qmdp,
        state_map=state_map,
        target=None,
        sink=sink_idx,
        infinite_states=frozenset(infinite),
        zero_states=frozenset(zero),
        one_states=frozenset(),
        objective=objective,
        source=mdp,
        groups=groups,
        action_origin=origins,
    )


def _restricted_reach(mdp, surviving, targets):
    """Backward existential reachability using only surviving actions."""
    reverse = {s: [] for s in surviving}
    for s, acts in surviving.items():
        for a in acts:
            for t, _ in mdp.actions[s][a]:
                if t in reverse:
                    reverse[t].append(s)
    reached = set(t for t in targets if t in surviving)
    frontier = sorted(reached)
    while frontier:
        nxt = []
        for t in frontier:
            for s in reverse[t]:
                if s not in reached:
                    reached.add(s)
                    nxt.append(s)
        frontier = sorted(nxt)
    return reached


def _restricted_view(mdp, surviving, members):
    """A lightweight sub-model exposing only surviving actions, for the
    end-component search among ``members``.  States outside keep a stub
    self-loop so indices stay aligned."""
    actions = []
    for s in range(mdp.num_states):
        if s in members and surviving.get(s):
            actions.append([mdp.actions[s][a] for a in surviving[s]])
        else:
            actions.append([[(s, mpq(1))]])
    view = SparseMdp(mdp.num_states, actions, mdp.rewards, {}, mdp.initial_state)
    return view


def contracting_check(quotient: Quotient) -> bool:
    """Certificate that the quotient really is contracting: every action
    of every core state can reach target-or-sink, and no end component
    survives among the core states."""
    q = quotient.mdp
    absorbing = {quotient.sink}
    if quotient.target is not None:
        absorbing.add(quotient.target)
    reach = _existential_reach(q, absorbing)
    for s in range(quotient.num_core):
        for action in q.actions[s]:
            if not any(t in reach for t, _ in action):
                return False
    core = set(range(quotient.num_core))
    return not mec_decomposition(q, states=core)
