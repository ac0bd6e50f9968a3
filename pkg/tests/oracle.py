"""Independent brute-force reference solver for small MDPs.

Enumerates every memoryless deterministic policy, solves each induced
chain exactly with its own Gaussian elimination, and combines the
results pointwise.  Graph reasoning (reachability, bottom components)
goes through networkx rather than the package's own graph code, so an
agreement between this module and the engine is evidence, not an echo.

Frozen: tests compare engine output against this module; this module is
not adjusted to match the engine.
"""

from __future__ import annotations

import itertools

import networkx as nx
from gmpy2 import mpq

from mdpmc.model import INF, SparseMdp


def _solve_linear(indices, coeff_rows, rhs):
    """Solve (I - P) x = b restricted to ``indices`` exactly.

    ``coeff_rows[s]`` maps successor -> probability for s in indices;
    entries outside ``indices`` must already be folded into ``rhs``.
    """
    pos = {s: k for k, s in enumerate(indices)}
    n = len(indices)
    aug = []
    for s in indices:
        row = [mpq(0)] * (n + 1)
        row[pos[s]] = mpq(1)
        for succ, p in coeff_rows[s].items():
            if succ in pos:
                row[pos[succ]] -= p
        row[n] = rhs[s]
        aug.append(row)
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise ArithmeticError("singular system in oracle")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        prow = aug[col]
        inv = 1 / prow[col]
        for k in range(col, n + 1):
            prow[k] *= inv
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                row = aug[r]
                for k in range(col, n + 1):
                    row[k] -= f * prow[k]
    return {s: aug[pos[s]][n] for s in indices}


def _chain_rows(mdp: SparseMdp, choice):
    return [mdp.actions[s][choice[s]] for s in range(mdp.num_states)]


def _digraph(rows):
    g = nx.DiGraph()
    g.add_nodes_from(range(len(rows)))
    for s, row in enumerate(rows):
        for succ, _ in row:
            g.add_edge(s, succ)
    return g


def reach_values_chain(rows, targets):
    """Exact probability of ever hitting ``targets`` in a Markov chain."""
    n = len(rows)
    targets = set(targets)
    absorbed = [row if s not in targets else [(s, mpq(1))] for s, row in enumerate(rows)]
    g = _digraph(absorbed)
    can_reach = set(targets)
    for t in targets:
        can_reach |= nx.ancestors(g, t)
    values = [mpq(0)] * n
    for t in targets:
        values[t] = mpq(1)
    unknown = [s for s in range(n) if s in can_reach and s not in targets]
    if unknown:
        unknown_set = set(unknown)
        coeff, rhs = {}, {}
        for s in unknown:
            inside, direct = {}, mpq(0)
            for succ, p in absorbed[s]:
                if succ in targets:
                    direct += p
                elif succ in unknown_set:
                    inside[succ] = inside.get(succ, mpq(0)) + p
                # successors that cannot reach the target contribute 0
            coeff[s] = inside
            rhs[s] = direct
        solved = _solve_linear(unknown, coeff, rhs)
        for s, v in solved.items():
            values[s] = v
    return values


def total_reward_values_chain(rows, rewards):
    """Exact expected total reward per state; INF where it diverges."""
    n = len(rows)
    g = _digraph(rows)
    condensation = nx.condensation(g)
    bottom_states = set()
    positive_bottom = set()
    for comp_id in condensation.nodes:
        if condensation.out_degree(comp_id) == 0:
            members = condensation.nodes[comp_id]["members"]
            bottom_states |= members
            if any(rewards[s] > 0 for s in members):
                positive_bottom |= members
    poisoned = set(positive_bottom)
    for s in positive_bottom:
        poisoned |= nx.ancestors(g, s)
    values = [None] * n
    for s in poisoned:
        values[s] = INF
    for s in bottom_states - poisoned:
        values[s] = mpq(0)
    interior = [s for s in range(n) if values[s] is None]
    if interior:
        interior_set = set(interior)
        coeff, rhs = {}, {}
        for s in interior:
            inside = {}
            for succ, p in rows[s]:
                if succ in interior_set:
                    inside[succ] = inside.get(succ, mpq(0)) + p
            coeff[s] = inside
            rhs[s] = mpq(rewards[s])
        solved = _solve_linear(interior, coeff, rhs)
        for s, v in solved.items():
            values[s] = v
    return values


def policy_space_size(mdp: SparseMdp) -> int:
    size = 1
    for s in range(mdp.num_states):
        size *= mdp.num_actions(s)
    return size


def enumerate_policies(mdp: SparseMdp):
    return itertools.product(*(range(mdp.num_actions(s)) for s in range(mdp.num_states)))


def _better(a, b, opt):
    """True if value a is strictly better than b for the direction."""
    if opt == "max":
        if a is INF:
            return b is not INF
        if b is INF:
            return False
        return a > b
    if b is INF:
        return a is not INF
    if a is INF:
        return False
    return a < b


def oracle_values(mdp: SparseMdp, kind: str, opt: str, targets=None, policy_limit=200_000):
    """Optimal value vector by exhaustive policy enumeration.

    kind 'reach' needs ``targets``; kind 'total_reward' needs rewards on
    the model.  Values are exact rationals, or INF for divergent
    rewards.  Raises if the policy space exceeds ``policy_limit``.
    """
    size = policy_space_size(mdp)
    if size > policy_limit:
        raise ValueError(f"policy space {size} exceeds oracle limit {policy_limit}")
    if kind == "reach":
        targets = set(targets)
    elif kind == "total_reward":
        rewards = [mpq(r) for r in mdp.rewards]
    else:
        raise ValueError(kind)
    best = None
    for choice in enumerate_policies(mdp):
        rows = _chain_rows(mdp, choice)
        if kind == "reach":
            vals = reach_values_chain(rows, targets)
        else:
            vals = total_reward_values_chain(rows, rewards)
        if best is None:
            best = list(vals)
        else:
            for s in range(mdp.num_states):
                if _better(vals[s], best[s], opt):
                    best[s] = vals[s]
    return best


def oracle_value_sets(values):
    """(zero-value states, one-value states) from an oracle vector."""
    zeros = {s for s, v in enumerate(values) if v is not INF and v == 0}
    ones = {s for s, v in enumerate(values) if v is not INF and v == 1}
    return zeros, ones
