"""Instance generators: two adversarial families and seeded random MDPs.

The hard chain family defeats naive floating-point convergence tests:
its values mix at rate 1/2 per step, so iterative methods see tiny
per-step changes long before the true value is approached.  The
evaluator-trap family makes greedy policy switching depend on an
improvement gap that can be pushed below any fixed evaluation
tolerance.  Random instances exist as correctness fodder for the
oracles, not as hard cases.
"""

from __future__ import annotations

import random
from typing import Optional

from gmpy2 import mpq

from .model import BadParameter, SparseMdp, build_mdp, rat


def gen_hard_mn(n: int) -> SparseMdp:
    """Symmetric chain of 2n+1 states around a center, target at +n.

    State indices: 0 is the center, ``i`` is +i for 1 <= i <= n, and
    ``n+i`` is -i.  The center has a single coin-flip action to +1/-1.
    Every inner state has a slow action ``m`` (advance outward with 1/2,
    fall back to the center with 1/2) and a jump action ``j`` (straight
    to +n or -n with 1/2 each).  Both ends are absorbing; the label
    ``goal`` marks +n.
    """
    if not isinstance(n, int) or n < 2:
        raise BadParameter(f"hard chain needs integer n >= 2, got {n!r}")
    half = mpq(1, 2)
    num_states = 2 * n + 1
    pos = lambda i: i          # +i
    neg = lambda i: n + i      # -i
    transitions = [None] * num_states
    transitions[0] = [[(pos(1), half), (neg(1), half)]]
    for i in range(1, n):
        outward_pos = pos(i + 1)
        outward_neg = neg(i + 1)
        transitions[pos(i)] = [
            [(outward_pos, half), (0, half)],
            [(pos(n), half), (neg(n), half)],
        ]
        transitions[neg(i)] = [
            [(outward_neg, half), (0, half)],
            [(pos(n), half), (neg(n), half)],
        ]
    transitions[pos(n)] = [[(pos(n), mpq(1))]]
    transitions[neg(n)] = [[(neg(n), mpq(1))]]
    return build_mdp(transitions, labels={"goal": [pos(n)]}, initial_state=0)


def gen_pi_trap(delta) -> SparseMdp:
    """Five-state trap for policy iteration with approximate evaluation.

    States s0..s3 and a goal state.  s0 chooses a (to s1) or b (to s2);
    s1 reaches the goal with 1/10 and is otherwise stuck; s2 reaches the
    goal or the dead state with delta/2 each and returns to s0 with
    1 - delta.  The optimal choice at s0 is b, worth exactly 1/2, but
    the one-step advantage of b over a is only 0.4*delta, so evaluators
    with tolerance above that miss the switch.
    """
    d = rat(delta)
    if not 0 < d < 1:
        raise BadParameter(f"delta must lie strictly between 0 and 1, got {delta!r}")
    s0, s1, s2, s3, goal = 0, 1, 2, 3, 4
    transitions = [
        [[(s1, mpq(1))], [(s2, mpq(1))]],
        [[(goal, mpq(1, 10)), (s3, mpq(9, 10))]],
        [[(goal, d / 2), (s3, d / 2), (s0, 1 - d)]],
        [[(s3, mpq(1))]],
        [[(goal, mpq(1))]],
    ]
    return build_mdp(transitions, labels={"goal": [goal]}, initial_state=s0)


def _split_unit(rng: random.Random, parts: int, denominator: int):
    """Random positive rationals with the given denominator, summing to 1."""
    if parts == 1:
        return [mpq(1)]
    cuts = sorted(rng.sample(range(1, denominator), parts - 1))
    bounds = [0] + cuts + [denominator]
    return [mpq(bounds[k + 1] - bounds[k], denominator) for k in range(parts)]


def gen_random_mdp(
    seed: int,
    num_states: int,
    max_actions: int = 3,
    density: float = 0.3,
    target_fraction: float = 0.2,
    reward_range: Optional[tuple] = None,
    max_policies: int = 512,
    acyclic: bool = False,
) -> SparseMdp:
    """Seed-deterministic random MDP with exact dyadic-free rationals.

    Distribution denominators stay <= 64 so exact solvers remain cheap.
    The number of distinct memoryless policies is capped at
    ``max_policies`` (extra actions are dropped) to keep brute-force
    policy enumeration affordable.  When ``reward_range=(lo, hi)`` is
    given, rewards are attached, but only on states outside every end
    component; that keeps expected total rewards finite in both
    optimisation directions.  ``acyclic=True`` restricts transitions to
    higher-numbered successors (the last state absorbs), producing a
    model whose non-terminal part is cycle-free.
    """
    if num_states < 1 or max_actions < 1:
        raise BadParameter("num_states and max_actions must be positive")
    if not 0 < density <= 1:
        raise BadParameter("density must lie in (0, 1]")
    if not 0 < target_fraction <= 1:
        raise BadParameter("target_fraction must lie in (0, 1]")
    if max_policies < 1:
        raise BadParameter("max_policies must be positive")

    rng = random.Random(seed)
    n = num_states
    if n == 1:
        transitions = [[[(0, mpq(1))]]]
        rewards = {0: 0} if reward_range is not None else None
        return build_mdp(transitions, rewards=rewards, labels={"goal": [0]})

    max_support = max(1, round(density * n))
    transitions = []
    policy_product = 1
    for s in range(n):
        if acyclic and s == n - 1:
            transitions.append([[(s, mpq(1))]])
            continue
        num_acts = rng.randint(1, max_actions)
        # skew towards single-action states; keeps the policy space small
        if num_acts > 1 and rng.random() < 0.4:
            num_acts = 1
        while num_acts > 1 and policy_product * num_acts > max_policies:
            num_acts -= 1
        policy_product *= num_acts
        state_actions = []
        for _ in range(num_acts):
            if acyclic:
                pool = list(range(s + 1, n))
            else:
                pool = list(range(n))
            support = rng.sample(pool, min(len(pool), rng.randint(1, max_support)))
            denominator = rng.choice([4, 8, 16, 32, 64])
            if denominator < len(support):
                denominator = 64
            probs = _split_unit(rng, len(support), denominator)
            state_actions.append(list(zip(sorted(support), probs)))
        transitions.append(state_actions)

    num_targets = max(1, round(target_fraction * n))
    targets = sorted(rng.sample(range(n), num_targets))

    rewards = None
    if reward_range is not None:
        lo, hi = reward_range
        if lo < 0 or hi < lo:
            raise BadParameter("reward_range must satisfy 0 <= lo <= hi")
        from .graph import mec_decomposition

        draft = build_mdp(transitions, labels={"goal": targets})
        in_mec = set()
        for members, _ in mec_decomposition(draft):
            in_mec.update(members)
        rewards = {}
        for s in range(n):
            if s in in_mec or rng.random() < 0.45:
                continue
            den = rng.choice([1, 2, 4, 5, 8, 10])
            num = rng.randint(lo * den, hi * den)
            if num > 0:
                rewards[s] = mpq(num, den)
        if not rewards:
            rewards = {0: 0}  # carry a (possibly all-zero) reward vector

    return build_mdp(
        transitions,
        rewards=rewards,
        labels={"goal": targets},
        initial_state=0,
    )


_REQUIRED = object()

FAMILIES = ("hard-mn", "pi-trap", "random")


def generate(family: str, params=None) -> SparseMdp:
    """Build a model from a named family with loosely typed parameters.

    Parameter values may arrive as strings (command line) or JSON
    scalars (service requests); each is converted to its proper type
    here.  Families and their parameters:

    - ``hard-mn``: ``n`` (chain depth, >= 2)
    - ``pi-trap``: ``delta`` (rational in (0, 1), e.g. ``1/10``)
    - ``random``: ``seed`` plus the optional knobs of
      :func:`gen_random_mdp`; ``reward_range`` accepts ``"lo:hi"`` or a
      two-element sequence.
    """
    params = dict(params or {})

    def take(key, convert, default=_REQUIRED):
        if key in params:
            raw = params.pop(key)
            try:
                return convert(raw)
            except (ValueError, TypeError) as exc:
                raise BadParameter(f"parameter {key}={raw!r}: {exc}") from None
        if default is _REQUIRED:
            raise BadParameter(f"family {family!r} needs parameter {key!r}")
        return default

    if family == "hard-mn":
        model = gen_hard_mn(take("n", int))
    elif family == "pi-trap":
        model = gen_pi_trap(take("delta", lambda v: rat(str(v))))
    elif family == "random":
        model = gen_random_mdp(
            take("seed", int),
            num_states=take("num_states", int, 10),
            max_actions=take("max_actions", int, 3),
            density=take("density", float, 0.3),
            target_fraction=take("target_fraction", float, 0.2),
            reward_range=take("reward_range", _parse_reward_range, None),
            max_policies=take("max_policies", int, 512),
            acyclic=take("acyclic", _parse_bool, False),
        )
    else:
        raise BadParameter(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    if params:
        unknown = ", ".join(sorted(params))
        raise BadParameter(f"family {family!r} got unknown parameters: {unknown}")
    return model


def _parse_reward_range(value):
    if isinstance(value, str):
        lo, sep, hi = value.partition(":")
        if not sep:
            raise ValueError("expected lo:hi")
        return (int(lo), int(hi))
    lo, hi = value
    return (int(lo), int(hi))


def _parse_bool(value):
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("true", "false"):
        return value.lower() == "true"
    raise ValueError("expected true or false")
