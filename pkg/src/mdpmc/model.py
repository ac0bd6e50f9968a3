"""Core data model for explicit-state MDPs.

States are integers ``0 .. num_states-1``.  Every state owns a nonempty,
ordered list of actions; an action is a sparse probability distribution
stored as ``(successor, probability)`` pairs.  Probabilities are
arbitrary-precision rationals (the canonical representation); a float
view is derived by one rounding pass and cached, so exact and
floating-point algorithms consume the same model object.

Models are immutable after construction and safe to share across
threads.  Mutating the internal lists is unsupported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from gmpy2 import mpq

Rational = mpq
RationalLike = Union[int, str, Fraction, tuple, "Rational"]


class ModelError(Exception):
    """Base class for model construction and solver errors."""


class NonStochastic(ModelError):
    pass


class EmptyActionSet(ModelError):
    pass


class BadIndex(ModelError):
    pass


class NegativeReward(ModelError):
    pass


class BadPolicyIndex(ModelError):
    pass


class BadParameter(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class SingularSystem(ModelError):
    pass


class IterationLimit(ModelError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class TimeoutExceeded(ModelError):
    """Raised by solvers at an iteration boundary once a deadline passed."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


def rat(value: RationalLike) -> Rational:
    """Convert to an exact rational.

    Accepts ints, rationals, (numerator, denominator) pairs, and strings.
    Strings may be ratios like ``"1/3"`` or terminating decimals like
    ``"0.25"`` / ``"7e-2"``; both parse exactly, never through a float.
    """
    if isinstance(value, mpq):
        return value
    if isinstance(value, int):
        return mpq(value)
    if isinstance(value, Fraction):
        return mpq(value.numerator, value.denominator)
    if isinstance(value, tuple):
        num, den = value
        return mpq(num, den)
    if isinstance(value, str):
        try:
            f = Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise BadParameter(f"not a rational: {value!r}") from exc
        return mpq(f.numerator, f.denominator)
    if isinstance(value, float):
        raise BadParameter(
            "refusing to build model probabilities from floats; "
            "pass a string or fraction instead"
        )
    raise BadParameter(f"cannot interpret {value!r} as a rational")


def rat_from_float(value: float) -> Rational:
    """Exact rational with the same value as the binary float."""
    return mpq(Fraction(value))


class _Infinity:
    """Distinguished infinite value for expected rewards.

    Kept separate from ``float('inf')`` so rational value vectors can
    carry it without leaving exact arithmetic.  Compares greater than
    every finite number and equal only to itself.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "inf"

    def __float__(self):
        return float("inf")

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash(float("inf"))

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __add__(self, other):
        return self

    __radd__ = __add__

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()


def is_infinite(value) -> bool:
    return value is INF


@dataclass
class FloatView:
    """Row-per-state-action sparse float view of a model.

    ``matrix`` has one row per (state, action) pair in state order and
    action order, over all states.  ``row_starts[s]`` is the first row
    of state ``s`` (length ``num_states + 1``), ``row_state[r]`` the
    owning state of row ``r``, and ``row_reward[r]`` the reward of that
    state (zeros for reward-free models).
    """

    matrix: object
    row_starts: np.ndarray
    row_state: np.ndarray
    row_reward: np.ndarray
    num_rows: int


class SparseMdp:
    """Validated sparse MDP; construct via :func:`build_mdp`."""

    def __init__(self, num_states, actions, rewards, labels, initial_state):
        self.num_states: int = num_states
        # actions[s][a] = list of (successor, rational probability)
        self.actions = actions
        self.rewards = rewards
        self.labels: dict = labels
        self.initial_state: int = initial_state
        self._float_view: Optional[FloatView] = None

    def num_actions(self, state: int) -> int:
        return len(self.actions[state])

    def transitions(self, state: int, action: int):
        return self.actions[state][action]

    @property
    def has_rewards(self) -> bool:
        return self.rewards is not None

    def reward(self, state: int) -> Rational:
        if self.rewards is None:
            return mpq(0)
        return self.rewards[state]

    def state_action_pairs(self):
        for s in range(self.num_states):
            for a in range(len(self.actions[s])):
                yield s, a

    def total_actions(self) -> int:
        return sum(len(al) for al in self.actions)

    def float_view(self) -> FloatView:
        """Cached CSR float view; built on first use, idempotent."""
        view = self._float_view
        if view is None:
            view = self._build_float_view()
            self._float_view = view
        return view

    def _build_float_view(self) -> FloatView:
        import scipy.sparse as sp

        data, indices, indptr = [], [], [0]
        row_state, row_reward = [], []
        row_starts = np.zeros(self.num_states + 1, dtype=np.int64)
        for s in range(self.num_states):
            row_starts[s] = len(row_state)
            rew = float(self.rewards[s]) if self.rewards is not None else 0.0
            for action in self.actions[s]:
                for succ, p in action:
                    data.append(float(p))
                    indices.append(succ)
                indptr.append(len(data))
                row_state.append(s)
                row_reward.append(rew)
        row_starts[self.num_states] = len(row_state)
        matrix = sp.csr_matrix(
            (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
            shape=(len(row_state), self.num_states),
        )
        return FloatView(
            matrix=matrix,
            row_starts=row_starts,
            row_state=np.array(row_state, dtype=np.int64),
            row_reward=np.array(row_reward),
            num_rows=len(row_state),
        )

    def __eq__(self, other):
        if not isinstance(other, SparseMdp):
            return NotImplemented
        return (
            self.num_states == other.num_states
            and self.initial_state == other.initial_state
            and self.actions == other.actions
            and self.rewards == other.rewards
            and self.labels == other.labels
        )

    def __repr__(self):
        kind = "reward" if self.has_rewards else "plain"
        return (
            f"SparseMdp(states={self.num_states}, actions={self.total_actions()}, "
            f"{kind}, initial={self.initial_state})"
        )


def build_mdp(
    transitions: Sequence[Sequence[Sequence[tuple]]],
    rewards: Optional[Mapping[int, RationalLike] | Sequence[RationalLike]] = None,
    labels: Optional[Mapping[str, Iterable[int]]] = None,
    initial_state: int = 0,
) -> SparseMdp:
    """Validate raw transition data and build a :class:`SparseMdp`.

    ``transitions[s][a]`` lists ``(successor, probability)`` pairs; the
    probability may be anything :func:`rat` accepts.  Each distribution
    must have positive entries summing to exactly one.  ``rewards`` is
    either a dense per-state sequence or a sparse index map (absent
    entries are zero); passing any reward at all marks the model as
    carrying rewards.

    Raises:
        EmptyActionSet: some state has no action.
        NonStochastic: a distribution does not sum to 1 or has a
            non-positive entry.
        BadIndex: successor or initial state out of range, or a label
            mentions an unknown state.
        NegativeReward: a reward below zero.
    """
    num_states = len(transitions)
    if num_states == 0:
        raise EmptyActionSet("model needs at least one state")
    acts = []
    one = mpq(1)
    for s, state_actions in enumerate(transitions):
        if not state_actions:
            raise EmptyActionSet(f"state {s} has no action")
        parsed_actions = []
        for a, dist in enumerate(state_actions):
            merged = {}
            total = mpq(0)
            for succ, p in dist:
                succ = int(succ)
                if not 0 <= succ < num_states:
                    raise BadIndex(f"state {s} action {a}: successor {succ} out of range")
                q = rat(p)
                if q <= 0:
                    raise NonStochastic(f"state {s} action {a}: probability {q} not positive")
                merged[succ] = merged.get(succ, mpq(0)) + q
                total += q
            if total != one:
                raise NonStochastic(f"state {s} action {a}: probabilities sum to {total}, not 1")
            # canonical row: successors ascending, duplicates merged
            parsed_actions.append(sorted(merged.items()))
        acts.append(parsed_actions)

    rew_list = None
    if rewards is not None:
        rew_list = [mpq(0)] * num_states
        items = rewards.items() if isinstance(rewards, Mapping) else enumerate(rewards)
        for s, r in items:
            s = int(s)
            if not 0 <= s < num_states:
                raise BadIndex(f"reward for out-of-range state {s}")
            q = rat(r)
            if q < 0:
                raise NegativeReward(f"state {s}: reward {q} < 0")
            rew_list[s] = q

    label_map = {}
    if labels:
        for name, members in labels.items():
            member_set = frozenset(int(m) for m in members)
            for m in member_set:
                if not 0 <= m < num_states:
                    raise BadIndex(f"label {name!r} mentions out-of-range state {m}")
            label_map[str(name)] = member_set

    if not 0 <= initial_state < num_states:
        raise BadIndex(f"initial state {initial_state} out of range")

    return SparseMdp(num_states, acts, rew_list, label_map, initial_state)


@dataclass(frozen=True)
class Objective:
    """A reachability or expected-total-reward query with a direction.

    ``kind`` is ``"reach"`` or ``"total_reward"``; ``opt`` is ``"min"``
    or ``"max"``.  Reachability targets are named by label or by an
    explicit state set, resolved against a concrete model via
    :meth:`target_set`.
    """

    kind: str
    opt: str
    target_label: Optional[str] = None
    target_states: Optional[frozenset] = None

    KINDS = ("reach", "total_reward")
    OPTS = ("min", "max")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise BadParameter(f"unknown objective kind {self.kind!r}")
        if self.opt not in self.OPTS:
            raise BadParameter(f"unknown direction {self.opt!r}")
        if self.kind == "reach" and self.target_label is None and self.target_states is None:
            raise BadParameter("reachability objective needs a target")

    @staticmethod
    def reach(opt: str, label: Optional[str] = None, states: Optional[Iterable[int]] = None) -> "Objective":
        return Objective(
            "reach",
            opt,
            target_label=label,
            target_states=frozenset(states) if states is not None else None,
        )

    @staticmethod
    def total_reward(opt: str) -> "Objective":
        return Objective("total_reward", opt)

    @property
    def is_reach(self) -> bool:
        return self.kind == "reach"

    @property
    def is_min(self) -> bool:
        return self.opt == "min"

    def target_set(self, mdp: SparseMdp) -> frozenset:
        """Resolve the target set against a model; validates nonemptiness."""
        if self.kind != "reach":
            raise BadParameter("only reachability objectives have a target set")
        if self.target_states is not None:
            members = self.target_states
        else:
            if self.target_label not in mdp.labels:
                raise BadIndex(f"model has no label {self.target_label!r}")
            members = mdp.labels[self.target_label]
        if not members:
            raise BadParameter("reachability target set is empty")
        for m in members:
            if not 0 <= m < mdp.num_states:
                raise BadIndex(f"target state {m} out of range")
        return frozenset(members)

    def validate_for(self, mdp: SparseMdp):
        if self.kind == "total_reward":
            if not mdp.has_rewards:
                raise BadParameter("total-reward objective on a model without rewards")
        else:
            self.target_set(mdp)

    def spec_string(self) -> str:
        if self.kind == "total_reward":
            return f"reward:{self.opt}"
        tgt = self.target_label if self.target_label is not None else (
            ",".join(str(s) for s in sorted(self.target_states))
        )
        return f"reach:{self.opt}:{tgt}"


@dataclass(frozen=True)
class Policy:
    """Memoryless deterministic choice: one action index per state."""

    choice: tuple

    def __post_init__(self):
        object.__setattr__(self, "choice", tuple(int(c) for c in self.choice))

    def __len__(self):
        return len(self.choice)

    def __getitem__(self, state):
        return self.choice[state]

    def validate(self, mdp: SparseMdp):
        if len(self.choice) != mdp.num_states:
            raise BadPolicyIndex(
                f"policy length {len(self.choice)} != {mdp.num_states} states"
            )
        for s, c in enumerate(self.choice):
            if not 0 <= c < mdp.num_actions(s):
                raise BadPolicyIndex(f"state {s}: action {c} out of range")


class InducedMc:
    """The Markov chain a policy induces: one action left per state."""

    def __init__(self, mdp: SparseMdp, policy: Policy, source: SparseMdp):
        self.mdp = mdp
        self.policy = policy
        self.source = source

    @property
    def num_states(self):
        return self.mdp.num_states

    def row(self, state: int):
        return self.mdp.actions[state][0]


def induced_mc(mdp: SparseMdp, policy: Policy) -> InducedMc:
    """Apply a policy, keeping exactly the chosen distribution per state.

    State count, rewards and labels carry over verbatim; the selected
    distributions are shared with the source model, not copied.
    """
    policy.validate(mdp)
    chain_actions = [[mdp.actions[s][policy[s]]] for s in range(mdp.num_states)]
    chain = SparseMdp(
        mdp.num_states,
        chain_actions,
        mdp.rewards,
        mdp.labels,
        mdp.initial_state,
    )
    return InducedMc(chain, policy, mdp)


# Solver result statuses, strongest to weakest.
STATUS_EXACT = "exact"
STATUS_CERTIFIED = "certified"
STATUS_UNSOUND = "unsound"

_STATUS_RANK = {STATUS_EXACT: 0, STATUS_CERTIFIED: 1, STATUS_UNSOUND: 2}


def weakest_status(statuses: Iterable[str]) -> str:
    worst = STATUS_EXACT
    for s in statuses:
        if _STATUS_RANK[s] > _STATUS_RANK[worst]:
            worst = s
    return worst


@dataclass
class SolveResult:
    """Outcome of one solver call on a preprocessed model.

    ``values`` is indexed by the solved model's states (rationals, floats
    or INF depending on the backend); ``value`` is the entry at that
    model's initial state.  ``lower``/``upper`` are certified bounds when
    the solver provides them, ``policy`` a witness in the solved model's
    coordinates.
    """

    value: object
    values: object
    status: str
    iterations: int = 0
    policy: Optional[Policy] = None
    lower: object = None
    upper: object = None
    flags: tuple = ()
    time_ms: Optional[float] = None

    def with_flag(self, flag: str) -> "SolveResult":
        if flag in self.flags:
            return self
        self.flags = self.flags + (flag,)
        return self
