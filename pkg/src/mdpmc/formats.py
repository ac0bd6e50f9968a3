"""Plain-text model and reference-value documents.

Model files are line oriented; ``#`` starts a comment and blank lines
are ignored.  A document lists the state count, the initial state,
labels, optional rewards, and one transition block per state:

    states 5
    initial 0
    label goal 4
    reward 2 1/3
    state 0
      action
        -> 1 1/2
        -> 2 1/2
    ...

Probabilities and rewards are exact rationals, written as ``p/q`` or as
terminating decimals; they never pass through a float.  A model carries
rewards exactly when at least one ``reward`` line is present (an
all-zero reward vector is kept distinct from "no rewards" by a single
``reward 0 0`` marker line).

:func:`write_model` emits a canonical form: states ascending, actions
in stored order, successors ascending, rationals in lowest terms.
Parsing a written document reproduces the model exactly, and writing is
deterministic, so structurally equal models serialize to identical
bytes.

Reference-value files map runs to their known answers, one per line:

    <model-id> <objective-id> <exact-rational-or-decimal>
"""

from __future__ import annotations

from typing import Dict, Mapping, Tuple

from gmpy2 import mpq

from .model import BadParameter, ModelError, Rational, SparseMdp, build_mdp, rat


class ParseError(ModelError):
    """Malformed document; carries the offending line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


def _content_lines(text: str):
    """Yield (line number, tokens) for non-blank, non-comment lines."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            yield lineno, body.split()


def _rational(lineno: int, token: str) -> Rational:
    try:
        return rat(token)
    except BadParameter as exc:
        raise ParseError(lineno, str(exc)) from None


def parse_model(text: str) -> SparseMdp:
    """Parse a model document.

    Syntax problems raise :class:`ParseError` with the line they were
    found on; whatever slips past the line checks is still caught by
    the model validation in :func:`build_mdp`.
    """
    num_states = None
    states_line = 0
    initial = None
    labels: Dict[str, set] = {}
    rewards = None
    blocks: Dict[int, list] = {}
    open_actions = None  # action list of the state block being read
    open_line = 0
    current = None  # transition list of the action being read
    action_line = 0

    def close_action():
        nonlocal current
        if current is None:
            return
        if not current:
            raise ParseError(action_line, "action has no transitions")
        total = sum((p for _, p in current), mpq(0))
        if total != 1:
            raise ParseError(action_line, f"probabilities sum to {total}, not 1")
        current = None

    def close_block():
        close_action()
        if open_actions is not None and not open_actions:
            raise ParseError(open_line, "state block has no actions")

    def need_states(lineno, what):
        if num_states is None:
            raise ParseError(lineno, f"{what} before the states line")

    def index(lineno, token, what):
        try:
            i = int(token)
        except ValueError:
            raise ParseError(lineno, f"{what} {token!r} is not an integer") from None
        if not 0 <= i < num_states:
            raise ParseError(lineno, f"{what} {i} out of range")
        return i

    for lineno, toks in _content_lines(text):
        head = toks[0]
        if head == "states":
            if num_states is not None:
                raise ParseError(lineno, "duplicate states line")
            if len(toks) != 2:
                raise ParseError(lineno, "expected: states <count>")
            try:
                count = int(toks[1])
            except ValueError:
                raise ParseError(lineno, f"state count {toks[1]!r} is not an integer") from None
            if count <= 0:
                raise ParseError(lineno, "state count must be positive")
            num_states, states_line = count, lineno
        elif head == "initial":
            need_states(lineno, "initial")
            if initial is not None:
                raise ParseError(lineno, "duplicate initial line")
            if len(toks) != 2:
                raise ParseError(lineno, "expected: initial <state>")
            initial = index(lineno, toks[1], "initial state")
        elif head == "label":
            need_states(lineno, "label")
            if len(toks) < 2:
                raise ParseError(lineno, "expected: label <name> [state ...]")
            members = labels.setdefault(toks[1], set())
            for tok in toks[2:]:
                members.add(index(lineno, tok, "label state"))
        elif head == "reward":
            need_states(lineno, "reward")
            if len(toks) != 3:
                raise ParseError(lineno, "expected: reward <state> <value>")
            i = index(lineno, toks[1], "reward state")
            if rewards is None:
                rewards = {}
            if i in rewards:
                raise ParseError(lineno, f"duplicate reward for state {i}")
            rewards[i] = _rational(lineno, toks[2])
        elif head == "state":
            need_states(lineno, "state")
            if len(toks) != 2:
                raise ParseError(lineno, "expected: state <index>")
            close_block()
            i = index(lineno, toks[1], "state")
            if i in blocks:
                raise ParseError(lineno, f"duplicate block for state {i}")
            open_actions = []
            open_line = lineno
            blocks[i] = open_actions
        elif head == "action":
            if open_actions is None:
                raise ParseError(lineno, "action outside a state block")
            if len(toks) != 1:
                raise ParseError(lineno, "expected: action")
            close_action()
            current = []
            action_line = lineno
            open_actions.append(current)
        elif head == "->":
            if current is None:
                raise ParseError(lineno, "transition outside an action")
            if len(toks) != 3:
                raise ParseError(lineno, "expected: -> <state> <probability>")
            succ = index(lineno, toks[1], "successor")
            p = _rational(lineno, toks[2])
            if p <= 0:
                raise ParseError(lineno, f"probability {p} not positive")
            current.append((succ, p))
        else:
            raise ParseError(lineno, f"unknown directive {head!r}")

    close_block()
    if num_states is None:
        raise ParseError(0, "document has no states line")
    for i in range(num_states):
        if i not in blocks:
            raise ParseError(states_line, f"state {i} has no transition block")

    return build_mdp(
        [blocks[i] for i in range(num_states)],
        rewards=rewards,
        labels=labels,
        initial_state=0 if initial is None else initial,
    )


def _token(value: str, what: str) -> str:
    value = str(value)
    if not value or "#" in value or any(c.isspace() for c in value):
        raise BadParameter(f"{what} {value!r} cannot appear in a document token")
    return value


def write_model(mdp: SparseMdp) -> str:
    """Serialize a model in canonical form."""
    out = [f"states {mdp.num_states}", f"initial {mdp.initial_state}"]
    for name in sorted(mdp.labels):
        members = " ".join(str(i) for i in sorted(mdp.labels[name]))
        out.append(f"label {_token(name, 'label name')} {members}".rstrip())
    if mdp.rewards is not None:
        entries = [(i, r) for i, r in enumerate(mdp.rewards) if r != 0]
        if not entries:
            entries = [(0, mpq(0))]  # keep the rewards section visible
        for i, r in entries:
            out.append(f"reward {i} {r}")
    for s in range(mdp.num_states):
        out.append(f"state {s}")
        for row in mdp.actions[s]:
            out.append("  action")
            for succ, p in sorted(row):
                out.append(f"    -> {succ} {p}")
    return "\n".join(out) + "\n"


ReferenceKey = Tuple[str, str]


def parse_reference_results(text: str) -> Dict[ReferenceKey, Rational]:
    """Parse a reference-value file into a (model-id, objective-id) map."""
    refs: Dict[ReferenceKey, Rational] = {}
    for lineno, toks in _content_lines(text):
        if len(toks) != 3:
            raise ParseError(lineno, "expected: <model-id> <objective-id> <value>")
        key = (toks[0], toks[1])
        if key in refs:
            raise ParseError(lineno, f"duplicate reference for {toks[0]} {toks[1]}")
        refs[key] = _rational(lineno, toks[2])
    return refs


def write_reference_results(refs: Mapping[ReferenceKey, object]) -> str:
    """Serialize reference values, sorted by model then objective id."""
    out = []
    for (model_id, objective_id), value in sorted(refs.items()):
        out.append(
            f"{_token(model_id, 'model id')} "
            f"{_token(objective_id, 'objective id')} {rat(value)}"
        )
    return "\n".join(out) + ("\n" if out else "")


__all__ = [
    "ParseError",
    "parse_model",
    "write_model",
    "parse_reference_results",
    "write_reference_results",
]
