"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import pytest
from gmpy2 import mpq

from mdpmc.gen import gen_hard_mn, gen_pi_trap, gen_random_mdp
from mdpmc.graph import collapse_mecs
from mdpmc.model import Objective, build_mdp
from mdpmc.topo import run_backend

EXACT_PI = "pi"
EXACT_PI_OPTIONS = {"evaluator": "exact"}


def prep(mdp, objective):
    """Preprocess a model for one objective."""
    return collapse_mecs(mdp, objective)


def engine_exact(mdp, objective):
    """Full-model exact values via preprocessed policy iteration."""
    quotient = prep(mdp, objective)
    result = run_backend(quotient, objective, EXACT_PI, EXACT_PI_OPTIONS)
    assert result.status == "exact"
    return result


def reach_objective(opt, label="goal"):
    return Objective.reach(opt, label=label)


def random_reach_corpus(count, start_seed=0, max_states=12, **kw):
    """Yield (seed, model) pairs with a goal label, deterministic."""
    for seed in range(start_seed, start_seed + count):
        num_states = 2 + seed % (max_states - 1)
        yield seed, gen_random_mdp(
            seed,
            num_states=num_states,
            max_actions=kw.get("max_actions", 3),
            density=kw.get("density", 0.4),
            target_fraction=kw.get("target_fraction", 0.25),
            reward_range=(0, 4) if kw.get("rewards") and seed % 2 == 0 else None,
        )


@pytest.fixture
def trap_model():
    return gen_pi_trap("1/10")


@pytest.fixture
def hard_chain_small():
    return gen_hard_mn(3)


@pytest.fixture
def straight_line():
    """0 -> 1 -> goal(2) with leak to sink(3); a bail-out action at 0."""
    return build_mdp(
        [
            [[(1, "1/2"), (3, "1/2")], [(3, 1)]],
            [[(2, "2/3"), (3, "1/3")]],
            [[(2, 1)]],
            [[(3, 1)]],
        ],
        labels={"goal": [2]},
    )


THIRD = mpq(1, 3)
TWO_THIRDS = mpq(2, 3)
HALF = mpq(1, 2)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance criterion, regardless of output capture."""
    outcomes = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            verdict = "PASS" if key == "passed" else "FAIL"
            if outcomes.get(name) != "FAIL":
                outcomes[name] = verdict
    if outcomes:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name in sorted(outcomes):
            terminalreporter.write_line(f"{name}: {outcomes[name]}")
