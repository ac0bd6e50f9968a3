"""Explicit-state MDP model checking.

Exact and floating-point solvers for undiscounted reachability and
expected-total-reward objectives: value iteration, optimistic value
iteration with certified interval bounds, policy iteration with
pluggable evaluators, and a built-in exact-rational simplex, all behind
graph preprocessing (value-0/1 analysis, end-component collapsing) and
an optional component-by-component orchestration.  A benchmark harness,
an HTTP service (``mdpmc.service``) and a command line (``mdpmc``)
wrap the library.
"""

from .bench import (
    AlgorithmSpec,
    check_model,
    classify,
    hardness_report,
    parse_algorithm_spec,
    parse_objective_spec,
    parse_suite,
    run_suite,
    write_csv,
)
from .formats import (
    ParseError,
    parse_model,
    parse_reference_results,
    write_model,
    write_reference_results,
)
from .gen import gen_hard_mn, gen_pi_trap, gen_random_mdp, generate
from .graph import Quotient, collapse_mecs, mec_decomposition, prob0, prob1, scc_topological
from .lp import LpOptions, LpProblem, LpRow, SimplexTolerances, simplex_solve, solve_lp
from .model import (
    INF,
    ModelError,
    Objective,
    Policy,
    Rational,
    SolveResult,
    SparseMdp,
    build_mdp,
    induced_mc,
    rat,
    rat_from_float,
)
from .pi import Evaluator, solve_pi
from .topo import run_backend, solve_topological
from .vi import OviConfig, StoppingCriterion, solve_ovi, solve_vi

__version__ = "0.1.0"

__all__ = [
    "AlgorithmSpec",
    "Evaluator",
    "INF",
    "LpOptions",
    "LpProblem",
    "LpRow",
    "ModelError",
    "Objective",
    "OviConfig",
    "ParseError",
    "Policy",
    "Quotient",
    "Rational",
    "SimplexTolerances",
    "SolveResult",
    "SparseMdp",
    "StoppingCriterion",
    "build_mdp",
    "check_model",
    "classify",
    "collapse_mecs",
    "gen_hard_mn",
    "gen_pi_trap",
    "gen_random_mdp",
    "generate",
    "hardness_report",
    "induced_mc",
    "mec_decomposition",
    "parse_algorithm_spec",
    "parse_model",
    "parse_objective_spec",
    "parse_reference_results",
    "parse_suite",
    "prob0",
    "prob1",
    "rat",
    "rat_from_float",
    "run_backend",
    "run_suite",
    "scc_topological",
    "simplex_solve",
    "solve_lp",
    "solve_ovi",
    "solve_pi",
    "solve_topological",
    "solve_vi",
    "write_csv",
    "write_model",
    "write_reference_results",
    "__version__",
]
