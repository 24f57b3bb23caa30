from .bcfw import bcfw_search, check_sparsity, fractional_groups, min_latency_start, round_solution
from .compare import best_of, compare_solvers
from .evolution import EvolutionParams, evolutionary_search
from .exact import exact_search, exhaustive_search
from .lp import LpSolution, LpSubproblem, lp_solve
from .result import SearchResult, is_feasible

__all__ = [
    "EvolutionParams",
    "LpSolution",
    "LpSubproblem",
    "SearchResult",
    "bcfw_search",
    "best_of",
    "check_sparsity",
    "compare_solvers",
    "evolutionary_search",
    "exact_search",
    "exhaustive_search",
    "fractional_groups",
    "is_feasible",
    "lp_solve",
    "min_latency_start",
    "round_solution",
]
