from .problem import (
    BINARY,
    CONTINUOUS,
    EQ,
    GAP_LIMIT,
    GE,
    INFEASIBLE,
    INTEGER,
    ITERATION_LIMIT,
    LE,
    OPTIMAL,
    UNBOUNDED,
    Constraint,
    LinearExpr,
    MilpProblem,
    MilpSolution,
    ProblemError,
    VarSpec,
    write_lp,
)
from .simplex import NumericalInstabilityError, solve_bounded_lp
from .solve import solve_lp, solve_milp, warm_start

__all__ = [
    "BINARY",
    "CONTINUOUS",
    "INTEGER",
    "LE",
    "GE",
    "EQ",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "GAP_LIMIT",
    "ITERATION_LIMIT",
    "Constraint",
    "LinearExpr",
    "MilpProblem",
    "MilpSolution",
    "ProblemError",
    "VarSpec",
    "write_lp",
    "NumericalInstabilityError",
    "solve_bounded_lp",
    "solve_lp",
    "solve_milp",
    "warm_start",
]
