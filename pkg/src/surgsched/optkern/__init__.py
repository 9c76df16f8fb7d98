"""Internal optimization kernel: exact LP with duals, 0-1 branch and bound
with lazy-constraint callbacks."""

from .lp import (
    EQ,
    GE,
    INFEASIBLE,
    LE,
    MAX,
    MIN,
    OPTIMAL,
    UNBOUNDED,
    KernelError,
    LinearProgram,
    LpSolution,
    solve_lp,
)
from .mip import (
    ACCEPT,
    NODE_LIMIT,
    TIME_LIMIT,
    MipProblem,
    MipResult,
    solve_mip,
)

__all__ = [
    "EQ",
    "GE",
    "LE",
    "MIN",
    "MAX",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "TIME_LIMIT",
    "NODE_LIMIT",
    "ACCEPT",
    "KernelError",
    "LinearProgram",
    "LpSolution",
    "MipProblem",
    "MipResult",
    "solve_lp",
    "solve_mip",
]
