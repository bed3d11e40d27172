"""polymin: two-phase active-set minimization over polyhedra.

A gradient-based solver for ``min f(x)`` subject to
``bl <= A x <= bu`` and ``lo <= x <= hi``.  Phase one runs nonmonotone
gradient projection over the whole feasible set; phase two explores
faces with an active-set gradient projection step and a projected
conjugate gradient iteration.  Branching between the phases compares a
local stationarity error against a global one.
"""

from .exceptions import (
    DimensionMismatch,
    EnumerationBudgetExceeded,
    InfeasiblePointError,
    InfeasiblePolyhedron,
    LineSearchFailure,
    MaxIterationsError,
    NonpositiveAlphaMax,
    ParseError,
    PolyminError,
)
from .model import (
    ActiveSet,
    Objective,
    Polyhedron,
    SlackSummary,
    active_set,
    is_feasible,
    residuals,
    violation,
)
from .objectives import (
    BUILTIN_FUNCTIONS,
    builtin_objective,
    linear_objective,
    quadratic_objective,
)
from .problem_io import Problem, load_problem, problem_from_dict
from .projection import (
    NullSpaceProjector,
    apply_projector,
    make_projector,
    project,
    project_active,
)
from .solver import (
    PhaseScheduler,
    SolveReport,
    SolverOptions,
    Status,
    solve,
)
from .stationarity import (
    ErrorPair,
    branch_to_phase_two,
    global_error,
    local_error,
    measure_errors,
)

__version__ = "0.1.0"

__all__ = [
    "ActiveSet",
    "BUILTIN_FUNCTIONS",
    "DimensionMismatch",
    "EnumerationBudgetExceeded",
    "ErrorPair",
    "InfeasiblePointError",
    "InfeasiblePolyhedron",
    "LineSearchFailure",
    "MaxIterationsError",
    "NonpositiveAlphaMax",
    "NullSpaceProjector",
    "Objective",
    "ParseError",
    "PhaseScheduler",
    "Polyhedron",
    "PolyminError",
    "Problem",
    "SlackSummary",
    "SolveReport",
    "SolverOptions",
    "Status",
    "active_set",
    "apply_projector",
    "branch_to_phase_two",
    "builtin_objective",
    "global_error",
    "is_feasible",
    "linear_objective",
    "load_problem",
    "local_error",
    "make_projector",
    "measure_errors",
    "problem_from_dict",
    "project",
    "project_active",
    "quadratic_objective",
    "residuals",
    "solve",
    "violation",
]
