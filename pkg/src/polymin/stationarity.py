"""Global and local stationarity error estimators and the branch predicate.

The global error is the distance moved by projecting a unit gradient
step back onto the feasible set,

    E(x) = || P(x - g) - x ||,

zero exactly at first-order stationary points of the full problem.  The
local error projects the negative gradient onto the null space of the
active constraint gradients,

    e(x) = || N g ||,

zero exactly at stationary points of the problem restricted to the
current active manifold.  Both are pure functions of their inputs.

The local projection uses the sigma-regularized null-space projector,
so ``e`` carries an ``O(sigma) ||g||`` defect relative to the exact
null-space projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ActiveSet, Polyhedron
from .projection import DEFAULT_PROJECTION_TOL, NullSpaceProjector, project


@dataclass(frozen=True)
class ErrorPair:
    """Global/local error values with the vectors realizing them."""

    E: float
    e: float
    y_global: np.ndarray
    y_local: np.ndarray


def global_error(x, g, P: Polyhedron, tol: float = DEFAULT_PROJECTION_TOL):
    """Global stationarity error at a feasible ``x`` with gradient ``g``.

    Returns ``(E, y_global)`` where ``y_global = P(x - g) - x`` is the
    minimizer of ``||y + g||`` over the shifted feasible set.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    y = project(x - g, P, tol) - x
    return float(np.linalg.norm(y)), y


def local_error(x, g, S: ActiveSet, projector: NullSpaceProjector):
    """Local stationarity error on the active manifold at ``x``.

    ``projector`` must be the null-space projector built for ``S``.
    Returns ``(e, y_local)`` with ``y_local`` the (regularized)
    projection of ``-g`` onto the null space of the active gradients.

    The projector is applied twice.  A single application leaves a
    defect of order ``sigma ||multipliers||`` on gradients dominated by
    active-constraint normals, which would put a floor under ``e`` and
    stall the branch test near face optima; the second application
    drives the defect to order ``sigma^2``.
    """
    g = np.asarray(g, dtype=float)
    if __debug__ and projector.k != len(S.rows) + len(S.variables):
        raise ValueError("projector was built for a different active set")
    y = -projector.apply(projector.apply(g))
    return float(np.linalg.norm(y)), y


def branch_to_phase_two(E: float, e: float, theta: float) -> bool:
    """True when the local error is large enough to justify face search."""
    return e >= theta * E


def measure_errors(
    x, g, P: Polyhedron, S: ActiveSet, projector: NullSpaceProjector,
    tol: float = DEFAULT_PROJECTION_TOL,
) -> ErrorPair:
    """Evaluate both estimators at one iterate."""
    E, y_g = global_error(x, g, P, tol)
    e, y_l = local_error(x, g, S, projector)
    return ErrorPair(E=E, e=e, y_global=y_g, y_local=y_l)
