"""Exception types raised across the package."""


class PolyminError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(PolyminError, ValueError):
    """An array argument has the wrong length or shape."""


class InfeasiblePointError(PolyminError, ValueError):
    """A point required to be feasible violates the polyhedron."""


class InfeasiblePolyhedron(PolyminError):
    """The dual projection iteration certified that the feasible set is empty."""


class MaxIterationsError(PolyminError):
    """An iteration cap was reached.  ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class LineSearchFailure(PolyminError):
    """No acceptable step was found within the backtracking budget."""


class NonpositiveAlphaMax(PolyminError):
    """The feasibility ratio test found a nonpositive step bound.

    Signals a stale active set: some constraint sits on (or beyond) its
    bound without being registered active.  ``constraints`` lists the
    offending ``(kind, index, side)`` triples.
    """

    def __init__(self, message, constraints=()):
        super().__init__(message)
        self.constraints = tuple(constraints)


class EnumerationBudgetExceeded(PolyminError):
    """The brute-force oracle would need more patterns than its budget."""


class ParseError(PolyminError, ValueError):
    """A problem file could not be parsed.  Message carries diagnostics."""
