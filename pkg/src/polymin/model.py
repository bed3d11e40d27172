"""Problem data: the polyhedron, the objective wrapper, activity queries.

The feasible set is

    bl <= A x <= bu,      lo <= x <= hi,

with a sparse row-compressed ``A`` and ``+/-inf`` entries marking vacuous
bound sides.  All activity and feasibility tests in this module are
relative: a bound ``b`` is matched within ``tol * (1 + |b|)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionMismatch, InfeasiblePointError

#: Default relative activity tolerance.  Activity is an exact notion in
#: the underlying theory; in floating point a relative slack is required.
DEFAULT_ACTIVITY_TOL = 1e-12


def _bound_array(values, size, default, name):
    if values is None:
        return np.full(size, default, dtype=float)
    arr = np.atleast_1d(np.asarray(values, dtype=float)).ravel()
    if arr.size != size:
        raise DimensionMismatch(f"{name} has length {arr.size}, expected {size}")
    if np.isnan(arr).any():
        raise ValueError(f"{name} contains NaN")
    return arr.copy()


class Polyhedron:
    """Immutable feasible set ``bl <= A x <= bu``, ``lo <= x <= hi``.

    Parameters
    ----------
    n : int
        Number of variables.
    A : sparse or dense matrix of shape (m, n), optional
        Row constraint matrix.  Stored row-compressed with explicit
        zeros removed.  Omit (or pass ``m = 0`` data) for box-only sets.
    bl, bu : array_like of length m, optional
        Lower/upper row bounds; missing sides default to ``-inf``/``inf``.
    lo, hi : array_like of length n, optional
        Variable bounds; missing sides default to ``-inf``/``inf``.

    Notes
    -----
    Instances are immutable after construction and safe to share across
    concurrently running solves.  A column-compressed mirror of ``A`` is
    built lazily the first time ``A_csc`` is requested.
    """

    def __init__(self, n, A=None, bl=None, bu=None, lo=None, hi=None):
        n = int(n)
        if n <= 0:
            raise ValueError("n must be positive")
        if A is None:
            A = sp.csr_matrix((0, n))
        A = sp.csr_matrix(A, dtype=float)
        if A.shape[1] != n:
            raise DimensionMismatch(f"A has {A.shape[1]} columns, expected {n}")
        A.eliminate_zeros()
        A.sort_indices()
        if not np.isfinite(A.data).all():
            raise ValueError("A contains non-finite entries")
        m = A.shape[0]

        self.n = n
        self.m = m
        self.A = A
        self.bl = _bound_array(bl, m, -np.inf, "bl")
        self.bu = _bound_array(bu, m, np.inf, "bu")
        self.lo = _bound_array(lo, n, -np.inf, "lo")
        self.hi = _bound_array(hi, n, np.inf, "hi")

        if np.any(self.bl > self.bu):
            raise ValueError("bl > bu for some row")
        if np.any(self.lo > self.hi):
            raise ValueError("lo > hi for some variable")
        vacuous = ~np.isfinite(self.bl) & ~np.isfinite(self.bu)
        if vacuous.any():
            raise ValueError(
                f"row {int(np.flatnonzero(vacuous)[0])} has bl = -inf and bu = inf"
            )
        counts = np.diff(A.indptr)
        if np.any(counts == 0):
            raise ValueError(
                f"row {int(np.flatnonzero(counts == 0)[0])} of A has no nonzero entries"
            )

        self._csc = None
        self._row_norms = None

    @property
    def A_csc(self):
        """Column-compressed mirror of ``A``, built lazily."""
        if self._csc is None:
            self._csc = self.A.tocsc()
        return self._csc

    @property
    def row_norms(self):
        """Euclidean norm of each row of ``A``."""
        if self._row_norms is None:
            sq = self.A.multiply(self.A).sum(axis=1)
            self._row_norms = np.sqrt(np.asarray(sq).ravel())
        return self._row_norms

    @property
    def is_box_only(self):
        return self.m == 0

    @property
    def equality_rows(self):
        return np.flatnonzero(self.bl == self.bu)

    @property
    def fixed_variables(self):
        return np.flatnonzero(self.lo == self.hi)

    def __repr__(self):
        return (
            f"Polyhedron(n={self.n}, m={self.m}, "
            f"nnz={self.A.nnz}, eq_rows={len(self.equality_rows)})"
        )


@dataclass(frozen=True)
class ActiveSet:
    """Indices of binding constraints, each side listed separately.

    Index tuples are sorted, so equal active sets compare equal.  A row
    (or variable) appears on both sides only when its two bounds
    coincide; such equality constraints are always treated as active.
    """

    rows_lower: tuple = ()
    rows_upper: tuple = ()
    vars_lower: tuple = ()
    vars_upper: tuple = ()

    @property
    def rows(self):
        return tuple(sorted(set(self.rows_lower) | set(self.rows_upper)))

    @property
    def variables(self):
        return tuple(sorted(set(self.vars_lower) | set(self.vars_upper)))

    @property
    def size(self):
        return len(self.rows) + len(self.variables)

    def is_empty(self):
        return self.size == 0

    def union(self, other):
        merge = lambda a, b: tuple(sorted(set(a) | set(b)))
        return ActiveSet(
            merge(self.rows_lower, other.rows_lower),
            merge(self.rows_upper, other.rows_upper),
            merge(self.vars_lower, other.vars_lower),
            merge(self.vars_upper, other.vars_upper),
        )

    def issubset(self, other):
        return (
            set(self.rows_lower) <= set(other.rows_lower)
            and set(self.rows_upper) <= set(other.rows_upper)
            and set(self.vars_lower) <= set(other.vars_lower)
            and set(self.vars_upper) <= set(other.vars_upper)
        )


@dataclass(frozen=True)
class SlackSummary:
    """Minimum signed slack to each bound side (``inf`` if vacuous)."""

    row_lower: float
    row_upper: float
    var_lower: float
    var_upper: float


class Objective:
    """Wraps a callback ``x -> (f, grad)`` and counts evaluations.

    The callback must be deterministic: repeated evaluation at the same
    point must return identical values.  Counters belong to this
    instance; create one ``Objective`` per solver run when sharing a
    callback between concurrent solves.
    """

    def __init__(self, fg: Callable, n: int, name: str = ""):
        self._fg = fg
        self.n = int(n)
        self.name = name
        self.value_calls = 0
        self.gradient_calls = 0

    def value_and_gradient(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionMismatch(f"x has shape {x.shape}, expected ({self.n},)")
        f, g = self._fg(x)
        g = np.asarray(g, dtype=float)
        if g.shape != (self.n,):
            raise DimensionMismatch(
                f"gradient has shape {g.shape}, expected ({self.n},)"
            )
        self.value_calls += 1
        self.gradient_calls += 1
        return float(f), g

    def value(self, x):
        f, _ = self._fg(np.asarray(x, dtype=float))
        self.value_calls += 1
        return float(f)

    def __repr__(self):
        return (
            f"Objective(name={self.name!r}, n={self.n}, "
            f"nfev={self.value_calls}, ngev={self.gradient_calls})"
        )


def _check_x(x, P):
    x = np.asarray(x, dtype=float)
    if x.shape != (P.n,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({P.n},)")
    return x


def violation(x, P: Polyhedron) -> float:
    """Largest relative constraint violation at ``x`` (0 when feasible)."""
    x = _check_x(x, P)
    worst = 0.0
    if P.m > 0:
        r = P.A @ x
        fin = np.isfinite(P.bl)
        if fin.any():
            worst = max(worst, np.max((P.bl[fin] - r[fin]) / (1.0 + np.abs(P.bl[fin]))))
        fin = np.isfinite(P.bu)
        if fin.any():
            worst = max(worst, np.max((r[fin] - P.bu[fin]) / (1.0 + np.abs(P.bu[fin]))))
    fin = np.isfinite(P.lo)
    if fin.any():
        worst = max(worst, np.max((P.lo[fin] - x[fin]) / (1.0 + np.abs(P.lo[fin]))))
    fin = np.isfinite(P.hi)
    if fin.any():
        worst = max(worst, np.max((x[fin] - P.hi[fin]) / (1.0 + np.abs(P.hi[fin]))))
    return float(max(worst, 0.0))


def is_feasible(x, P: Polyhedron, tol: float = DEFAULT_ACTIVITY_TOL) -> bool:
    """True iff every row and bound constraint holds within ``tol*(1+|b|)``."""
    return violation(x, P) <= tol


def active_set(x, P: Polyhedron, eps_act: float = DEFAULT_ACTIVITY_TOL) -> ActiveSet:
    """Indices of constraints binding at ``x`` within ``eps_act*(1+|b|)``.

    ``x`` must be feasible at the same tolerance.  Rows with
    ``bl == bu`` (and variables with ``lo == hi``) are always reported
    active on both sides.  A row close to both distinct bounds is
    assigned to the nearer side only, so the two sides intersect exactly
    on equality constraints.
    """
    x = _check_x(x, P)
    if not is_feasible(x, P, eps_act):
        raise InfeasiblePointError(
            f"point violates constraints by {violation(x, P):.3e} (> {eps_act:.3e})"
        )

    rows_lower, rows_upper = [], []
    if P.m > 0:
        r = P.A @ x
        fin_lo, fin_hi = np.isfinite(P.bl), np.isfinite(P.bu)
        gap_lo = np.where(fin_lo, r - P.bl, np.inf)
        gap_hi = np.where(fin_hi, P.bu - r, np.inf)
        tol_lo = eps_act * (1.0 + np.abs(np.where(fin_lo, P.bl, 0.0)))
        tol_hi = eps_act * (1.0 + np.abs(np.where(fin_hi, P.bu, 0.0)))
        for i in range(P.m):
            if P.bl[i] == P.bu[i]:
                rows_lower.append(i)
                rows_upper.append(i)
                continue
            at_lo = bool(fin_lo[i]) and gap_lo[i] <= tol_lo[i]
            at_hi = bool(fin_hi[i]) and gap_hi[i] <= tol_hi[i]
            if at_lo and at_hi:
                # narrow two-sided row: keep the nearer side only
                if gap_lo[i] <= gap_hi[i]:
                    rows_lower.append(i)
                else:
                    rows_upper.append(i)
            elif at_lo:
                rows_lower.append(i)
            elif at_hi:
                rows_upper.append(i)

    vars_lower, vars_upper = [], []
    fin_lo, fin_hi = np.isfinite(P.lo), np.isfinite(P.hi)
    gap_lo = np.where(fin_lo, x - P.lo, np.inf)
    gap_hi = np.where(fin_hi, P.hi - x, np.inf)
    tol_lo = eps_act * (1.0 + np.abs(np.where(fin_lo, P.lo, 0.0)))
    tol_hi = eps_act * (1.0 + np.abs(np.where(fin_hi, P.hi, 0.0)))
    for j in range(P.n):
        if P.lo[j] == P.hi[j]:
            vars_lower.append(j)
            vars_upper.append(j)
            continue
        at_lo = bool(fin_lo[j]) and gap_lo[j] <= tol_lo[j]
        at_hi = bool(fin_hi[j]) and gap_hi[j] <= tol_hi[j]
        if at_lo and at_hi:
            if gap_lo[j] <= gap_hi[j]:
                vars_lower.append(j)
            else:
                vars_upper.append(j)
        elif at_lo:
            vars_lower.append(j)
        elif at_hi:
            vars_upper.append(j)

    return ActiveSet(
        tuple(rows_lower), tuple(rows_upper), tuple(vars_lower), tuple(vars_upper)
    )


def residuals(x, P: Polyhedron):
    """Row values ``A x`` and the minimum slack to each bound side."""
    x = _check_x(x, P)
    r = P.A @ x if P.m > 0 else np.zeros(0)

    def _min_slack(vals, bounds, sign):
        fin = np.isfinite(bounds)
        if not fin.any():
            return np.inf
        return float(np.min(sign * (vals[fin] - bounds[fin])))

    summary = SlackSummary(
        row_lower=_min_slack(r, P.bl, +1.0),
        row_upper=_min_slack(r, P.bu, -1.0),
        var_lower=_min_slack(x, P.lo, +1.0),
        var_upper=_min_slack(x, P.hi, -1.0),
    )
    return r, summary
