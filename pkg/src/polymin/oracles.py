"""Brute-force references for tests: projection and small QPs by enumeration.

Every candidate active pattern (each row inactive / at lower / at upper,
each variable free / at lower / at upper) is enumerated; each pattern's
equality-constrained problem is solved densely; candidates feasible for
the full polyhedron are kept and the best one returned.  Exact at desk
scale, exponential beyond it.  Deliberately shares no algorithmic code
with the production modules.
"""

from __future__ import annotations

import itertools

import numpy as np

from .exceptions import EnumerationBudgetExceeded
from .model import Polyhedron

DEFAULT_BUDGET = 300_000
_FEAS_TOL = 1e-9


def _pattern_atoms(P: Polyhedron):
    """Per-entity lists of candidate equality atoms ``(vector, rhs)``.

    ``None`` marks the inactive state.  Equality rows and fixed
    variables have a single always-active state.
    """
    A = P.A.toarray() if P.m else np.zeros((0, P.n))
    entities = []
    for i in range(P.m):
        if P.bl[i] == P.bu[i]:
            entities.append([(A[i], P.bu[i])])
            continue
        states = [None]
        if np.isfinite(P.bu[i]):
            states.append((A[i], P.bu[i]))
        if np.isfinite(P.bl[i]):
            states.append((A[i], P.bl[i]))
        entities.append(states)
    eye = np.eye(P.n)
    for j in range(P.n):
        if P.lo[j] == P.hi[j]:
            entities.append([(eye[j], P.hi[j])])
            continue
        states = [None]
        if np.isfinite(P.hi[j]):
            states.append((eye[j], P.hi[j]))
        if np.isfinite(P.lo[j]):
            states.append((eye[j], P.lo[j]))
        entities.append(states)
    return A, entities


def _pattern_count(entities):
    count = 1
    for states in entities:
        count *= len(states)
    return count


def _feasible(P: Polyhedron, y, A):
    if P.m:
        r = A @ y
        if np.any(r < P.bl - _FEAS_TOL * (1 + np.abs(P.bl))):
            return False
        if np.any(r > P.bu + _FEAS_TOL * (1 + np.abs(P.bu))):
            return False
    if np.any(y < P.lo - _FEAS_TOL * (1 + np.abs(P.lo))):
        return False
    if np.any(y > P.hi + _FEAS_TOL * (1 + np.abs(P.hi))):
        return False
    return True


def oracle_project(x, P: Polyhedron, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Exact projection of ``x`` by active-pattern enumeration."""
    x = np.asarray(x, dtype=float)
    A, entities = _pattern_atoms(P)
    if _pattern_count(entities) > budget:
        raise EnumerationBudgetExceeded(
            f"{_pattern_count(entities)} patterns exceed budget {budget}"
        )
    best, best_d2 = None, np.inf
    for combo in itertools.product(*entities):
        picked = [c for c in combo if c is not None]
        if len(picked) > P.n:
            continue
        if picked:
            W = np.array([c[0] for c in picked])
            rhs = np.array([c[1] for c in picked])
            G = W @ W.T
            r = W @ x - rhs
            try:
                mu = np.linalg.solve(G, r)
            except np.linalg.LinAlgError:
                mu = np.linalg.lstsq(G, r, rcond=None)[0]
            y = x - W.T @ mu
            if np.max(np.abs(W @ y - rhs)) > 1e-8 * (1 + np.abs(rhs).max()):
                continue  # inconsistent pattern
        else:
            y = x.copy()
        if not _feasible(P, y, A):
            continue
        d2 = float(np.sum((y - x) ** 2))
        if d2 < best_d2 - 1e-15:
            best, best_d2 = y, d2
    if best is None:
        raise EnumerationBudgetExceeded("no feasible pattern; polyhedron empty?")
    return best


def oracle_qp(H, c, P: Polyhedron, budget: int = DEFAULT_BUDGET):
    """Global optimum of ``min 0.5 x'Hx + c'x`` over ``P`` by enumeration.

    ``H`` must be symmetric positive definite.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    if H.shape != (P.n, P.n):
        raise ValueError(f"H has shape {H.shape}, expected ({P.n}, {P.n})")
    if np.abs(H - H.T).max() > 1e-10 * (1 + np.abs(H).max()):
        raise ValueError("H must be symmetric")
    if np.min(np.linalg.eigvalsh(H)) <= 0:
        raise ValueError("H must be positive definite")

    A, entities = _pattern_atoms(P)
    if _pattern_count(entities) > budget:
        raise EnumerationBudgetExceeded(
            f"{_pattern_count(entities)} patterns exceed budget {budget}"
        )
    best, best_f = None, np.inf
    for combo in itertools.product(*entities):
        picked = [cc for cc in combo if cc is not None]
        if len(picked) > P.n:
            continue
        if picked:
            W = np.array([cc[0] for cc in picked])
            rhs = np.array([cc[1] for cc in picked])
            k = W.shape[0]
            kkt = np.block([[H, W.T], [W, np.zeros((k, k))]])
            rvec = np.concatenate([-c, rhs])
            sol = np.linalg.lstsq(kkt, rvec, rcond=None)[0]
            y = sol[: P.n]
            if np.max(np.abs(W @ y - rhs)) > 1e-8 * (1 + np.abs(rhs).max()):
                continue
        else:
            y = np.linalg.solve(H, -c)
        if not _feasible(P, y, A):
            continue
        f = float(0.5 * y @ (H @ y) + c @ y)
        if f < best_f - 1e-15:
            best, best_f = y, f
    if best is None:
        raise EnumerationBudgetExceeded("no feasible pattern; polyhedron empty?")
    return best, best_f


def oracle_lp(c, P: Polyhedron, budget: int = DEFAULT_BUDGET):
    """Optimum of a bounded LP over ``P`` by vertex enumeration."""
    c = np.asarray(c, dtype=float)
    A, entities = _pattern_atoms(P)
    if _pattern_count(entities) > budget:
        raise EnumerationBudgetExceeded(
            f"{_pattern_count(entities)} patterns exceed budget {budget}"
        )
    best, best_f = None, np.inf
    for combo in itertools.product(*entities):
        picked = [cc for cc in combo if cc is not None]
        if len(picked) < P.n or len(picked) > P.n:
            continue
        W = np.array([cc[0] for cc in picked])
        rhs = np.array([cc[1] for cc in picked])
        try:
            y = np.linalg.solve(W, rhs)
        except np.linalg.LinAlgError:
            continue
        if not _feasible(P, y, A):
            continue
        f = float(c @ y)
        if f < best_f - 1e-15:
            best, best_f = y, f
    if best is None:
        raise EnumerationBudgetExceeded("no feasible vertex found")
    return best, best_f


def kkt_residual(g, P: Polyhedron, x, act_tol: float = 1e-7) -> float:
    """Stationarity residual ``min ||g + B' mu||`` over signed ``mu >= 0``.

    ``B`` collects the gradients of the constraints active at ``x``
    within ``act_tol`` (outward-signed).  Uses nonnegative least squares
    and is independent of the production multipliers.
    """
    from scipy.optimize import nnls

    g = np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    A = P.A.toarray() if P.m else np.zeros((0, P.n))
    cols = []
    if P.m:
        r = A @ x
        for i in range(P.m):
            if np.isfinite(P.bu[i]) and r[i] >= P.bu[i] - act_tol * (1 + abs(P.bu[i])):
                cols.append(A[i])
            if np.isfinite(P.bl[i]) and r[i] <= P.bl[i] + act_tol * (1 + abs(P.bl[i])):
                cols.append(-A[i])
    eye = np.eye(P.n)
    for j in range(P.n):
        if np.isfinite(P.hi[j]) and x[j] >= P.hi[j] - act_tol * (1 + abs(P.hi[j])):
            cols.append(eye[j])
        if np.isfinite(P.lo[j]) and x[j] <= P.lo[j] + act_tol * (1 + abs(P.lo[j])):
            cols.append(-eye[j])
    if not cols:
        return float(np.linalg.norm(g))
    B = np.array(cols).T  # n x k
    _, resid = nnls(B, -g)
    return float(resid)
