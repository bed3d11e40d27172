"""Euclidean projection onto the polyhedron and null-space projectors.

Three layered back-ends compute ``argmin { ||y - x|| : y feasible }``:

* box-only sets: componentwise clamping;
* a single row plus bounds: safeguarded Newton on the scalar dual;
* the general case: a dual active-set iteration that keeps a working
  set of constraints held as equalities, solves the regularized Gram
  system from :mod:`polymin.linalg`, adds the most violated constraint,
  and drops blocking members through a dual ratio test with
  smallest-index tie-breaking.

The same engine projects onto the face of the polyhedron obtained by
freezing an active set as equalities, and builds the sigma-regularized
projector onto the null space of the active constraint gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import linalg
from .exceptions import (
    DimensionMismatch,
    InfeasiblePolyhedron,
    MaxIterationsError,
)
from .model import ActiveSet, Polyhedron

#: Default projection accuracy when no solver tolerance is in play.
DEFAULT_PROJECTION_TOL = 1e-10


def projection_tolerance(tau: float) -> float:
    """Projection accuracy tied to the solver tolerance ``tau``.

    Stationarity estimates inherit projection error, so projections are
    kept at least two orders tighter than the convergence test.
    """
    return min(1e-10, 0.01 * tau)


def active_rows_matrix(P: Polyhedron, S: ActiveSet) -> sp.csr_matrix:
    """Stack of active row gradients and unit rows for active bounds.

    Row block first (sorted row indices, one row per active row
    regardless of side), then one unit row per active variable.  The
    deterministic order makes factorizations reproducible.
    """
    rows = S.rows
    variables = S.variables
    blocks = []
    if rows:
        blocks.append(P.A[list(rows), :])
    if variables:
        k = len(variables)
        unit = sp.csr_matrix(
            (np.ones(k), (np.arange(k), np.array(variables))), shape=(k, P.n)
        )
        blocks.append(unit)
    if not blocks:
        return sp.csr_matrix((0, P.n))
    return sp.vstack(blocks, format="csr")


class NullSpaceProjector:
    """Regularized orthogonal projector onto the active null space.

    Realizes ``v -> v - B'(B B' + sigma I)^{-1} B v`` for the stacked
    active constraint matrix ``B``.  As an operator it is symmetric
    positive definite with eigenvalues in ``(0, 1]``; vectors in the
    null space of ``B`` are fixed points up to an ``O(sigma)`` defect.
    Immutable after construction and safe for concurrent ``apply``.
    """

    def __init__(self, stack: sp.csr_matrix, factorization):
        self.stack = stack
        self.factorization = factorization
        self.n = stack.shape[1]
        self.k = stack.shape[0]

    @property
    def sigma(self):
        return self.factorization.sigma

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise DimensionMismatch(f"v has shape {v.shape}, expected ({self.n},)")
        if self.k == 0:
            return v.copy()
        w = self.stack @ v
        s = linalg.solve_gram(self.factorization, w)
        return v - self.stack.T @ s


def make_projector(P: Polyhedron, S: ActiveSet, sigma: float = None) -> NullSpaceProjector:
    """Build the regularized null-space projector for an active set.

    Active variable bounds are folded in as unit rows so one
    factorization covers both row and bound activity.
    """
    stack = active_rows_matrix(P, S)
    if sigma is None:
        sigma = linalg.default_sigma(stack)
    fact = linalg.factor(stack, sigma, row_subset=tuple(S.rows) + tuple(S.variables))
    return NullSpaceProjector(stack, fact)


def apply_projector(projector: NullSpaceProjector, v) -> np.ndarray:
    return projector.apply(v)


# ---------------------------------------------------------------------------
# back-end (a): box-only clamping


def _clamp(x, P):
    return np.minimum(np.maximum(x, P.lo), P.hi)


# ---------------------------------------------------------------------------
# back-end (b): one row plus bounds, scalar dual Newton


def _row_dense(P, i):
    a = np.zeros(P.n)
    lo_, hi_ = P.A.indptr[i], P.A.indptr[i + 1]
    a[P.A.indices[lo_:hi_]] = P.A.data[lo_:hi_]
    return a


def _project_single_row(x, P, tol):
    a = _row_dense(P, 0)
    y0 = _clamp(x, P)
    r0 = float(a @ y0)
    bl, bu = P.bl[0], P.bu[0]
    if bl <= r0 <= bu:
        return y0
    target = bu if r0 > bu else bl

    # phi(lam) = a . clamp(x - lam a) is piecewise linear and
    # nonincreasing; the projection is clamp(x - lam a) at the root.
    def phi(lam):
        y = np.clip(x - lam * a, P.lo, P.hi)
        val = float(a @ y)
        free = (y > P.lo) & (y < P.hi) & (a != 0.0)
        slope = -float(np.sum(a[free] ** 2))
        return val, slope

    # reachability: phi(+/-inf) uses the bound hit by each component
    limit_pos = np.where(a > 0, P.lo, np.where(a < 0, P.hi, x))
    limit_neg = np.where(a > 0, P.hi, np.where(a < 0, P.lo, x))
    phi_pos = float(a @ limit_pos) if np.isfinite(limit_pos[a != 0]).all() else -np.inf
    phi_neg = float(a @ limit_neg) if np.isfinite(limit_neg[a != 0]).all() else np.inf
    if target < phi_pos - 1e-13 * (1 + abs(target)):
        raise InfeasiblePolyhedron("row bound unreachable within the variable box")
    if target > phi_neg + 1e-13 * (1 + abs(target)):
        raise InfeasiblePolyhedron("row bound unreachable within the variable box")

    # bracket the root, then safeguarded Newton (exact once the bracket
    # lies inside a single linear segment)
    if r0 > bu:
        lam_lo, lam_hi = 0.0, 1.0
        while phi(lam_hi)[0] > target:
            lam_lo = lam_hi
            lam_hi *= 4.0
            if lam_hi > 1e300:  # pragma: no cover - reachability checked above
                raise InfeasiblePolyhedron("dual step diverged")
    else:
        lam_lo, lam_hi = -1.0, 0.0
        while phi(lam_lo)[0] < target:
            lam_hi = lam_lo
            lam_lo *= 4.0
            if lam_lo < -1e300:  # pragma: no cover
                raise InfeasiblePolyhedron("dual step diverged")

    lam = 0.5 * (lam_lo + lam_hi)
    for _ in range(200):
        val, slope = phi(lam)
        gap = val - target
        if abs(gap) <= 1e-14 * (1.0 + abs(target)):
            break
        if gap > 0:
            lam_lo = lam
        else:
            lam_hi = lam
        lam_new = lam - gap / slope if slope < 0 else None
        if lam_new is None or not (lam_lo < lam_new < lam_hi):
            lam_new = 0.5 * (lam_lo + lam_hi)
        if lam_new == lam:
            break
        lam = lam_new
    return np.clip(x - lam * a, P.lo, P.hi)


# ---------------------------------------------------------------------------
# back-end (c): general dual active-set iteration

_ROW_UPPER, _ROW_LOWER, _VAR_UPPER, _VAR_LOWER = 0, 1, 2, 3


@dataclass
class _Member:
    cid: int          # Bland index
    kind: int
    index: int
    sign: float       # constraint is  sign * row . y (<=|=) rhs
    rhs: float        # right-hand side in signed form
    droppable: bool
    mu: float = 0.0


class _DualActiveSet:
    """Dual active-set projection engine for one query point.

    Maintains a working set ``W`` of constraints held as equalities and
    the multipliers of  y = x - B_W' mu,  keeping ``mu >= 0`` on
    droppable members.  Each outer iteration inserts the most violated
    constraint, taking partial dual steps (dropping the blocking member
    found by the ratio test, smallest index on ties) until the
    constraint is satisfied.  A violated constraint that is linearly
    dependent on ``W`` with no blocking member certifies emptiness.
    """

    def __init__(self, x, P, tol, fixed: ActiveSet = None):
        self.x = np.asarray(x, dtype=float)
        self.P = P
        self.tol = max(float(tol), 1e-13)
        self.members: list[_Member] = []
        self.in_working = set()
        self._fixed_rows = set()
        self._fixed_vars = set()
        self._dirty = True
        self.y = self.x.copy()
        self._install_equalities(fixed)

    # -- constraint catalogue ------------------------------------------------

    def _cid(self, kind, index):
        m, n = self.P.m, self.P.n
        return {
            _ROW_UPPER: index,
            _ROW_LOWER: m + index,
            _VAR_UPPER: 2 * m + index,
            _VAR_LOWER: 2 * m + n + index,
        }[kind]

    def _vector(self, kind, index):
        if kind in (_ROW_UPPER, _ROW_LOWER):
            a = _row_dense(self.P, index)
            return a if kind == _ROW_UPPER else -a
        e = np.zeros(self.P.n)
        e[index] = 1.0 if kind == _VAR_UPPER else -1.0
        return e

    def _install_equalities(self, fixed):
        P = self.P
        for i in P.equality_rows:
            self._add_member(_ROW_UPPER, int(i), P.bu[int(i)], droppable=False)
        for j in P.fixed_variables:
            self._add_member(_VAR_UPPER, int(j), P.hi[int(j)], droppable=False)
        if fixed is not None:
            for i in fixed.rows_upper:
                if i not in self._fixed_rows:
                    self._add_member(_ROW_UPPER, int(i), P.bu[int(i)], droppable=False)
            for i in fixed.rows_lower:
                if i not in self._fixed_rows:
                    self._add_member(_ROW_LOWER, int(i), -P.bl[int(i)], droppable=False)
            for j in fixed.vars_upper:
                if j not in self._fixed_vars:
                    self._add_member(_VAR_UPPER, int(j), P.hi[int(j)], droppable=False)
            for j in fixed.vars_lower:
                if j not in self._fixed_vars:
                    self._add_member(_VAR_LOWER, int(j), -P.lo[int(j)], droppable=False)

    def _add_member(self, kind, index, rhs, droppable, mu=0.0):
        sign = 1.0 if kind in (_ROW_UPPER, _VAR_UPPER) else -1.0
        self.members.append(
            _Member(self._cid(kind, index), kind, index, sign, float(rhs), droppable, mu)
        )
        if kind in (_ROW_UPPER, _ROW_LOWER):
            self._fixed_rows.add(index)
            self.in_working.add(("row", index))
        else:
            self._fixed_vars.add(index)
            self.in_working.add(("var", index))
        self._dirty = True

    def _drop_member(self, pos):
        mem = self.members.pop(pos)
        if mem.kind in (_ROW_UPPER, _ROW_LOWER):
            self.in_working.discard(("row", mem.index))
            self._fixed_rows.discard(mem.index)
        else:
            self.in_working.discard(("var", mem.index))
            self._fixed_vars.discard(mem.index)
        self._dirty = True

    # -- linear algebra over the working set ---------------------------------

    def _stack(self):
        if self._dirty:
            rows = []
            for mem in self.members:
                rows.append(sp.csr_matrix(self._vector(mem.kind, mem.index)))
            self._AW = (
                sp.vstack(rows, format="csr") if rows else sp.csr_matrix((0, self.P.n))
            )
            sig = linalg.default_sigma(self._AW)
            self._F = linalg.factor(self._AW, sig)
            self._dirty = False
        return self._AW, self._F

    def _gram_solve(self, rhs):
        """Solve  B_W B_W' u = rhs  (unregularized) by refining the
        sigma-regularized solve.  Returns (u, relative residual)."""
        AW, F = self._stack()
        if AW.shape[0] == 0:
            return np.zeros(0), 0.0
        scale = np.linalg.norm(rhs) + 1.0
        u = linalg.solve_gram(F, rhs)
        res = rhs - AW @ (AW.T @ u)
        rnorm = np.linalg.norm(res)
        for _ in range(60):
            if rnorm <= 1e-14 * scale:
                break
            du = linalg.solve_gram(F, res)
            u_new = u + du
            res_new = rhs - AW @ (AW.T @ u_new)
            rnorm_new = np.linalg.norm(res_new)
            if not np.isfinite(rnorm_new) or rnorm_new >= 0.9 * rnorm:
                # stalled: rhs has a component outside range(B_W)
                if rnorm_new < rnorm:
                    u, res, rnorm = u_new, res_new, rnorm_new
                break
            u, res, rnorm = u_new, res_new, rnorm_new
        return u, rnorm / scale

    def _refresh(self):
        """Re-solve the working-set equality projection from scratch."""
        AW, _ = self._stack()
        if AW.shape[0] == 0:
            self.y = self.x.copy()
            return 0.0
        bW = np.array([mem.rhs for mem in self.members])
        rhs = AW @ self.x - bW
        mu, rel = self._gram_solve(rhs)
        self.y = self.x - AW.T @ mu
        for mem, mval in zip(self.members, mu):
            mem.mu = float(mval)
        return rel

    # -- violation scan -------------------------------------------------------

    def _violations(self):
        P = self.P
        cands = []
        if P.m > 0:
            r = P.A @ self.y
            for i in range(P.m):
                if ("row", i) in self.in_working:
                    continue
                if np.isfinite(P.bu[i]):
                    v = (r[i] - P.bu[i]) / (1.0 + abs(P.bu[i]))
                    if v > self.tol:
                        cands.append((v, self._cid(_ROW_UPPER, i), _ROW_UPPER, i, P.bu[i]))
                if np.isfinite(P.bl[i]):
                    v = (P.bl[i] - r[i]) / (1.0 + abs(P.bl[i]))
                    if v > self.tol:
                        cands.append((v, self._cid(_ROW_LOWER, i), _ROW_LOWER, i, -P.bl[i]))
        for j in range(P.n):
            if ("var", j) in self.in_working:
                continue
            if np.isfinite(P.hi[j]):
                v = (self.y[j] - P.hi[j]) / (1.0 + abs(P.hi[j]))
                if v > self.tol:
                    cands.append((v, self._cid(_VAR_UPPER, j), _VAR_UPPER, j, P.hi[j]))
            if np.isfinite(P.lo[j]):
                v = (P.lo[j] - self.y[j]) / (1.0 + abs(P.lo[j]))
                if v > self.tol:
                    cands.append((v, self._cid(_VAR_LOWER, j), _VAR_LOWER, j, -P.lo[j]))
        if not cands:
            return None
        return max(cands, key=lambda c: (c[0], -c[1]))

    # -- main loop ------------------------------------------------------------

    def run(self):
        rel = self._refresh()
        if rel > 1e-8:
            raise InfeasiblePolyhedron(
                f"equality constraints are inconsistent (residual {rel:.2e})"
            )
        cap = 10 * (self.P.m + self.P.n) + 10
        events = 0
        while True:
            worst = self._violations()
            if worst is None:
                return np.clip(self.y, self.P.lo, self.P.hi)
            _, cid, kind, index, rhs = worst
            a_p = self._vector(kind, index)
            mu_p = 0.0
            while True:
                events += 1
                if events > cap:
                    raise MaxIterationsError(
                        "projection working-set iteration cap reached",
                        best=np.clip(self.y, self.P.lo, self.P.hi),
                    )
                vp = float(a_p @ self.y) - rhs
                if vp <= self.tol * (1.0 + abs(rhs)):
                    break  # resolved by partial steps; rescan
                AW, _ = self._stack()
                if AW.shape[0] > 0:
                    u, _ = self._gram_solve(AW @ a_p)
                    z = a_p - AW.T @ u
                else:
                    u = np.zeros(0)
                    z = a_p
                zz = float(z @ z)
                dependent = zz <= 1e-10 * float(a_p @ a_p)

                # dual ratio test over droppable members moving toward 0
                u_thr = 1e-14 * (1.0 + (np.abs(u).max() if u.size else 0.0))
                t1 = np.inf
                block = -1
                for pos, mem in enumerate(self.members):
                    if not mem.droppable or u[pos] <= u_thr:
                        continue
                    t = max(mem.mu / u[pos], 0.0)
                    if t < t1 * (1.0 - 1e-12) or block < 0:
                        t1, block = t, pos
                    elif t <= t1 * (1.0 + 1e-12) + 1e-300:
                        if mem.cid < self.members[block].cid:
                            t1, block = min(t1, t), pos

                if dependent:
                    if block < 0:
                        raise InfeasiblePolyhedron(
                            "violated constraint is inconsistent with the working set"
                        )
                    for pos, mem in enumerate(self.members):
                        mem.mu -= t1 * u[pos]
                    mu_p += t1
                    self._drop_member(block)
                    continue

                t2 = vp / zz
                t = min(t1, t2)
                self.y = self.y - t * z
                for pos, mem in enumerate(self.members):
                    mem.mu -= t * u[pos]
                mu_p += t
                if t2 <= t1:
                    self._add_member(kind, index, rhs, droppable=True, mu=mu_p)
                    self._refresh()
                    break
                self._drop_member(block)


# ---------------------------------------------------------------------------
# public entry points


def project(x, P: Polyhedron, tol: float = DEFAULT_PROJECTION_TOL) -> np.ndarray:
    """Euclidean projection of ``x`` onto the polyhedron.

    Feasible points are returned unchanged (up to bound clamping).
    Raises :class:`InfeasiblePolyhedron` when the dual iteration
    certifies the feasible set is empty, and :class:`MaxIterationsError`
    (with the best iterate attached) if the working-set loop exceeds
    ``10 (m + n)`` changes.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (P.n,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({P.n},)")
    if P.is_box_only:
        return _clamp(x, P)
    if P.m == 1:
        return _project_single_row(x, P, tol)
    return _DualActiveSet(x, P, tol).run()


def project_active(
    x, P: Polyhedron, S: ActiveSet, tol: float = DEFAULT_PROJECTION_TOL
) -> np.ndarray:
    """Projection onto the face where the constraints in ``S`` are equalities.

    Constraints listed in ``S`` are pinned at their binding side; all
    remaining constraints stay inequalities.  With an empty ``S`` this
    is exactly :func:`project`.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (P.n,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({P.n},)")
    if S.is_empty():
        return project(x, P, tol)
    if P.is_box_only:
        y = _clamp(x, P)
        for j in S.vars_lower:
            y[j] = P.lo[j]
        for j in S.vars_upper:
            y[j] = P.hi[j]
        return y
    return _DualActiveSet(x, P, tol, fixed=S).run()
