"""Active-set gradient projection and projected conjugate gradients.

Phase two alternates two mechanisms on the current face of the
polyhedron.  The active-set gradient projection step (A-GP) repeats the
phase-one step with the feasible set replaced by the face where the
currently active constraints are equalities, so activity can only grow.
Once the active set repeats between consecutive iterates, a projected
conjugate gradient iteration takes over; a line search truncated at the
feasibility boundary hands control back to A-GP whenever it activates
new constraints.

Search directions follow the two-term conjugate gradient family with
parameter ``eta_cg > 1/4``.  Directions are assembled through the
stabilized recurrence

    D_next = -N g + beta D,      d_next = N D_next,

whose trailing application of the null-space projector ``N`` strips the
error components pointing out of the active null space.  The direct
recurrence ``d_next = -N^2 g + beta d`` is retained only as an
explicitly unstable variant for regression tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import LineSearchFailure, NonpositiveAlphaMax
from .model import ActiveSet, Objective, Polyhedron, active_set
from .phase1 import FLAT_EPS, backtrack, bb_stepsize, gradient_query
from .projection import (
    DEFAULT_PROJECTION_TOL,
    NullSpaceProjector,
    project_active,
)

#: Wolfe constants of the conjugate gradient line search.
CG_DELTA = 0.1
CG_SIGMA = 0.9
CG_MAX_EVALS = 60
#: expansion factor of the bracketing stage
CG_EXPANSION = 4.0


def agp_step(
    x,
    f,
    g,
    alpha: float,
    P: Polyhedron,
    S: ActiveSet,
    objective: Objective,
    eps_active: float,
    proj_tol: float = DEFAULT_PROJECTION_TOL,
):
    """One gradient projection step restricted to the face fixed by ``S``.

    Uses a monotone sufficient-decrease reference (``f_ref = f``) so the
    accepted value never increases.  Constraints active on entry stay
    active; the returned active set is the entry set united with the
    constraints detected at the new point.

    Returns ``(x_new, f_new, g_new, step, d, S_new, grew)``.
    """
    d = project_active(gradient_query(x, g, alpha), P, S, proj_tol) - x
    x_new, f_new, g_new, s = backtrack(x, f, g, d, f, objective)
    S_new = S.union(active_set(x_new, P, eps_active))
    return x_new, f_new, g_new, s, d, S_new, S_new != S


@dataclass
class CGState:
    """Conjugate gradient recurrence state on a frozen active manifold.

    ``projector`` stays fixed between restarts; a restart drops the
    direction history (``beta`` is never carried across an active-set
    change).
    """

    projector: NullSpaceProjector
    eta_cg: float = 0.4
    stable: bool = True
    d: np.ndarray = None
    D: np.ndarray = None
    g_prev: np.ndarray = None
    prev_alpha: float = None
    restarts: int = 0


def cg_direction(state: CGState, g_new) -> np.ndarray:
    """Next search direction for the manifold-restricted problem.

    The first direction after a restart is the doubly projected steepest
    descent direction.  Later directions combine the projected gradient
    with the previous intermediate direction; near-zero curvature
    ``|d'y|`` forces a restart instead of dividing by it.
    """
    g_new = np.asarray(g_new, dtype=float)
    N = state.projector
    Pg = N.apply(g_new)

    restart = state.d is None or state.g_prev is None
    beta = 0.0
    if not restart:
        y = g_new - state.g_prev
        dy = float(state.d @ y)
        dn = float(np.linalg.norm(state.d))
        yn = float(np.linalg.norm(y))
        if not np.isfinite(dy) or abs(dy) <= 1e-30 * dn * yn or dy == 0.0:
            restart = True
            state.restarts += 1
        else:
            Py = N.apply(y)
            beta = float(Py @ Pg) / dy - state.eta_cg * (float(Py @ Py) / dy) * (
                float(state.d @ g_new) / dy
            )

    if restart:
        D = -Pg
        d = N.apply(D)
    elif state.stable:
        # the intermediate direction is itself passed through the
        # projector: when beta > 1 over several steps, range-space
        # roundoff in the raw recurrence would compound geometrically
        # and its regularization leak reads as descent through the
        # active constraints
        D = N.apply(-Pg + beta * state.D)
        d = N.apply(D)
    else:
        # deliberately unstable direct recurrence (test contrast only):
        # out-of-null-space error in d is carried into the next direction
        D = -Pg + beta * state.D
        d = -N.apply(Pg) + beta * state.d

    # In exact arithmetic D stays in the null space, so ||D|| ~ ||d||.
    # A large ratio means D is dominated by accumulated range-space
    # junk whose regularization leak would feed descent through the
    # active constraints; restarting discards the junk.
    junk = float(np.linalg.norm(D)) > 100.0 * (
        float(np.linalg.norm(d)) + float(np.linalg.norm(Pg))
    )
    if (float(d @ g_new) > 0.0 or junk) and not restart:
        state.restarts += 1
        D = -Pg
        d = N.apply(D)

    state.D = D
    state.d = d
    state.g_prev = g_new
    return d


def _ratio_candidates(x, P: Polyhedron, S: ActiveSet, direction, rate_rel=1e-14):
    """Yield ``(candidate, kind, index, side, slack)`` for decreasing slacks."""
    direction = np.asarray(direction, dtype=float)
    dn = float(np.linalg.norm(direction))
    if dn == 0.0:
        return []
    out = []
    if P.m > 0:
        r = P.A @ x
        rd = P.A @ direction
        su = set(S.rows_upper)
        sl = set(S.rows_lower)
        norms = P.row_norms
        for i in range(P.m):
            thr = rate_rel * norms[i] * dn
            if np.isfinite(P.bu[i]) and i not in su and rd[i] > thr:
                out.append(((P.bu[i] - r[i]) / rd[i], "row", i, "upper", P.bu[i] - r[i]))
            if np.isfinite(P.bl[i]) and i not in sl and -rd[i] > thr:
                out.append(((r[i] - P.bl[i]) / (-rd[i]), "row", i, "lower", r[i] - P.bl[i]))
    su = set(S.vars_upper)
    sl = set(S.vars_lower)
    for j in range(P.n):
        thr = rate_rel * dn
        if np.isfinite(P.hi[j]) and j not in su and direction[j] > thr:
            out.append(((P.hi[j] - x[j]) / direction[j], "var", j, "upper", P.hi[j] - x[j]))
        if np.isfinite(P.lo[j]) and j not in sl and -direction[j] > thr:
            out.append(((x[j] - P.lo[j]) / (-direction[j]), "var", j, "lower", x[j] - P.lo[j]))
    return out


def alpha_max_with_blocking(x, P: Polyhedron, S: ActiveSet, direction):
    """Feasibility ratio test along ``direction`` from ``x``.

    Returns ``(alpha, blocking)`` where ``alpha`` is the largest
    feasible step over all inactive constraints (``inf`` when no slack
    decreases) and ``blocking`` lists every ``(kind, index, side)``
    within relative tolerance 1e-12 of the minimizing ratio.  A
    nonpositive slack on a decreasing constraint raises
    :class:`NonpositiveAlphaMax` naming the stale constraints.
    """
    cands = _ratio_candidates(x, P, S, direction)
    if not cands:
        return np.inf, []
    stale = [(k, i, s) for c, k, i, s, slack in cands if slack <= 0.0]
    if stale:
        raise NonpositiveAlphaMax(
            f"{len(stale)} constraint(s) at or beyond their bound are not active",
            constraints=stale,
        )
    amax = min(c for c, *_ in cands)
    blocking = [
        (k, i, s) for c, k, i, s, _ in cands if c <= amax * (1.0 + 1e-12)
    ]
    return amax, blocking


def alpha_max(x, P: Polyhedron, S: ActiveSet, direction) -> float:
    """Largest feasible step along ``direction``; ``inf`` if unbounded."""
    return alpha_max_with_blocking(x, P, S, direction)[0]


def cg_line_search(
    x,
    f0: float,
    g0,
    direction,
    alpha_limit: float,
    objective: Objective,
    guess: float = None,
    delta: float = CG_DELTA,
    sigma: float = CG_SIGMA,
    max_evals: int = CG_MAX_EVALS,
):
    """Wolfe line search on ``f(x + a d)`` truncated at ``alpha_limit``.

    Accepts a step satisfying the standard or the approximate Wolfe
    conditions.  When the one-dimensional minimizer lies beyond
    ``alpha_limit`` (negative slope and sufficient decrease there), the
    truncated solution ``alpha_limit`` is returned with
    ``hit_boundary = True``.

    Returns ``(alpha, f_alpha, g_alpha, hit_boundary)``.
    """
    x = np.asarray(x, dtype=float)
    direction = np.asarray(direction, dtype=float)
    d0 = float(g0 @ direction)
    if d0 >= 0.0:
        raise LineSearchFailure(f"direction is not a descent direction (slope {d0:.3e})")
    flat = FLAT_EPS * (1.0 + abs(f0))
    evals = 0

    def ev(a):
        nonlocal evals
        evals += 1
        ft, gt = objective.value_and_gradient(x + a * direction)
        return ft, gt, float(gt @ direction)

    def acceptable(a, ft, st):
        if not np.isfinite(ft) or not np.isfinite(st):
            return False
        if ft <= f0 + delta * a * d0 and st >= sigma * d0:
            return True
        return ft <= f0 + flat and (2.0 * delta - 1.0) * d0 >= st >= sigma * d0

    bounded = np.isfinite(alpha_limit)
    if guess is None or not np.isfinite(guess) or guess <= 0.0:
        guess = 1.0
    a = min(guess, alpha_limit) if bounded else guess

    lo, flo, slo = 0.0, f0, d0
    hi = fhi = shi = None
    while evals < max_evals:
        ft, gt, st = ev(a)
        armijo = np.isfinite(ft) and ft <= f0 + delta * a * d0
        if bounded and a >= alpha_limit * (1.0 - 1e-12) and armijo and st < 0.0:
            return alpha_limit, ft, gt, True
        if acceptable(a, ft, st):
            return a, ft, gt, False
        if not armijo or st >= 0.0:
            hi, fhi, shi = a, ft, st
            break
        lo, flo, slo = a, ft, st
        a = min(a * CG_EXPANSION, alpha_limit) if bounded else a * CG_EXPANSION

    # zoom: lo satisfies Armijo with negative slope, hi lies beyond
    width_prev = np.inf
    use_bisect = False
    while evals < max_evals and hi is not None:
        if use_bisect:
            a = 0.5 * (lo + hi)
        elif shi is not None and np.isfinite(shi) and shi > slo:
            a = lo - slo * (hi - lo) / (shi - slo)  # secant on the slope
        else:
            a = 0.5 * (lo + hi)
        if not np.isfinite(a) or not (lo < a < hi):
            a = 0.5 * (lo + hi)
        if hi - lo <= 1e-16 * max(1.0, abs(hi)):
            break
        ft, gt, st = ev(a)
        if acceptable(a, ft, st):
            return a, ft, gt, False
        if not np.isfinite(ft) or ft > f0 + delta * a * d0:
            hi, fhi, shi = a, ft, st
        elif st >= 0.0:
            hi, fhi, shi = a, ft, st
        else:
            lo, flo, slo = a, ft, st
        # force a bisection step whenever the bracket shrinks too slowly
        width = hi - lo
        use_bisect = width > 0.66 * width_prev
        width_prev = width

    raise LineSearchFailure(
        f"no Wolfe point within {max_evals} evaluations (f0={f0:.6e}, slope {d0:.3e})"
    )


def _as_active_set(triples) -> ActiveSet:
    rl, ru, vl, vu = [], [], [], []
    for kind, idx, side in triples:
        if kind == "row":
            (ru if side == "upper" else rl).append(idx)
        else:
            (vu if side == "upper" else vl).append(idx)
    return ActiveSet(
        tuple(sorted(rl)), tuple(sorted(ru)), tuple(sorted(vl)), tuple(sorted(vu))
    )


def _snap_bounds(x, P: Polyhedron, blocking) -> bool:
    """Pin newly activated variable bounds exactly; rows keep the ratio
    test accuracy.  Returns True when any component moved."""
    moved = False
    for kind, idx, side in blocking:
        if kind == "var":
            target = P.hi[idx] if side == "upper" else P.lo[idx]
            if x[idx] != target:
                x[idx] = target
                moved = True
    return moved


def phase2_loop(st) -> str:
    """Run phase two on the driver state until a branch condition fires.

    Alternates A-GP steps (while the active set keeps changing) with
    projected conjugate gradient runs on the frozen manifold; a line
    search truncated at the feasibility boundary activates the blocking
    constraints and falls back to A-GP, restarting the CG recurrence.
    Returns ``"converged"``, ``"branch"`` (local error fell below
    ``theta * E``) or ``"maxiter"``.
    """
    mode = "agp"
    cg = None
    while True:
        if st.E <= st.tau:
            return "converged"
        if st.e < st.theta * st.E:
            return "branch"
        if not st.iterations_left():
            return "maxiter"

        if mode == "agp":
            if st.active == st.prev_active:
                # the active set settled: switch to conjugate gradients
                mode = "cg"
                cg = CGState(projector=st.projector, eta_cg=st.opts.eta_cg)
                continue
            if st.bb.prev_x is None:
                alpha = st.bb.alpha
            else:
                alpha = bb_stepsize(st.bb, st.x, st.bb.prev_x, st.g, st.bb.prev_g)
            x_new, f_new, g_new, s, _, S_new, _ = agp_step(
                st.x, st.f, st.g, alpha, st.P, st.active, st.objective,
                st.opts.eps_active, st.opts.projection_tol,
            )
            st.advance(x_new, f_new, g_new, S_new, "agp", s)
            continue

        d = cg_direction(cg, st.g)
        if float(d @ st.g) >= 0.0:
            # projected gradient vanished up to regularization noise
            return "branch"
        try:
            amax, blocking = alpha_max_with_blocking(st.x, st.P, st.active, d)
        except NonpositiveAlphaMax as exc:
            st.grow_active(exc.constraints)
            st.refresh_errors()
            mode = "agp"
            cg = None
            continue
        guess = 2.0 * cg.prev_alpha if cg.prev_alpha else None
        alpha, f_t, g_t, hit = cg_line_search(
            st.x, st.f, st.g, d, amax, st.objective, guess, delta=CG_DELTA,
            sigma=CG_SIGMA,
        )
        x_new = st.x + alpha * d
        S_new = st.active
        if hit:
            if _snap_bounds(x_new, st.P, blocking):
                f_t, g_t = st.objective.value_and_gradient(x_new)
            S_new = st.active.union(_as_active_set(blocking)).union(
                active_set(x_new, st.P, st.opts.eps_active)
            )
        st.advance(x_new, f_t, g_t, S_new, "cg", alpha)
        if hit:
            mode = "agp"
            cg = None
        else:
            cg.prev_alpha = alpha
