"""Nonmonotone gradient projection with a cyclic Barzilai-Borwein stepsize.

One iteration projects a gradient step onto the feasible set, searches
along the segment from the iterate to the projected point, and accepts
the first step satisfying a nonmonotone sufficient-decrease test
against a reference value.  Near a minimizer, where function-value
comparisons drown in roundoff, acceptance switches to a derivative
based approximate-Wolfe test.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import LineSearchFailure
from .model import Objective, Polyhedron
from .projection import DEFAULT_PROJECTION_TOL, project

#: sufficient-decrease and backtracking constants
ARMIJO_DELTA = 0.1
BACKTRACK_ETA = 0.5
MAX_BACKTRACKS = 50
#: slope window of the approximate-Wolfe acceptance
WOLFE_SIGMA = 0.9
#: relative function-flatness threshold that triggers the switch
FLAT_EPS = 1e-12


@dataclass
class BBState:
    """Cyclic Barzilai-Borwein stepsize memory.

    The quotient ``s's / s'y`` is recomputed once per cycle and held for
    the remaining ``cycle_length - 1`` calls.  The stepsize always stays
    inside ``[alpha_min, alpha_max_cap]``.
    """

    alpha: float = 1.0
    cycle_length: int = 4
    cycle_position: int = 0
    prev_x: np.ndarray = None
    prev_g: np.ndarray = None
    alpha_min: float = 1e-20
    alpha_max_cap: float = 1e20

    def clamp(self, value: float) -> float:
        return min(max(value, self.alpha_min), self.alpha_max_cap)

    def initialize(self, x0, g0) -> float:
        """Starting stepsize from the iterate/gradient magnitude ratio."""
        xn = float(np.max(np.abs(x0))) if x0.size else 0.0
        gn = float(np.max(np.abs(g0))) if g0.size else 0.0
        if gn > 0.0 and xn > 0.0 and np.isfinite(xn / gn):
            self.alpha = self.clamp(xn / gn)
        else:
            self.alpha = 1.0
        self.cycle_position = 0
        return self.alpha

    def remember(self, x, g):
        self.prev_x = np.array(x, copy=True)
        self.prev_g = np.array(g, copy=True)


def bb_stepsize(state: BBState, x_k, x_prev, g_k, g_prev) -> float:
    """Cyclic BB stepsize: recompute at cycle start, hold otherwise.

    The fresh value is ``clamp(s's / s'y)`` with ``s = x_k - x_prev``
    and ``y = g_k - g_prev``; nonpositive curvature ``s'y <= 0`` (or
    coincident iterates) falls back to the stepsize cap.
    """
    if state.cycle_position == 0:
        s = np.asarray(x_k, dtype=float) - np.asarray(x_prev, dtype=float)
        y = np.asarray(g_k, dtype=float) - np.asarray(g_prev, dtype=float)
        ss = float(s @ s)
        sy = float(s @ y)
        if not np.isfinite(sy) or sy <= 0.0 or ss == 0.0:
            state.alpha = state.alpha_max_cap
        else:
            state.alpha = state.clamp(ss / sy)
    state.cycle_position = (state.cycle_position + 1) % state.cycle_length
    return state.alpha


@dataclass
class ReferenceValue:
    """Nonmonotone line-search reference ``f_ref``.

    Windowed maximum over the last ``memory`` accepted values, with a
    forced monotone reference (``f_ref = f_best``) every
    ``monotone_period`` updates so sufficient decrease against the best
    value recurs infinitely often.  ``memory = 1`` gives the classical
    monotone Armijo search.
    """

    memory: int = 8
    monotone_period: int = 40
    f_ref: float = np.inf
    f_best: float = np.inf
    window: deque = field(default_factory=deque)
    updates: int = 0

    @classmethod
    def start(cls, f0: float, memory: int = 8, monotone_period: int = 40):
        ref = cls(memory=memory, monotone_period=monotone_period)
        ref.window = deque([f0], maxlen=max(1, memory))
        ref.f_ref = f0
        ref.f_best = f0
        return ref


def update_reference(ref: ReferenceValue, f_new: float) -> ReferenceValue:
    """Shift the window with a newly accepted value and refresh ``f_ref``."""
    ref.window.append(f_new)
    ref.f_best = min(ref.f_best, f_new)
    ref.updates += 1
    if ref.memory <= 1:
        ref.f_ref = f_new
    elif ref.monotone_period > 0 and ref.updates % ref.monotone_period == 0:
        ref.f_ref = ref.f_best
    else:
        ref.f_ref = max(ref.window)
    return ref


def backtrack(
    x,
    f,
    g,
    d,
    f_ref: float,
    objective: Objective,
    delta: float = ARMIJO_DELTA,
    eta: float = BACKTRACK_ETA,
    j_max: int = MAX_BACKTRACKS,
    sigma_w: float = WOLFE_SIGMA,
):
    """Backtracking search along ``d`` from ``x``.

    Tries the nonmonotone Armijo test first; if the reference value sits
    within roundoff of ``f`` (or Armijo exhausts its budget), retries
    with the approximate-Wolfe slope test.  Returns
    ``(x_new, f_new, g_new, step)``.
    """
    gtd = min(float(g @ d), 0.0)
    # Function-value comparisons become meaningless when both the
    # reference gap and the achievable first-order decrease sit at
    # roundoff scale; only then is Armijo skipped for the slope test.
    near_minimum = (
        abs(f_ref - f) <= FLAT_EPS * (1.0 + abs(f))
        and abs(gtd) <= FLAT_EPS * (1.0 + abs(f))
    )
    modes = ("wolfe",) if near_minimum else ("armijo", "wolfe")
    for mode in modes:
        s = 1.0
        for _ in range(j_max + 1):
            trial = x + s * d
            ft, gt = objective.value_and_gradient(trial)
            if np.isfinite(ft) and np.isfinite(gt).all():
                if mode == "armijo":
                    ok = ft <= f_ref + s * delta * gtd
                else:
                    gtd_t = float(gt @ d)
                    ok = (2.0 * delta - 1.0) * gtd >= gtd_t >= sigma_w * gtd
                if ok:
                    return trial, ft, gt, s
            s *= eta
    raise LineSearchFailure(
        f"no acceptable step within {MAX_BACKTRACKS} backtracks (f={f:.6e})"
    )


def gradient_query(x, g, alpha: float) -> np.ndarray:
    """Query point ``x - alpha g`` with the travel distance capped.

    Very large stepsizes (the BB fallback cap) would place the query so
    far away that projecting it back loses all absolute accuracy to
    cancellation.  Beyond a finite distance the projection of a bounded
    polyhedron is constant along the ray, so capping the distance at
    ``1e4`` times the iterate scale changes nothing but conditioning.
    """
    gn = float(np.max(np.abs(g))) if g.size else 0.0
    if gn == 0.0:
        return np.array(x, copy=True)
    cap = 1e4 * (1.0 + float(np.max(np.abs(x)))) / gn
    return x - min(alpha, cap) * g


def phase1_step(
    x,
    f,
    g,
    alpha: float,
    P: Polyhedron,
    ref: ReferenceValue,
    objective: Objective,
    proj_tol: float = DEFAULT_PROJECTION_TOL,
    delta: float = ARMIJO_DELTA,
    eta: float = BACKTRACK_ETA,
):
    """One gradient projection iteration over the full feasible set.

    The search direction is ``P(x - alpha g) - x``; it always satisfies
    ``g'd <= 0``.  The accepted point ``x + s d`` with ``s <= 1`` stays
    feasible by convexity.  Returns ``(x_new, f_new, g_new, step, d)``.
    """
    d = project(gradient_query(x, g, alpha), P, proj_tol) - x
    x_new, f_new, g_new, s = backtrack(
        x, f, g, d, ref.f_ref, objective, delta=delta, eta=eta
    )
    return x_new, f_new, g_new, s, d
