"""Top-level two-phase solver loop.

The driver projects the starting guess onto the feasible set, then
alternates between phase one (nonmonotone gradient projection over the
whole polyhedron) and phase two (face exploration) based on the ratio
of the local to the global stationarity error:

* in phase one, branch to phase two when ``e >= theta * E``;
* in phase two, branch back when ``e < theta * E``;
* stop when ``E <= tau``.

``theta`` is multiplied by ``mu`` whenever a phase-one visit needs more
than one iteration, which drives the iterates into phase two
asymptotically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import phase2 as _phase2
from .exceptions import (
    InfeasiblePolyhedron,
    LineSearchFailure,
    MaxIterationsError,
)
from .model import ActiveSet, Objective, Polyhedron, active_set, violation
from .phase1 import BBState, ReferenceValue, bb_stepsize, phase1_step, update_reference
from .projection import make_projector, project, projection_tolerance
from .stationarity import global_error, local_error


class Status(str, Enum):
    CONVERGED = "converged"
    STATIONARY_START = "stationary_start"
    MAX_ITERATIONS = "max_iterations"
    LINE_SEARCH_FAILURE = "line_search_failure"
    INFEASIBLE = "infeasible_problem"

    def __str__(self):
        return self.value

    @property
    def success(self):
        return self in (Status.CONVERGED, Status.STATIONARY_START)


@dataclass
class SolverOptions:
    """Tunable parameters of the solver.

    ``theta`` is the phase-branching threshold, ``mu`` its reduction
    factor, ``tau`` the convergence tolerance on the global error.
    ``monotone=True`` forces a window of one (classical Armijo).
    """

    tau: float = 1e-6
    theta: float = 0.01
    mu: float = 0.5
    max_iter: int = 100_000
    max_evals: Optional[int] = None
    memory: int = 8
    monotone_period: int = 40
    monotone: bool = False
    cycle_length: int = 4
    eta_cg: float = 0.4
    sigma: Optional[float] = None
    eps_active: float = 1e-9
    proj_tol: Optional[float] = None
    trace: bool = False

    def validate(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if not 0.0 < self.mu < 1.0:
            raise ValueError("mu must lie in (0, 1)")
        if self.max_iter <= 0:
            raise ValueError("max_iter must be positive")
        return self

    @property
    def projection_tol(self) -> float:
        if self.proj_tol is not None:
            return self.proj_tol
        return projection_tolerance(self.tau)


@dataclass
class TraceRecord:
    """One row of the per-iteration trace."""

    k: int
    phase: int
    mode: str
    f: float
    E: float
    e: float
    theta: float
    step: float
    active_rows: tuple
    active_vars: tuple
    feas_violation: float
    episode: int


@dataclass
class SolveReport:
    status: Status
    x: np.ndarray
    f: float
    E: float
    e: float
    iterations: int
    phase1_iterations: int
    phase2_iterations: int
    theta_final: float
    nfev: int
    ngev: int
    nproj: int
    time: float
    message: str = ""
    trace: list = None

    @property
    def success(self):
        return self.status.success


class PhaseScheduler:
    """Branch predicate and theta schedule of the driver loop.

    Pure state machine over scripted ``(E, e)`` values: ``decide``
    returns the phase the next iteration must run in (or ``converged``),
    and ``note_phase_one_exit`` halves ``theta`` (by factor ``mu``)
    exactly when a phase-one visit performed more than one iteration.
    """

    def __init__(self, tau: float, theta: float, mu: float):
        self.tau = tau
        self.theta = theta
        self.mu = mu

    def decide(self, E: float, e: float) -> str:
        if E <= self.tau:
            return "converged"
        return "two" if e >= self.theta * E else "one"

    def note_phase_one_exit(self, visit_iterations: int):
        if visit_iterations > 1:
            self.theta *= self.mu
        return self.theta


def reduce_theta(scheduler: PhaseScheduler, phase1_iters_this_visit: int) -> float:
    """Apply the multi-iteration reduction rule at a phase-one exit."""
    return scheduler.note_phase_one_exit(phase1_iters_this_visit)


class SolverState:
    """Mutable state shared by the driver and the phase implementations."""

    def __init__(self, objective, P, opts, scheduler):
        self.objective: Objective = objective
        self.P: Polyhedron = P
        self.opts: SolverOptions = opts
        self.scheduler = scheduler
        self.x = None
        self.f = None
        self.g = None
        self.active: ActiveSet = None
        self.prev_active: ActiveSet = None
        self.projector = None
        self.E = np.inf
        self.e = np.inf
        self.bb = BBState(cycle_length=opts.cycle_length)
        self.ref: ReferenceValue = None
        self.iterations = 0
        self.phase1_iterations = 0
        self.phase2_iterations = 0
        self.nproj = 0
        self.episode = 0
        self.phase = 1
        self.trace = [] if opts.trace else None

    @property
    def tau(self):
        return self.scheduler.tau

    @property
    def theta(self):
        return self.scheduler.theta

    def iterations_left(self) -> bool:
        if self.iterations >= self.opts.max_iter:
            return False
        if self.opts.max_evals is not None:
            if self.objective.value_calls >= self.opts.max_evals:
                return False
        return True

    def set_active(self, S: ActiveSet):
        if self.active is None or S != self.active:
            self.active = S
            self.projector = make_projector(self.P, S, self.opts.sigma)

    def grow_active(self, triples):
        """Add ``(kind, index, side)`` constraints to the working set."""
        rl, ru, vl, vu = [], [], [], []
        for kind, idx, side in triples:
            if kind == "row":
                (ru if side == "upper" else rl).append(idx)
            else:
                (vu if side == "upper" else vl).append(idx)
        grown = self.active.union(
            ActiveSet(tuple(sorted(rl)), tuple(sorted(ru)),
                      tuple(sorted(vl)), tuple(sorted(vu)))
        )
        self.set_active(grown)

    def refresh_errors(self):
        self.nproj += 1
        self.E, _ = global_error(self.x, self.g, self.P, self.opts.projection_tol)
        self.e, _ = local_error(self.x, self.g, self.active, self.projector)

    def record(self, mode: str, step: float):
        if self.trace is None:
            return
        self.trace.append(
            TraceRecord(
                k=self.iterations,
                phase=self.phase,
                mode=mode,
                f=self.f,
                E=self.E,
                e=self.e,
                theta=self.theta,
                step=step,
                active_rows=self.active.rows,
                active_vars=self.active.variables,
                feas_violation=violation(self.x, self.P),
                episode=self.episode if self.phase == 2 else -1,
            )
        )

    def advance(self, x_new, f_new, g_new, S_new: ActiveSet, mode: str, step: float):
        """Commit an accepted step and refresh derived quantities."""
        self.bb.remember(self.x, self.g)
        self.prev_active = self.active
        self.x, self.f, self.g = x_new, f_new, g_new
        self.set_active(S_new)
        update_reference(self.ref, f_new)
        self.nproj += 1  # step direction used one projection
        self.refresh_errors()
        self.iterations += 1
        if self.phase == 1:
            self.phase1_iterations += 1
        else:
            self.phase2_iterations += 1
        self.record(mode, step)


def _run_phase_one(st: SolverState) -> tuple[str, int]:
    """Gradient projection until ``E <= tau`` or ``e >= theta E``.

    Returns ``(reason, visit_iterations)`` with reason in
    ``{"converged", "branch", "maxiter"}``.
    """
    visit = 0
    while True:
        if st.E <= st.tau:
            return "converged", visit
        if st.e >= st.theta * st.E:
            return "branch", visit
        if not st.iterations_left():
            return "maxiter", visit
        if st.bb.prev_x is None:
            alpha = st.bb.alpha
        else:
            alpha = bb_stepsize(st.bb, st.x, st.bb.prev_x, st.g, st.bb.prev_g)
        x_new, f_new, g_new, s, _ = phase1_step(
            st.x, st.f, st.g, alpha, st.P, st.ref, st.objective,
            proj_tol=st.opts.projection_tol,
        )
        S_new = active_set(x_new, st.P, st.opts.eps_active)
        st.advance(x_new, f_new, g_new, S_new, "gp", s)
        visit += 1


def solve(
    objective: Objective,
    P: Polyhedron,
    options: SolverOptions = None,
    x0=None,
) -> SolveReport:
    """Minimize the objective over the polyhedron.

    The starting guess is projected onto the feasible set first; a
    start whose global error is already below ``tau`` reports
    ``stationary_start`` without entering either phase.
    """
    opts = (options or SolverOptions()).validate()
    if opts.monotone and opts.memory != 1:
        from dataclasses import replace

        opts = replace(opts, memory=1)
    scheduler = PhaseScheduler(opts.tau, opts.theta, opts.mu)
    st = SolverState(objective, P, opts, scheduler)
    t0 = time.perf_counter()

    def report(status, message=""):
        return SolveReport(
            status=status,
            x=st.x.copy() if st.x is not None else None,
            f=st.f if st.f is not None else np.nan,
            E=st.E,
            e=st.e,
            iterations=st.iterations,
            phase1_iterations=st.phase1_iterations,
            phase2_iterations=st.phase2_iterations,
            theta_final=st.theta,
            nfev=objective.value_calls,
            ngev=objective.gradient_calls,
            nproj=st.nproj,
            time=time.perf_counter() - t0,
            message=message,
            trace=st.trace,
        )

    if x0 is None:
        x0 = np.clip(np.zeros(P.n), P.lo, P.hi)
    try:
        st.nproj += 1
        st.x = project(np.asarray(x0, dtype=float), P, opts.projection_tol)
    except InfeasiblePolyhedron as exc:
        return report(Status.INFEASIBLE, str(exc))
    st.f, st.g = objective.value_and_gradient(st.x)
    st.ref = ReferenceValue.start(
        st.f, memory=opts.memory, monotone_period=opts.monotone_period
    )
    st.bb.initialize(st.x, st.g)
    st.set_active(active_set(st.x, st.P, opts.eps_active))
    st.prev_active = st.active
    st.refresh_errors()
    st.record("init", 0.0)

    if st.E <= st.tau:
        return report(Status.STATIONARY_START)

    st.phase = 1 if scheduler.decide(st.E, st.e) == "one" else 2
    try:
        while True:
            if st.phase == 1:
                reason, visit = _run_phase_one(st)
                scheduler.note_phase_one_exit(visit)
                if reason == "converged":
                    return report(Status.CONVERGED)
                if reason == "maxiter":
                    return report(Status.MAX_ITERATIONS)
                st.phase = 2
            else:
                st.episode += 1
                reason = _phase2.phase2_loop(st)
                if reason == "converged":
                    return report(Status.CONVERGED)
                if reason == "maxiter":
                    return report(Status.MAX_ITERATIONS)
                st.phase = 1
    except LineSearchFailure as exc:
        return report(Status.LINE_SEARCH_FAILURE, str(exc))
    except MaxIterationsError as exc:
        return report(Status.MAX_ITERATIONS, str(exc))
