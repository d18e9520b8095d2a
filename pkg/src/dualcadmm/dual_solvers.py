"""
Dual consensus ADMM for coupled conic resource allocation.

Both algorithms run consensus ADMM on the dual problem

    maximize  -sum_i ( f_i^*(-A_i' y) + <y, b_i> + I_{K polar}(y) )

so agents agree on a common multiplier ``y`` while keeping ``f_i``, ``A_i``
and ``b_i`` private.  The dual prox steps are evaluated through primal solves
(:func:`dualcadmm.subproblem.prox_dual_via_primal`), so conjugates never
appear.

``aggregate``
    Each agent solves a joint ``(x_i, t_i)`` problem with ``t_i in K`` and
    sets ``y_i = proj_{K polar}(A_i x_i + r_i) / (2 rho d_i)``.
``decomposed``
    The cone is handled by a separate ``z_i`` projection onto the polar
    cone; the ``x_i`` problem is an unconstrained penalized solve.

Every agent update sees only its own data, its own state and the ``y``
values its neighbours sent in the current round.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import cones
from .consensus_admm import (NodeOracleA1, NodeOracleA2, check_p_sum, exchange, map_nodes,
                        neighbor_terms)
from .objectives import prox
from .subproblem import (InnerProblem, InnerSolverError, Workspace, prox_dual_via_primal,
                         solve_aggregate_inner, solve_decomposed_inner)

log = logging.getLogger(__name__)

ALGORITHMS = ("aggregate", "decomposed")


@dataclass
class InnerConfig:
    tol: float = 1e-8
    max_iter: int = 500
    retries: int = 1
    method: str = "newton"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("inner tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("inner max_iter must be at least 1")


@dataclass
class SolverConfig:
    algorithm: str = "aggregate"
    rho: float = 1.0
    sigma: float = 1.0
    max_iter: int = 1000
    tol: float = 1e-6
    inner: InnerConfig = field(default_factory=InnerConfig)
    rng_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")


@dataclass
class AgentRunState:
    y: np.ndarray
    p: np.ndarray
    x: np.ndarray
    t: np.ndarray | None = None
    s: np.ndarray | None = None
    z: np.ndarray | None = None
    r: np.ndarray | None = None
    inner_residual: float = 0.0
    inner_iterations: int = 0


def init_states(problem, algorithm, y0=None) -> list:
    """Zero iterates (``p`` is always zero) for every agent."""
    m = problem.m
    out = []
    for a in problem.agents:
        y = np.zeros(m) if y0 is None else np.array(y0, dtype=float)
        st = AgentRunState(y=y, p=np.zeros(m), x=np.zeros(a.n))
        if algorithm == "aggregate":
            st.t = np.zeros(m)
        else:
            st.s = np.zeros(m)
            st.z = np.zeros(m)
        out.append(st)
    return out


class _AgentView:
    """What one agent is allowed to see: its own data and the shared cone."""

    def __init__(self, agent, cone, degree):
        self.objective = agent.objective
        self.A = agent.A
        self.b = agent.b
        self.cone = cone
        self.degree = degree
        self.workspace = Workspace(agent.A)


def _views(problem):
    views = problem.__dict__.get("_agent_views")
    if views is None:
        views = [_AgentView(a, problem.cone, problem.graph.degree(i))
                 for i, a in enumerate(problem.agents)]
        problem._agent_views = views
    return views


def _solve_inner(solver, prob, x0, inner, workspace, **kw):
    max_iter = inner.max_iter
    for attempt in range(inner.retries + 1):
        try:
            return solver(prob, x0=x0, tol=inner.tol, max_iter=max_iter, workspace=workspace, **kw)
        except InnerSolverError:
            if attempt == inner.retries:
                raise
            log.debug("inner solve retry %d with max_iter=%d", attempt + 1, 10 * max_iter)
            max_iter *= 10


def aggregate_local(view, st, inbox, rho, inner) -> AgentRunState:
    """One agent's update of the aggregate algorithm."""
    if view.degree == 0:
        raise ValueError("aggregate update needs at least one neighbour")
    plus, minus = neighbor_terms(st.y, inbox)
    p = st.p + rho * minus
    r = rho * plus - (view.b + p)
    gamma = 2.0 * rho * view.degree
    prob = InnerProblem(view.objective, view.A, r, gamma, view.cone)
    kw = {} if inner.method == "newton" else {"method": inner.method}
    sol = _solve_inner(solve_aggregate_inner, prob, st.x, inner, view.workspace, **kw)
    w = view.A @ sol.x + r
    t = cones.project_cone(view.cone, w)
    y = cones.project_polar(view.cone, w) / gamma
    return AgentRunState(y=y, p=p, x=sol.x, t=t, r=r, inner_residual=sol.residual,
                         inner_iterations=sol.inner_iterations)


def decomposed_local(view, st, inbox, rho, sigma, inner) -> AgentRunState:
    """One agent's update of the decomposed algorithm."""
    plus, minus = neighbor_terms(st.y, inbox)
    p = st.p + rho * minus
    s = st.s + sigma * (st.y - st.z)
    r = sigma * st.z + rho * plus - (view.b + p + s)
    gamma = sigma + 2.0 * rho * view.degree
    prob = InnerProblem(view.objective, view.A, r, gamma)
    sol = _solve_inner(solve_decomposed_inner, prob, st.x, inner, view.workspace)
    y = (view.A @ sol.x + r) / gamma
    z = cones.project_polar(view.cone, y + s / sigma)
    return AgentRunState(y=y, p=p, x=sol.x, s=s, z=z, r=r, inner_residual=sol.residual,
                         inner_iterations=sol.inner_iterations)


def _round(problem, states, local, workers, check):
    views = _views(problem)
    inbox = exchange(problem.graph, [st.y for st in states])
    new = map_nodes(lambda i: local(views[i], states[i], inbox[i]), problem.n_agents, workers)
    if check:
        check_p_sum(np.array([st.p for st in new]))
    return new


def aggregate_round(problem, states, rho, inner=None, workers=1, check=True) -> list:
    """One synchronous round of the aggregate algorithm; returns new states."""
    inner = inner or InnerConfig()
    return _round(problem, states, lambda v, st, box: aggregate_local(v, st, box, rho, inner),
                  workers, check)


def decomposed_round(problem, states, sigma, rho, inner=None, workers=1, check=True) -> list:
    """One synchronous round of the decomposed algorithm; returns new states."""
    inner = inner or InnerConfig()
    return _round(problem, states,
                  lambda v, st, box: decomposed_local(v, st, box, rho, sigma, inner),
                  workers, check)


aggregate_step = aggregate_round
decomposed_step = decomposed_round


def primal_recover(states):
    """Concatenated primal iterate and the cone-side aggregate ``w``.

    ``w`` is ``sum_i t_i`` for the aggregate algorithm and ``sum_i s_i`` for
    the decomposed one.
    """
    x = np.concatenate([st.x for st in states])
    if states[0].t is not None:
        w = np.sum([st.t for st in states], axis=0)
    else:
        w = np.sum([st.s for st in states], axis=0)
    return x, w


@dataclass
class OptimalityResiduals:
    stationarity: np.ndarray
    cone_membership: float
    complementarity: float
    coupling: float
    consensus: float

    def max(self):
        return max(float(np.max(self.stationarity, initial=0.0)), self.cone_membership,
                   self.complementarity, self.coupling, self.consensus)

    def within(self, tol):
        return self.max() <= tol

    def as_dict(self):
        return {
            "stationarity": float(np.max(self.stationarity, initial=0.0)),
            "cone_membership": self.cone_membership,
            "complementarity": self.complementarity,
            "coupling": self.coupling,
            "consensus": self.consensus,
        }


def optimality_residuals(problem, states) -> OptimalityResiduals:
    """Residuals of the first-order optimality conditions.

    * stationarity_i: ``||x_i - prox_{f_i}(x_i - A_i' y_i)||`` (unit step),
      zero iff ``0 in df_i(x_i) + A_i' y_i``;
    * cone_membership: ``dist_K(w)``;
    * complementarity: ``|<ybar, w>| + dist_{K polar}(ybar)``;
    * coupling: ``||sum_i (A_i x_i - b_i) - w||``;
    * consensus: ``max_i ||y_i - ybar||``.
    """
    K = problem.cone
    stat = np.array([
        np.linalg.norm(st.x - prox(a.objective, st.x - a.A.T @ st.y, 1.0))
        for a, st in zip(problem.agents, states)
    ])
    _, w = primal_recover(states)
    Y = np.array([st.y for st in states])
    ybar = Y.mean(axis=0)
    coupling = problem.coupling([st.x for st in states]) - w
    return OptimalityResiduals(
        stationarity=stat,
        cone_membership=cones.dist_cone(K, w),
        complementarity=abs(float(ybar @ w)) + cones.dist_polar(K, ybar),
        coupling=float(np.linalg.norm(coupling)),
        consensus=float(np.max(np.linalg.norm(Y - ybar, axis=1))),
    )


@dataclass
class IterationRecord:
    k: int
    stationarity: float
    cone_membership: float
    complementarity: float
    coupling: float
    consensus: float
    objective: float
    inner_residual: float
    inner_iterations: int

    FIELDS = ("k", "stationarity", "cone_membership", "complementarity", "coupling",
              "consensus", "objective", "inner_residual", "inner_iterations")

    def row(self):
        return [getattr(self, f) for f in self.FIELDS]


@dataclass
class RunReport:
    config: SolverConfig
    states: list
    history: list
    converged: bool
    iterations: int

    @property
    def final(self):
        return self.history[-1] if self.history else None


class RunAborted(RuntimeError):
    """An inner solve failed even after retries; ``report`` holds the partial run."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


def _record(problem, states, k):
    res = optimality_residuals(problem, states)
    xs = [st.x for st in states]
    return IterationRecord(
        k=k,
        stationarity=float(np.max(res.stationarity, initial=0.0)),
        cone_membership=res.cone_membership,
        complementarity=res.complementarity,
        coupling=res.coupling,
        consensus=res.consensus,
        objective=problem.objective_value(xs),
        inner_residual=max(st.inner_residual for st in states),
        inner_iterations=sum(st.inner_iterations for st in states),
    )


def converged(record, tol, scale):
    limit = tol * (1.0 + scale)
    return max(record.stationarity, record.cone_membership, record.complementarity,
               record.coupling, record.consensus) <= limit


def run(problem, config: SolverConfig, callback: Callable | None = None,
        track_residuals=True, y0=None) -> RunReport:
    """Iterate until every residual is below ``tol * (1 + data scale)`` or ``max_iter``.

    ``callback(k, states, record)`` is called after every round (``record``
    is ``None`` when ``track_residuals`` is off).  With ``tol == 0`` or
    residual tracking disabled the run always lasts ``max_iter`` rounds.
    """
    if config.algorithm == "aggregate" and problem.n_agents < 2:
        raise ValueError("the aggregate algorithm needs at least two connected agents")
    states = init_states(problem, config.algorithm, y0=y0)
    scale = problem.data_scale()
    history = [_record(problem, states, 0)] if track_residuals else []
    done = track_residuals and config.tol > 0 and converged(history[0], config.tol, scale)
    k = 0
    while not done and k < config.max_iter:
        try:
            if config.algorithm == "aggregate":
                states = aggregate_round(problem, states, config.rho, config.inner, config.workers)
            else:
                states = decomposed_round(problem, states, config.sigma, config.rho,
                                          config.inner, config.workers)
        except Exception as exc:
            report = RunReport(config, states, history, False, k)
            raise RunAborted(f"round {k + 1} failed: {exc}", report) from exc
        k += 1
        rec = _record(problem, states, k) if track_residuals else None
        if rec is not None:
            history.append(rec)
            done = config.tol > 0 and converged(rec, config.tol, scale)
        if callback is not None:
            callback(k, states, rec)
    return RunReport(config, states, history, bool(done), k)


# --- the same updates phrased as consensus-engine oracles -----------------

class DualOracleA1(NodeOracleA1):
    """y-step of the generic engine for ``psi_i = f_i^*(-A_i' .) + <., b_i> + I_{K polar}``.

    Keeps the last primal solution as a warm start, like an agent would.
    """

    def __init__(self, agent, cone, inner=None):
        self.agent = agent
        self.cone = cone
        self.inner = inner or InnerConfig()
        self.workspace = Workspace(agent.A)
        self.x = np.zeros(agent.n)
        super().__init__(self._solve)

    def _solve(self, p, nbr_sum, degree, rho):
        gamma = 2.0 * rho * degree
        z = (rho * nbr_sum - (self.agent.b + p)) / gamma
        y, sol = prox_dual_via_primal(self.agent.objective, self.agent.A, cones.polar_of(self.cone),
                                      z, gamma, x0=self.x, tol=self.inner.tol,
                                      max_iter=self.inner.max_iter, workspace=self.workspace)
        self.x = sol.x
        return y


class DualOracleA2(NodeOracleA2):
    """Split oracles: ``phi_i = f_i^*(-A_i' .) + <., b_i>``, ``theta_i = I_{K polar}``."""

    def __init__(self, agent, cone, inner=None):
        self.agent = agent
        self.cone = cone
        self.inner = inner or InnerConfig()
        self.workspace = Workspace(agent.A)
        self.full_space = cones.Polar(cones.Zero(cones.cone_dim(cone)))
        self.x = np.zeros(agent.n)
        super().__init__(self._solve_y, self._solve_z)

    def _solve_y(self, q, z, nbr_sum, degree, sigma, rho):
        gamma = sigma + 2.0 * rho * degree
        center = (sigma * z + rho * nbr_sum - (self.agent.b + q)) / gamma
        y, sol = prox_dual_via_primal(self.agent.objective, self.agent.A, self.full_space,
                                      center, gamma, x0=self.x, tol=self.inner.tol,
                                      max_iter=self.inner.max_iter, workspace=self.workspace)
        self.x = sol.x
        return y

    def _solve_z(self, s, y, sigma):
        return cones.project_polar(self.cone, y + s / sigma)


def dual_oracles_a1(problem, inner=None):
    return [DualOracleA1(a, problem.cone, inner) for a in problem.agents]


def dual_oracles_a2(problem, inner=None):
    return [DualOracleA2(a, problem.cone, inner) for a in problem.agents]


def simplified_equality_round(problem, states, rho, inner=None):
    """Reference round for ``K = {0}``: plain penalized x-solve, ``y = (A x + r) / (2 rho d)``.

    Used to check that the aggregate round reduces to the equality-constrained
    method when the cone is the zero cone.
    """
    inner = inner or InnerConfig()
    views = _views(problem)
    inbox = exchange(problem.graph, [st.y for st in states])
    out = []
    for view, st, box in zip(views, states, inbox):
        plus, minus = neighbor_terms(st.y, box)
        p = st.p + rho * minus
        r = rho * plus - (view.b + p)
        gamma = 2.0 * rho * view.degree
        sol = _solve_inner(solve_decomposed_inner, InnerProblem(view.objective, view.A, r, gamma),
                           st.x, inner, view.workspace)
        y = (view.A @ sol.x + r) / gamma
        out.append(replace(st, y=y, p=p, x=sol.x, t=np.zeros_like(y), r=r))
    return out
