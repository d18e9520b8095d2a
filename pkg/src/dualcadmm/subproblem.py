"""
Per-agent inner minimizations.

Both dual algorithms hand each agent a problem of the form

    minimize_x  f(x) + 1/(2*gamma) * pen(E x + shift)

where ``pen`` is the squared norm (decomposed variant) or the squared
distance to a cone ``K`` (aggregate variant, after minimizing out the
``t`` block in closed form: ``t = proj_K(E x + shift)``).

The solver runs accelerated proximal gradient with adaptive restart and, at
regular checkpoints, an active-set Newton polish.  For the objectives in
:mod:`dualcadmm.objectives` the polish identifies the exact minimizer once the
active set is right, which is the common case when warm-started from the
previous outer iteration.  A solution is only accepted when its fixed-point
residual

    || x - prox_{tau f}(x - tau * grad h(x)) ||,   tau = gamma / ||E||^2,

is below tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from . import cones
from .objectives import local_model, prox

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500


class InnerSolverError(RuntimeError):
    """The inner solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass
class InnerProblem:
    objective: object
    E: np.ndarray
    shift: np.ndarray
    gamma: float
    cone: object = None

    def __post_init__(self):
        self.E = np.atleast_2d(np.asarray(self.E, dtype=float))
        self.shift = np.atleast_1d(np.asarray(self.shift, dtype=float))
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        m, n = self.E.shape
        if self.shift.shape != (m,):
            raise ValueError(f"shift has shape {self.shift.shape}, expected ({m},)")
        d = getattr(self.objective, "dim", None)
        if d is not None and d != n:
            raise ValueError(f"objective dimension {d} does not match E with {n} columns")
        if self.cone is not None and cones.cone_dim(self.cone) != m:
            raise ValueError("cone dimension does not match the rows of E")


@dataclass
class InnerSolution:
    x: np.ndarray
    t: np.ndarray | None
    inner_iterations: int
    residual: float


class Workspace:
    """Iteration-invariant data for one agent's inner problems (``E'E``, ``||E||^2``)."""

    def __init__(self, E):
        self.E = np.atleast_2d(np.asarray(E, dtype=float))
        self.gram = self.E.T @ self.E
        self.sqnorm = float(np.linalg.norm(self.E, 2) ** 2) if self.E.size else 0.0


class _Penalty:
    # h(x) = 1/(2 gamma) ||P(Ex + s)||^2, P = proj onto polar of K, or identity
    def __init__(self, ws, shift, gamma, cone):
        self.E = ws.E
        self.ws = ws
        self.shift = shift
        self.gamma = gamma
        self.polar = None if cone is None else cones.polar_of(cone)
        self.lipschitz = ws.sqnorm / gamma

    def _proj(self, w):
        if self.polar is None:
            return w
        return cones.project_cone(self.polar, w)

    def value(self, x):
        pw = self._proj(self.E @ x + self.shift)
        return 0.5 * float(pw @ pw) / self.gamma

    def grad(self, x):
        return self.E.T @ self._proj(self.E @ x + self.shift) / self.gamma

    def hess(self, x):
        if self.polar is None:
            return self.ws.gram / self.gamma
        J = cones.projection_jacobian(self.polar, self.E @ x + self.shift)
        return self.E.T @ J @ self.E / self.gamma


def _step(pen):
    return 1.0 / pen.lipschitz if pen.lipschitz > 0 else 1.0


def _norm(v):
    return math.sqrt(v @ v)


def fixed_point_residual(objective, pen, x, tau=None):
    tau = _step(pen) if tau is None else tau
    return _norm(x - prox(objective, x - tau * pen.grad(x), tau))


def _newton_polish(objective, pen, x, max_steps=25):
    model = local_model(objective, x)
    free = ~model.fixed
    x = np.where(model.fixed, model.value, x)
    if not free.any():
        return x
    idx = np.flatnonzero(free)
    ix = np.ix_(idx, idx)

    def phi(z):
        return pen.value(z) + model.lin @ z + 0.5 * z @ model.hess @ z

    f0 = phi(x)
    for _ in range(max_steps):
        g = (pen.grad(x) + model.lin + model.hess @ x)[idx]
        if not _norm(g) > 1e-15 * (1.0 + _norm(x)):
            break
        H = pen.hess(x)[ix] + model.hess[ix]
        try:
            L = np.linalg.cholesky(H)
            d = -np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            d = -np.linalg.lstsq(H, g, rcond=1e-12)[0]
        if not np.all(np.isfinite(d)):
            break
        slope = g @ d
        step = 1.0
        while True:
            trial = x.copy()
            trial[idx] += step * d
            f1 = phi(trial)
            if f1 <= f0 + 1e-4 * step * slope or step < 1e-10:
                break
            step *= 0.5
        if not f1 <= f0 + 1e-12 * (1.0 + abs(f0)):
            break
        moved = _norm(trial - x)
        x, f0 = trial, f1
        if moved <= 1e-15 * (1.0 + _norm(x)):
            break
    return x


def _minimize(objective, pen, x0, tol, max_iter, check_every=5):
    """Return (x, iterations, residual) or raise InnerSolverError."""
    n = pen.E.shape[1]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    tau = _step(pen)

    # polish first: a warm start that merely meets tol would otherwise be
    # returned unchanged and stall the outer iteration
    best = x
    best_res = fixed_point_residual(objective, pen, x, tau)
    cand = _newton_polish(objective, pen, x)
    res = fixed_point_residual(objective, pen, cand, tau)
    if res <= tol and res <= best_res:
        return cand, 0, res
    if best_res <= tol:
        return x, 0, best_res
    if res < best_res:
        best, best_res = cand, res

    x = best
    y = x
    theta = 1.0
    for k in range(1, max_iter + 1):
        x_new = prox(objective, y - tau * pen.grad(y), tau)
        if (y - x_new) @ (x_new - x) > 0:
            theta = 1.0
            y = x_new
        else:
            theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
            y = x_new + ((theta - 1.0) / theta_new) * (x_new - x)
            theta = theta_new
        x = x_new
        if k % check_every == 0 or k == max_iter:
            res = fixed_point_residual(objective, pen, x, tau)
            if res < best_res:
                best, best_res = x, res
            if res <= tol:
                return x, k, res
            cand = _newton_polish(objective, pen, x)
            res = fixed_point_residual(objective, pen, cand, tau)
            if res <= tol:
                return cand, k, res
            if res < best_res:
                best, best_res = cand, res
    raise InnerSolverError("inner solver did not converge", best_res, max_iter)


def _workspace(p, workspace):
    if workspace is not None and (workspace.E is p.E or np.array_equal(workspace.E, p.E)):
        return workspace
    return Workspace(p.E)


def solve_decomposed_inner(p: InnerProblem, x0=None, tol=DEFAULT_TOL,
                           max_iter=DEFAULT_MAX_ITER, workspace=None) -> InnerSolution:
    """Minimize ``f(x) + 1/(2 gamma) ||E x + shift||^2``.

    Raises
    ------
    InnerSolverError
        If the stationarity residual is still above ``tol`` after ``max_iter``
        iterations.  The exception carries the best residual reached.
    """
    if p.cone is not None:
        raise ValueError("decomposed inner problem takes no cone")
    pen = _Penalty(_workspace(p, workspace), p.shift, p.gamma, None)
    x, iters, res = _minimize(p.objective, pen, x0, tol, max_iter)
    return InnerSolution(x, None, iters, res)


def solve_aggregate_inner(p: InnerProblem, x0=None, tol=DEFAULT_TOL,
                          max_iter=DEFAULT_MAX_ITER, workspace=None,
                          method="newton") -> InnerSolution:
    """Jointly minimize ``f(x) + I_K(t) + 1/(2 gamma) ||E x + shift - t||^2``.

    ``method="newton"`` eliminates ``t`` and runs the accelerated/polished
    solver on ``x``.  ``method="alternating"`` runs block coordinate descent:
    ``t = proj_K(E x + shift)`` followed by an exact ``x`` solve with ``t``
    fixed; each sweep does not increase the objective.  Either way the
    returned ``t`` is ``proj_K(E x + shift)``.
    """
    if p.cone is None:
        raise ValueError("aggregate inner problem needs a cone")
    ws = _workspace(p, workspace)
    pen = _Penalty(ws, p.shift, p.gamma, p.cone)
    if method == "newton":
        x, iters, res = _minimize(p.objective, pen, x0, tol, max_iter)
    elif method == "alternating":
        x, iters, res = _alternating(p, ws, pen, x0, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    t = cones.project_cone(p.cone, p.E @ x + p.shift)
    return InnerSolution(x, t, iters, res)


def _alternating(p, ws, pen, x0, tol, max_iter, trace=None):
    n = p.E.shape[1]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    tau = _step(pen)
    res = fixed_point_residual(p.objective, pen, x, tau)
    for sweep in range(1, max_iter + 1):
        if res <= tol:
            return x, sweep - 1, res
        t = cones.project_cone(p.cone, p.E @ x + p.shift)
        sub = InnerProblem(p.objective, p.E, p.shift - t, p.gamma)
        x = solve_decomposed_inner(sub, x0=x, tol=1e-2 * tol, workspace=ws,
                                   max_iter=DEFAULT_MAX_ITER).x
        if trace is not None:
            trace.append(aggregate_objective(p, x, t))
        res = fixed_point_residual(p.objective, pen, x, tau)
    if res <= tol:
        return x, max_iter, res
    raise InnerSolverError("alternating minimization did not converge", res, max_iter)


def aggregate_objective(p: InnerProblem, x, t) -> float:
    """Value of the joint (x, t) objective; ``t`` must lie in the cone."""
    from .objectives import evaluate

    r = p.E @ x + p.shift - t
    return evaluate(p.objective, x) + 0.5 * float(r @ r) / p.gamma


def prox_dual_via_primal(g, E, C, z, gamma, x0=None, tol=DEFAULT_TOL,
                         max_iter=DEFAULT_MAX_ITER, workspace=None):
    """Prox of ``d(y) = g*(-E'y) + I_C(y)`` evaluated through a primal solve.

    Returns ``(y, inner)`` where ``y = argmin_y d(y) + gamma/2 ||y - z||^2``
    and ``inner`` is the :class:`InnerSolution` of

        minimize  g(x) + I_{C polar}(t) + 1/(2 gamma) ||E x + gamma z - t||^2.

    ``y`` is unique even when the primal minimizer is not.
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    prob = InnerProblem(g, E, gamma * z, gamma, cones.polar_of(C))
    sol = solve_aggregate_inner(prob, x0=x0, tol=tol, max_iter=max_iter, workspace=workspace)
    y = cones.project_cone(C, E @ sol.x + gamma * z) / gamma
    return y, sol
