"""
Fast self-checks of the numerical kernel.

Each sweep draws a handful of random instances from one seed and checks

* the Moreau decomposition on every cone type (sum, orthogonality, membership),
* the zero-sum invariant of the ``p`` multipliers over a few aggregate and
  decomposed rounds,
* the dual prox computed through a primal solve against a direct projected
  gradient minimization of the dual objective (quadratic ``g`` with a known
  conjugate).

Cone operations are looked up through the :mod:`dualcadmm.cones` module at
call time, so a patched operator is picked up by the checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cones
from .consensus_admm import p_sum_violation
from .dual_solvers import InnerConfig, aggregate_round, decomposed_round, init_states
from .graph import small_world, cycle_graph
from .objectives import Quadratic
from .problem import AgentProblem, CoupledProblem
from .subproblem import prox_dual_via_primal


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def random_cone(rng, max_dim=5):
    kind = rng.integers(4)
    if kind == 0:
        return cones.Zero(int(rng.integers(1, max_dim)))
    if kind == 1:
        return cones.NonnegOrthant(int(rng.integers(1, max_dim)))
    if kind == 2:
        return cones.SecondOrder(int(rng.integers(2, max_dim + 1)))
    return cones.Product((cones.NonnegOrthant(int(rng.integers(1, 3))),
                          cones.SecondOrder(int(rng.integers(2, 4)))))


def check_moreau(rng, n_vectors=200):
    worst = 0.0
    for _ in range(n_vectors):
        K = random_cone(rng)
        v = rng.standard_normal(cones.cone_dim(K)) * rng.uniform(0.1, 10.0)
        a = cones.project_cone(K, v)
        b = cones.project_polar(K, v)
        scale = 1.0 + np.linalg.norm(v)
        err = max(
            np.linalg.norm(a + b - v),
            abs(a @ b),
            cones.dist_cone(K, a),
            cones.dist_polar(K, b),
        ) / scale
        worst = max(worst, err)
    return CheckResult("moreau decomposition", worst <= 1e-10, f"worst relative error {worst:.2e}")


def _random_problem(rng, n_agents=4, m=3):
    K = [cones.Zero(m), cones.NonnegOrthant(m), cones.SecondOrder(m)][rng.integers(3)]
    graph = cycle_graph(n_agents) if n_agents > 2 else small_world(3, 3, rng=rng)
    agents = []
    for _ in range(n_agents):
        n = int(rng.integers(1, 4))
        M = rng.standard_normal((n, n))
        agents.append(AgentProblem(Quadratic(M @ M.T + 0.5 * np.eye(n), rng.standard_normal(n)),
                                   rng.standard_normal((m, n)), rng.standard_normal(m)))
    return CoupledProblem(agents, K, graph)


def check_p_sum(rng, rounds=20):
    worst = 0.0
    for alg in ("aggregate", "decomposed"):
        problem = _random_problem(rng)
        states = init_states(problem, alg)
        inner = InnerConfig()
        for _ in range(rounds):
            if alg == "aggregate":
                states = aggregate_round(problem, states, 1.0, inner, check=False)
            else:
                states = decomposed_round(problem, states, 1.0, 1.0, inner, check=False)
            total, allowed = p_sum_violation(np.array([st.p for st in states]))
            worst = max(worst, total / allowed)
    return CheckResult("sum of p multipliers", worst <= 1.0,
                       f"worst |sum p| / allowance {worst:.2e}")


def direct_dual_prox(P, q, E, C, z, gamma, iters=5000):
    """Projected accelerated gradient on ``g*(-E'y) + gamma/2 ||y - z||^2`` over ``C``.

    With ``g(x) = x'Px/2 + q'x`` the conjugate is ``g*(u) = (u-q)' P^{-1} (u-q) / 2``.
    """
    Pinv = np.linalg.inv(P)
    H = E @ Pinv @ E.T + gamma * np.eye(E.shape[0])
    c = gamma * z - E @ Pinv @ q
    L = np.linalg.eigvalsh(H).max()
    y = cones.project_cone(C, z)
    yk, t = y, 1.0
    for _ in range(iters):
        y_new = cones.project_cone(C, yk - (H @ yk - c) / L)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        yk = y_new + (t - 1) / t_new * (y_new - y)
        if np.linalg.norm(y_new - y) < 1e-15 * (1 + np.linalg.norm(y)):
            y = y_new
            break
        y, t = y_new, t_new
    return y


def check_dual_prox(rng, n_instances=10):
    worst = 0.0
    for _ in range(n_instances):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(2, 5))
        M = rng.standard_normal((n, n))
        P = M @ M.T + 0.5 * np.eye(n)
        q = rng.standard_normal(n)
        E = rng.standard_normal((m, n))
        C = [cones.NonnegOrthant(m), cones.SecondOrder(m), cones.Polar(cones.Zero(m))][rng.integers(3)]
        z = rng.standard_normal(m)
        gamma = float(rng.uniform(0.5, 3.0))
        y, _ = prox_dual_via_primal(Quadratic(P, q), E, C, z, gamma, tol=1e-11)
        ref = direct_dual_prox(P, q, E, C, z, gamma)
        worst = max(worst, np.linalg.norm(y - ref, np.inf))
    return CheckResult("dual prox via primal solve", worst <= 1e-6,
                       f"worst deviation {worst:.2e}")


def run_checks(seed=0):
    """Run every check once on instances drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    results = []
    for check in (check_moreau, check_p_sum, check_dual_prox):
        try:
            results.append(check(rng))
        except Exception as exc:  # a crash is a failed check, not a crashed sweep
            results.append(CheckResult(check.__name__, False, f"raised {exc!r}"))
    return results


def sweep(seed=0, n_sweeps=1, report=print):
    """Run ``n_sweeps`` independent sweeps; returns True when everything passed."""
    ok = True
    for s in range(seed, seed + n_sweeps):
        for res in run_checks(s):
            report(f"[seed {s}] {'PASS' if res.ok else 'FAIL'} {res.name}: {res.detail}")
            ok &= res.ok
    return ok
