"""
Decentralized consensus ADMM over an undirected graph.

Solves ``minimize sum_i psi_i(y)`` where node ``i`` only knows ``psi_i`` and
talks to its graph neighbours.  Two variants are provided:

* :func:`a1_round` needs, per node, the minimizer of
  ``psi_i(y) + <y, p_i> + rho * sum_j ||y - (y_i + y_j)/2||^2``;
* :func:`a2_round` handles ``psi_i = phi_i + theta_i`` and needs separate
  oracles for ``phi_i`` and ``theta_i``.

A round is synchronous: every node first publishes its current ``y_i``, then
all nodes update from that snapshot only.  Node updates are independent and
may run on a thread pool; neighbour sums are always accumulated in ascending
node order, so the result does not depend on the number of workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

P_SUM_TOL = 1e-10


class NodeFailure(RuntimeError):
    """An oracle raised while updating a node; ``node`` is the node id."""

    def __init__(self, node, cause):
        super().__init__(f"node {node}: {cause}")
        self.node = node
        self.cause = cause


class InvariantViolation(AssertionError):
    pass


@dataclass
class NodeOracleA1:
    """``solve_y_step(p, nbr_sum, degree, rho) -> y`` where ``nbr_sum = sum_j (y_i + y_j)``."""

    solve_y_step: Callable


@dataclass
class NodeOracleA2:
    """Oracles for the split variant.

    ``solve_y_step(q, z, nbr_sum, degree, sigma, rho)`` minimizes
    ``phi(y) + <y, q> + sigma/2 ||y - z||^2 + rho * sum_j ||y - (y_i + y_j)/2||^2``
    with ``q = p + s``.  ``solve_z_step(s, y, sigma)`` minimizes
    ``theta(z) - <z, s> + sigma/2 ||z - y||^2``.
    """

    solve_y_step: Callable
    solve_z_step: Callable


@dataclass
class ConsensusState:
    y: np.ndarray
    p: np.ndarray
    s: np.ndarray | None = None
    z: np.ndarray | None = None
    k: int = 0

    @property
    def n_nodes(self):
        return self.y.shape[0]


def init_state(n_nodes, dim, y0=None, z0=None, s0=None, split=False) -> ConsensusState:
    """Initial state with ``p = 0``; other blocks default to zero."""

    def block(v):
        out = np.zeros((n_nodes, dim))
        if v is not None:
            out[:] = v
        return out

    state = ConsensusState(y=block(y0), p=np.zeros((n_nodes, dim)))
    if split:
        state.s = block(s0)
        state.z = block(z0)
    return state


# --- message passing ------------------------------------------------------

def exchange(graph, values):
    """Deliver every node's value to its neighbours.

    Returns, for each node, the tuple of neighbour values in ascending node
    order.  The caller must not mutate ``values`` until the round completes.
    """
    return [tuple(values[j] for j in graph.neighbors(i)) for i in range(graph.n_nodes)]


def neighbor_terms(y_i, inbox):
    """``(sum_j (y_i + y_j), sum_j (y_i - y_j))`` accumulated in inbox order."""
    plus = np.zeros_like(y_i)
    minus = np.zeros_like(y_i)
    for y_j in inbox:
        plus += y_i + y_j
        minus += y_i - y_j
    return plus, minus


def map_nodes(fn, n, workers=1):
    """Apply ``fn`` to nodes ``0 .. n-1`` and return results in node order."""

    def guarded(i):
        try:
            return fn(i)
        except NodeFailure:
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with the node id
            raise NodeFailure(i, exc) from exc

    if workers <= 1 or n <= 1:
        return [guarded(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(guarded, range(n)))


def p_sum_violation(p):
    """Return ``(||sum_i p_i||, allowed)`` for the zero-sum invariant."""
    total = np.linalg.norm(p.sum(axis=0))
    scale = max((np.linalg.norm(row) for row in p), default=0.0)
    return float(total), P_SUM_TOL * (1.0 + scale)


def check_p_sum(p):
    total, allowed = p_sum_violation(p)
    if total > allowed:
        raise InvariantViolation(f"sum of p_i is {total:.3e}, allowed {allowed:.3e}")


# --- rounds ---------------------------------------------------------------

def a1_round(state, graph, rho, oracles, workers=1, check=True) -> ConsensusState:
    """One synchronous round of consensus ADMM (p-update, then y-step)."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    inbox = exchange(graph, state.y)

    def node(i):
        plus, minus = neighbor_terms(state.y[i], inbox[i])
        p_new = state.p[i] + rho * minus
        y_new = oracles[i].solve_y_step(p_new, plus, len(inbox[i]), rho)
        return p_new, y_new

    out = map_nodes(node, graph.n_nodes, workers)
    new = replace(state, p=np.array([o[0] for o in out]), y=np.array([o[1] for o in out]),
                  k=state.k + 1)
    if check:
        check_p_sum(new.p)
    return new


def a2_round(state, graph, sigma, rho, oracles, workers=1, check=True) -> ConsensusState:
    """One synchronous round of split consensus ADMM (p, s, y, z updates)."""
    if not (rho > 0 and sigma > 0):
        raise ValueError("rho and sigma must be positive")
    inbox = exchange(graph, state.y)

    def node(i):
        y_i = state.y[i]
        plus, minus = neighbor_terms(y_i, inbox[i])
        p_new = state.p[i] + rho * minus
        s_new = state.s[i] + sigma * (y_i - state.z[i])
        y_new = oracles[i].solve_y_step(p_new + s_new, state.z[i], plus, len(inbox[i]), sigma, rho)
        z_new = oracles[i].solve_z_step(s_new, y_new, sigma)
        return p_new, s_new, y_new, z_new

    out = map_nodes(node, graph.n_nodes, workers)
    new = ConsensusState(
        y=np.array([o[2] for o in out]),
        p=np.array([o[0] for o in out]),
        s=np.array([o[1] for o in out]),
        z=np.array([o[3] for o in out]),
        k=state.k + 1,
    )
    if check:
        check_p_sum(new.p)
    return new


def consensus_violation(y):
    """``max_i ||y_i - mean(y)||``."""
    y = np.asarray(y)
    return float(np.max(np.linalg.norm(y - y.mean(axis=0), axis=1)))


# --- ready-made oracles ----------------------------------------------------

def quadratic_a1(c):
    """Oracle for ``psi(y) = 0.5 ||y - c||^2``."""
    c = np.asarray(c, dtype=float)

    def solve(p, nbr_sum, degree, rho):
        return (c - p + rho * nbr_sum) / (1.0 + 2.0 * rho * degree)

    return NodeOracleA1(solve)


def point_a1(a):
    """Oracle for the indicator of ``{a}``."""
    a = np.asarray(a, dtype=float)
    return NodeOracleA1(lambda p, nbr_sum, degree, rho: a.copy())


def prox_a1(prox_fn):
    """Oracle from ``prox_fn(v, lam) = argmin psi(y) + 1/(2 lam) ||y - v||^2``.

    Needs ``degree >= 1``.
    """

    def solve(p, nbr_sum, degree, rho):
        w = 2.0 * rho * degree
        return prox_fn((rho * nbr_sum - p) / w, 1.0 / w)

    return NodeOracleA1(solve)


def quadratic_a2(c, z_step=None):
    """``phi(y) = 0.5 ||y - c||^2``; ``theta`` defaults to zero.

    ``z_step(v)`` may be given as the prox of ``theta`` evaluated at
    ``v = y + s / sigma`` (a projection when ``theta`` is an indicator).
    """
    c = np.asarray(c, dtype=float)

    def solve_y(q, z, nbr_sum, degree, sigma, rho):
        return (c - q + sigma * z + rho * nbr_sum) / (1.0 + sigma + 2.0 * rho * degree)

    def solve_z(s, y, sigma):
        v = y + s / sigma
        return v if z_step is None else z_step(v)

    return NodeOracleA2(solve_y, solve_z)


def run_a1(graph, oracles, dim, rho=1.0, iters=100, y0=None, workers=1):
    state = init_state(graph.n_nodes, dim, y0=y0)
    for _ in range(iters):
        state = a1_round(state, graph, rho, oracles, workers)
    return state


def run_a2(graph, oracles, dim, sigma=1.0, rho=1.0, iters=100, y0=None, z0=None, s0=None,
           workers=1):
    state = init_state(graph.n_nodes, dim, y0=y0, z0=z0, s0=s0, split=True)
    for _ in range(iters):
        state = a2_round(state, graph, sigma, rho, oracles, workers)
    return state
