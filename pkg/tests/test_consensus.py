import numpy as np
import pytest

from dualcadmm.consensus_admm import (InvariantViolation, NodeFailure, NodeOracleA1, a1_round,
                                      a2_round, check_p_sum, consensus_violation, init_state,
                                      point_a1, prox_a1, quadratic_a1, quadratic_a2, run_a1, run_a2)
from dualcadmm.graph import Graph, complete_graph, cycle_graph, path_graph, small_world


def _data(n, m, seed=0):
    return np.random.default_rng(seed).standard_normal((n, m)) * 3


@pytest.mark.parametrize("graph", [path_graph(5), cycle_graph(6), small_world(10, 15, rng_seed=0),
                                   complete_graph(4)], ids=["path", "cycle", "small-world", "complete"])
def test_a1_mean_consensus(graph):
    c = _data(graph.n_nodes, 3)
    state = run_a1(graph, [quadratic_a1(ci) for ci in c], 3, rho=1.0, iters=1000)
    assert np.max(np.abs(state.y - c.mean(axis=0))) <= 1e-6
    assert consensus_violation(state.y) <= 1e-5


@pytest.mark.parametrize("graph", [path_graph(5), small_world(10, 15, rng_seed=0)],
                         ids=["path", "small-world"])
def test_a2_mean_consensus_agrees_with_a1(graph):
    c = _data(graph.n_nodes, 2, seed=1)
    s1 = run_a1(graph, [quadratic_a1(ci) for ci in c], 2, iters=1000)
    s2 = run_a2(graph, [quadratic_a2(ci) for ci in c], 2, iters=1000)
    assert np.max(np.abs(s2.y - c.mean(axis=0))) <= 1e-6
    assert np.max(np.abs(s2.y - s1.y)) <= 1e-6


def test_single_node_one_step():
    g = Graph(1, [])
    c = np.array([1.5, -2.0])
    state = run_a1(g, [quadratic_a1(c)], 2, iters=1)
    np.testing.assert_array_equal(state.y[0], c)


def test_indicator_pins_consensus():
    g = path_graph(2)
    a, b = np.array([1.0, 2.0]), np.array([-3.0, 0.5])
    state = run_a1(g, [point_a1(a), quadratic_a1(b)], 2, iters=500)
    np.testing.assert_allclose(state.y, [a, a], atol=1e-6)


def test_a2_with_polar_orthant_constraint():
    # minimize sum_i 0.5 ||y - c_i||^2 subject to y <= 0: the answer is min(mean, 0)
    g = small_world(6, 8, rng_seed=2)
    c = _data(6, 3, seed=3)
    oracles = [quadratic_a2(ci, z_step=lambda v: np.minimum(v, 0.0)) for ci in c]
    state = run_a2(g, oracles, 3, iters=1500)
    np.testing.assert_allclose(state.z, np.tile(np.minimum(c.mean(axis=0), 0.0), (6, 1)), atol=1e-6)


def test_prox_oracle_matches_closed_form():
    g = cycle_graph(4)
    c = _data(4, 2, seed=4)
    prox_oracles = [prox_a1(lambda v, lam, ci=ci: (v + lam * ci) / (1 + lam)) for ci in c]
    s1 = run_a1(g, [quadratic_a1(ci) for ci in c], 2, iters=50)
    s2 = run_a1(g, prox_oracles, 2, iters=50)
    np.testing.assert_allclose(s1.y, s2.y, atol=1e-12)


def test_p_sum_zero_every_round():
    g = small_world(10, 15, rng_seed=1)
    c = _data(10, 4, seed=5)
    state = init_state(10, 4)
    state2 = init_state(10, 4, split=True)
    for _ in range(200):
        state = a1_round(state, g, 0.7, [quadratic_a1(ci) for ci in c])
        state2 = a2_round(state2, g, 1.3, 0.7, [quadratic_a2(ci) for ci in c])
        for s in (state, state2):
            scale = 1 + np.max(np.linalg.norm(s.p, axis=1))
            assert np.linalg.norm(s.p.sum(axis=0)) <= 1e-10 * scale


def test_p_sum_violation_detected():
    with pytest.raises(InvariantViolation):
        check_p_sum(np.array([[1.0, 0.0], [0.5, 0.0]]))


def test_worker_count_bit_identical():
    g = small_world(10, 15, rng_seed=0)
    c = _data(10, 3, seed=6)
    a = run_a2(g, [quadratic_a2(ci) for ci in c], 3, iters=100, workers=1)
    b = run_a2(g, [quadratic_a2(ci) for ci in c], 3, iters=100, workers=4)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.p, b.p) and np.array_equal(a.z, b.z)


def test_repeated_runs_identical():
    g = small_world(8, 12, rng_seed=4)
    c = _data(8, 2, seed=7)
    runs = [run_a2(g, [quadratic_a2(ci) for ci in c], 2, sigma=0.5, iters=80) for _ in range(2)]
    assert np.array_equal(runs[0].y, runs[1].y)


def test_permutation_equivariance():
    g = small_world(7, 10, rng_seed=5)
    c = _data(7, 2, seed=8)
    perm = np.random.default_rng(9).permutation(7)
    inv = np.argsort(perm)
    # node k of the relabelled graph is node perm[k] of the original
    g2 = Graph(7, [(inv[i], inv[j]) for i, j in g.edges])
    s1 = run_a1(g, [quadratic_a1(ci) for ci in c], 2, iters=60)
    s2 = run_a1(g2, [quadratic_a1(c[perm[k]]) for k in range(7)], 2, iters=60)
    np.testing.assert_allclose(s2.y, s1.y[perm], rtol=0, atol=1e-13)
    t1 = run_a2(g, [quadratic_a2(ci) for ci in c], 2, iters=60)
    t2 = run_a2(g2, [quadratic_a2(c[perm[k]]) for k in range(7)], 2, iters=60)
    np.testing.assert_allclose(t2.y, t1.y[perm], rtol=0, atol=1e-13)


def test_only_previous_iterates_are_used():
    # a y-step that records its inputs: neighbour sums must come from iterate k
    g = path_graph(3)
    seen = []

    def make(i):
        def solve(p, nbr_sum, degree, rho):
            seen.append((i, nbr_sum.copy()))
            return np.array([float(i + 1)])
        return NodeOracleA1(solve)

    state = init_state(3, 1, y0=[0.0])
    a1_round(state, g, 1.0, [make(i) for i in range(3)])
    assert all(np.array_equal(s, [0.0]) for _, s in seen)


def test_oracle_failure_names_node():
    g = path_graph(3)

    def bad(p, nbr_sum, degree, rho):
        raise RuntimeError("boom")

    oracles = [quadratic_a1([0.0]), NodeOracleA1(bad), quadratic_a1([0.0])]
    with pytest.raises(NodeFailure) as err:
        a1_round(init_state(3, 1), g, 1.0, oracles)
    assert err.value.node == 1


def test_parameters_must_be_positive():
    with pytest.raises(ValueError):
        a1_round(init_state(2, 1), path_graph(2), 0.0, [quadratic_a1([0.0])] * 2)
    with pytest.raises(ValueError):
        a2_round(init_state(2, 1, split=True), path_graph(2), -1.0, 1.0, [quadratic_a2([0.0])] * 2)
