import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualcadmm.objectives import (IndicatorBox, IndicatorPoint, L1, ObjectiveError, Quadratic,
                                  SeparableSum, evaluate, objective_from_dict, objective_to_dict,
                                  prox, zero_objective)


def _random_objectives(rng):
    M = rng.standard_normal((3, 3))
    return [
        L1(0.7),
        Quadratic(M @ M.T, rng.standard_normal(3), 1.5),
        Quadratic(np.diag([1.0, 0.0, 2.0])),  # singular but PSD
        IndicatorPoint(rng.standard_normal(3)),
        IndicatorBox([-1.0, 0.0, 0.5], [1.0, 0.0, 2.0]),
        SeparableSum([(L1(2.0, 2), (0, 2)), (IndicatorPoint([0.3]), (2, 3))]),
        SeparableSum([(IndicatorBox([0.0], [1.0]), (0, 1)), (Quadratic(np.eye(2)), (1, 3))]),
    ]


def test_prox_examples():
    np.testing.assert_array_equal(prox(L1(1.0), [3.0, -0.5, 0.0], 1.0), [2.0, 0.0, 0.0])
    np.testing.assert_array_equal(prox(IndicatorPoint([0.25]), [7.0], 1.0), [0.25])
    np.testing.assert_array_equal(prox(IndicatorPoint([0.25]), [7.0], 123.0), [0.25])
    np.testing.assert_allclose(prox(Quadratic(np.eye(2)), [4.0, 2.0], 1.0), [2.0, 1.0])


def test_quadratic_prox_by_stationarity():
    # stationarity of f(y) + |y - v|^2/(2 lam) checked by finite differences
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    f = Quadratic(P, [1.0, -1.0])
    v, lam = np.array([0.3, 2.0]), 0.7
    y = prox(f, v, lam)

    def phi(z):
        return evaluate(f, z) + np.sum((z - v) ** 2) / (2 * lam)

    h = 1e-6
    grad = [(phi(y + h * e) - phi(y - h * e)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(grad, 0.0, atol=1e-8)


def test_eval_examples():
    assert evaluate(L1(1.0), [3.0, -4.0]) == 7.0
    assert evaluate(IndicatorBox([0.0, 0.0], [1.0, 1.0]), [0.5, 2.0]) == np.inf
    assert evaluate(Quadratic(2 * np.eye(2), [1.0, 0.0], 3.0), [1.0, 1.0]) == 6.0
    assert evaluate(IndicatorPoint([1.0]), [1.0 + 1e-12]) == 0.0
    assert evaluate(IndicatorPoint([1.0]), [1.1]) == np.inf


def test_errors():
    with pytest.raises(ObjectiveError):
        Quadratic(np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(ObjectiveError):
        Quadratic(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ObjectiveError):
        IndicatorBox([1.0], [0.0])
    with pytest.raises(ObjectiveError):
        prox(Quadratic(np.eye(2)), [1.0, 2.0, 3.0], 1.0)
    with pytest.raises(ObjectiveError):
        SeparableSum([(L1(1.0, 2), (0, 3))])
    with pytest.raises(ValueError):
        prox(L1(1.0), [1.0], 0.0)


def test_prox_optimality_random_perturbations():
    rng = np.random.default_rng(0)
    for f in _random_objectives(rng):
        for _ in range(10):
            v = rng.standard_normal(3) * 3
            lam = float(rng.uniform(0.1, 5.0))
            y = prox(f, v, lam)
            best = evaluate(f, y) + np.sum((y - v) ** 2) / (2 * lam)
            assert np.isfinite(best)
            for _ in range(100):
                z = y + rng.standard_normal(3) * 10 ** rng.uniform(-6, 0)
                assert evaluate(f, z) + np.sum((z - v) ** 2) / (2 * lam) >= best - 1e-10


def test_prox_firmly_nonexpansive():
    rng = np.random.default_rng(1)
    for f in _random_objectives(rng):
        for _ in range(200):
            v, w = rng.standard_normal((2, 3)) * 2
            lam = float(rng.uniform(0.1, 3.0))
            pv, pw = prox(f, v, lam), prox(f, w, lam)
            assert (pv - pw) @ (v - w) >= (pv - pw) @ (pv - pw) - 1e-12


def test_separable_sum_is_blockwise():
    rng = np.random.default_rng(2)
    parts = [L1(1.5, 2), Quadratic(np.diag([2.0, 3.0]), [1.0, 0.0]), IndicatorBox([-1.0], [0.2])]
    f = SeparableSum([(parts[0], (0, 2)), (parts[1], (2, 4)), (parts[2], (4, 5))])
    for _ in range(50):
        v = rng.standard_normal(5) * 2
        lam = float(rng.uniform(0.1, 2))
        expected = np.concatenate([prox(parts[0], v[:2], lam), prox(parts[1], v[2:4], lam),
                                   prox(parts[2], v[4:], lam)])
        np.testing.assert_allclose(prox(f, v, lam), expected, rtol=0, atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=6), st.floats(0.01, 10),
       st.floats(0, 5))
def test_l1_prox_is_soft_threshold(v, lam, weight):
    v = np.array(v)
    y = prox(L1(weight), v, lam)
    np.testing.assert_allclose(y, np.sign(v) * np.maximum(np.abs(v) - lam * weight, 0.0))


def test_quadratic_factor_cache():
    f = Quadratic(np.eye(2))
    prox(f, [1.0, 1.0], 0.5)
    prox(f, [2.0, 1.0], 0.5)
    assert list(f._factors) == [0.5]


def test_serialization_roundtrip():
    rng = np.random.default_rng(4)
    for f in _random_objectives(rng) + [zero_objective(2)]:
        g = objective_from_dict(objective_to_dict(f))
        for _ in range(5):
            v = rng.standard_normal(getattr(f, "dim", None) or 3)
            np.testing.assert_array_equal(prox(f, v, 0.8), prox(g, v, 0.8))
            assert evaluate(f, v) == evaluate(g, v)
    with pytest.raises(ObjectiveError):
        objective_from_dict({"type": "huber"})
