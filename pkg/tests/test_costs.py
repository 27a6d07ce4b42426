import math

import numpy as np
import pytest

from chasing.costs import (AffineSliceOfBox, Ball, BodyDistance, Box, Hyperplane, NormPolyhedral, NormPower, Quadratic,
                           Singleton, alpha_polyhedral_witness, body_contains, body_from_dict, cost_from_dict,
                           eval_cost, is_subset, minimizer, subgradient)
from chasing.geometry import UnsupportedOracle, norm


def test_cost_values():
    assert eval_cost(Quadratic(np.eye(2), [1, 1], 0), [1, 1]) == 0
    assert eval_cost(NormPolyhedral([0, 0], 2, 0, 2), [3, 4]) == pytest.approx(10)
    assert eval_cost(BodyDistance(Ball([0, 0], 1), 3, 2), [2, 0]) == pytest.approx(3)
    assert eval_cost(NormPower([0, 0], 2, 1, 2), [3, 4]) == pytest.approx(5)
    q = Quadratic([[2, 0], [0, 1]], [1, 0], 0.5)
    assert q([2, 1]) == pytest.approx(2 + 1 + 0.5)


def test_minimizers():
    np.testing.assert_array_equal(minimizer(Quadratic(np.eye(2), [2, 3], 5)), [2, 3])
    np.testing.assert_array_equal(minimizer(NormPolyhedral([1, 0], 1.5, 0.2)), [1, 0])
    np.testing.assert_array_equal(minimizer(NormPower([0, 0], 1.0, 2.0)), [0, 0])
    f = BodyDistance(Box([0, 0], [1, 1]), 3, 2)
    np.testing.assert_allclose(minimizer(f, [3, 5]), [1, 1])


def test_subgradients():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    c = np.array([1.0, -1.0])
    x = np.array([0.3, 0.7])
    np.testing.assert_allclose(subgradient(Quadratic(Q, c, 0), x), 2 * Q @ (x - c))
    np.testing.assert_array_equal(subgradient(NormPolyhedral([1, 2], 3.0), [1, 2]), [0, 0])
    np.testing.assert_allclose(subgradient(NormPolyhedral([0, 0], 3.0, 0, 2), [3, 4]), 3 * np.array([3, 4]) / 5)


def test_subgradient_inequality_random():
    rng = np.random.default_rng(0)
    costs = [Quadratic(np.diag([1.0, 0.2]), [0.5, -0.5], 0.1), NormPolyhedral([0.2, 0.1], 1.3, 0.0, 1.5),
             NormPower([0, 1], 0.7, 3.0, 3), BodyDistance(Ball([1, 1], 0.5), 3, 2),
             BodyDistance(Box([-1, 0], [0, 1]), 3, math.inf)]
    for f in costs:
        for _ in range(50):
            x, y = rng.normal(size=(2, 2)) * 2
            g = f.subgradient(x)
            assert f(y) >= f(x) + g @ (y - x) - 1e-9


def test_quadratic_validation():
    with pytest.raises(ValueError):
        Quadratic([[1, 0], [0, -1]], [0, 0])
    with pytest.raises(ValueError):
        Quadratic(np.eye(2), [0, 0], -1)
    # scalar Q means Q * I
    assert Quadratic(2.0, [0, 0])([1, 1]) == pytest.approx(4)


def test_scaling_multiplies_costs():
    lam = 3.7
    rng = np.random.default_rng(1)
    for f in (Quadratic([[1.0, 0.2], [0.2, 0.5]], [1, 2], 0.3), NormPolyhedral([1, 0], 2.0, 0.4, 3),
              NormPower([0, 1], 1.5, 2.5, 2), BodyDistance(Ball([1, 1], 0.5), 3, 2)):
        x = rng.normal(size=2)
        assert f.scaled(lam)(lam * x) == pytest.approx(lam * f(x), rel=1e-12)


def test_cost_roundtrip():
    for f in (Quadratic([[1.0, 0.2], [0.2, 0.5]], [1, 2], 0.3), NormPolyhedral([1, 0], 2.0, 0.4, "inf"),
              NormPower([0, 1], 1.5, 2.5, 2), BodyDistance(Box([0, -math.inf], [1, math.inf]), 3, 1)):
        g = cost_from_dict(f.to_dict())
        x = np.array([0.3, -0.2])
        assert g(x) == f(x)
        assert g.to_dict() == f.to_dict()


def test_projections():
    np.testing.assert_allclose(Ball([0, 0], 1).project([2, 0], 2), [1, 0])
    np.testing.assert_allclose(Box([0, 0], [1, 1]).project([3, 5], 2), [1, 1])
    np.testing.assert_allclose(Hyperplane([1, 0], 1).project([0, 0], 2), [1, 0])
    np.testing.assert_array_equal(Singleton([1, 2]).project([5, 5]), [1, 2])


def test_box_clamp_is_nearest_in_every_norm():
    rng = np.random.default_rng(2)
    B = Box([0, 0, -1], [1, 2, 1])
    for p in (1, 1.5, 2, 3, math.inf):
        for _ in range(30):
            x = rng.normal(size=3) * 3
            px = B.project(x, p)
            cand = rng.uniform([0, 0, -1], [1, 2, 1], size=(2000, 3))
            assert norm(px - x, p) <= norm(cand - x, p).min() + 1e-12


def test_ball_projection_is_nearest_l2():
    rng = np.random.default_rng(3)
    K = Ball([1, -1], 2)
    for _ in range(30):
        x = rng.normal(size=2) * 5
        px = K.project(x, 2)
        ang = rng.uniform(0, 2 * np.pi, 4000)
        cand = np.array([1, -1]) + 2 * np.sqrt(rng.random((4000, 1))) * np.c_[np.cos(ang), np.sin(ang)]
        assert norm(px - x, 2) <= norm(cand - x, 2).min() + 1e-12


def test_support_points():
    u = np.array([3.0, 4.0])
    np.testing.assert_allclose(Ball([1, 1], 2).support(u, 2), np.array([1, 1]) + 2 * u / 5)
    np.testing.assert_allclose(Box([0, 0], [1, 2]).support(np.array([1.0, -1.0])), [1, 0])
    np.testing.assert_array_equal(Singleton([4, 5]).support(u), [4, 5])
    with pytest.raises(UnsupportedOracle):
        Hyperplane([1, 0], 0).support(u)
    with pytest.raises(UnsupportedOracle):
        AffineSliceOfBox.leading(3, [1.0]).support(np.array([0.0, 1.0, 0.0]))


def test_support_maximizes_linear_function():
    rng = np.random.default_rng(4)
    K = Box([-1, 0], [2, 3])
    for _ in range(20):
        u = rng.normal(size=2)
        s = K.support(u)
        corners = np.array([[a, b] for a in (-1, 2) for b in (0, 3)])
        assert s @ u == pytest.approx(np.max(corners @ u))


def test_contains():
    assert body_contains(Ball([0, 0], 1), [1, 0], 0)
    assert body_contains(Box([0, 0], [1, 1]), [1.000001, 0.5], 1e-5)
    assert not body_contains(Singleton([1, 1]), [1, 2], 0)
    with pytest.raises(ValueError):
        body_contains(Ball([0, 0], 1), [0, 0], -1)


def test_affine_slice():
    K = AffineSliceOfBox.leading(4, [1.0, -1.0])
    x = np.array([5.0, 5.0, 0.3, -7.0])
    np.testing.assert_allclose(K.project(x), [1.0, -1.0, 0.3, -7.0])
    assert K.distance(x, 2) == pytest.approx(math.sqrt(16 + 36))


def test_is_subset():
    assert is_subset(Ball([0, 0], 0.5), Ball([0.1, 0], 1), 2)
    assert not is_subset(Ball([0, 0], 1), Ball([0.1, 0], 1), 2)
    assert is_subset(Box([0, 0], [0.5, 0.5]), Ball([0, 0], 1), 2)
    assert not is_subset(Box([0, 0], [1, 1]), Ball([0, 0], 1), 2)
    assert is_subset(Box([0, 0], [1, 1]), Ball([0, 0], 1), math.inf)
    assert is_subset(Ball([0, 0], 1), Box([-1, -1], [1, 1]), 2)
    assert is_subset(Singleton([0.2, 0.2]), Box([0, 0], [1, 1]))


def test_body_roundtrip():
    for K in (Ball([1, 2], 3), Box([0, -math.inf], [1, math.inf]), AffineSliceOfBox.leading(3, [0.5]),
              Singleton([1, 2]), Hyperplane([1, 2], 3)):
        K2 = body_from_dict(K.to_dict())
        assert K2.to_dict() == K.to_dict()


def test_body_scaled():
    K = Box([0, 0], [1, 2]).scaled(2.0)
    np.testing.assert_allclose(K.bounds()[1], [2, 4])
    assert Ball([1, 0], 1).scaled(3).distance([6, 0], 2) == pytest.approx(0)


def test_alpha_witness():
    assert alpha_polyhedral_witness(NormPolyhedral([0, 0], 2, 0), 1000, 0) >= 2 - 1e-9
    assert alpha_polyhedral_witness(NormPower([0, 0], 2, 1), 1000, 0) >= 1 - 1e-9
    assert alpha_polyhedral_witness(Quadratic(np.eye(2), [0, 0]), 1000, 0) < 0.05


def test_arrays_are_read_only():
    f = Quadratic(np.eye(2), [1, 1])
    with pytest.raises(ValueError):
        f.center[0] = 5
