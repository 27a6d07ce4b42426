import math

import numpy as np
import pytest

from chasing.algorithms import (GreedyMinimizer, ProjectGreedy, Replay, StayPut, SteinerPointMC, Trajectory, run,
                                trajectory_cost)
from chasing.costs import Ball, BodyDistance, Box, NormPolyhedral, Quadratic, Singleton
from chasing.geometry import UnsupportedOracle, norm
from chasing.instances import Instance, gen_alpha_polyhedral, gen_nested_bodies, gen_random_quadratic_cfc
from chasing.offline import opt_grid_dp


def _fixture(p=2.0):
    return Instance([0.0], [Quadratic(1.0, [1.0]), Quadratic(1.0, [1.0])], p=p)


def test_stay_put():
    inst = gen_random_quadratic_cfc(3, 10, 0)
    tr = run(StayPut(), inst)
    assert tr.movement.sum() == 0
    assert tr.total == pytest.approx(sum(f(inst.x0) for f in inst.costs))


def test_stay_put_records_infeasibility():
    inst = gen_nested_bodies(2, 5, 1.0, 0, kind="ball", x0_mode="boundary")
    tr = run(StayPut(), inst)
    assert np.all(tr.infeasibility >= 0)
    assert tr.infeasibility[-1] > 0


def test_greedy_fixture_l1():
    tr = run(GreedyMinimizer(), _fixture(1.0))
    np.testing.assert_allclose(tr.decisions, [[1.0], [1.0]])
    assert tr.total == pytest.approx(1.0)


def test_greedy_on_norm_polyhedral_pays_offsets_only():
    inst = gen_alpha_polyhedral(2, 10, 1.0, 3)
    tr = run(GreedyMinimizer(), inst)
    np.testing.assert_allclose(tr.hitting, [f.offset for f in inst.costs])


def test_greedy_rejects_bodies():
    inst = gen_nested_bodies(2, 3, 1.0, 0)
    with pytest.raises(UnsupportedOracle):
        run(GreedyMinimizer(), inst)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_greedy_ratio_alpha_polyhedral(alpha):
    for s in range(5):
        inst = gen_alpha_polyhedral(1, 15, alpha, 100 + s)
        g = run(GreedyMinimizer(), inst).total
        opt = opt_grid_dp(inst)
        assert g <= max(1.0, 2.0 / alpha) * opt.lower + 1e-6


def test_project_greedy_walks_inward():
    bodies = [Ball([0, 0], r) for r in (2.0, 1.5, 1.0)]
    inst = Instance([3.0, 0.0], [BodyDistance(K) for K in bodies], bodies, subclass="NCBC")
    tr = run(ProjectGreedy(), inst)
    np.testing.assert_allclose(tr.decisions, [[2, 0], [1.5, 0], [1, 0]])
    assert np.all(tr.infeasibility <= 1e-9)


def test_project_greedy_stays_when_feasible():
    bodies = [Box([0, 0], [2, 2]), Box([0, 0], [1.5, 1.5])]
    inst = Instance([1.0, 1.0], [BodyDistance(K) for K in bodies], bodies, subclass="NCBC")
    tr = run(ProjectGreedy(), inst)
    assert tr.total == 0


def test_steiner_ball_center():
    alg = SteinerPointMC(100_000, 0)
    alg.reset([0.0, 0.0], 2)
    est = alg.estimate(Ball([1.0, -2.0], 3.0))
    assert norm(est - np.array([1.0, -2.0])) <= 0.02 * 3.0


def test_steiner_symmetric_box_center():
    alg = SteinerPointMC(100_000, 1)
    alg.reset([0.0, 0.0], 2)
    lo, hi = np.array([-1.0, 0.0]), np.array([3.0, 1.0])
    est = alg.estimate(Box(lo, hi))
    assert norm(est - (lo + hi) / 2) <= 0.02 * norm(hi - lo)


def test_steiner_singleton_exact():
    alg = SteinerPointMC(1000, 0)
    alg.reset([0.0, 0.0], 2)
    np.testing.assert_array_equal(alg.estimate(Singleton([0.3, 0.4])), [0.3, 0.4])


def test_steiner_feasible_and_needs_l2():
    inst = gen_nested_bodies(2, 8, 1.0, 5, x0_mode="center")
    tr = run(SteinerPointMC(20_000, 0), inst)
    assert np.all(tr.infeasibility <= 1e-9)
    with pytest.raises(ValueError):
        SteinerPointMC(10, 0).reset([0.0], 1.0)


def test_replay_and_trajectory_accounting():
    inst = _fixture(2.0)
    X = np.array([[0.75], [0.75]])
    tr = run(Replay(X), inst)
    assert tr.total == pytest.approx(0.875)
    assert tr.partial(1, 1) == pytest.approx(0.0625 + 0.75)
    assert tr.partial(2, 2) == pytest.approx(0.0625)
    assert tr.partial(2, 1) == 0.0
    with pytest.raises(IndexError):
        tr.partial(0, 2)
    with pytest.raises(ValueError):
        trajectory_cost(inst, np.zeros((3, 1)))


def test_rounds_must_be_consecutive():
    alg = StayPut()
    alg.reset([0.0])
    with pytest.raises(ValueError):
        alg.step(2, Quadratic(1.0, [0.0]))


def test_non_finite_decision_rejected():
    inst = _fixture()
    with pytest.raises(FloatingPointError):
        run(Replay([[0.0], [math.nan]]), inst)
