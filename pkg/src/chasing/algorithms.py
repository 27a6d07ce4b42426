"""Online algorithm interface, baseline algorithms, and trajectory accounting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .costs import Body, BodyDistance, Cost
from .geometry import UnsupportedOracle, norm, parse_p, random_directions


class OnlineAlgorithm:
    """Stateful decision maker.  ``reset`` then ``step`` once per round, t = 1, 2, ..."""

    name = "online"

    def reset(self, x0, p=2.0):
        self.x0 = np.array(x0, dtype=float)
        self.p = parse_p(p)
        self.x = self.x0.copy()
        self.t = 0

    def step(self, t: int, cost: Cost, body: Optional[Body] = None) -> np.ndarray:
        if t != self.t + 1:
            raise ValueError(f"rounds must be consecutive: expected {self.t + 1}, got {t}")
        self.t = t
        x = np.array(self._decide(t, cost, body), dtype=float)
        self.x = x
        return x

    def _decide(self, t, cost, body):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name}


def _body_of(cost, body):
    if body is not None:
        return body
    if isinstance(cost, BodyDistance):
        return cost.body
    return None


class StayPut(OnlineAlgorithm):
    name = "stay_put"

    def _decide(self, t, cost, body):
        return self.x0


class GreedyMinimizer(OnlineAlgorithm):
    """Jump to the minimizer of every hitting cost."""

    name = "greedy"

    def _decide(self, t, cost, body):
        if isinstance(cost, BodyDistance):
            raise UnsupportedOracle("greedy needs a unique minimizer; use ProjectGreedy for bodies")
        return cost.minimizer()


class ProjectGreedy(OnlineAlgorithm):
    """Move to the nearest point of the revealed body."""

    name = "project_greedy"

    def _decide(self, t, cost, body):
        K = _body_of(cost, body)
        if K is None:
            raise ValueError("project_greedy needs a body every round")
        if K.contains(self.x, 0.0, self.p):
            return self.x
        return K.project(self.x, self.p)


class SteinerPointMC(OnlineAlgorithm):
    """Monte-Carlo Steiner point: average support point over fixed random directions.

    The directions are drawn once per reset and reused every round, so the
    estimate moves with the body and not with sampling noise.
    """

    name = "steiner_mc"

    def __init__(self, samples: int = 100_000, seed: int = 0):
        if samples < 1:
            raise ValueError("samples must be >= 1")
        self.samples = int(samples)
        self.seed = int(seed)

    def reset(self, x0, p=2.0):
        super().reset(x0, p)
        if self.p != 2:
            raise ValueError("the Steiner point baseline is defined for the Euclidean norm")
        rng = np.random.default_rng(self.seed)
        self._u = random_directions(rng, self.samples, self.x0.size, 2.0)

    def estimate(self, K: Body) -> np.ndarray:
        S = K.support(self._u, 2.0)
        # average offsets from one support point so a singleton comes back exactly
        ref = S[0]
        return ref + (S - ref).mean(axis=0)

    def _decide(self, t, cost, body):
        K = _body_of(cost, body)
        if K is None:
            raise ValueError("steiner_mc needs a body every round")
        return K.project(self.estimate(K), 2.0)

    def describe(self):
        return {"name": self.name, "samples": self.samples, "seed": self.seed}


class Replay(OnlineAlgorithm):
    """Play back a fixed trajectory (row t-1 at round t)."""

    name = "replay"

    def __init__(self, trajectory, label: str = "replay"):
        self.trajectory = np.array(trajectory, dtype=float)
        if self.trajectory.ndim != 2:
            raise ValueError("trajectory must be a (T, d) array")
        self.name = label

    def _decide(self, t, cost, body):
        if t > len(self.trajectory):
            raise ValueError("replay trajectory shorter than the instance")
        return self.trajectory[t - 1]


class ScriptedAdvice(OnlineAlgorithm):
    """Decision for the next round is set from outside (used by adaptive adversaries)."""

    name = "scripted"

    def reset(self, x0, p=2.0):
        super().reset(x0, p)
        self.next = self.x0.copy()

    def _decide(self, t, cost, body):
        return self.next


@dataclass
class Trajectory:
    decisions: np.ndarray
    hitting: np.ndarray
    movement: np.ndarray
    infeasibility: Optional[np.ndarray] = None
    cumulative: np.ndarray = field(init=False)

    def __post_init__(self):
        self.cumulative = np.cumsum(self.hitting + self.movement)

    @property
    def T(self):
        return len(self.hitting)

    @property
    def total(self) -> float:
        return float(self.cumulative[-1]) if self.T else 0.0

    def partial(self, t: int, t2: int) -> float:
        """C(t, t2) over rounds t..t2 inclusive (1-indexed); 0 if t > t2."""
        if t > t2:
            return 0.0
        if t < 1 or t2 > self.T:
            raise IndexError("round range outside the trajectory")
        return float(np.sum(self.hitting[t - 1:t2] + self.movement[t - 1:t2]))


def trajectory_cost(instance, decisions) -> Trajectory:
    """Exact per-round accounting of a decision sequence on an instance."""
    X = np.asarray(decisions, dtype=float)
    if X.shape != (instance.T, instance.dim):
        raise ValueError(f"decisions must have shape {(instance.T, instance.dim)}, got {X.shape}")
    prev = np.vstack([instance.x0[None, :], X[:-1]])
    movement = norm(X - prev, instance.p)
    hitting = np.array([float(f.value(x)) for f, x in zip(instance.costs, X)])
    infeas = None
    if instance.bodies is not None:
        infeas = np.array([float(K.distance(x, instance.p)) for K, x in zip(instance.bodies, X)])
    return Trajectory(X, hitting, movement, infeas)


def run(alg: OnlineAlgorithm, instance) -> Trajectory:
    alg.reset(instance.x0, instance.p)
    out = np.empty((instance.T, instance.dim))
    for t, f in enumerate(instance.costs, start=1):
        K = instance.bodies[t - 1] if instance.bodies is not None else None
        x = alg.step(t, f, K)
        if x.shape != (instance.dim,) or not np.all(np.isfinite(x)):
            raise FloatingPointError(f"{alg.name} produced a non-finite or misshapen decision at round {t}: {x!r}")
        out[t - 1] = x
    return trajectory_cost(instance, out)
