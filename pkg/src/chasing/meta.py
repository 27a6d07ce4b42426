"""Meta-algorithms that combine a black-box advice algorithm with a robust one.

Each meta-algorithm owns two wrapped OnlineAlgorithms and advances both every
round, whatever it decides to play.  The wrapped algorithms' running costs
C_Adv(1, t), C_Rob(1, t) are tracked from their own trajectories.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .algorithms import OnlineAlgorithm
from .costs import Body, BodyDistance, is_subset
from .geometry import norm, radial_retraction

# ties at a branch threshold resolve toward following the advice
GUARD = 1e-12


@dataclass
class PhaseLog:
    phase: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    potential: list = field(default_factory=list)
    adv_round: list = field(default_factory=list)
    rob_round: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def as_dict(self):
        return {"phase": list(self.phase), "threshold": [float(v) for v in self.threshold],
                "potential": [float(v) for v in self.potential]}


class _MetaBase(OnlineAlgorithm):
    name = "meta"

    def __init__(self, adv: OnlineAlgorithm, rob: OnlineAlgorithm):
        self.adv = adv
        self.rob = rob

    def reset(self, x0, p=2.0):
        super().reset(x0, p)
        self.adv.reset(x0, p)
        self.rob.reset(x0, p)
        self.last_adv = self.x0.copy()
        self.last_rob = self.x0.copy()
        self.c_adv = 0.0
        self.c_rob = 0.0
        self.log = PhaseLog()

    def _observe(self, t, cost, body):
        xa = self.adv.step(t, cost, body)
        xr = self.rob.step(t, cost, body)
        ca = float(cost.value(xa)) + float(norm(xa - self.last_adv, self.p))
        cr = float(cost.value(xr)) + float(norm(xr - self.last_rob, self.p))
        self.c_adv += ca
        self.c_rob += cr
        self.log.adv_round.append(ca)
        self.log.rob_round.append(cr)
        return xa, xr, ca, cr

    def _commit(self, xa, xr):
        self.prev_adv, self.prev_rob = self.last_adv, self.last_rob
        self.last_adv, self.last_rob = xa, xr


def _check_split(epsilon, gamma, delta):
    if not (epsilon > 0 and gamma > 0 and delta > 0):
        raise ValueError("epsilon, gamma and delta must be positive")
    if abs(2 * gamma + 2 * delta - epsilon) > 1e-12 * max(1.0, epsilon):
        raise ValueError(f"need 2*gamma + 2*delta = epsilon, got {2 * gamma + 2 * delta!r} vs {epsilon!r}")


def interp_else_step(s_prev, s, x_prev, x_adv, budget, p=2.0):
    """Rob-phase update of Interp.  Returns (y, z, x); batched over leading axes.

    ``budget`` is gamma * C_Adv(t, t).
    """
    s_prev, s, x_prev, x_adv = (np.asarray(a, dtype=float) for a in (s_prev, s, x_prev, x_adv))
    budget = np.asarray(budget, dtype=float)
    y = s_prev + radial_retraction(x_adv - s_prev, norm(x_prev - s_prev, p), p)
    r_z = np.maximum(norm(y - s_prev, p) - budget, 0.0)
    z = s_prev + radial_retraction(y - s_prev, r_z, p)
    x = s + radial_retraction(x_adv - s, norm(z - s_prev, p), p)
    return y, z, x


def bdinterp_else_step(s_prev, s, x_prev, adv_prev, x_adv, budget, p=2.0):
    """Rob-phase update of BdInterp.  Returns (nu, y, x) for a single state."""
    s_prev, s, x_prev, adv_prev, x_adv = (np.asarray(a, dtype=float) for a in (s_prev, s, x_prev, adv_prev, x_adv))
    den = float(norm(adv_prev - s_prev, p))
    nu = float(norm(x_prev - s_prev, p)) / den if den > 0 else 0.0
    if nu > 1.0 + 1e-9:
        raise AssertionError(f"interpolation weight left [0, 1]: nu = {nu!r}")
    nu = min(max(nu, 0.0), 1.0)
    y = nu * x_adv + (1.0 - nu) * s
    x = s + radial_retraction(y - s, max(float(norm(y - s, p)) - budget, 0.0), p)
    return nu, y, x


class Interp(_MetaBase):
    """Follow the advice while Rob is cheap relative to it; otherwise retract toward Rob."""

    name = "interp"

    def __init__(self, adv, rob, epsilon, gamma, delta):
        _check_split(epsilon, gamma, delta)
        super().__init__(adv, rob)
        self.epsilon, self.gamma, self.delta = float(epsilon), float(gamma), float(delta)

    def _decide(self, t, cost, body):
        xa, xr, ca, cr = self._observe(t, cost, body)
        thr = self.delta * self.c_adv
        if self.c_rob >= thr - GUARD:
            x = xa
            self.log.phase.append("adv")
            self.log.states.append(None)
        else:
            y, z, x = interp_else_step(self.last_rob, xr, self.x, xa, self.gamma * ca, self.p)
            self.log.phase.append("rob")
            self.log.states.append({"y": y, "z": z})
        self.log.threshold.append(thr)
        self.log.potential.append(float(norm(xa - x, self.p)))
        self._commit(xa, xr)
        return x

    def describe(self):
        return {"name": self.name, "epsilon": self.epsilon, "gamma": self.gamma, "delta": self.delta}


class BdInterp(_MetaBase):
    """Interpolation on the segment between Rob and the advice, for D-bounded advice."""

    name = "bdinterp"

    def __init__(self, adv, rob, epsilon, gamma, delta):
        _check_split(epsilon, gamma, delta)
        super().__init__(adv, rob)
        self.epsilon, self.gamma, self.delta = float(epsilon), float(gamma), float(delta)

    def _decide(self, t, cost, body):
        xa, xr, ca, cr = self._observe(t, cost, body)
        thr = self.delta * self.c_adv
        if self.c_rob >= thr - GUARD:
            x = xa
            self.log.phase.append("adv")
            self.log.states.append(None)
        else:
            nu, y, x = bdinterp_else_step(self.last_rob, xr, self.x, self.last_adv, xa,
                                          self.gamma * ca, self.p)
            self.log.phase.append("rob")
            self.log.states.append({"nu": nu, "y": y})
        den = float(norm(xa - xr, self.p))
        self.log.threshold.append(thr)
        self.log.potential.append(float(norm(x - xr, self.p)) / den if den > 0 else 0.0)
        self._commit(xa, xr)
        return x

    def describe(self):
        return {"name": self.name, "epsilon": self.epsilon, "gamma": self.gamma, "delta": self.delta}


class Switch(_MetaBase):
    """Alternate between Adv and Rob with geometrically growing cost budgets.

    Phase i even follows Adv with budget b^i on C_Adv(1, t); phase i odd
    follows Rob with budget delta_sw * b^i on C_Rob(1, t).  A phase ends on the
    first round its algorithm's full-history cost would exceed the budget.
    """

    name = "switch"

    def __init__(self, adv, rob, b, delta_sw):
        if not (b > 1):
            raise ValueError("b must exceed 1")
        if not (0 < delta_sw <= 1):
            raise ValueError("delta_sw must lie in (0, 1]")
        super().__init__(adv, rob)
        self.b, self.delta_sw = float(b), float(delta_sw)
        self.epsilon = None

    def reset(self, x0, p=2.0):
        super().reset(x0, p)
        self.i = 0

    def budget(self, i):
        return self.b ** i if i % 2 == 0 else self.delta_sw * self.b ** i

    def _decide(self, t, cost, body):
        xa, xr, ca, cr = self._observe(t, cost, body)
        while True:
            if self.i % 2 == 0:
                if self.c_adv <= self.budget(self.i) + GUARD:
                    break
            elif self.c_rob <= self.budget(self.i):
                break
            self.i += 1
        self.log.phase.append(self.i)
        self.log.threshold.append(self.budget(self.i))
        self.log.potential.append(0.0)
        self.log.states.append(None)
        self._commit(xa, xr)
        return xa if self.i % 2 == 0 else xr

    def describe(self):
        d = {"name": self.name, "b": self.b, "delta_sw": self.delta_sw}
        if self.epsilon is not None:
            d["epsilon"] = self.epsilon
        return d


def switch_params(epsilon):
    """(gamma, b, delta_sw) from the epsilon substitution."""
    if not (epsilon > 0):
        raise ValueError("epsilon must be positive")
    gamma = math.sqrt(epsilon / 4.0)
    b = math.sqrt(gamma ** -2 + 1.0)
    delta_sw = b * gamma ** 2 - 1.0 / b
    if not (0 < delta_sw <= 1):
        raise ValueError(f"epsilon = {epsilon} gives delta_sw = {delta_sw} outside (0, 1]")
    return gamma, b, delta_sw


def switch_from_epsilon(adv, rob, epsilon) -> Switch:
    _, b, delta_sw = switch_params(epsilon)
    sw = Switch(adv, rob, b, delta_sw)
    sw.epsilon = float(epsilon)
    return sw


class NestedSwitch(_MetaBase):
    """Follow the advice until epsilon * C_Adv(1, t) reaches r(d + 2), then Rob for good."""

    name = "nested_switch"

    def __init__(self, adv, rob, epsilon, r, d):
        if not (epsilon > 0 and r > 0 and d >= 1):
            raise ValueError("epsilon, r must be positive and d >= 1")
        super().__init__(adv, rob)
        self.epsilon, self.r, self.d = float(epsilon), float(r), int(d)

    def reset(self, x0, p=2.0):
        super().reset(x0, p)
        self.switched = False
        self._prev_body: Optional[Body] = None

    def _decide(self, t, cost, body):
        K = body if body is not None else (cost.body if isinstance(cost, BodyDistance) else None)
        if K is None:
            raise ValueError("nested_switch needs a body every round")
        if self._prev_body is not None and not is_subset(K, self._prev_body, self.p):
            raise ValueError(f"bodies are not nested at round {t}")
        self._prev_body = K
        xa, xr, ca, cr = self._observe(t, cost, body)
        thr = self.r * (self.d + 2)
        follow_rob = self.epsilon * self.c_adv >= thr + GUARD
        if self.switched and not follow_rob:
            raise AssertionError("switched back to the advice; the advice cost decreased")
        self.switched = follow_rob
        self.log.phase.append("rob" if follow_rob else "adv")
        self.log.threshold.append(thr)
        self.log.potential.append(0.0)
        self.log.states.append(None)
        self._commit(xa, xr)
        return xr if follow_rob else xa

    def describe(self):
        return {"name": self.name, "epsilon": self.epsilon, "r": self.r, "d": self.d}


class FollowAdvice(_MetaBase):
    name = "follow_advice"

    def _decide(self, t, cost, body):
        xa, xr, ca, cr = self._observe(t, cost, body)
        self.log.phase.append("adv")
        self.log.threshold.append(0.0)
        self.log.potential.append(0.0)
        self.log.states.append(None)
        self._commit(xa, xr)
        return xa


# ----------------------------------------------------------- hyperparameters


def optimal_params_interp(epsilon, mu, k):
    """(gamma, delta) minimizing the Interp robustness bound; (eps/4, eps/4) if degenerate."""
    if not (epsilon > 0):
        raise ValueError("epsilon must be positive")
    e = float(epsilon)
    den = 2.0 * (1.0 - k + e + mu)
    gamma = math.nan
    if den > 0:
        gamma = (math.sqrt(k * (2 + e) * (2 * k + e * (1 + e + mu))) - k * (2 + e)) / den
    if not (math.isfinite(gamma) and 0 < gamma < e / 2):
        return e / 4, e / 4
    return gamma, e / 2 - gamma


def optimal_params_bdinterp(epsilon, D, fallback: bool = True):
    if not (epsilon > 0):
        raise ValueError("epsilon must be positive")
    e = float(epsilon)
    if D is None or not (D > 0):
        if fallback:
            return e / 4, e / 4
        raise ValueError("D must be positive")
    gamma = D * e / (2.0 * (D + math.sqrt(D * (1 + e))))
    return gamma, e / 2 - gamma


def bound_interp(epsilon, gamma, delta, mu, k):
    _check_split(epsilon, gamma, delta)
    c = mu + epsilon
    return c, 1.0 + k / gamma + (mu + epsilon + 1.0 + k / gamma) / delta


def bound_bdinterp(epsilon, gamma, delta, D):
    _check_split(epsilon, gamma, delta)
    if D < 0:
        raise ValueError("D must be >= 0")
    return 1.0 + epsilon, D + D / gamma + (1.0 + epsilon) / delta


def bound_switch(b, delta_sw):
    if not (b > 1 and 0 < delta_sw <= 1):
        raise ValueError("need b > 1 and delta_sw in (0, 1]")
    g = b * b / (b * b - 1.0)
    h = b ** 3 / (b * b - 1.0)
    return 1.0 + 2.0 * (g + delta_sw * h), 1.0 + 2.0 * (g + h / delta_sw)


def bound_nested_switch(epsilon, r, d):
    if not (epsilon > 0 and r > 0 and d >= 1):
        raise ValueError("epsilon, r must be positive and d >= 1")
    return 1.0 + epsilon, (1.0 + 1.0 / epsilon) * r * (d + 2)
