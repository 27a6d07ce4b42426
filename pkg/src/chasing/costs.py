"""Convex bodies and hitting-cost families.

Bodies: Ball, Box, AffineSliceOfBox, Hyperplane, Singleton.
Costs: Quadratic, NormPolyhedral, NormPower, BodyDistance.

All objects are immutable value types.  ``value``/``project`` accept batches
along leading axes.  ``scaled(lam)`` maps an object to its image under the
joint rescaling x -> lam * x, f -> lam * f(. / lam), which multiplies every
trajectory cost by exactly lam.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import (
    UnsupportedOracle,
    dual_direction,
    dual_exponent,
    norm,
    parse_p,
    project_hyperplane,
    radial_retraction,
    format_p,
)


def _vec(x, name="vector"):
    a = np.array(x, dtype=float).reshape(-1)
    if a.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if np.any(np.isnan(a)):
        raise ValueError(f"{name} has NaN entries")
    a.setflags(write=False)
    return a


def _finite_vec(x, name="vector"):
    a = _vec(x, name)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


def _enc(v):
    """JSON-safe float list: infinities become strings."""
    out = []
    for x in np.asarray(v, dtype=float).reshape(-1):
        if math.isinf(x):
            out.append("inf" if x > 0 else "-inf")
        else:
            out.append(float(x))
    return out


def _dec(v):
    return np.array([float(x) for x in v], dtype=float)


def _check_dim(x, d):
    if np.shape(x)[-1] != d:
        raise ValueError(f"dimension mismatch: expected {d}, got {np.shape(x)[-1]}")


# --------------------------------------------------------------------- bodies


class Body:
    kind = "body"

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def project(self, x, p=2.0):
        raise NotImplementedError

    def distance(self, x, p=2.0):
        x = np.asarray(x, dtype=float)
        return norm(x - self.project(x, p), p)

    def contains(self, x, tol=0.0, p=2.0) -> bool:
        return bool(np.all(self.distance(x, p) <= tol))

    def support(self, u, p=2.0):
        raise UnsupportedOracle(f"no support-point oracle for {self.kind}")

    def scaled(self, lam):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def bounds(self):
        """Coordinatewise (lower, upper) enclosing box (may be infinite)."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Ball(Body):
    """Closed ball in the ambient norm."""

    center: np.ndarray
    radius: float
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", _finite_vec(self.center, "center"))
        r = float(self.radius)
        if not (r >= 0 and math.isfinite(r)):
            raise ValueError("ball radius must be finite and >= 0")
        object.__setattr__(self, "radius", r)

    @property
    def dim(self):
        return self.center.size

    def project(self, x, p=2.0):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        return self.center + radial_retraction(x - self.center, self.radius, p)

    def distance(self, x, p=2.0):
        x = np.asarray(x, dtype=float)
        return np.maximum(norm(x - self.center, p) - self.radius, 0.0)

    def support(self, u, p=2.0):
        u = np.asarray(u, dtype=float)
        return self.center + self.radius * dual_direction(u, dual_exponent(p))

    def bounds(self):
        # ||e_i||_q = 1 for every l^p norm, so the extent per axis is the radius
        return self.center - self.radius, self.center + self.radius

    def scaled(self, lam):
        return Ball(self.center * lam, self.radius * lam)

    def to_dict(self):
        return {"kind": "ball", "center": _enc(self.center), "radius": self.radius}


class _BoxLike(Body):
    """Bodies that are products of intervals (possibly degenerate or unbounded)."""

    def _lohi(self):
        raise NotImplementedError

    def project(self, x, p=2.0):
        # coordinate clamp is an exact nearest point for every l^p norm
        x = np.asarray(x, dtype=float)
        lo, hi = self._lohi()
        _check_dim(x, lo.size)
        return np.minimum(np.maximum(x, lo), hi)

    def support(self, u, p=2.0):
        u = np.asarray(u, dtype=float)
        lo, hi = self._lohi()
        if np.any(np.isinf(lo) & (u < 0)) or np.any(np.isinf(hi) & (u > 0)):
            raise UnsupportedOracle("support point of an unbounded body")
        mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), np.clip(0.0, lo, hi))
        return np.where(u > 0, hi, np.where(u < 0, lo, mid))

    def bounds(self):
        return self._lohi()

    @property
    def dim(self):
        return self._lohi()[0].size


@dataclass(frozen=True, eq=False)
class Box(_BoxLike):
    lower: np.ndarray
    upper: np.ndarray
    kind = "box"

    def __post_init__(self):
        lo, hi = _vec(self.lower, "lower"), _vec(self.upper, "upper")
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have equal length")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def _lohi(self):
        return self.lower, self.upper

    def scaled(self, lam):
        return Box(self.lower * lam, self.upper * lam)

    def to_dict(self):
        return {"kind": "box", "lower": _enc(self.lower), "upper": _enc(self.upper)}


@dataclass(frozen=True, eq=False)
class AffineSliceOfBox(_BoxLike):
    """Fixed coordinates x_i = v_i for i in ``fixed_index``; a box on the rest.

    ``free_lower``/``free_upper`` list the bounds of the free coordinates in
    increasing index order and may be infinite.
    """

    dim_: int
    fixed_index: tuple
    fixed_value: np.ndarray
    free_lower: np.ndarray
    free_upper: np.ndarray
    kind = "affine_slice"

    def __post_init__(self):
        d = int(self.dim_)
        idx = tuple(int(i) for i in self.fixed_index)
        if len(set(idx)) != len(idx):
            raise ValueError("fixed-coordinate indices must be distinct")
        if any(i < 0 or i >= d for i in idx):
            raise ValueError("fixed-coordinate index out of range")
        val = np.array(self.fixed_value, dtype=float).reshape(-1)
        if val.size != len(idx) or not np.all(np.isfinite(val)):
            raise ValueError("fixed values must be finite and match the index list")
        nfree = d - len(idx)
        lo = np.array(self.free_lower, dtype=float).reshape(-1)
        hi = np.array(self.free_upper, dtype=float).reshape(-1)
        if lo.size != nfree or hi.size != nfree:
            raise ValueError("free bounds must cover the free coordinates")
        if np.any(lo > hi):
            raise ValueError("free lower bound exceeds upper bound")
        full_lo = np.empty(d)
        full_hi = np.empty(d)
        free = np.setdiff1d(np.arange(d), np.array(idx, dtype=int))
        full_lo[free], full_hi[free] = lo, hi
        full_lo[list(idx)] = val
        full_hi[list(idx)] = val
        for a in (val, lo, hi, full_lo, full_hi):
            a.setflags(write=False)
        object.__setattr__(self, "dim_", d)
        object.__setattr__(self, "fixed_index", idx)
        object.__setattr__(self, "fixed_value", val)
        object.__setattr__(self, "free_lower", lo)
        object.__setattr__(self, "free_upper", hi)
        object.__setattr__(self, "_full", (full_lo, full_hi))

    @classmethod
    def leading(cls, dim, values, free_lower=-math.inf, free_upper=math.inf):
        """Slice fixing the first len(values) coordinates."""
        values = np.asarray(values, dtype=float).reshape(-1)
        k = values.size
        return cls(dim, tuple(range(k)), values, np.full(dim - k, free_lower), np.full(dim - k, free_upper))

    def _lohi(self):
        return self._full

    def scaled(self, lam):
        return AffineSliceOfBox(self.dim_, self.fixed_index, self.fixed_value * lam,
                                self.free_lower * lam, self.free_upper * lam)

    def to_dict(self):
        return {"kind": "affine_slice", "dim": self.dim_, "fixed_index": list(self.fixed_index),
                "fixed_value": _enc(self.fixed_value), "free_lower": _enc(self.free_lower),
                "free_upper": _enc(self.free_upper)}


@dataclass(frozen=True, eq=False)
class Singleton(_BoxLike):
    point: np.ndarray
    kind = "singleton"

    def __post_init__(self):
        object.__setattr__(self, "point", _finite_vec(self.point, "point"))

    def _lohi(self):
        return self.point, self.point

    def project(self, x, p=2.0):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.point.size)
        return np.broadcast_to(self.point, x.shape).copy()

    def support(self, u, p=2.0):
        return np.broadcast_to(self.point, np.shape(u)).copy()

    def scaled(self, lam):
        return Singleton(self.point * lam)

    def to_dict(self):
        return {"kind": "singleton", "point": _enc(self.point)}


@dataclass(frozen=True, eq=False)
class Hyperplane(Body):
    normal: np.ndarray
    offset: float
    kind = "hyperplane"

    def __post_init__(self):
        a = _finite_vec(self.normal, "normal")
        if not np.any(a != 0):
            raise ValueError("hyperplane normal must be nonzero")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self):
        return self.normal.size

    def project(self, x, p=2.0):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        return project_hyperplane(x, self.normal, self.offset, p)

    def distance(self, x, p=2.0):
        x = np.asarray(x, dtype=float)
        return np.abs(x @ self.normal - self.offset) / norm(self.normal, dual_exponent(p))

    def bounds(self):
        lo = np.full(self.dim, -math.inf)
        hi = np.full(self.dim, math.inf)
        if np.count_nonzero(self.normal) == 1:
            k = int(np.flatnonzero(self.normal)[0])
            lo[k] = hi[k] = self.offset / self.normal[k]
        return lo, hi

    def scaled(self, lam):
        return Hyperplane(self.normal, self.offset * lam)

    def to_dict(self):
        return {"kind": "hyperplane", "normal": _enc(self.normal), "offset": self.offset}


def body_from_dict(d: dict) -> Body:
    k = d["kind"]
    if k == "ball":
        return Ball(_dec(d["center"]), float(d["radius"]))
    if k == "box":
        return Box(_dec(d["lower"]), _dec(d["upper"]))
    if k == "affine_slice":
        return AffineSliceOfBox(int(d["dim"]), tuple(d["fixed_index"]), _dec(d["fixed_value"]),
                                _dec(d["free_lower"]), _dec(d["free_upper"]))
    if k == "singleton":
        return Singleton(_dec(d["point"]))
    if k == "hyperplane":
        return Hyperplane(_dec(d["normal"]), float(d["offset"]))
    raise ValueError(f"unknown body kind {k!r}")


def body_contains(body: Body, x, tol: float = 0.0, p=2.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be >= 0")
    return body.contains(x, tol, parse_p(p))


def is_subset(inner: Body, outer: Body, p=2.0, tol: float = 1e-9) -> bool:
    """Containment test, exact for every pair of ball / box-like bodies."""
    p = parse_p(p)
    if isinstance(inner, _BoxLike):
        lo, hi = inner.bounds()
        if isinstance(outer, _BoxLike):
            olo, ohi = outer.bounds()
            return bool(np.all(lo >= olo - tol) and np.all(hi <= ohi + tol))
        if isinstance(outer, Ball):
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                return False
            # farthest corner from the center, coordinatewise
            far = np.maximum(np.abs(lo - outer.center), np.abs(hi - outer.center))
            return bool(norm(far, p) <= outer.radius + tol)
    if isinstance(inner, Ball):
        if isinstance(outer, Ball):
            return bool(norm(inner.center - outer.center, p) + inner.radius <= outer.radius + tol)
        if isinstance(outer, _BoxLike):
            lo, hi = inner.bounds()
            olo, ohi = outer.bounds()
            return bool(np.all(lo >= olo - tol) and np.all(hi <= ohi + tol))
    if isinstance(outer, Hyperplane) and isinstance(inner, Hyperplane):
        a, b = inner.normal, outer.normal
        s = (a @ b) / (b @ b)
        return bool(np.allclose(a, s * b) and abs(inner.offset - s * outer.offset) <= tol)
    # fallback: sampled check on a few support points of the inner body
    rng = np.random.default_rng(0)
    u = rng.standard_normal((64, inner.dim))
    try:
        pts = inner.support(u, p)
    except UnsupportedOracle:
        pts = inner.project(rng.standard_normal((64, inner.dim)) * 10.0, p)
    return bool(np.all(outer.distance(pts, p) <= tol))


# ---------------------------------------------------------------------- costs


class Cost:
    kind = "cost"
    dim: int

    def value(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)

    def minimizer(self, reference=None):
        raise NotImplementedError

    def subgradient(self, x):
        raise NotImplementedError

    def scaled(self, lam):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Quadratic(Cost):
    """f(x) = (x - c)^T Q (x - c) + m with Q symmetric psd and m >= 0."""

    Q: np.ndarray
    center: np.ndarray
    offset: float = 0.0
    kind = "quadratic"

    def __post_init__(self):
        c = _finite_vec(self.center, "center")
        Q = np.array(self.Q, dtype=float)
        if Q.ndim == 0:
            Q = Q * np.eye(c.size)
        if Q.shape != (c.size, c.size) or not np.all(np.isfinite(Q)):
            raise ValueError("Q must be a finite square matrix matching the center")
        Q = 0.5 * (Q + Q.T)
        if np.linalg.eigvalsh(Q)[0] < -1e-12 * max(1.0, np.abs(Q).max()):
            raise ValueError("Q must be positive semidefinite")
        if not (self.offset >= 0):
            raise ValueError("offset must be >= 0")
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self):
        return self.center.size

    def value(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        v = x - self.center
        return np.maximum(np.einsum("...i,ij,...j->...", v, self.Q, v), 0.0) + self.offset

    def minimizer(self, reference=None):
        return np.array(self.center)

    def subgradient(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        return 2.0 * (x - self.center) @ self.Q

    def scaled(self, lam):
        return Quadratic(self.Q / lam, self.center * lam, self.offset * lam)

    def to_dict(self):
        return {"kind": "quadratic", "Q": [_enc(r) for r in self.Q], "center": _enc(self.center),
                "offset": self.offset}


@dataclass(frozen=True, eq=False)
class NormPolyhedral(Cost):
    """f(x) = m + alpha ||x - x*||_p, globally alpha-polyhedral."""

    center: np.ndarray
    alpha: float
    offset: float = 0.0
    p: float = 2.0
    kind = "norm_polyhedral"

    def __post_init__(self):
        object.__setattr__(self, "center", _finite_vec(self.center, "center"))
        if not (self.alpha > 0):
            raise ValueError("alpha must be > 0")
        if not (self.offset >= 0):
            raise ValueError("offset must be >= 0")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "p", parse_p(self.p))

    @property
    def dim(self):
        return self.center.size

    def value(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        return self.offset + self.alpha * norm(x - self.center, self.p)

    def minimizer(self, reference=None):
        return np.array(self.center)

    def subgradient(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        return self.alpha * dual_direction(x - self.center, self.p)

    def scaled(self, lam):
        return NormPolyhedral(self.center * lam, self.alpha, self.offset * lam, self.p)

    def to_dict(self):
        return {"kind": "norm_polyhedral", "center": _enc(self.center), "alpha": self.alpha,
                "offset": self.offset, "p": format_p(self.p)}


@dataclass(frozen=True, eq=False)
class NormPower(Cost):
    """f(x) = (a / 2) ||x - x*||_p^gamma with gamma >= 1."""

    center: np.ndarray
    coef: float
    exponent: float = 2.0
    p: float = 2.0
    kind = "norm_power"

    def __post_init__(self):
        object.__setattr__(self, "center", _finite_vec(self.center, "center"))
        if not (self.coef > 0):
            raise ValueError("coefficient must be > 0")
        if not (self.exponent >= 1):
            raise ValueError("exponent must be >= 1")
        object.__setattr__(self, "coef", float(self.coef))
        object.__setattr__(self, "exponent", float(self.exponent))
        object.__setattr__(self, "p", parse_p(self.p))

    @property
    def dim(self):
        return self.center.size

    def value(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        return 0.5 * self.coef * norm(x - self.center, self.p) ** self.exponent

    def minimizer(self, reference=None):
        return np.array(self.center)

    def subgradient(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        v = x - self.center
        n = norm(v, self.p)
        return (0.5 * self.coef * self.exponent * n ** (self.exponent - 1.0))[..., None] * dual_direction(v, self.p)

    def scaled(self, lam):
        return NormPower(self.center * lam, self.coef * lam ** (1.0 - self.exponent), self.exponent, self.p)

    def to_dict(self):
        return {"kind": "norm_power", "center": _enc(self.center), "coef": self.coef,
                "exponent": self.exponent, "p": format_p(self.p)}


@dataclass(frozen=True, eq=False)
class BodyDistance(Cost):
    """f(x) = s * dist_p(x, K): the real-valued stand-in for the indicator of K."""

    body: Body
    scale: float = 3.0
    p: float = 2.0
    kind = "body_distance"

    def __post_init__(self):
        if not (self.scale > 0):
            raise ValueError("scale must be > 0")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "p", parse_p(self.p))

    @property
    def dim(self):
        return self.body.dim

    def value(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        return self.scale * self.body.distance(x, self.p)

    def minimizer(self, reference=None):
        if reference is None:
            raise ValueError("distance costs have a set of minimizers; pass a reference point")
        return self.body.project(reference, self.p)

    def subgradient(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        if isinstance(self.body, Hyperplane):
            a = self.body.normal
            s = np.sign(x @ a - self.body.offset)
            return (self.scale * s / norm(a, dual_exponent(self.p)))[..., None] * a
        r = x - self.body.project(x, self.p)
        return self.scale * dual_direction(r, self.p)

    def scaled(self, lam):
        return BodyDistance(self.body.scaled(lam), self.scale, self.p)

    def to_dict(self):
        return {"kind": "body_distance", "body": self.body.to_dict(), "scale": self.scale,
                "p": format_p(self.p)}


def cost_from_dict(d: dict) -> Cost:
    k = d["kind"]
    if k == "quadratic":
        return Quadratic(np.array([_dec(r) for r in d["Q"]]), _dec(d["center"]), float(d["offset"]))
    if k == "norm_polyhedral":
        return NormPolyhedral(_dec(d["center"]), float(d["alpha"]), float(d["offset"]), parse_p(d["p"]))
    if k == "norm_power":
        return NormPower(_dec(d["center"]), float(d["coef"]), float(d["exponent"]), parse_p(d["p"]))
    if k == "body_distance":
        return BodyDistance(body_from_dict(d["body"]), float(d["scale"]), parse_p(d["p"]))
    raise ValueError(f"unknown cost kind {k!r}")


def eval_cost(f: Cost, x) -> float:
    return f.value(x)


def minimizer(f: Cost, reference=None):
    return f.minimizer(reference)


def subgradient(f: Cost, x):
    return f.subgradient(x)


def alpha_polyhedral_witness(f: Cost, samples: int, seed: int, p: Optional[float] = None,
                             radius: float = 1.0) -> float:
    """Smallest sampled slope (f(x) - f(x*)) / ||x - x*|| over a ball around x*."""
    p = parse_p(p if p is not None else getattr(f, "p", 2.0))
    xs = f.minimizer()
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((samples, xs.size))
    g /= np.maximum(norm(g, p), 1e-300)[:, None]
    rho = radius * rng.random(samples) ** 3
    rho = np.where(rho > 0, rho, radius)
    x = xs + rho[:, None] * g
    dist = norm(x - xs, p)
    keep = dist > 0
    return float(np.min((f.value(x[keep]) - f.value(xs)) / dist[keep]))
