"""Normed-space primitives for finite-dimensional l^p spaces.

Vectors are plain float arrays.  Every routine accepts a batch of vectors
stacked along the leading axes and works along the last axis, so the same
code serves the online algorithms (one point at a time) and the randomized
lemma checks (10^5 points at a time).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

INF = math.inf
_TINY = 1e-300


class UnsupportedOracle(NotImplementedError):
    """Raised when a body does not provide the requested oracle."""


def parse_p(value) -> float:
    """Normalize a norm exponent; accepts numbers and the strings 'inf'/'infinity'."""
    if isinstance(value, str):
        v = value.strip().lower()
        if v in ("inf", "infinity", "+inf"):
            return INF
        value = float(v)
    p = float(value)
    if math.isnan(p) or p < 1:
        raise ValueError(f"norm exponent must lie in [1, inf], got {value!r}")
    return p


def format_p(p: float):
    return "inf" if math.isinf(p) else (int(p) if float(p).is_integer() else float(p))


def dual_exponent(p: float) -> float:
    if p == 1:
        return INF
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


@dataclass(frozen=True)
class NormTag:
    p: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "p", parse_p(self.p))

    def __call__(self, x, axis=-1):
        return norm(x, self.p, axis=axis)


def norm(x, p: float = 2.0, axis=-1):
    """l^p norm along ``axis``; p = inf gives the max-abs norm."""
    x = np.asarray(x, dtype=float)
    if p == 2:
        return np.sqrt(np.einsum("...i,...i->...", x, x)) if axis == -1 else np.sqrt(np.sum(x * x, axis=axis))
    a = np.abs(x)
    if p == 1:
        return np.sum(a, axis=axis)
    if math.isinf(p):
        return np.max(a, axis=axis)
    # rescale by the max entry so large or tiny coordinates do not overflow
    m = np.max(a, axis=axis, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    s = np.sum((a / safe) ** p, axis=axis) ** (1.0 / p)
    return s * np.squeeze(m, axis=axis)


def dual_direction(v, p: float = 2.0):
    """Unit-dual vector g with <g, v> = ||v||_p and ||g||_q = 1 (zero for v = 0).

    This is the gradient of the norm wherever it is differentiable and a valid
    subgradient elsewhere.
    """
    v = np.asarray(v, dtype=float)
    n = norm(v, p)
    nz = np.expand_dims(n, -1) > 0
    if p == 2:
        return np.where(nz, v / np.where(nz, np.expand_dims(n, -1), 1.0), 0.0)
    if p == 1:
        return np.sign(v)
    if math.isinf(p):
        a = np.abs(v)
        k = np.argmax(a, axis=-1)
        g = np.zeros_like(v)
        np.put_along_axis(g, np.expand_dims(k, -1), np.take_along_axis(np.sign(v), np.expand_dims(k, -1), -1), -1)
        return g
    safe = np.where(nz, np.expand_dims(n, -1), 1.0)
    g = np.sign(v) * (np.abs(v) / safe) ** (p - 1.0)
    return np.where(nz, g, 0.0)


def radial_retraction(x, r, p: float = 2.0):
    """Metric projection onto the closed ball B(0, r): identity inside, rescale outside."""
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise ValueError("retraction radius must be nonnegative")
    n = norm(x, p)
    outside = n > r
    scale = np.where(outside, r / np.where(outside, n, 1.0), 1.0)
    return x * np.expand_dims(scale, -1)


@dataclass(frozen=True)
class SpaceConstants:
    mu_upper: float
    k_upper: float


def rectangular_constant_upper(p) -> float:
    """Upper bound on the rectangular constant of l^p (sqrt(2) at p = 2, 3 at p in {1, inf})."""
    p = parse_p(p)
    if p == 1 or math.isinf(p):
        return 3.0
    if p <= 2:
        a = INF
        e = 1.0 / (p - 1.0)
        if e < 1000:
            a = (1.0 + (2.0 ** e - 1.0) ** (p - 1.0)) ** (1.0 / p)
        b = math.sqrt(p / (p - 1.0))
        return min(3.0, a, b)
    # (2^(p-1) - 1)^(1/(p-1)) = 2 (1 - 2^(1-p))^(1/(p-1)), stable for large p
    inner = 2.0 * (1.0 - 2.0 ** (1.0 - p)) ** (1.0 / (p - 1.0))
    return min(3.0, (1.0 + inner) ** ((p - 1.0) / p))


def lipschitz_constant_upper(p) -> float:
    p = parse_p(p)
    if p == 2:
        return 1.0
    return min(2.0, rectangular_constant_upper(p))


def space_constants(p) -> SpaceConstants:
    return SpaceConstants(rectangular_constant_upper(p), lipschitz_constant_upper(p))


def random_directions(rng: np.random.Generator, n: int, dim: int, p: float = 2.0):
    """n random unit vectors in the l^p norm (Gaussian directions rescaled)."""
    g = rng.standard_normal((n, dim))
    nn = norm(g, p)
    nn = np.where(nn > 0, nn, 1.0)
    return g / nn[:, None]


def estimate_lipschitz_empirical(p, dim: int, samples: int, seed: int) -> float:
    """Sampled lower estimate of the Lipschitz constant of rho(.; 1)."""
    p = parse_p(p)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = samples
    u = random_directions(rng, n, dim, p)
    x = u * rng.uniform(0.0, 3.0, size=(n, 1))
    # half the pairs are local perturbations (where the sup is approached),
    # the rest are independent draws
    local = rng.random(n) < 0.5
    step = 10.0 ** rng.uniform(-4.0, 0.0, size=(n, 1))
    y_local = x + step * random_directions(rng, n, dim, p)
    y_far = random_directions(rng, n, dim, p) * rng.uniform(0.0, 3.0, size=(n, 1))
    y = np.where(local[:, None], y_local, y_far)
    dxy = norm(x - y, p)
    keep = dxy > 0
    if not np.any(keep):
        return 0.0
    num = norm(radial_retraction(x[keep], 1.0, p) - radial_retraction(y[keep], 1.0, p), p)
    return float(np.max(num / dxy[keep]))


def bj_orthogonal(x, y, p=2.0, lambda_grid: int = 201) -> bool:
    """Birkhoff-James orthogonality x ⊥ y decided on a finite grid of lambdas."""
    if lambda_grid < 3:
        raise ValueError("lambda_grid must be >= 3")
    p = parse_p(p)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx = float(norm(x, p))
    span = 1e3 * nx / max(float(norm(y, p)), 1e-300)
    if span == 0.0:
        return True
    half = max(1, (lambda_grid - 1) // 2)
    mags = np.geomspace(span * 1e-9, span, half)
    lams = np.concatenate([-mags[::-1], [0.0], mags])
    vals = norm(x[None, :] + lams[:, None] * y[None, :], p)
    return bool(np.all(nx <= vals + 1e-12))


def project_body(x, body, p=2.0):
    """Nearest point of ``body`` to ``x`` in the l^p norm (closed form per body kind)."""
    return body.project(x, parse_p(p))


def support_point(body, u, p=2.0):
    """A maximizer of <u, .> over ``body``."""
    return body.support(u, parse_p(p))


def project_hyperplane(x, normal, offset, p=2.0):
    """Nearest point of {v : <normal, v> = offset} in the l^p norm."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(normal, dtype=float)
    resid = x @ a - offset
    if p == 1:
        k = int(np.argmax(np.abs(a)))
        out = np.array(x, copy=True)
        out[..., k] -= resid / a[k]
        return out
    q = dual_exponent(p)
    w = np.sign(a) * np.abs(a) ** (q - 1.0)
    t = resid / np.sum(np.abs(a) ** q)
    return x - np.expand_dims(t, -1) * w
