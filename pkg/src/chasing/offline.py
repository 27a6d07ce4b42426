"""Offline optimum: exact grid dynamic programming (d <= 2) and a first-order solver."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .algorithms import trajectory_cost
from .costs import BodyDistance, NormPolyhedral, NormPower, is_subset
from .geometry import dual_direction, norm

GRID_CAP_1D = 4000
GRID_CAP_2D = 250 * 250
BRUTE_CAP = 6400


@dataclass
class OptResult:
    trajectory: np.ndarray
    cost: float
    method: str
    gap_estimate: float
    info: dict = field(default_factory=dict)

    @property
    def lower(self) -> float:
        return max(self.cost - self.gap_estimate, 0.0)

    def to_dict(self):
        return {"cost": self.cost, "method": self.method, "gap_estimate": self.gap_estimate,
                "trajectory": self.trajectory.tolist()}


def _exact_cost(instance, X) -> float:
    return trajectory_cost(instance, X).total


# ------------------------------------------------------------------ grid DP


def _anchor_points(instance):
    pts = [instance.x0]
    for f in instance.costs:
        if isinstance(f, BodyDistance):
            lo, hi = f.body.bounds()
            pts.append(np.where(np.isfinite(lo), lo, instance.x0))
            pts.append(np.where(np.isfinite(hi), hi, instance.x0))
        else:
            pts.append(f.minimizer())
    return np.array(pts)


def _breakpoints_1d(instance):
    """Kinks of 1D piecewise-linear costs; None if some cost is not piecewise linear."""
    out = [float(instance.x0[0])]
    for f in instance.costs:
        if isinstance(f, NormPolyhedral) or (isinstance(f, NormPower) and f.exponent == 1):
            out.append(float(f.center[0]))
        elif isinstance(f, BodyDistance):
            lo, hi = f.body.bounds()
            out += [float(v) for v in (lo[0], hi[0]) if math.isfinite(v)]
        else:
            return None
    return out


def _dt1d(V, g, axis):
    """W(i) = min_j V(j) + |g_i - g_j| along ``axis`` of a sorted grid; also returns argmin j."""
    V = np.moveaxis(V, axis, -1)
    n = V.shape[-1]
    idx = np.broadcast_to(np.arange(n), V.shape)
    A = V - g
    cA = np.minimum.accumulate(A, axis=-1)
    fa = np.maximum.accumulate(np.where(A == cA, idx, 0), axis=-1)
    B = (V + g)[..., ::-1]
    cB = np.minimum.accumulate(B, axis=-1)
    ba = np.maximum.accumulate(np.where(B == cB, idx, 0), axis=-1)
    Wf = cA + g
    Wb = cB[..., ::-1] - g
    bb = (n - 1 - ba)[..., ::-1]
    take_f = Wf <= Wb
    W = np.where(take_f, Wf, Wb)
    arg = np.where(take_f, fa, bb)
    return np.moveaxis(W, -1, axis), np.moveaxis(arg, -1, axis)


def _axis_grid(lo, hi, n, extra):
    g = np.linspace(lo, hi, n)
    extra = [v for v in extra if lo <= v <= hi]
    return np.unique(np.concatenate([g, extra]))


def opt_grid_dp(instance, box=None, points_per_dim: Optional[int] = None) -> OptResult:
    d = instance.dim
    if d > 2:
        raise ValueError("grid DP supports dimension 1 or 2 only")
    if points_per_dim is None:
        points_per_dim = 4001 if d == 1 else (201 if instance.p == 1 else 51)
    if points_per_dim < 3:
        raise ValueError("grid needs at least 3 points per dimension")
    anchors = _anchor_points(instance)
    alo, ahi = anchors.min(axis=0), anchors.max(axis=0)
    if box is None:
        if d == 1 and _breakpoints_1d(instance) is not None:
            pad = np.zeros(d)
        else:
            pad = 0.25 * (ahi - alo) + 0.1
        lo, hi = alo - pad, ahi + pad
    else:
        lo, hi = np.minimum(np.asarray(box[0], float), alo), np.maximum(np.asarray(box[1], float), ahi)
    axes = [_axis_grid(lo[k], hi[k], points_per_dim, anchors[:, k]) for k in range(d)]
    if d == 1:
        bp = _breakpoints_1d(instance)
        if bp is not None:
            axes[0] = np.unique(np.concatenate([axes[0], bp]))
    shape = tuple(len(a) for a in axes)
    G = int(np.prod(shape))
    if (d == 1 and points_per_dim > GRID_CAP_1D + 1) or (d == 2 and points_per_dim ** 2 > GRID_CAP_2D):
        raise ValueError("grid exceeds the desk-scale cap")
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    brute = d == 2 and instance.p != 1
    if brute and G > BRUTE_CAP:
        raise ValueError(f"2D grid DP in a non-l1 norm is limited to {BRUTE_CAP} nodes")

    start = np.full(G, np.inf)
    i0 = int(np.argmin(norm(mesh - instance.x0, instance.p)))
    start[i0] = 0.0
    T = instance.T
    pred = np.empty((T, G), dtype=np.int64)
    V = start
    fvals = np.empty((T, G))
    for t, f in enumerate(instance.costs):
        W, arg = _transform(V, shape, axes, mesh, instance.p, brute)
        pred[t] = arg
        fvals[t] = f.value(mesh)
        V = fvals[t] + W
    k = int(np.argmin(V))
    path = np.empty(T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        path[t] = k
        k = pred[t, k]
    X = mesh[path]
    cost = _exact_cost(instance, X)

    if d == 1 and _breakpoints_1d(instance) is not None:
        gap, Lf = 0.0, None
    else:
        Lf = 0.0
        F = fvals.reshape((T,) + shape)
        parts = []
        for k in range(d):
            dg = np.diff(axes[k])
            df = np.abs(np.diff(F, axis=k + 1))
            sh = [1] * (d + 1)
            sh[k + 1] = -1
            parts.append(float(np.max(df / dg.reshape(sh))))
        q = {1: math.inf, math.inf: 1.0}.get(instance.p, None)
        if q is None:
            q = instance.p / (instance.p - 1.0)
        Lf = float(norm(np.array(parts), q))
        h = float(norm(np.array([np.max(np.diff(a)) for a in axes]), instance.p))
        gap = T * (Lf + 1.0) * h
    return OptResult(X, cost, "grid_dp", gap, {"nodes": G, "lipschitz": Lf, "box": [lo.tolist(), hi.tolist()]})


def _transform(V, shape, axes, mesh, p, brute):
    d = len(shape)
    if d == 1:
        return _dt1d(V, axes[0], 0)
    if not brute:
        V2 = V.reshape(shape)
        W1, J = _dt1d(V2, axes[1], 1)
        W, I = _dt1d(W1, axes[0], 0)
        Jsel = np.take_along_axis(J, I, axis=0)
        arg = I * shape[1] + Jsel
        return W.reshape(-1), arg.reshape(-1)
    G = mesh.shape[0]
    W = np.empty(G)
    arg = np.empty(G, dtype=np.int64)
    finite = np.isfinite(V)
    src = np.flatnonzero(finite)
    step = max(1, 2_000_000 // max(len(src), 1))
    for s in range(0, G, step):
        D = norm(mesh[s:s + step, None, :] - mesh[None, src, :], p) + V[src][None, :]
        j = np.argmin(D, axis=1)
        W[s:s + step] = D[np.arange(len(j)), j]
        arg[s:s + step] = src[j]
    return W, arg


# -------------------------------------------------------- first-order solver


def _smooth_norm(V, p, mu):
    """Smooth approximation of ||v||_p from below, bias <= bias_bound(p, d, mu); returns (value, grad)."""
    d = V.shape[-1]
    if p == 2:
        s = np.sqrt(np.sum(V * V, axis=-1) + mu * mu)
        return s - mu, V / s[..., None]
    if p == 1:
        s = np.sqrt(V * V + mu * mu)
        return np.sum(s - mu, axis=-1), V / s
    if math.isinf(p):
        z = np.concatenate([V, -V], axis=-1) / mu
        zm = z.max(axis=-1, keepdims=True)
        e = np.exp(z - zm)
        se = e.sum(axis=-1, keepdims=True)
        val = mu * (np.log(se[..., 0]) + zm[..., 0]) - mu * math.log(2 * d)
        w = e / se
        return val, w[..., :d] - w[..., d:]
    u = V * V + mu * mu
    up = u ** (p / 2.0)
    n = np.sum(up, axis=-1) ** (1.0 / p)
    grad = (n[..., None] ** (1.0 - p)) * (u ** (p / 2.0 - 1.0)) * V
    return n - d ** (1.0 / p) * mu, grad


def _bias_bound(p, d, mu):
    if p == 2:
        return mu
    if p == 1:
        return d * mu
    if math.isinf(p):
        return mu * math.log(2 * d)
    return d ** (1.0 / p) * mu


class _Compiled:
    """Stacked cost parameters so the whole horizon evaluates in a few numpy calls."""

    def __init__(self, instance):
        self.T, self.d, self.p = instance.T, instance.dim, instance.p
        self.x0 = instance.x0
        groups = {}
        for t, f in enumerate(instance.costs):
            key = (f.kind, getattr(f, "p", None), getattr(f, "exponent", None))
            groups.setdefault(key, []).append(t)
        self.quad, self.npoly, self.npow, self.other = None, [], [], []
        for (kind, p, ex), idx in groups.items():
            fs = [instance.costs[t] for t in idx]
            idx = np.array(idx)
            if kind == "quadratic":
                self.quad = (idx, np.stack([f.Q for f in fs]), np.stack([f.center for f in fs]),
                             np.array([f.offset for f in fs]))
            elif kind == "norm_polyhedral":
                self.npoly.append((idx, p, np.stack([f.center for f in fs]), np.array([f.alpha for f in fs]),
                                   np.array([f.offset for f in fs])))
            elif kind == "norm_power":
                self.npow.append((idx, p, ex, np.stack([f.center for f in fs]), np.array([f.coef for f in fs])))
            else:
                self.other += [(int(t), f) for t, f in zip(idx, fs)]
        self.coef_sum = 1.0 + sum(float(np.sum(g[3])) for g in self.npoly) + sum(
            3.0 * 1 for _ in self.other)

    def objective(self, X, mu):
        """Smoothed objective and gradient; X has shape (T, d)."""
        val = 0.0
        G = np.zeros_like(X)
        if self.quad is not None:
            idx, Q, c, m = self.quad
            V = X[idx] - c
            QV = np.einsum("tij,tj->ti", Q, V)
            val += float(np.sum(np.einsum("ti,ti->t", V, QV)) + np.sum(m))
            G[idx] += 2.0 * QV
        for idx, p, c, a, m in self.npoly:
            n, g = _smooth_norm(X[idx] - c, p, mu)
            val += float(np.sum(a * n + m))
            G[idx] += a[:, None] * g
        for idx, p, ex, c, a in self.npow:
            n, g = _smooth_norm(X[idx] - c, p, mu)
            n = np.maximum(n, 0.0)
            val += float(np.sum(0.5 * a * n ** ex))
            G[idx] += (0.5 * a * ex * n ** (ex - 1.0))[:, None] * g
        for t, f in self.other:
            x = X[t]
            if isinstance(f, BodyDistance):
                dist = float(f.body.distance(x, f.p))
                s = math.sqrt(dist * dist + mu * mu)
                val += f.scale * (s - mu)
                if dist > 0:
                    G[t] += f.subgradient(x) * (dist / s)
            else:
                val += float(f.value(x))
                G[t] += f.subgradient(x)
        prev = np.vstack([self.x0[None, :], X[:-1]])
        n, g = _smooth_norm(X - prev, self.p, mu)
        val += float(np.sum(n))
        G += g
        G[:-1] -= g[1:]
        return val, G

    def exact(self, X):
        return self.objective_exact(X)[0]

    def objective_exact(self, X):
        """Exact objective and a subgradient."""
        val = 0.0
        G = np.zeros_like(X)
        if self.quad is not None:
            idx, Q, c, m = self.quad
            V = X[idx] - c
            QV = np.einsum("tij,tj->ti", Q, V)
            val += float(np.sum(np.maximum(np.einsum("ti,ti->t", V, QV), 0.0)) + np.sum(m))
            G[idx] += 2.0 * QV
        for idx, p, c, a, m in self.npoly:
            V = X[idx] - c
            val += float(np.sum(a * norm(V, p) + m))
            G[idx] += a[:, None] * dual_direction(V, p)
        for idx, p, ex, c, a in self.npow:
            V = X[idx] - c
            n = norm(V, p)
            val += float(np.sum(0.5 * a * n ** ex))
            G[idx] += (0.5 * a * ex * n ** (ex - 1.0))[:, None] * dual_direction(V, p)
        for t, f in self.other:
            val += float(f.value(X[t]))
            G[t] += f.subgradient(X[t])
        prev = np.vstack([self.x0[None, :], X[:-1]])
        D = X - prev
        val += float(np.sum(norm(D, self.p)))
        g = dual_direction(D, self.p)
        G += g
        G[:-1] -= g[1:]
        return val, G


def _starts(instance, advice=None):
    T, d = instance.T, instance.dim
    out = [np.tile(instance.x0, (T, 1))]
    greedy = np.empty((T, d))
    x = instance.x0
    for t, f in enumerate(instance.costs):
        if isinstance(f, BodyDistance):
            x = f.body.project(x, instance.p)
        else:
            x = f.minimizer()
        greedy[t] = x
    out.append(greedy)
    if instance.bodies is not None:
        # one jump onto the last body, valid for every earlier body when nested
        last = instance.bodies[-1].project(instance.x0, instance.p)
        out.append(np.tile(last, (T, 1)))
    if advice is not None:
        out.append(np.array(advice, dtype=float).reshape(T, d))
    return out


def _polish(comp, X, iters, window):
    """Subgradient steps on the exact objective with best-so-far tracking."""
    best_val, best = comp.objective_exact(X)[0], X.copy()
    hist = []
    scale = max(float(np.max(np.abs(X))), 1.0)
    for k in range(iters):
        val, G = comp.objective_exact(X)
        hist.append(val)
        if val < best_val:
            best_val, best = val, X.copy()
        gn = float(np.linalg.norm(G))
        if gn == 0:
            break
        X = X - (1e-3 * scale / math.sqrt(k + 1.0)) * G / gn
    tail = hist[-window:] if hist else [best_val]
    return best, best_val, float(max(tail) - min(tail)) if len(tail) > 1 else 0.0


def opt_first_order(instance, iters: int = 400, seed: int = 0, advice=None, mus=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6),
                    polish: int = 200) -> OptResult:
    if iters < 1:
        raise ValueError("iters must be >= 1")
    comp = _Compiled(instance)
    T, d = instance.T, instance.dim
    rng = np.random.default_rng(seed)
    results = []
    for X0 in _starts(instance, advice):
        X = X0 + 1e-9 * rng.standard_normal(X0.shape)
        for mu in mus:
            res = minimize(lambda z: _flat(comp.objective(z.reshape(T, d), mu)), X.ravel(), jac=True,
                           method="L-BFGS-B", options={"maxiter": iters, "gtol": 1e-12, "ftol": 1e-15})
            X = res.x.reshape(T, d)
        Xb, vb, osc = _polish(comp, X, polish, min(polish, 1000))
        for cand in (X0, Xb):
            v = comp.exact(cand)
            if not math.isfinite(v):
                raise FloatingPointError("non-finite objective in the first-order solver")
            results.append((v, tuple(np.round(cand.ravel(), 15)), cand, osc))
    results.sort(key=lambda r: (r[0], r[1]))
    v, _, X, osc = results[0]
    cost = _exact_cost(instance, X)
    bias = (T + comp.coef_sum) * _bias_bound(instance.p, d, mus[-1])
    return OptResult(X, cost, "first_order", bias + osc, {"starts": len(results) // 2})


def _flat(pair):
    v, G = pair
    return v, G.ravel()


def opt_for_ncbc(instance, iters: int = 400, seed: int = 0, advice=None, **solver) -> OptResult:
    """Offline optimum for body-chasing instances.

    For nested bodies the optimum is exact: jump once to the point of the
    last body nearest x0 and stay there, paying the distance from x0 to the
    last body, which no feasible path can beat.  Otherwise run the
    first-order solver on the distance objective and project every decision
    into its body (which never increases the cost).
    """
    if instance.bodies is None:
        raise ValueError("instance has no bodies")
    p = instance.p
    nested = all(is_subset(B, A, p) for A, B in zip(instance.bodies[:-1], instance.bodies[1:]))
    if nested:
        last = instance.bodies[-1]
        lo = float(last.distance(instance.x0, p))
        X = np.tile(last.project(instance.x0, p), (instance.T, 1))
        cost = _exact_cost(instance, X)
        return OptResult(X, cost, "nested_jump", max(cost - lo, 0.0), {"nested_lower_bound": lo})
    res = opt_first_order(instance, iters, seed, advice, **solver)
    X = np.array(res.trajectory)
    before = _exact_cost(instance, X)
    for t, K in enumerate(instance.bodies):
        X[t] = K.project(X[t], p)
    after = _exact_cost(instance, X)
    if after > before + 1e-9 * max(1.0, before):
        raise AssertionError(f"projection repair increased the cost: {before} -> {after}")
    return OptResult(X, after, "first_order", res.gap_estimate, {"pre_repair_cost": before})
