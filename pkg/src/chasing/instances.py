"""Problem instances, random generators, advice, and the adaptive switching adversary."""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .algorithms import OnlineAlgorithm, ProjectGreedy, Replay, ScriptedAdvice
from .costs import (
    AffineSliceOfBox,
    Ball,
    Body,
    BodyDistance,
    Box,
    Cost,
    NormPolyhedral,
    Quadratic,
    Singleton,
    _enc,
    body_from_dict,
    cost_from_dict,
    is_subset,
)
from .geometry import format_p, norm, parse_p, random_directions

SUBCLASSES = ("CFC", "CBC", "NCBC", "alphaCFC")
FORMAT_VERSION = 1


def _plain(obj):
    """Convert numpy scalars/arrays inside metadata to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


@dataclass(eq=False)
class Instance:
    x0: np.ndarray
    costs: list
    bodies: Optional[list] = None
    p: float = 2.0
    subclass: str = "CFC"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x0 = np.array(self.x0, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.x0)):
            raise ValueError("x0 must be finite")
        self.costs = list(self.costs)
        self.p = parse_p(self.p)
        if len(self.costs) < 1:
            raise ValueError("an instance needs at least one round")
        if self.subclass not in SUBCLASSES:
            raise ValueError(f"subclass must be one of {SUBCLASSES}")
        for f in self.costs:
            if f.dim != self.x0.size:
                raise ValueError("cost dimension does not match x0")
        if self.bodies is not None:
            self.bodies = list(self.bodies)
            if len(self.bodies) != len(self.costs):
                raise ValueError("bodies must align with costs")
            for K in self.bodies:
                if K.dim != self.x0.size:
                    raise ValueError("body dimension does not match x0")
        elif self.subclass in ("CBC", "NCBC"):
            raise ValueError(f"{self.subclass} instances need bodies")
        if self.subclass == "alphaCFC" and not all(isinstance(f, NormPolyhedral) for f in self.costs):
            raise ValueError("alphaCFC instances use NormPolyhedral costs only")

    @property
    def T(self) -> int:
        return len(self.costs)

    @property
    def dim(self) -> int:
        return self.x0.size

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "norm_p": format_p(self.p),
            "x0": _enc(self.x0),
            "subclass": self.subclass,
            "costs": [f.to_dict() for f in self.costs],
            "bodies": None if self.bodies is None else [K.to_dict() for K in self.bodies],
            "metadata": _plain(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Instance":
        if not isinstance(d, dict):
            raise ValueError("instance document must be a mapping")
        missing = {"version", "norm_p", "x0", "subclass", "costs"} - set(d)
        if missing:
            raise ValueError(f"instance document lacks keys {sorted(missing)}")
        if d["version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported instance format version {d['version']!r}")
        bodies = d.get("bodies")
        return cls(
            x0=np.array([float(v) for v in d["x0"]]),
            costs=[cost_from_dict(c) for c in d["costs"]],
            bodies=None if bodies is None else [body_from_dict(b) for b in bodies],
            p=parse_p(d["norm_p"]),
            subclass=d["subclass"],
            metadata=dict(d.get("metadata") or {}),
        )

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def save(self, path):
        Path(path).write_text(self.to_json(indent=1))

    @classmethod
    def load(cls, path) -> "Instance":
        return cls.from_json(Path(path).read_text())

    def rescaled(self, lam: float) -> "Instance":
        """Joint rescaling: every trajectory cost is multiplied by lam."""
        if not (lam > 0):
            raise ValueError("rescale factor must be positive")
        md = dict(self.metadata)
        md["rescale"] = float(md.get("rescale", 1.0)) * float(lam)
        return Instance(
            self.x0 * lam,
            [f.scaled(lam) for f in self.costs],
            None if self.bodies is None else [K.scaled(lam) for K in self.bodies],
            self.p,
            self.subclass,
            md,
        )

    def prefix(self, t: int) -> "Instance":
        return Instance(self.x0, self.costs[:t], None if self.bodies is None else self.bodies[:t],
                        self.p, self.subclass, dict(self.metadata))


# ---------------------------------------------------------------- generators


def _random_psd(rng, dim, lo, hi):
    eig = rng.uniform(lo, hi, size=dim)
    U, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return (U * eig) @ U.T


def gen_random_quadratic_cfc(dim: int, T: int, seed: int, eig_range=(0.1, 2.0), center_box=1.0,
                             offset_max=0.5, p=2.0) -> Instance:
    if dim < 1 or T < 1:
        raise ValueError("dim and T must be >= 1")
    lo, hi = eig_range
    if not (0 <= lo <= hi) or center_box <= 0 or offset_max < 0:
        raise ValueError("invalid generator ranges")
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-center_box, center_box, size=dim)
    costs = [Quadratic(_random_psd(rng, dim, lo, hi), rng.uniform(-center_box, center_box, size=dim),
                       rng.uniform(0.0, offset_max)) for _ in range(T)]
    md = {"generator": "quadratic", "seed": int(seed), "eig_range": [lo, hi], "center_box": center_box}
    return Instance(x0, costs, None, p, "CFC", md)


def gen_alpha_polyhedral(dim: int, T: int, alpha: float, seed: int, center_box=1.0, offset_max=0.5,
                         p=2.0) -> Instance:
    if not (alpha > 0):
        raise ValueError("alpha must be positive")
    if dim < 1 or T < 1:
        raise ValueError("dim and T must be >= 1")
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-center_box, center_box, size=dim)
    costs = [NormPolyhedral(rng.uniform(-center_box, center_box, size=dim), alpha,
                            rng.uniform(0.0, offset_max), p) for _ in range(T)]
    md = {"generator": "alpha_polyhedral", "seed": int(seed), "alpha": float(alpha), "center_box": center_box}
    return Instance(x0, costs, None, p, "alphaCFC", md)


def gen_nested_bodies(dim: int, T: int, r: float, seed: int, kind: Optional[str] = None, p=2.0,
                      x0_mode: str = "interior", scale: float = 3.0) -> Instance:
    """Nested bodies K_1 ⊇ K_2 ⊇ ... inside B(y, r), with x0 in B(y, r).

    ``kind`` is 'ball' or 'box'; by default it is drawn from the seed.
    ``x0_mode`` places x0 at a random interior point, on the sphere of radius
    r around y, or at y itself.
    """
    if x0_mode not in ("interior", "boundary", "center"):
        raise ValueError("x0_mode must be 'interior', 'boundary' or 'center'")
    if dim < 1 or T < 1:
        raise ValueError("dim and T must be >= 1")
    if not (r > 0):
        raise ValueError("r must be positive")
    p = parse_p(p)
    rng = np.random.default_rng(seed)
    if kind is None:
        kind = "ball" if rng.random() < 0.5 else "box"
    y = rng.uniform(-1.0, 1.0, size=dim)
    u = random_directions(rng, 1, dim, p)[0]
    frac = rng.random()
    if x0_mode == "center":
        x0 = y.copy()
    elif x0_mode == "boundary":
        x0 = y + u * r
    else:
        x0 = y + u * r * frac
    bodies: list[Body] = []
    if kind == "ball":
        c, rad = y.copy(), float(r)
        bodies.append(Ball(c, rad))
        for _ in range(T - 1):
            new = rad * rng.uniform(0.6, 0.95)
            c = c + random_directions(rng, 1, dim, p)[0] * (rad - new) * rng.random()
            rad = new
            bodies.append(Ball(c, rad))
    elif kind == "box":
        # largest centered cube inside the ball: half-width r / ||1||_p
        hw = r / float(norm(np.ones(dim), p))
        lo, hi = y - hw, y + hw
        bodies.append(Box(lo, hi))
        for _ in range(T - 1):
            w = hi - lo
            nw = w * rng.uniform(0.6, 0.95, size=dim)
            lo = lo + (w - nw) * rng.random(dim)
            hi = np.minimum(lo + nw, hi)
            bodies.append(Box(lo, hi))
    else:
        raise ValueError("kind must be 'ball' or 'box'")
    costs = [BodyDistance(K, scale, p) for K in bodies]
    md = {"generator": "nested", "seed": int(seed), "kind": kind, "y": y, "r": float(r)}
    return Instance(x0, costs, bodies, p, "NCBC", md)


def nested_ok(instance: Instance, samples: int = 1000, seed: int = 0, tol: float = 1e-9) -> bool:
    """Exact containment check of consecutive bodies plus a sampled membership check."""
    if instance.bodies is None:
        return False
    rng = np.random.default_rng(seed)
    for A, B in zip(instance.bodies[:-1], instance.bodies[1:]):
        if not is_subset(B, A, instance.p, tol):
            return False
        lo, hi = B.bounds()
        lo = np.where(np.isfinite(lo), lo, -10.0)
        hi = np.where(np.isfinite(hi), hi, 10.0)
        pts = B.project(rng.uniform(lo - 1, hi + 1, size=(samples, instance.dim)), instance.p)
        if np.any(A.distance(pts, instance.p) > tol):
            return False
    return True


# -------------------------------------------------------------------- advice


ADVICE_KINDS = ("perfect", "noisy", "constant", "adversarial", "replay")


@dataclass
class AdviceSpec:
    kind: str
    sigma: float = 0.0
    point: Optional[np.ndarray] = None
    trajectory: Optional[np.ndarray] = None
    scale: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ADVICE_KINDS:
            raise ValueError(f"advice kind must be one of {ADVICE_KINDS}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "noisy":
            d.update(sigma=self.sigma, seed=self.seed)
        if self.kind == "constant" and self.point is not None:
            d["point"] = _enc(self.point)
        if self.kind == "adversarial":
            d.update(scale=self.scale, seed=self.seed)
        return d


def _project_rows(X, instance):
    if instance.bodies is None:
        return X
    return np.array([K.project(x, instance.p) for K, x in zip(instance.bodies, X)])


def advice_trajectory(spec: AdviceSpec, instance: Instance, opt_trajectory=None) -> np.ndarray:
    T, d = instance.T, instance.dim
    if spec.kind in ("perfect", "noisy"):
        if opt_trajectory is None:
            raise ValueError(f"{spec.kind} advice needs an optimal trajectory")
        X = np.array(opt_trajectory, dtype=float).reshape(T, d)
        if spec.kind == "noisy" and spec.sigma > 0:
            rng = np.random.default_rng(spec.seed)
            X = X + spec.sigma * random_directions(rng, T, d, instance.p)
        return _project_rows(X, instance)
    if spec.kind == "constant":
        pt = instance.x0 if spec.point is None else np.asarray(spec.point, dtype=float)
        return _project_rows(np.tile(pt, (T, 1)), instance)
    if spec.kind == "adversarial":
        # alternate between two far points on opposite sides of x0
        rng = np.random.default_rng(spec.seed)
        u = random_directions(rng, 1, d, instance.p)[0]
        sign = np.where(np.arange(T) % 2 == 0, 1.0, -1.0)
        X = instance.x0 + spec.scale * sign[:, None] * u
        return _project_rows(X, instance)
    X = np.array(spec.trajectory, dtype=float)
    if X.shape != (T, d):
        raise ValueError(f"replay advice must have shape {(T, d)}")
    return X


def make_advice(spec: AdviceSpec, instance: Instance, opt_trajectory=None) -> OnlineAlgorithm:
    return Replay(advice_trajectory(spec, instance, opt_trajectory), label=f"advice_{spec.kind}")


# ------------------------------------------------- switching lower bound


def _hypercube_argmax(R: np.ndarray, exhaustive_limit: int = 20, starts: int = 16, seed: int = 0):
    """Corner x of {±1}^m maximizing min_j ||x - R_j||_2.

    Returns (x, value, certificate).  Exhaustive for m <= exhaustive_limit;
    otherwise multi-start single-flip ascent, with the upper bound
    min_j max_x ||x - R_j|| recorded so optimality can be certified.
    """
    n, m = R.shape
    upper = float(np.min(np.sqrt(np.sum((1.0 + np.abs(R)) ** 2, axis=1))))
    if m <= exhaustive_limit:
        best, best_x = -1.0, None
        chunk = 1 << min(m, 16)
        total = 1 << m
        bits = np.arange(m)
        for start in range(0, total, chunk):
            idx = np.arange(start, min(start + chunk, total))
            X = 1.0 - 2.0 * ((idx[:, None] >> bits[::-1]) & 1)
            d2 = np.sum(X * X, axis=1)[:, None] - 2.0 * X @ R.T + np.sum(R * R, axis=1)[None, :]
            val = np.min(d2, axis=1)
            k = int(np.argmax(val))
            if val[k] > best + 1e-12:
                best, best_x = float(val[k]), X[k].copy()
        value = math.sqrt(max(best, 0.0))
        return best_x, value, {"method": "exhaustive", "corners": total, "value": value, "upper_bound": upper}
    rng = np.random.default_rng(seed)
    best_x, best = None, -1.0
    for s in range(starts):
        x = np.ones(m) if s == 0 else rng.choice([-1.0, 1.0], size=m)
        D = np.sum((x - R) ** 2, axis=1)
        while True:
            cand = np.min(D[:, None] + 4.0 * x[None, :] * R, axis=0)
            i = int(np.argmax(cand))
            if cand[i] <= D.min() + 1e-12:
                break
            D = D + 4.0 * x[i] * R[:, i]
            x[i] = -x[i]
        if D.min() > best + 1e-12:
            best, best_x = float(D.min()), x.copy()
    value = math.sqrt(max(best, 0.0))
    return best_x, value, {"method": "flip_ascent", "starts": starts, "value": value, "upper_bound": upper,
                           "certified_optimal": bool(value >= upper - 1e-9)}


class SwitchingLowerBoundBuilder:
    """Adaptive CBC instance that punishes any switching meta-algorithm.

    Phase one serves affine slices fixing more and more leading coordinates,
    each until the robust algorithm is nearly stationary.  The advice sits at
    a hypercube corner far from all the robust endpoints.  Once the switching
    algorithm is caught at the advice at the end of a subphase, phase two
    drifts the advice away until the algorithm switches to Rob, and a
    singleton final body at the advice forces it back.
    """

    def __init__(self, d: int, delta: float = 1e-3, eps_drift: float = 0.05, stationarity_cap: int = 2000,
                 rob_factory: Callable[[], OnlineAlgorithm] = ProjectGreedy, window: int = 10,
                 max_drift_rounds: int = 100_000, scale: float = 3.0):
        s = math.isqrt(d)
        if d < 1 or s * s != d:
            raise ValueError(f"d = {d} is not a perfect square")
        if 3 * s > d:
            raise ValueError("need 3 * sqrt(d) <= d")
        if not (delta > 0 and eps_drift > 0):
            raise ValueError("delta and eps_drift must be positive")
        if stationarity_cap < window:
            raise ValueError("stationarity_cap must be at least the window length")
        self.d, self.n1, self.dp = d, 3 * s, d - 3 * s
        self.delta, self.eps_drift = float(delta), float(eps_drift)
        self.cap, self.window = int(stationarity_cap), int(window)
        self.rob_factory = rob_factory
        self.max_drift_rounds = int(max_drift_rounds)
        self.scale = float(scale)

    def slice(self, z_prefix) -> AffineSliceOfBox:
        return AffineSliceOfBox.leading(self.d, z_prefix)

    def _cost(self, K):
        return BodyDistance(K, self.scale, 2.0)

    def presimulate(self):
        """Run Rob on the counterfactual all-phase-one instance."""
        rob = self.rob_factory()
        x0 = np.zeros(self.d)
        rob.reset(x0, 2.0)
        z = np.zeros(self.n1)
        m, ends, sub_cost = [], [], []
        prev, t, truncated = x0, 0, False
        for j in range(self.n1):
            if j == 0:
                z[0] = 1.0
            else:
                zj = -np.sign(ends[-1][j])
                z[j] = zj if zj != 0 else 1.0
            K = self.slice(z[: j + 1])
            f = self._cost(K)
            window, spent, rounds = [], 0.0, 0
            while True:
                t += 1
                rounds += 1
                x = rob.step(t, f, K)
                c = float(f.value(x)) + float(norm(x - prev, 2.0))
                prev = x
                spent += c
                window.append(c)
                if rounds >= self.window and sum(window[-self.window:]) <= self.delta:
                    break
                if rounds >= self.cap:
                    truncated = True
                    break
            m.append(t)
            ends.append(x.copy())
            sub_cost.append(spent)
            if truncated:
                break
        return {"z": z[: len(m)] if truncated else z, "m": m, "ends": np.array(ends), "sub_cost": sub_cost,
                "truncated": truncated}

    def build(self, meta_factory: Callable[[OnlineAlgorithm, OnlineAlgorithm], OnlineAlgorithm]):
        """Co-execute with a switching meta-algorithm; returns (instance, advice spec, info)."""
        pre = self.presimulate()
        if pre["truncated"]:
            raise RuntimeError(f"robust algorithm not stationary within {self.cap} rounds; "
                               f"stopped after {len(pre['m'])} subphases")
        z, m, ends = pre["z"], pre["m"], pre["ends"]
        R = ends[:, self.n1:]
        a, value, cert = _hypercube_argmax(R)
        a_hat = np.concatenate([z, a])

        adv = ScriptedAdvice()
        rob = self.rob_factory()
        alg = meta_factory(adv, rob)
        x0 = np.zeros(self.d)
        alg.reset(x0, 2.0)
        bodies, adv_path = [], []
        state = {"t": 0, "x": None}

        def play(K, adv_next):
            adv.next = np.array(adv_next, dtype=float)
            state["t"] += 1
            x = alg.step(state["t"], self._cost(K), K)
            bodies.append(K)
            adv_path.append(adv.next.copy())
            state["x"] = x
            return x

        def at(which):
            return bool(np.array_equal(state["x"], which))

        info = {"d": self.d, "n1": self.n1, "m": list(m), "z": z.tolist(), "a": a.tolist(),
                "advice_min_distance": value, "argmax_certificate": cert, "truncated": False}
        j_end = None
        for j in range(self.n1):
            K = self.slice(z[: j + 1])
            start = 0 if j == 0 else m[j - 1]
            for _ in range(start, m[j]):
                play(K, a_hat)
            if at(alg.last_adv) and j < self.n1 - 1:
                j_end = j
                break
        info["subphases"] = (j_end + 1) if j_end is not None else self.n1
        if j_end is None:
            info["case"] = "phase_one_only"
        else:
            j = j_end
            dist_j = float(norm(a - R[j], 2.0))
            if dist_j >= math.sqrt(self.dp) - 1e-12:
                info["case"] = "1"
                self._drift(play, at, alg, self.slice(z[: j + 1]), z, a, R[j], info)
            else:
                i_star = int(np.argmin(norm(-a[None, :] - R, 2.0)))
                info["i_star"] = i_star + 1
                if i_star < j:
                    info["case"] = "2a"
                    self._drift(play, at, alg, self.slice(z[: j + 1]), z, a, R[j], info)
                elif i_star > j:
                    for l in range(j + 1, i_star + 1):
                        K = self.slice(z[: l + 1])
                        for _ in range(m[l - 1], m[l]):
                            play(K, a_hat)
                    if at(alg.last_rob):
                        info["case"] = "2b_i"
                        play(Singleton(a_hat), a_hat)
                    elif at(alg.last_adv):
                        info["case"] = "2b_ii"
                        self._drift(play, at, alg, self.slice(z[: i_star + 1]), z, a, R[i_star], info)
                    else:
                        raise RuntimeError("probe is not a switching algorithm")
                else:
                    raise RuntimeError("minimizing index coincides with the current subphase")
        metadata = dict(info, generator="switching_lowerbound", delta=self.delta, eps_drift=self.eps_drift,
                        stationarity_cap=self.cap)
        inst = Instance(x0, [self._cost(K) for K in bodies], bodies, 2.0, "CBC", metadata)
        return inst, AdviceSpec("replay", trajectory=np.array(adv_path)), info

    def _drift(self, play, at, alg, K, z, a, r_free, info):
        v = a - r_free
        v = v / float(norm(v, 2.0))
        for k in range(1, self.max_drift_rounds + 1):
            pt = np.concatenate([z, a + k * self.eps_drift * v])
            play(K, pt)
            if at(alg.last_rob) and not at(alg.last_adv):
                info["drift_rounds"] = k
                play(Singleton(pt), pt)
                return
        info["truncated"] = True
        info["drift_rounds"] = self.max_drift_rounds


def gen_switching_lowerbound(d: int, delta: float, eps_drift: float, stationarity_cap: int,
                             alg_probe: Callable[[OnlineAlgorithm, OnlineAlgorithm], OnlineAlgorithm],
                             rob_factory: Callable[[], OnlineAlgorithm] = ProjectGreedy):
    """Build the adversarial instance against ``alg_probe``; returns (Instance, AdviceSpec)."""
    builder = SwitchingLowerBoundBuilder(d, delta, eps_drift, stationarity_cap, rob_factory)
    inst, spec, _ = builder.build(alg_probe)
    return inst, spec
