"""Experiment runner: meta-algorithm batteries, bound checks, lemma suite, reports."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .algorithms import (GreedyMinimizer, OnlineAlgorithm, ProjectGreedy, Replay, StayPut, SteinerPointMC,
                         Trajectory, run, trajectory_cost)
from .costs import Box, is_subset
from .geometry import (estimate_lipschitz_empirical, format_p, norm, parse_p, radial_retraction,
                       random_directions, rectangular_constant_upper, space_constants)
from .instances import (AdviceSpec, Instance, SwitchingLowerBoundBuilder, advice_trajectory,
                        gen_alpha_polyhedral, gen_nested_bodies, gen_random_quadratic_cfc)
from .meta import (BdInterp, FollowAdvice, Interp, NestedSwitch, Switch, bound_bdinterp, bound_interp,
                   bound_nested_switch, bound_switch, interp_else_step, optimal_params_bdinterp,
                   optimal_params_interp, switch_from_epsilon, switch_params)
from .offline import OptResult, opt_first_order, opt_for_ncbc, opt_grid_dp

CSV_COLUMNS = ["instance_hash", "subclass", "algorithm", "epsilon", "gamma", "delta", "d", "T", "p", "C_adv",
               "C_rob", "C_opt_lo", "C_alg", "ratio_adv", "ratio_rob", "bound_c", "bound_r", "violated_c",
               "violated_r", "measured_D", "rescale", "seed", "wall_ms"]

META_NAMES = ("interp", "bdinterp", "switch", "nested_switch", "follow_advice")
ROB_NAMES = ("greedy", "project_greedy", "steiner_mc", "stay_put")


def slack(c) -> float:
    """Floating-point allowance for a bound whose reference cost is c."""
    return 1e-9 * (1.0 + np.abs(c))


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _ratio(a, b):
    if b > 0:
        return a / b
    return 1.0 if a == 0 else math.inf


def make_rob(name: str, samples: int = 100_000, seed: int = 0) -> OnlineAlgorithm:
    if name == "greedy":
        return GreedyMinimizer()
    if name == "project_greedy":
        return ProjectGreedy()
    if name == "steiner_mc":
        return SteinerPointMC(samples, seed)
    if name == "stay_put":
        return StayPut()
    raise ValueError(f"unknown robust algorithm {name!r}")


def compute_opt(instance: Instance, method: str = "auto", fast: bool = False, advice=None) -> OptResult:
    if method == "grid" or (method == "auto" and instance.dim == 1 and instance.bodies is None):
        return opt_grid_dp(instance)
    if instance.bodies is not None:
        if fast:
            return opt_for_ncbc(instance, advice=advice, iters=60, mus=(1e-4,), polish=0)
        return opt_for_ncbc(instance, advice=advice)
    if fast:
        return opt_first_order(instance, iters=60, mus=(1e-4,), polish=0, advice=advice)
    return opt_first_order(instance, advice=advice)


# ---------------------------------------------------------------- reports


@dataclass
class RunReport:
    instance_hash: str
    subclass: str
    algorithm: str
    params: dict
    d: int
    T: int
    p: float
    advice: dict
    series: dict
    C_adv: float
    C_rob: float
    C_opt: float
    C_opt_lo: float
    C_alg: float
    ratio_adv: float
    ratio_rob: float
    ratio_opt: float
    bound_c: float
    bound_r: float
    violated_c: bool
    violated_r: bool
    round_flags: list
    invariants: dict
    phase_log: dict
    measured_D: float
    rescale: float
    seed: int
    wall_ms: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def invariant_violated(self) -> bool:
        return any(v > 0 for v in self.invariants.values())

    @property
    def violated(self) -> bool:
        return bool(self.violated_c or self.violated_r or self.invariant_violated)

    def csv_row(self) -> list:
        vals = {"instance_hash": self.instance_hash, "subclass": self.subclass, "algorithm": self.algorithm,
                "epsilon": self.params.get("epsilon"), "gamma": self.params.get("gamma"),
                "delta": self.params.get("delta"), "d": self.d, "T": self.T, "p": str(format_p(self.p)),
                "C_adv": self.C_adv, "C_rob": self.C_rob, "C_opt_lo": self.C_opt_lo, "C_alg": self.C_alg,
                "ratio_adv": self.ratio_adv, "ratio_rob": self.ratio_rob, "bound_c": self.bound_c,
                "bound_r": self.bound_r, "violated_c": self.violated_c, "violated_r": self.violated_r,
                "measured_D": self.measured_D, "rescale": self.rescale, "seed": self.seed,
                "wall_ms": self.wall_ms}
        return [fmt(vals[c]) for c in CSV_COLUMNS]

    def to_dict(self) -> dict:
        def clean(o):
            if isinstance(o, dict):
                return {k: clean(v) for k, v in o.items()}
            if isinstance(o, (list, tuple)):
                return [clean(v) for v in o]
            if isinstance(o, np.ndarray):
                return clean(o.tolist())
            if isinstance(o, (bool, np.bool_)):
                return bool(o)
            if isinstance(o, (int, np.integer)):
                return int(o)
            if isinstance(o, (float, np.floating)):
                return fmt(o) if not math.isfinite(o) else float(o)
            return o
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["p"] = format_p(self.p)
        return clean(d)


def write_csv(reports, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def write_json_reports(reports, path):
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, sort_keys=True, indent=1)


# ------------------------------------------------------------- experiment


@dataclass
class Prepared:
    """An instance after the rescaling protocol, with Rob and OPT run on it."""

    instance: Instance
    rob: Trajectory
    opt: Optional[OptResult]
    rescale: float
    digest: str = ""

    def __post_init__(self):
        if not self.digest:
            self.digest = self.instance.digest()


def _needs(meta: str):
    if meta in ("bdinterp", "switch"):
        return "rob"
    if meta == "nested_switch":
        return "opt"
    return None


def prepare(instance: Instance, rob: str = "greedy", meta: str = "interp", opt: Optional[OptResult] = None,
            rob_samples: int = 100_000, rob_seed: int = 0, need_opt: bool = True) -> Prepared:
    """Run Rob (and OPT if needed) and apply the rescaling protocol for the meta-algorithm's assumptions.

    The protocol multiplies coordinates and costs by lam = max(1, 1.05 / measured),
    where measured is C_Rob or the OPT lower bound, then re-runs everything.
    """
    if opt is None and (need_opt or meta == "nested_switch"):
        opt = compute_opt(instance, fast=True)
    rob_traj = run(make_rob(rob, rob_samples, rob_seed), instance)
    which = _needs(meta)
    lam = 1.0
    if which is not None:
        measured = rob_traj.total if which == "rob" else opt.lower
        if not (measured > 0):
            raise ValueError(f"cannot rescale to meet the cost >= 1 assumption: measured {which} cost is 0")
        lam = max(1.0, 1.05 / measured)
    if lam > 1.0:
        instance = instance.rescaled(lam)
        rob_traj = run(make_rob(rob, rob_samples, rob_seed), instance)
        if opt is not None:
            X = opt.trajectory * lam
            cost = trajectory_cost(instance, X).total
            opt = OptResult(X, cost, opt.method, opt.gap_estimate * lam, dict(opt.info, rescaled=lam))
            if "nested_lower_bound" in opt.info:
                lo = float(instance.bodies[-1].distance(instance.x0, instance.p))
                opt.info["nested_lower_bound"] = lo
                opt.gap_estimate = max(cost - lo, 0.0)
    return Prepared(instance, rob_traj, opt, lam)


def build_meta(meta: str, adv: OnlineAlgorithm, rob: OnlineAlgorithm, params: dict, instance: Instance):
    if meta == "interp":
        return Interp(adv, rob, params["epsilon"], params["gamma"], params["delta"])
    if meta == "bdinterp":
        return BdInterp(adv, rob, params["epsilon"], params["gamma"], params["delta"])
    if meta == "switch":
        return Switch(adv, rob, params["b"], params["delta_sw"])
    if meta == "nested_switch":
        return NestedSwitch(adv, rob, params["epsilon"], params["r"], params.get("d", instance.dim))
    if meta == "follow_advice":
        return FollowAdvice(adv, rob)
    raise ValueError(f"unknown meta-algorithm {meta!r}")


def resolve_params(meta: str, params: dict, instance: Instance, measured_D: float) -> dict:
    """Fill in hyperparameters left unspecified with their closed-form optimal values."""
    out = dict(params)
    eps = out.get("epsilon")
    if meta in ("interp", "bdinterp", "nested_switch") and (eps is None or not eps > 0):
        raise ValueError("epsilon must be positive")
    if meta == "interp" and ("gamma" not in out or "delta" not in out):
        sc = space_constants(instance.p)
        out["gamma"], out["delta"] = optimal_params_interp(eps, sc.mu_upper, sc.k_upper)
    if meta == "bdinterp" and ("gamma" not in out or "delta" not in out):
        out["gamma"], out["delta"] = optimal_params_bdinterp(eps, measured_D)
    if meta == "switch" and ("b" not in out or "delta_sw" not in out):
        g, b, dsw = switch_params(eps)
        out.update(gamma=g, b=b, delta_sw=dsw, delta=dsw)
    if meta == "nested_switch":
        md = instance.metadata
        out.setdefault("r", float(md.get("r", 1.0)) * float(md.get("rescale", 1.0)))
        out.setdefault("d", instance.dim)
    return out


def run_experiment(instance: Instance, advice, rob: str = "greedy", meta: str = "interp",
                   params: Optional[dict] = None, opt: Optional[OptResult] = None, seed: int = 0,
                   timing: bool = False, prepared: Optional[Prepared] = None, rob_samples: int = 100_000,
                   mc_slack: float = 1.05, nested_tol: float = 1e-6) -> RunReport:
    """Run advice, Rob and the meta-algorithm on one instance and check the matching bound."""
    t0 = time.perf_counter()
    params = dict(params or {})
    if meta not in META_NAMES:
        raise ValueError(f"unknown meta-algorithm {meta!r}")
    if prepared is None:
        need_opt = isinstance(advice, AdviceSpec) and advice.kind in ("perfect", "noisy")
        prepared = prepare(instance, rob, meta, opt, rob_samples, seed, need_opt=need_opt or True)
    inst, rob_traj, opt, lam = prepared.instance, prepared.rob, prepared.opt, prepared.rescale

    if isinstance(advice, AdviceSpec):
        adv_X = advice_trajectory(advice, inst, None if opt is None else opt.trajectory)
        adv_desc = advice.to_dict()
    else:
        adv_X = np.asarray(advice, dtype=float)
        adv_desc = {"kind": "given"}
    adv_traj = trajectory_cost(inst, adv_X)
    D = float(np.max(norm(adv_X - rob_traj.decisions, inst.p)))
    params = resolve_params(meta, params, inst, D)

    alg = build_meta(meta, Replay(adv_X, "advice"), Replay(rob_traj.decisions, "rob"), params, inst)
    alg_traj = run(alg, inst)
    log = alg.log

    C_alg, C_adv, C_rob = alg_traj.total, adv_traj.total, rob_traj.total
    C_opt = opt.cost if opt is not None else math.nan
    C_opt_lo = opt.lower if opt is not None else math.nan
    sc = space_constants(inst.p)
    ca, cr = alg_traj.cumulative, adv_traj.cumulative
    inv = {}
    round_flags = [False] * inst.T
    robust_den = C_rob
    if meta == "interp":
        bc, br = bound_interp(params["epsilon"], params["gamma"], params["delta"], sc.mu_upper, sc.k_upper)
        flags = ca > bc * cr + slack(cr)
        round_flags = flags.tolist()
        viol_c = bool(flags.any())
        viol_r = C_alg > br * C_rob + slack(C_rob)
        inv.update(_interp_invariants(inst, alg_traj, adv_traj, rob_traj, log, params, sc))
    elif meta == "bdinterp":
        bc, br = bound_bdinterp(params["epsilon"], params["gamma"], params["delta"], D)
        flags = ca > bc * cr + slack(cr)
        round_flags = flags.tolist()
        viol_c = bool(flags.any())
        viol_r = C_alg > br * C_rob + slack(C_rob)
        seg = norm(alg_traj.decisions - rob_traj.decisions, inst.p) + norm(
            alg_traj.decisions - adv_X, inst.p) - norm(adv_X - rob_traj.decisions, inst.p)
        scale = np.maximum(1.0, norm(adv_X - rob_traj.decisions, inst.p))
        inv["segment"] = float(np.max(np.maximum(np.abs(seg) - 1e-9 * scale, 0.0)))
    elif meta == "switch":
        bc, br = bound_switch(params["b"], params["delta_sw"])
        viol_c = C_alg > bc * C_adv + slack(C_adv)
        viol_r = C_alg > br * C_rob + slack(C_rob)
        member = [np.array_equal(x, a) or np.array_equal(x, s)
                  for x, a, s in zip(alg_traj.decisions, adv_X, rob_traj.decisions)]
        inv["membership"] = float(sum(not m for m in member))
    elif meta == "nested_switch":
        bc, br = bound_nested_switch(params["epsilon"], params["r"], params["d"])
        br = br * mc_slack
        viol_c = C_alg > bc * C_adv + nested_tol * (1.0 + C_adv)
        robust_den = C_opt_lo
        viol_r = C_alg > br * C_opt_lo + slack(C_opt_lo)
        switches = sum(1 for a, b in zip(log.phase[:-1], log.phase[1:]) if a != b)
        inv["single_switch"] = float(max(0, switches - 1))
    else:
        bc, br = 1.0, math.inf
        viol_c = C_alg > C_adv + slack(C_adv)
        viol_r = False
    if inst.bodies is not None and meta in ("switch", "nested_switch", "follow_advice"):
        inv["infeasible"] = float(np.max(np.maximum(alg_traj.infeasibility - 1e-6, 0.0)))

    extra = {"T_phases": len(set(map(str, log.phase)))}
    if meta == "switch":
        extra["max_phase"] = int(max(log.phase))
    if meta == "nested_switch":
        extra["switched"] = "rob" in log.phase
    wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
    return RunReport(
        instance_hash=prepared.digest, subclass=inst.subclass, algorithm=meta,
        params={k: v for k, v in params.items()}, d=inst.dim, T=inst.T, p=inst.p, advice=adv_desc,
        series={"alg": ca.tolist(), "adv": cr.tolist(), "rob": rob_traj.cumulative.tolist()},
        C_adv=C_adv, C_rob=C_rob, C_opt=C_opt, C_opt_lo=C_opt_lo, C_alg=C_alg,
        ratio_adv=_ratio(C_alg, C_adv), ratio_rob=_ratio(C_alg, robust_den), ratio_opt=_ratio(C_alg, C_opt_lo),
        bound_c=bc, bound_r=br, violated_c=bool(viol_c), violated_r=bool(viol_r), round_flags=round_flags,
        invariants=inv, phase_log=log.as_dict(), measured_D=D, rescale=lam, seed=int(seed), wall_ms=wall,
        extra=extra)


def _interp_invariants(inst, alg, adv, rob, log, params, sc) -> dict:
    """Round-by-round potential inequalities and the geometric corollaries on recorded states."""
    p, g = inst.p, params["gamma"]
    X, A, S = alg.decisions, adv.decisions, rob.decisions
    x0 = inst.x0
    Xp = np.vstack([x0, X[:-1]])
    Ap = np.vstack([x0, A[:-1]])
    Sp = np.vstack([x0, S[:-1]])
    pot = norm(A - X, p) - norm(Ap - Xp, p)
    lhs = alg.hitting + alg.movement + pot
    ca_t = adv.hitting + adv.movement
    cr_t = rob.hitting + rob.movement
    rob_phase = np.array([ph == "rob" for ph in log.phase])
    rhs = np.where(rob_phase, 2.0 * cr_t + (sc.mu_upper + 2.0 * g) * ca_t, ca_t)
    out = {"potential": float(np.max(np.maximum(lhs - rhs - 1e-9 * np.maximum(1.0, rhs), 0.0)))}
    d1 = d2 = d3 = 0.0
    for t in np.flatnonzero(rob_phase):
        st = log.states[t]
        y, z = st["y"], st["z"]
        r1 = float(norm(S[t] - Sp[t], p))
        d1 = max(d1, float(norm(X[t] - z, p)) - r1 - 1e-9 * max(1.0, r1))
        r2 = sc.k_upper * float(norm(A[t] - Ap[t], p))
        d2 = max(d2, float(norm(y - Xp[t], p)) - r2 - 1e-9 * max(1.0, r2))
        r3 = sc.mu_upper * float(norm(A[t] - Ap[t], p)) + float(norm(Ap[t] - Xp[t], p))
        l3 = float(norm(y - Xp[t], p)) + float(norm(A[t] - y, p))
        d3 = max(d3, l3 - r3 - 1e-9 * max(1.0, r3))
    out.update(cor_xz=max(d1, 0.0), cor_lipschitz=max(d2, 0.0), cor_projection=max(d3, 0.0))
    return out


# ----------------------------------------------------------------- suites


AdviceKind = Literal["perfect", "noisy", "constant", "adversarial"]


class AdviceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: AdviceKind
    sigma: float = Field(0.0, ge=0)
    scale: float = Field(10.0, gt=0)


class SuiteSpec(BaseModel):
    """One family of runs: instance grid x advice kinds x epsilon grid for a single meta-algorithm."""

    model_config = ConfigDict(extra="forbid")
    name: str
    meta: Literal["interp", "bdinterp", "switch", "nested_switch", "follow_advice"]
    generators: list[Literal["quadratic", "alpha_polyhedral", "nested"]] = Field(min_length=1)
    dims: list[int] = Field(min_length=1)
    p: list[Union[float, Literal["inf"]]] = Field(default_factory=lambda: [2.0], min_length=1)
    seeds: int = Field(ge=1)
    T: tuple[int, int] = (5, 50)
    alpha: float = Field(1.0, gt=0)
    radius: list[float] = Field(default_factory=lambda: [1.0], min_length=1)
    x0_mode: Literal["interior", "boundary", "center"] = "boundary"
    center_box: float = Field(1.0, gt=0)
    confine_box: bool = False
    advice: list[AdviceConfig] = Field(min_length=1)
    epsilon: list[float] = Field(min_length=1)
    rob: Literal["greedy", "project_greedy", "steiner_mc", "stay_put"] = "greedy"
    rob_samples: int = Field(100_000, ge=1)
    mc_slack: float = Field(1.05, ge=1)

    @field_validator("epsilon")
    @classmethod
    def _eps_positive(cls, v):
        if any(not (e > 0) for e in v):
            raise ValueError("every epsilon must be > 0")
        return v

    @field_validator("dims")
    @classmethod
    def _dims_positive(cls, v):
        if any(d < 1 for d in v):
            raise ValueError("dimensions must be >= 1")
        return v

    @field_validator("p")
    @classmethod
    def _p_valid(cls, v):
        return [parse_p(x) for x in v]

    @model_validator(mode="after")
    def _T_order(self):
        if not (1 <= self.T[0] <= self.T[1]):
            raise ValueError("T must be an increasing pair of positive integers")
        return self


class SweepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    master_seed: int = 0
    suites: list[SuiteSpec] = Field(min_length=1)
    cap: int = Field(100_000, ge=1)
    workers: int = Field(1, ge=1)
    timing: bool = False

    def jobs(self):
        return list(_expand(self))

    def run_count(self) -> int:
        return sum(len(j["suite"].advice) * len(j["suite"].epsilon) for j in self.jobs())


def _child_seed(*keys) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _expand(spec: SweepSpec):
    for si, suite in enumerate(spec.suites):
        for gi, gen in enumerate(suite.generators):
            for dim, (pi, p), (ri, rad) in itertools.product(suite.dims, enumerate(suite.p),
                                                             enumerate(suite.radius)):
                for s in range(suite.seeds):
                    seed = _child_seed(spec.master_seed, si, gi, dim, pi, ri, s)
                    lo, hi = suite.T
                    T = lo + seed % (hi - lo + 1)
                    yield {"suite": suite, "suite_index": si, "generator": gen, "dim": dim, "p": p,
                           "radius": rad, "seed": seed, "T": T, "master_seed": spec.master_seed,
                           "timing": spec.timing}


def make_instance(job) -> Instance:
    suite, gen = job["suite"], job["generator"]
    if gen == "quadratic":
        return gen_random_quadratic_cfc(job["dim"], job["T"], job["seed"], center_box=suite.center_box, p=job["p"])
    if gen == "alpha_polyhedral":
        return gen_alpha_polyhedral(job["dim"], job["T"], suite.alpha, job["seed"], center_box=suite.center_box,
                                    p=job["p"])
    return gen_nested_bodies(job["dim"], job["T"], job["radius"], job["seed"], p=job["p"],
                             x0_mode=suite.x0_mode)


def run_job(job) -> list[RunReport]:
    """All advice x epsilon runs on one generated instance (Rob and OPT shared)."""
    suite = job["suite"]
    inst = make_instance(job)
    need_opt = any(a.kind in ("perfect", "noisy") for a in suite.advice) or suite.meta == "nested_switch"
    prep = prepare(inst, suite.rob, suite.meta, None, suite.rob_samples, job["seed"], need_opt=need_opt)
    reports = []
    for ai, a in enumerate(suite.advice):
        spec = AdviceSpec(a.kind, sigma=a.sigma, scale=a.scale, seed=_child_seed(job["seed"], ai))
        adv_X = advice_trajectory(spec, prep.instance, None if prep.opt is None else prep.opt.trajectory)
        if suite.confine_box:
            c = suite.center_box * prep.rescale
            adv_X = Box(np.full(inst.dim, -c), np.full(inst.dim, c)).project(adv_X, prep.instance.p)
        for eps in suite.epsilon:
            r = run_experiment(prep.instance, adv_X, suite.rob, suite.meta, {"epsilon": eps}, seed=job["seed"],
                               timing=job["timing"], prepared=prep, mc_slack=suite.mc_slack)
            r.advice = spec.to_dict()
            r.extra["suite"] = suite.name
            reports.append(r)
    return reports


@dataclass
class SweepResult:
    reports: list
    summary: dict
    suite_seconds: dict = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return self.summary["violations"]


def summarize(reports) -> dict:
    agg = {}
    for r in reports:
        key = f"{r.extra.get('suite', '')}|{r.algorithm}|{fmt(r.params.get('epsilon'))}"
        a = agg.setdefault(key, {"runs": 0, "max_ratio_adv": 0.0, "max_ratio_rob": 0.0,
                                 "min_margin_c": math.inf, "min_margin_r": math.inf, "violations": 0})
        a["runs"] += 1
        a["max_ratio_adv"] = max(a["max_ratio_adv"], r.ratio_adv)
        a["max_ratio_rob"] = max(a["max_ratio_rob"], r.ratio_rob)
        a["min_margin_c"] = min(a["min_margin_c"], r.bound_c - r.ratio_adv)
        a["min_margin_r"] = min(a["min_margin_r"], r.bound_r - r.ratio_rob)
        a["violations"] += int(r.violated)
    return {"runs": len(reports), "violations": sum(int(r.violated) for r in reports), "groups": agg}


def run_sweep(spec: SweepSpec, workers: Optional[int] = None) -> SweepResult:
    """Run every grid point in index order; wall times per suite are kept out of the summary."""
    jobs = spec.jobs()
    n = sum(len(j["suite"].advice) * len(j["suite"].epsilon) for j in jobs)
    if n > spec.cap:
        raise ValueError(f"sweep has {n} runs, above the cap of {spec.cap}")
    workers = workers or spec.workers
    seconds = {}
    reports = []
    for si, suite in enumerate(spec.suites):
        mine = [j for j in jobs if j["suite_index"] == si]
        t0 = time.perf_counter()
        if workers > 1:
            with ProcessPoolExecutor(workers) as ex:
                parts = list(ex.map(run_job, mine))
        else:
            parts = [run_job(j) for j in mine]
        seconds[suite.name] = seconds.get(suite.name, 0.0) + time.perf_counter() - t0
        reports.extend(r for part in parts for r in part)
    return SweepResult(reports, summarize(reports), seconds)


def summary_json(summary: dict) -> str:
    def enc(o):
        if isinstance(o, dict):
            return {k: enc(v) for k, v in o.items()}
        if isinstance(o, float):
            return fmt(o)
        return o
    return json.dumps(enc(summary), sort_keys=True, indent=1)


# ------------------------------------------------------------ lemma suite


@dataclass
class LemmaResult:
    p: float
    dim: int
    name: str
    max_margin: float
    samples: int

    @property
    def passed(self) -> bool:
        return self.max_margin <= 1e-8


def _rel(lhs, rhs):
    """Relative violation margin: (lhs - rhs) / max(1, |rhs|)."""
    return float(np.max((lhs - rhs) / np.maximum(1.0, np.abs(rhs))))


def _sample_points(rng, n, dim, p, scale=3.0):
    return random_directions(rng, n, dim, p) * rng.uniform(0.0, scale, size=(n, 1))


def verify_lemmas(norms=(1, 1.5, 2, 3, "inf"), dim: int = 2, samples: int = 100_000, seed: int = 0) -> list:
    """Randomized checks of the normed-space lemmas behind Interp; one LemmaResult per (p, lemma)."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    out = []
    for pi, p in enumerate(norms):
        p = parse_p(p)
        mu = rectangular_constant_upper(p)
        k = space_constants(p).k_upper
        rng = np.random.default_rng(_child_seed(seed, pi, dim))
        n = samples
        res = {}

        x = _sample_points(rng, n, dim, p)
        r = rng.uniform(0.0, 3.0, size=n)
        rx = radial_retraction(x, r, p)
        inside = norm(x, p) <= r
        m_ret = float(np.max(norm(rx, p) - r))
        m_id = float(np.max(np.where(inside[:, None], np.abs(rx - x), 0.0)))
        res["retraction"] = max(m_ret, m_id)

        # metric projection onto a sphere
        y = x + _sample_points(rng, n, dim, p)
        y = np.where((norm(y - x, p) > 0)[:, None], y, x + 1.0)
        u = (y - x) / norm(y - x, p)[:, None]
        yhat = x + r[:, None] * u
        w = x + r[:, None] * random_directions(rng, n, dim, p)
        res["sphere_projection"] = _rel(norm(y - yhat, p), norm(y - w, p))

        # retractions toward a common point from two centers
        a, b, c = (_sample_points(rng, n, dim, p) for _ in range(3))
        xx = b + radial_retraction(a - b, r, p)
        yy = c + radial_retraction(a - c, r, p)
        res["triangle_end_balls"] = _rel(norm(xx - yy, p), norm(b - c, p))

        # rectangular constant on a sphere
        rr = rng.uniform(0.1, 3.0, size=n)
        xs = random_directions(rng, n, dim, p) * rr[:, None]
        ys = random_directions(rng, n, dim, p) * rr[:, None]
        t = 1.0 + 10.0 ** rng.uniform(-4.0, 1.0, size=n)
        lhs = norm(ys - xs, p) + (t - 1.0) * norm(ys, p)
        res["rectangular_sphere"] = _rel(lhs, mu * norm(t[:, None] * ys - xs, p))

        # ball projection
        wc = _sample_points(rng, n, dim, p)
        rb = rng.uniform(0.0, 2.0, size=n)
        yb = _sample_points(rng, n, dim, p, 5.0)
        xb = wc + random_directions(rng, n, dim, p) * (rb + rng.uniform(0.0, 3.0, size=n))[:, None]
        xh = wc + radial_retraction(xb - wc, rb, p)
        yh = wc + radial_retraction(yb - wc, rb, p)
        lhs = norm(yh - xh, p) + norm(yb - yh, p)
        rhs = mu * norm(yb - xb, p) + norm(xb - xh, p)
        res["ball_projection"] = _rel(lhs, rhs)

        # Lipschitz constant of the unit retraction vs the rectangular constant and 2
        lip = estimate_lipschitz_empirical(p, dim, n, _child_seed(seed, pi, dim, 7))
        res["lipschitz_vs_mu"] = (lip - min(2.0, mu)) / 1.0

        # Interp Rob-phase corollaries on synthetic states
        s_prev = _sample_points(rng, n, dim, p)
        s = s_prev + _sample_points(rng, n, dim, p, 1.0)
        a_prev = _sample_points(rng, n, dim, p)
        a_t = a_prev + _sample_points(rng, n, dim, p, 2.0)
        R = norm(a_prev - s_prev, p) * rng.uniform(0.0, 1.0, size=n)
        x_prev = s_prev + radial_retraction(a_prev - s_prev, R, p)
        budget = rng.uniform(0.0, 2.0, size=n)
        yv, zv, xv = interp_else_step(s_prev, s, x_prev, a_t, budget, p)
        res["cor_xz"] = _rel(norm(xv - zv, p), norm(s - s_prev, p))
        res["cor_lipschitz"] = _rel(norm(yv - x_prev, p), k * norm(a_t - a_prev, p))
        res["cor_projection"] = _rel(norm(yv - x_prev, p) + norm(a_t - yv, p),
                                     mu * norm(a_t - a_prev, p) + norm(a_prev - x_prev, p))
        # the same corollaries on states recorded during Interp runs
        rec = {"cor_xz_recorded": 0.0, "cor_lipschitz_recorded": 0.0, "cor_projection_recorded": 0.0}
        for j in range(4):
            inst = gen_random_quadratic_cfc(dim, 30, _child_seed(seed, pi, dim, 11, j), p=p)
            prep = prepare(inst, "greedy", "interp", need_opt=False)
            adv = AdviceSpec("adversarial", scale=3.0 + 3.0 * j, seed=j)
            rep_ = run_experiment(inst, adv, meta="interp", params={"epsilon": 0.5}, prepared=prep)
            for key in ("cor_xz", "cor_lipschitz", "cor_projection"):
                rec[key + "_recorded"] = max(rec[key + "_recorded"], rep_.invariants[key])
        res.update(rec)
        for name, m in res.items():
            out.append(LemmaResult(p, dim, name, float(max(m, 0.0)) if name != "lipschitz_vs_mu" else float(m),
                                   n))
    return out


def lemma_table(results) -> str:
    lines = ["p,dim,lemma,max_margin,passed"]
    for r in results:
        lines.append(f"{format_p(r.p)},{r.dim},{r.name},{fmt(r.max_margin)},{int(r.passed)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------- adversary demo


def adversary_demo(d_list=(16, 64, 256), eps: float = 1.0, delta: float = 1e-3, eps_drift: float = 0.05,
                   stationarity_cap: int = 2000) -> dict:
    """Switch vs Interp on the adaptive switching lower-bound instances."""
    rows = []
    for d in d_list:
        builder = SwitchingLowerBoundBuilder(d, delta, eps_drift, stationarity_cap)
        inst, spec, info = builder.build(lambda a, r: switch_from_epsilon(a, r, eps))
        adv_X = spec.trajectory
        rob = run(ProjectGreedy(), inst)
        adv = trajectory_cost(inst, adv_X)
        sw = run(switch_from_epsilon(Replay(adv_X), Replay(rob.decisions), eps), inst)
        g, dl = optimal_params_interp(eps, math.sqrt(2.0), 1.0)
        ip = run(Interp(Replay(adv_X), Replay(rob.decisions), eps, g, dl), inst)
        rows.append({"d": d, "case": info["case"], "subphases": info["subphases"], "T": inst.T,
                     "C_adv": adv.total, "C_rob": rob.total, "C_switch": sw.total, "C_interp": ip.total,
                     "switch_ratio": sw.total / adv.total, "interp_ratio": ip.total / adv.total,
                     "truncated": bool(info.get("truncated", False)), "instance_hash": inst.digest()})
    sr = [r["switch_ratio"] for r in rows]
    checks = {
        "switch_nondecreasing": all(b >= a - 1e-12 for a, b in zip(sr[:-1], sr[1:])),
        "switch_at_largest_d": sr[-1] >= 2.0,
        "interp_bounded": all(r["interp_ratio"] <= math.sqrt(2.0) + eps + 1e-9 for r in rows),
    }
    return {"rows": rows, "checks": checks, "ok": all(checks.values()), "eps": eps}


def adversary_csv(report) -> str:
    cols = ["d", "case", "subphases", "T", "C_adv", "C_rob", "C_switch", "C_interp", "switch_ratio",
            "interp_ratio", "truncated", "instance_hash"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in report["rows"]:
        w.writerow([fmt(r[c]) for c in cols])
    return buf.getvalue()


# ----------------------------------------------------- standalone checks


def steiner_movement_check(dims=(2, 4), radii=(1.0, 2.0), seeds: int = 3, T: int = 15, samples: int = 100_000,
                           slack_factor: float = 1.05) -> list:
    """Total movement of the Monte-Carlo Steiner path on nested bodies started at the ball center."""
    rows = []
    for d, r, s in itertools.product(dims, radii, range(seeds)):
        for kind in ("ball", "box"):
            inst = gen_nested_bodies(d, T, r, _child_seed(d, int(r * 1000), s), kind=kind, x0_mode="center")
            tr = run(SteinerPointMC(samples, s), inst)
            move = float(tr.movement.sum())
            rows.append({"d": d, "r": r, "seed": s, "kind": kind, "movement": move, "bound": r * d * slack_factor,
                         "ok": move <= r * d * slack_factor, "max_infeasibility": float(tr.infeasibility.max())})
    return rows


def oracle_agreement(n1: int = 50, n2: int = 20, seed: int = 0) -> dict:
    """First-order OPT vs grid DP on random 1D (l2 = |.|) and 2D (l1 movement) quadratic instances."""
    rows = []
    for i in range(n1 + n2):
        d = 1 if i < n1 else 2
        s = _child_seed(seed, d, i)
        inst = gen_random_quadratic_cfc(d, 2 + s % 19, s, p=2.0 if d == 1 else 1.0)
        g = opt_grid_dp(inst)
        f = opt_first_order(inst)
        rel = abs(f.cost - g.cost) / max(g.cost, 1e-12)
        rows.append({"d": d, "T": inst.T, "grid": g.cost, "grid_gap": g.gap_estimate, "first_order": f.cost,
                     "rel": rel, "ok": rel <= (0.01 if d == 1 else 0.03)})
    return {"rows": rows, "ok": all(r["ok"] for r in rows)}


def greedy_check(alphas=(0.5, 1.0, 2.0), seeds: int = 20, T=(5, 30), seed: int = 0) -> list:
    """Greedy-minimizer ratio against the exact 1D OPT on alpha-polyhedral suites."""
    rows = []
    for a, s in itertools.product(alphas, range(seeds)):
        k = _child_seed(seed, int(a * 1000), s)
        inst = gen_alpha_polyhedral(1, T[0] + k % (T[1] - T[0] + 1), a, k)
        g = run(GreedyMinimizer(), inst)
        o = opt_grid_dp(inst)
        bound = max(1.0, 2.0 / a)
        ratio = _ratio(g.total, o.lower)
        rows.append({"alpha": a, "seed": s, "greedy": g.total, "opt_lo": o.lower, "ratio": ratio,
                     "bound": bound, "ok": ratio <= bound * 1.02})
    return rows
