"""Command-line entry point: run, sweep, verify-lemmas, adversary, opt."""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import harness
from .geometry import parse_p
from .instances import AdviceSpec, Instance, gen_alpha_polyhedral, gen_nested_bodies, gen_random_quadratic_cfc
from .offline import opt_first_order, opt_for_ncbc, opt_grid_dp

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


class InstanceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    file: Optional[str] = None
    generator: Optional[Literal["quadratic", "alpha_polyhedral", "nested"]] = None
    dim: int = Field(1, ge=1)
    T: int = Field(10, ge=1)
    p: Union[float, Literal["inf"]] = 2.0
    seed: int = 0
    alpha: float = Field(1.0, gt=0)
    radius: float = Field(1.0, gt=0)
    x0_mode: Literal["interior", "boundary", "center"] = "boundary"
    center_box: float = Field(1.0, gt=0)

    @field_validator("p")
    @classmethod
    def _p(cls, v):
        return parse_p(v)

    def build(self) -> Instance:
        if self.file is not None:
            return Instance.load(self.file)
        if self.generator == "quadratic":
            return gen_random_quadratic_cfc(self.dim, self.T, self.seed, center_box=self.center_box, p=self.p)
        if self.generator == "alpha_polyhedral":
            return gen_alpha_polyhedral(self.dim, self.T, self.alpha, self.seed, center_box=self.center_box,
                                        p=self.p)
        if self.generator == "nested":
            return gen_nested_bodies(self.dim, self.T, self.radius, self.seed, p=self.p, x0_mode=self.x0_mode)
        raise ValueError("instance needs either 'file' or 'generator'")


class MetaParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    epsilon: float = Field(gt=0)
    gamma: Optional[float] = Field(None, gt=0)
    delta: Optional[float] = Field(None, gt=0)
    r: Optional[float] = Field(None, gt=0)


class RunConfig(BaseModel):
    """A single experiment."""

    model_config = ConfigDict(extra="forbid")
    instance: InstanceConfig
    advice: harness.AdviceConfig
    rob: Literal["greedy", "project_greedy", "steiner_mc", "stay_put"] = "greedy"
    meta: Literal["interp", "bdinterp", "switch", "nested_switch", "follow_advice"] = "interp"
    params: MetaParams
    rob_samples: int = Field(100_000, ge=1)
    out: Optional[str] = None


def _field_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"])
        lines.append(f"{loc}: {e['msg']}")
    return "\n".join(lines)


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e


def _validate(model, data):
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise ConfigError("invalid config:\n" + _field_errors(e)) from e


def _out_dir(args, cfg_out) -> Optional[Path]:
    out = args.out if args.out is not None else cfg_out
    if out is None:
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ------------------------------------------------------------------ commands


def cmd_run(args) -> int:
    data = _load_json(args.config)
    if args.seed is not None:
        data.setdefault("instance", {})["seed"] = args.seed
    cfg = _validate(RunConfig, data)
    try:
        inst = cfg.instance.build()
    except (ValueError, OSError, KeyError) as e:
        raise ConfigError(f"instance: {e}") from e
    a = cfg.advice
    spec = AdviceSpec(a.kind, sigma=a.sigma, scale=a.scale, seed=cfg.instance.seed)
    params = {k: v for k, v in cfg.params.model_dump().items() if v is not None}
    try:
        rep = harness.run_experiment(inst, spec, cfg.rob, cfg.meta, params, seed=cfg.instance.seed,
                                     rob_samples=cfg.rob_samples)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    csv_text = harness.write_csv([rep])
    out = _out_dir(args, cfg.out)
    if out is not None:
        (out / "results.csv").write_text(csv_text)
        harness.write_json_reports([rep], out / "report.json")
    sys.stdout.write(csv_text)
    return EXIT_VIOLATION if rep.violated else EXIT_OK


def cmd_sweep(args) -> int:
    data = _load_json(args.config)
    if args.seed is not None:
        data["master_seed"] = args.seed
    if args.workers is not None:
        data["workers"] = args.workers
    if args.cap is not None:
        data["cap"] = args.cap
    out_cfg = data.pop("out", None)
    spec = _validate(harness.SweepSpec, data)
    n = spec.run_count()
    if n > spec.cap:
        raise ConfigError(f"sweep has {n} runs, above the cap of {spec.cap}")
    if args.dry_run:
        print(f"runs: {n}")
        return EXIT_OK
    res = harness.run_sweep(spec)
    out = _out_dir(args, out_cfg)
    csv_text = harness.write_csv(res.reports)
    summary = harness.summary_json(res.summary)
    if out is not None:
        (out / "results.csv").write_text(csv_text)
        (out / "summary.json").write_text(summary + "\n")
        with open(out / "reports.jsonl", "w") as fh:
            for r in res.reports:
                fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    print(f"runs: {res.summary['runs']}  violations: {res.violations}")
    for name, secs in res.suite_seconds.items():
        print(f"  {name}: {secs:.1f} s", file=sys.stderr)
    return EXIT_VIOLATION if res.violations else EXIT_OK


def _list_arg(text, conv):
    try:
        return [conv(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(str(e)) from e


def cmd_verify_lemmas(args) -> int:
    norms = _list_arg(args.p, parse_p)
    dims = _list_arg(args.dim, int)
    if args.samples < 1:
        raise ConfigError("--samples must be >= 1")
    if not norms or not dims or any(d < 1 for d in dims):
        raise ConfigError("--p and --dim need at least one valid entry")
    results = []
    for d in dims:
        results.extend(harness.verify_lemmas(norms, d, args.samples, args.seed))
    table = harness.lemma_table(results)
    out = _out_dir(args, None)
    if out is not None:
        (out / "lemmas.csv").write_text(table)
    sys.stdout.write(table)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VIOLATION


def cmd_adversary(args) -> int:
    ds = _list_arg(args.d, int)
    if not ds:
        raise ConfigError("--d needs at least one dimension")
    for d in ds:
        s = math.isqrt(d) if d > 0 else 0
        if d < 9 or s * s != d or 3 * s > d:
            raise ConfigError(f"--d entries must be perfect squares >= 9, got {d}")
    if not (args.eps > 0 and args.delta > 0):
        raise ConfigError("--eps and --delta must be positive")
    rep = harness.adversary_demo(ds, args.eps, args.delta)
    table = harness.adversary_csv(rep)
    plot = "d\tswitch\tinterp\n" + "".join(
        f"{r['d']}\t{harness.fmt(r['switch_ratio'])}\t{harness.fmt(r['interp_ratio'])}\n" for r in rep["rows"])
    out = _out_dir(args, None)
    if out is not None:
        (out / "adversary.csv").write_text(table)
        (out / "adversary_plot.tsv").write_text(plot)
    sys.stdout.write(table)
    for k, v in rep["checks"].items():
        print(f"{k}: {'ok' if v else 'FAILED'}", file=sys.stderr)
    return EXIT_OK if rep["ok"] else EXIT_VIOLATION


def cmd_opt(args) -> int:
    try:
        inst = Instance.load(args.instance)
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"cannot parse instance {args.instance}: {e}") from e
    try:
        if args.method == "grid":
            res = opt_grid_dp(inst, points_per_dim=args.points)
        elif args.method == "first_order":
            res = opt_first_order(inst, iters=args.iters)
        elif inst.bodies is not None:
            res = opt_for_ncbc(inst, iters=args.iters)
        elif inst.dim <= 2:
            res = opt_grid_dp(inst, points_per_dim=args.points)
        else:
            res = opt_first_order(inst, iters=args.iters)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    print(f"method: {res.method}")
    print(f"cost: {harness.fmt(res.cost)}")
    print(f"gap: {harness.fmt(res.gap_estimate)}")
    print(f"lower: {harness.fmt(res.lower)}")
    if args.out is not None:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(res.to_dict(), sort_keys=True) + "\n")
        print(f"trajectory: {path}")
    else:
        print("trajectory: " + json.dumps(np.asarray(res.trajectory).tolist()))
    return EXIT_OK


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chasing", description="Learning-augmented convex function chasing experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a JSON config")
    p.add_argument("--config", required=True, help="run config (JSON)")
    p.add_argument("--seed", type=int, help="override the instance seed")
    p.add_argument("--out", help="output directory for results.csv and report.json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a sweep of suites from a JSON config")
    p.add_argument("--config", required=True, help="sweep config (JSON)")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", help="output directory for results.csv, summary.json, reports.jsonl")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--cap", type=int, help="maximum number of runs")
    p.add_argument("--dry-run", action="store_true", help="print the run count and exit")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-lemmas", help="randomized checks of the geometric lemmas")
    p.add_argument("--p", default="1,1.5,2,3,inf", help="comma-separated norms (inf allowed)")
    p.add_argument("--dim", default="2", help="comma-separated dimensions")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory for lemmas.csv")
    p.set_defaults(func=cmd_verify_lemmas)

    p = sub.add_parser("adversary", help="switching lower-bound demo: Switch vs Interp")
    p.add_argument("--d", default="16,64,256", help="comma-separated perfect-square dimensions")
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--out", help="output directory for adversary.csv and adversary_plot.tsv")
    p.set_defaults(func=cmd_adversary)

    p = sub.add_parser("opt", help="offline optimum of an instance file")
    p.add_argument("instance", help="instance file (JSON)")
    p.add_argument("--method", choices=("auto", "grid", "first_order"), default="auto")
    p.add_argument("--points", type=int, help="grid points per dimension")
    p.add_argument("--iters", type=int, default=400, help="first-order iterations per stage")
    p.add_argument("--out", help="write the optimal trajectory to this JSON file")
    p.set_defaults(func=cmd_opt)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
