"""Acceptance criteria 1-11.  Each test records one PASS/FAIL line (shown in the terminal summary)."""
import math
import time
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest

from acceptance_log import record
from chasing import harness
from chasing.cli import main
from chasing.costs import Quadratic
from chasing.geometry import space_constants
from chasing.instances import Instance
from chasing.meta import (bound_interp, bound_nested_switch, bound_switch, optimal_params_bdinterp, optimal_params_interp,
                          switch_params)
from chasing.offline import opt_grid_dp

ROOT = Path(__file__).resolve().parents[1]
CONFIG = ROOT / "configs" / "acceptance.json"


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    spec = harness.SweepSpec.model_validate_json(CONFIG.read_text())
    res = harness.run_sweep(spec)
    by_suite = defaultdict(list)
    for r in res.reports:
        by_suite[r.extra["suite"]].append(r)
    out = tmp_path_factory.mktemp("acceptance")
    harness.write_csv(res.reports, out / "results.csv")
    return {"res": res, "suites": by_suite, "csv": out / "results.csv", "seconds": res.suite_seconds}


def _per_timestep_max(r, c):
    """Largest violation of C_alg(1,t) <= c * C_adv(1,t) + 1e-9 (1 + C_adv(1,t)), recomputed from the series."""
    alg = np.array(r.series["alg"])
    adv = np.array(r.series["adv"])
    return float(np.max(alg - c * adv - 1e-9 * (1 + adv)))


def test_criterion_1_interp_consistency(sweep):
    reports = sweep["suites"]["interp_l2"]
    worst = -math.inf
    params_ok = True
    for r in reports:
        eps = r.params["epsilon"]
        g, d = optimal_params_interp(eps, math.sqrt(2), 1.0)
        params_ok &= (r.params["gamma"], r.params["delta"]) == (g, d)
        worst = max(worst, _per_timestep_max(r, math.sqrt(2) + eps))
    n_inst = len({r.instance_hash for r in reports})
    kinds = {r.advice["kind"] for r in reports}
    secs = sweep["seconds"]["interp_l2"]
    ok = (worst <= 0 and params_ok and n_inst == 200 and kinds == {"perfect", "noisy", "constant", "adversarial"}
          and not any(r.violated for r in reports) and secs <= 30)
    record(1, ok, f"{len(reports)} runs on {n_inst} instances, max per-timestep excess {worst:.3g}, {secs:.1f} s")
    assert ok


def test_criterion_2_interp_robustness(sweep):
    reports = sweep["suites"]["interp_l2"] + sweep["suites"]["interp_lp"]
    worst = -math.inf
    inv = 0.0
    for r in reports:
        sc = space_constants(r.p)
        if r.p == 2:
            assert (sc.mu_upper, sc.k_upper) == (pytest.approx(math.sqrt(2), abs=1e-15), 1.0)
        eps, g, d = r.params["epsilon"], r.params["gamma"], r.params["delta"]
        br = 1 + sc.k_upper / g + (sc.mu_upper + eps + 1 + sc.k_upper / g) / d
        assert br == pytest.approx(bound_interp(eps, g, d, sc.mu_upper, sc.k_upper)[1], rel=1e-14)
        worst = max(worst, r.C_alg / r.C_rob - br - 1e-9 * (1 + 1 / r.C_rob))
        inv = max(inv, max(r.invariants.values()))
    norms = sorted({harness.fmt(r.p) for r in reports})
    ok = worst <= 0 and inv == 0 and not any(r.violated for r in reports)
    record(2, ok, f"{len(reports)} runs, p in {norms}, max robustness excess {worst:.3g}, invariant margin {inv:.3g}")
    assert ok


def test_criterion_3_bdinterp(sweep):
    reports = sweep["suites"]["bdinterp_box"]
    wc = wr = -math.inf
    rob_ok = True
    for r in reports:
        eps, D = r.params["epsilon"], r.measured_D
        g, d = optimal_params_bdinterp(eps, D)
        assert (g, d) == (r.params["gamma"], r.params["delta"])
        wc = max(wc, _per_timestep_max(r, 1 + eps))
        br = D + D / g + (1 + eps) / d
        wr = max(wr, r.C_alg - br * r.C_rob - 1e-9 * (1 + r.C_rob))
        rob_ok &= r.C_rob >= 1
    secs = sweep["seconds"]["bdinterp_box"]
    ok = wc <= 0 and wr <= 0 and rob_ok and not any(r.violated for r in reports) and secs <= 30
    record(3, ok, f"{len(reports)} runs, consistency excess {wc:.3g}, robustness excess {wr:.3g}, {secs:.1f} s")
    assert ok


def test_criterion_4_switch(sweep):
    reports = sweep["suites"]["switch_phases"]
    wc = wr = -math.inf
    for r in reports:
        _, b, dsw = switch_params(r.params["epsilon"])
        c, rr = bound_switch(b, dsw)
        wc = max(wc, r.C_alg / r.C_adv - c - 1e-9 * (1 + 1 / r.C_adv))
        wr = max(wr, r.C_alg / r.C_rob - rr - 1e-9 * (1 + 1 / r.C_rob))
    min_phase = min(r.extra["max_phase"] for r in reports)
    eps = sorted({r.params["epsilon"] for r in reports})
    ok = wc <= 0 and wr <= 0 and min_phase >= 3 and eps == [0.25, 1.0] and not any(r.violated for r in reports)
    record(4, ok, f"{len(reports)} runs, every run crosses >= {min_phase} budgets, "
                  f"excess c {wc:.3g} r {wr:.3g}")
    assert ok


def test_criterion_5_nested_switch(sweep):
    reports = sweep["suites"]["nested_switch"]
    wc = wr = -math.inf
    for r in reports:
        eps, rad = r.params["epsilon"], r.params["r"]
        c, rr = bound_nested_switch(eps, rad, r.d)
        wc = max(wc, r.C_alg - (c + 1e-6) * r.C_adv)
        wr = max(wr, r.C_alg - rr * 1.05 * r.C_opt_lo - 1e-9 * (1 + r.C_opt_lo))
    opt_ok = all(r.C_opt_lo >= 1 for r in reports)
    switched = sum("rob" in r.phase_log["phase"] for r in reports)
    ok = wc <= 0 and wr <= 0 and opt_ok and not any(r.violated for r in reports)
    record(5, ok, f"{len(reports)} runs ({switched} switched to Rob), excess c {wc:.3g} r {wr:.3g}")
    assert ok


def test_criterion_6_steiner_movement():
    rows = harness.steiner_movement_check(dims=(2, 4), radii=(1.0, 2.0), seeds=3, samples=100_000)
    worst = max(r["movement"] / (r["r"] * r["d"]) for r in rows)
    ok = all(r["movement"] <= r["r"] * r["d"] * 1.05 for r in rows) and all(
        r["max_infeasibility"] <= 1e-9 for r in rows)
    record(6, ok, f"{len(rows)} paths, max movement / (r d) = {worst:.3f}")
    assert ok


def test_criterion_7_adversary():
    t0 = time.perf_counter()
    rep = harness.adversary_demo((16, 64, 256), 1.0, 1e-3)
    secs = time.perf_counter() - t0
    sw = [r["switch_ratio"] for r in rep["rows"]]
    ip = [r["interp_ratio"] for r in rep["rows"]]
    ok = (all(b >= a for a, b in zip(sw, sw[1:])) and sw[-1] >= 2.0
          and all(x <= math.sqrt(2) + 1.0 + 1e-9 for x in ip) and secs <= 120)
    record(7, ok, "switch " + ", ".join(f"{x:.3f}" for x in sw) + "; interp " + ", ".join(f"{x:.3f}" for x in ip)
           + f"; {secs:.1f} s")
    assert ok


def test_criterion_8_lemmas():
    t0 = time.perf_counter()
    res = []
    for d in (2, 8, 16):
        res.extend(harness.verify_lemmas((1, 1.5, 2, 3, "inf"), d, 100_000, 0))
    secs = time.perf_counter() - t0
    margins = [r.max_margin for r in res if r.name != "lipschitz_vs_mu"]
    lip_ok = all(r.max_margin <= 1e-9 for r in res if r.name == "lipschitz_vs_mu")
    ok = max(margins) <= 1e-8 and lip_ok and secs <= 60
    record(8, ok, f"{len(res)} lemma checks, max margin {max(margins):.3g}, Lipschitz within bound: {lip_ok}, "
                  f"{secs:.1f} s")
    assert ok


def test_criterion_9_oracles():
    rep = harness.oracle_agreement(50, 20, 0)
    fixture = Instance([0.0], [Quadratic(1.0, [1.0]), Quadratic(1.0, [1.0])])
    g = opt_grid_dp(fixture, box=([-2.0], [2.0]), points_per_dim=4001)
    fx_ok = abs(g.cost - 0.875) <= g.gap_estimate
    r1 = max(r["rel"] for r in rep["rows"] if r["d"] == 1)
    r2 = max(r["rel"] for r in rep["rows"] if r["d"] == 2)
    ok = r1 <= 0.01 and r2 <= 0.03 and fx_ok and all(r["T"] <= 20 for r in rep["rows"])
    record(9, ok, f"1D max rel {r1:.2g}, 2D max rel {r2:.2g}, fixture {g.cost:.6f} (gap {g.gap_estimate:.2g})")
    assert ok


def test_criterion_10_greedy():
    rows = harness.greedy_check((0.5, 1.0, 2.0), 20)
    worst = max(r["ratio"] / r["bound"] for r in rows)
    ok = all(r["ratio"] <= r["bound"] * 1.02 for r in rows)
    record(10, ok, f"{len(rows)} instances, max ratio / max(1, 2/alpha) = {worst:.4f}")
    assert ok


def test_criterion_11_determinism(sweep, tmp_path):
    code = main(["sweep", "--config", str(CONFIG), "--out", str(tmp_path)])
    same = (tmp_path / "results.csv").read_bytes() == sweep["csv"].read_bytes()
    summary = harness.summary_json(sweep["res"].summary) + "\n"
    same_summary = (tmp_path / "summary.json").read_text() == summary
    ok = code == 0 and same and same_summary
    record(11, ok, f"re-run CSV byte-identical: {same}, summary identical: {same_summary}, exit {code}")
    assert ok
