import csv
import io
import json
import math
from pathlib import Path

import pytest

from chasing.cli import build_parser, main
from chasing.instances import gen_random_quadratic_cfc

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def _write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def _run_cfg(**kw):
    cfg = {"instance": {"generator": "quadratic", "dim": 1, "T": 6, "seed": 0},
           "advice": {"kind": "perfect"}, "meta": "interp", "params": {"epsilon": 0.5}}
    cfg.update(kw)
    return cfg


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_run_minimal(tmp_path, capsys):
    code = main(["run", "--config", _write(tmp_path, "c.json", _run_cfg()), "--out", str(tmp_path / "o")])
    assert code == 0
    rows = _rows(capsys.readouterr().out)
    assert len(rows) == 1 and rows[0]["violated_c"] == "0"
    assert (tmp_path / "o" / "results.csv").exists()
    assert json.loads((tmp_path / "o" / "report.json").read_text())[0]["algorithm"] == "interp"


def test_run_shipped_example(capsys):
    assert main(["run", "--config", str(CONFIGS / "run_example.json")]) == 0


def test_run_bad_epsilon(tmp_path, capsys):
    cfg = _run_cfg(params={"epsilon": 0})
    assert main(["run", "--config", _write(tmp_path, "c.json", cfg)]) == 2
    assert "params.epsilon" in capsys.readouterr().err


def test_run_unknown_key(tmp_path, capsys):
    cfg = _run_cfg(colour="blue")
    assert main(["run", "--config", _write(tmp_path, "c.json", cfg)]) == 2
    assert "colour" in capsys.readouterr().err


def test_run_missing_config(capsys):
    assert main(["run", "--config", "/nonexistent/config.json"]) == 2


def test_run_seed_override(tmp_path, capsys):
    path = _write(tmp_path, "c.json", _run_cfg())
    hashes = []
    for seed in (5, 5, 6):
        assert main(["run", "--config", path, "--seed", str(seed)]) == 0
        hashes.append(_rows(capsys.readouterr().out)[0]["instance_hash"])
    assert hashes[0] == hashes[1] != hashes[2]
    assert hashes[0] == gen_random_quadratic_cfc(1, 6, 5).digest()


def test_sweep_dry_run(capsys):
    assert main(["sweep", "--config", str(CONFIGS / "acceptance.json"), "--dry-run"]) == 0
    assert capsys.readouterr().out.strip() == "runs: 20160"


def test_sweep_cap_exceeded(capsys):
    assert main(["sweep", "--config", str(CONFIGS / "acceptance.json"), "--cap", "100"]) == 2


def test_sweep_small(tmp_path, capsys):
    cfg = {"master_seed": 1, "suites": [{"name": "s", "meta": "interp", "generators": ["quadratic"], "dims": [2],
                                         "seeds": 2, "T": [5, 8], "advice": [{"kind": "constant"}],
                                         "epsilon": [1.0]}]}
    out = tmp_path / "o"
    assert main(["sweep", "--config", _write(tmp_path, "s.json", cfg), "--out", str(out)]) == 0
    assert len(_rows((out / "results.csv").read_text())) == 2
    assert json.loads((out / "summary.json").read_text())["violations"] == 0
    assert len((out / "reports.jsonl").read_text().splitlines()) == 2


def test_verify_lemmas_cli(capsys):
    assert main(["verify-lemmas", "--p", "2,inf", "--samples", "2000"]) == 0
    out = capsys.readouterr().out
    assert "inf,2,rectangular_sphere" in out
    assert main(["verify-lemmas", "--samples", "0"]) == 2
    assert main(["verify-lemmas", "--p", "0.5"]) == 2


def test_adversary_cli(tmp_path, capsys):
    assert main(["adversary", "--d", "16,64", "--out", str(tmp_path)]) == 0
    rows = _rows(capsys.readouterr().out)
    assert [r["d"] for r in rows] == ["16", "64"]
    plot = (tmp_path / "adversary_plot.tsv").read_text().splitlines()
    assert plot[0] == "d\tswitch\tinterp" and len(plot) == 3
    assert main(["adversary", "--d", "15"]) == 2
    assert main(["adversary", "--d", "4"]) == 2


def test_opt_fixture(tmp_path, capsys):
    assert main(["opt", str(CONFIGS / "fixture_1d.json"), "--out", str(tmp_path / "t.json")]) == 0
    out = capsys.readouterr().out
    vals = dict(line.split(": ", 1) for line in out.strip().splitlines())
    assert abs(float(vals["cost"]) - 0.875) <= float(vals["gap"])
    assert Path(vals["trajectory"]).exists()


def test_opt_grid_coarse_2d(tmp_path, capsys):
    path = tmp_path / "i.json"
    gen_random_quadratic_cfc(2, 3, 0).save(path)
    assert main(["opt", str(path), "--method", "grid", "--points", "3"]) == 0
    vals = dict(line.split(": ", 1) for line in capsys.readouterr().out.strip().splitlines())
    assert float(vals["gap"]) > 0.1 * float(vals["cost"])


def test_opt_errors(tmp_path, capsys):
    path = tmp_path / "i.json"
    gen_random_quadratic_cfc(3, 3, 0).save(path)
    assert main(["opt", str(path), "--method", "grid"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["opt", str(bad)]) == 2


def test_help_lists_flags(capsys):
    assert main(["--help"]) == 0
    parser = build_parser()
    sweep_help = [a for a in parser._subparsers._group_actions[0].choices["sweep"].format_help().split()]
    for flag in ("--config", "--seed", "--out", "--workers", "--dry-run", "--cap"):
        assert flag in sweep_help


def test_bad_subcommand():
    assert main(["frobnicate"]) == 2
