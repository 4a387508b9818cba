import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ncpath.cli import RunConfig, build_problem, main, parse_config_text
from ncpath.data_gen import ExperimentDesign, gen_problem, save_problem_csv
from ncpath.errors import ConfigurationError
from ncpath.loss import LeastSquares
from ncpath.penalty import PenaltySpec
from ncpath.prox import suboptimality

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
loss = ls
design.n = 60
design.d = 30
design.s_star = 4
design.rho = 0.5
design.signal = plusminus
seed = 1
penalty.kind = {kind}
solve.lambda_frac = {frac}
solve.eps = 1e-8
path.lambda_tgt_c = 1.0
replications = {reps}
methods = ncpath, lasso_baseline, oracle
"""


def write_cfg(tmp_path, kind="mcp", frac=0.1, reps=3, extra=""):
    p = tmp_path / "run.cfg"
    p.write_text(SMALL.format(kind=kind, frac=frac, reps=reps) + extra)
    return p


def run(*args):
    return main([str(a) for a in args])


class TestConfig:
    def test_parse_flat(self):
        raw = parse_config_text("# comment\nseed = 1\n\nmethods= oracle, ncpath  # trailing\n")
        assert raw == {"seed": "1", "methods": "oracle, ncpath"}

    @pytest.mark.parametrize("text", ["no equals sign\n", "a = 1\na = 2\n", "bogus.key = 3\nloss = ls\n"])
    def test_bad_config(self, text, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text(text)
        assert run("solve", "--config", p, "--out", tmp_path / "o") == 2

    def test_missing_config(self, tmp_path, capsys):
        assert run("solve", "--config", tmp_path / "nope.cfg") == 2

    def test_missing_data_file(self, tmp_path, capsys):
        p = tmp_path / "d.cfg"
        p.write_text("loss = ls\ndata = missing_problem.csv\npenalty.kind = l1\nsolve.lambda = 0.1\n")
        assert run("solve", "--config", p, "--out", tmp_path / "o") == 2
        assert "missing_problem.csv" in capsys.readouterr().err

    def test_invalid_reps(self, tmp_path):
        assert run("experiment", "--config", write_cfg(tmp_path), "--reps", 0, "--out", tmp_path / "o") == 2

    def test_seed_override_changes_problem(self, tmp_path):
        cfg = RunConfig.from_mapping(parse_config_text(SMALL.format(kind="l1", frac=0.1, reps=1)))
        a, _ = build_problem(cfg)
        b, _ = build_problem(cfg.with_overrides(seed=2))
        assert not np.array_equal(a.data.X, b.data.X)


class TestSolve:
    def test_near_lambda0_gives_zero(self, tmp_path):
        out = tmp_path / "o"
        assert run("solve", "--config", write_cfg(tmp_path, "l1", 1.0), "--out", out) == 0
        sol = json.loads((out / "solution.json").read_text())
        assert sol["nnz"] == 0 and not any(sol["beta"])

    def test_tenth_of_lambda0(self, tmp_path):
        out = tmp_path / "o"
        assert run("solve", "--config", write_cfg(tmp_path, "l1", 0.1), "--out", out) == 0
        sol = json.loads((out / "solution.json").read_text())
        assert sol["nnz"] > 0 and sol["omega"] <= sol["eps"]
        cfg = RunConfig.from_mapping(parse_config_text(SMALL.format(kind="l1", frac=0.1, reps=1)))
        model, _ = build_problem(cfg)
        assert suboptimality(model, PenaltySpec.l1(), sol["lambda"], np.array(sol["beta"])) <= sol["eps"]
        rows = list(csv.reader(open(out / "trace.csv")))
        assert rows[0] == ["stage", "iter", "lambda", "L", "phi", "omega", "nnz", "l2_err"]
        assert float(rows[-1][5]) == sol["omega"]

    def test_bundled_config(self, tmp_path):
        assert run("solve", "--config", CONFIGS / "small_ls.cfg", "--out", tmp_path / "o") == 0

    def test_nonconvergence_exit_1_with_artifacts(self, tmp_path):
        out = tmp_path / "o"
        cfg = write_cfg(tmp_path, "mcp", 0.01, extra="path.max_iters = 2\n")
        assert run("solve", "--config", cfg, "--out", out) == 1
        assert (out / "solution.json").exists() and (out / "trace.csv").exists()


class TestPath:
    def test_reported_schedule(self, tmp_path, capsys):
        src = (CONFIGS / "experiment1.cfg").read_text()
        p = tmp_path / "e1.cfg"
        p.write_text(src + "\npath.lambda0 = 2.8516\n")
        out = tmp_path / "o"
        assert run("path", "--config", p, "--out", out, "--schedule-only") == 0
        summ = json.loads((out / "summary.json").read_text())
        assert summ["N"] == 39
        assert "N=39" in capsys.readouterr().out

    def test_path_artifacts_and_certificates(self, tmp_path):
        out = tmp_path / "o"
        assert run("path", "--config", write_cfg(tmp_path, "mcp"), "--out", out) == 0
        summ = json.loads((out / "summary.json").read_text())
        cfg = RunConfig.from_mapping(parse_config_text(SMALL.format(kind="mcp", frac=0.1, reps=1)))
        model, _ = build_problem(cfg)
        beta = np.array(summ["beta"])
        last = summ["stages"][-1]
        assert len(summ["stages"]) == summ["N"]
        # independent re-validation of the reported certificate
        om = suboptimality(model, cfg.penalty, last["lambda"], beta)
        assert om == pytest.approx(last["omega"], rel=1e-12, abs=1e-15) and om <= last["eps"]
        assert all(s["omega"] <= s["eps"] for s in summ["stages"])
        assert "metrics" in summ

    def test_lasso_path(self, tmp_path):
        out = tmp_path / "o"
        assert run("path", "--config", write_cfg(tmp_path, "l1"), "--out", out) == 0
        assert (out / "trace.csv").exists()

    def test_target_above_lambda0(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "mcp", extra="path.lambda_tgt = 1000\n")
        assert run("path", "--config", cfg, "--out", tmp_path / "o") == 2
        assert "target exceeds" in capsys.readouterr().err


class TestExperiment:
    def test_aggregate_and_determinism(self, tmp_path):
        cfg = write_cfg(tmp_path, reps=4)
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("experiment", "--config", cfg, "--out", a) == 0
        assert run("experiment", "--config", cfg, "--out", b) == 0
        for name in ("replications.csv", "aggregate.csv", "trace_rep0_ncpath.csv", "trace_rep0_lasso_baseline.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        agg = {r["method"]: r for r in csv.DictReader(open(a / "aggregate.csv"))}
        assert set(agg) == {"ncpath", "lasso_baseline", "oracle"}
        assert float(agg["oracle"]["fps_mean"]) == 0.0
        reps = list(csv.DictReader(open(a / "replications.csv")))
        assert len(reps) == 12 and all(r["status"] == "ok" for r in reps)
        assert len(list((a / "metrics").glob("rep_*.json"))) == 4

    def test_single_rep_blank_se(self, tmp_path):
        out = tmp_path / "o"
        assert run("experiment", "--config", write_cfg(tmp_path), "--reps", 1, "--out", out) == 0
        for r in csv.DictReader(open(out / "aggregate.csv")):
            assert r["l2_error_se"] == "" and r["fps_se"] == ""

    def test_parallel_matches_serial(self, tmp_path):
        cfg = write_cfg(tmp_path, reps=3)
        assert run("experiment", "--config", cfg, "--out", tmp_path / "s") == 0
        assert run("experiment", "--config", cfg, "--out", tmp_path / "p", "--parallel", 2) == 0
        assert (tmp_path / "s" / "replications.csv").read_bytes() == (tmp_path / "p" / "replications.csv").read_bytes()

    def test_failures_over_budget(self, tmp_path):
        cfg = write_cfg(tmp_path, reps=2, extra="path.max_iters = 1\n")
        assert run("experiment", "--config", cfg, "--out", tmp_path / "o") == 1
        reps = list(csv.DictReader(open(tmp_path / "o" / "replications.csv")))
        assert any(r["status"] == "not_converged" for r in reps)


class TestGenCheck:
    def test_gen_then_solve_from_file(self, tmp_path):
        out = tmp_path / "g"
        assert run("gen", "--config", write_cfg(tmp_path), "--reps", 1, "--out", out) == 0
        prob = out / "problem.csv"
        assert prob.exists() and Path(f"{prob}.beta.csv").exists()
        p = tmp_path / "f.cfg"
        p.write_text(f"loss = ls\ndata = {prob}\ntruth = {prob}.beta.csv\npenalty.kind = scad\nsolve.lambda_frac = 0.2\n")
        assert run("solve", "--config", p, "--out", tmp_path / "s") == 0

    def test_file_data_matches_generator(self, tmp_path):
        data, truth = gen_problem(ExperimentDesign(20, 5, 2, seed=3))
        save_problem_csv(tmp_path / "p.csv", data, truth)
        cfg = RunConfig.from_mapping({"loss": "ls", "data": "p.csv", "penalty.kind": "l1"}, base_dir=tmp_path)
        model, t = build_problem(cfg)
        assert isinstance(model, LeastSquares) and t is None
        np.testing.assert_array_equal(model.data.X, data.X)

    @pytest.mark.parametrize("kind", ["scad", "mcp", "l1"])
    def test_check(self, tmp_path, kind, capsys):
        assert run("check", "--config", write_cfg(tmp_path, kind), "--out", tmp_path / "o") == 0
        assert "FAIL" not in capsys.readouterr().out

    def test_check_elliptical_and_logistic(self, tmp_path):
        for loss, extra in (("elliptical", "catoni.delta = 0.01\n"), ("logistic", "path.radius = 10\n")):
            text = SMALL.format(kind="mcp", frac=0.1, reps=1).replace("loss = ls", f"loss = {loss}") + extra
            p = tmp_path / f"{loss}.cfg"
            p.write_text(text)
            assert run("check", "--config", p, "--out", tmp_path / "o") == 0


def test_module_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "ncpath.cli", "solve", "--config", str(CONFIGS / "small_ls.cfg"), "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert r.returncode == 0, r.stderr


def test_config_errors_are_configuration_errors():
    with pytest.raises(ConfigurationError):
        RunConfig.from_mapping({"loss": "quantile"})
