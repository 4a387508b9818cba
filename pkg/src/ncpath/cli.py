"""Command-line harness: ``ncpath {solve,path,experiment,gen,check}``.

Runs are described by a flat ``key = value`` text file::

    # comment
    loss = ls                   # ls | logistic | elliptical
    data = problem.csv          # or the design.* keys below
    response_col = 0
    design.n = 200
    design.d = 500
    design.s_star = 10
    design.kind = equicorrelated_gaussian
    design.rho = 0.9
    design.signal = plusminus
    penalty.kind = mcp
    penalty.b = 3
    path.eta = 0.9
    path.lambda_tgt_c = 0.6     # lambda_tgt = c * sqrt(log d / n) unless path.lambda_tgt is set
    methods = ncpath, lasso_baseline, oracle
    replications = 100

Relative data paths resolve against the config file's directory.  Exit
codes: 0 success, 1 solver failure or non-convergence, 2 configuration
error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import data_gen
from .diagnostics import GroundTruth, oracle_estimator, recovery_metrics
from .errors import ConfigurationError, LineSearchError
from .loss import DesignData, Elliptical, Loss, lambda_zero, make_loss, objective
from .path import PathConfig, build_schedule, default_lambda_tgt, run_path
from .penalty import PenaltySpec, check_regularity
from .prox import TraceRecord, proximal_gradient
from .robust_stats import CatoniConfig, elliptical_cov

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2
METHODS = ("ncpath", "lasso_baseline", "oracle")
FAILURE_BUDGET = 0.10

_DESIGN_KEYS = {
    "design.n": ("n", int),
    "design.d": ("d", int),
    "design.s_star": ("s_star", int),
    "design.kind": ("design", str),
    "design.rho": ("rho", float),
    "design.dof": ("dof", float),
    "design.signal": ("signal", str),
    "design.magnitude": ("magnitude", float),
    "design.noise": ("noise", str),
    "design.noise_sd": ("noise_sd", float),
    "design.noise_dof": ("noise_dof", float),
    "design.noise_variance": ("noise_variance", float),
}
_OTHER_KEYS = {
    "loss", "data", "truth", "response_col", "seed", "replications", "methods",
    "penalty.kind", "penalty.a", "penalty.b",
    "path.eta", "path.lambda_tgt", "path.lambda_tgt_c", "path.lambda0", "path.eps_opt",
    "path.L_min", "path.radius", "path.max_iters", "path.fast_path",
    "solve.lambda", "solve.lambda_frac", "solve.eps",
    "catoni.delta",
}


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{origin}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _DESIGN_KEYS and key not in _OTHER_KEYS:
            raise ConfigurationError(f"{origin}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _num(raw: dict, key: str, cast, default=None):
    if key not in raw:
        return default
    value = raw[key]
    try:
        if cast is bool:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if cast is float and value.lower() in ("inf", "infinity"):
            return math.inf
        return cast(value)
    except ValueError:
        raise ConfigurationError(f"bad value for {key}: {value!r}") from None


@dataclass
class RunConfig:
    loss: str = "ls"
    data_path: str | None = None
    truth_path: str | None = None
    response_col: str = "0"
    design: data_gen.ExperimentDesign | None = None
    seed: int = 0
    penalty: PenaltySpec = field(default_factory=lambda: PenaltySpec.mcp(2.0))
    eta: float = 0.9
    lambda_tgt: float | None = None
    lambda_tgt_c: float = 1.0
    lambda0: float | None = None
    eps_opt: float = 1e-6
    L_min: float = 1e-6
    radius: float = math.inf
    max_iters: int = 10_000
    fast_path: bool = True
    solve_lambda: float | None = None
    solve_lambda_frac: float | None = None
    solve_eps: float = 1e-6
    catoni_delta: float | None = None
    replications: int = 1
    methods: tuple[str, ...] = METHODS

    @classmethod
    def from_mapping(cls, raw: dict[str, str], base_dir: str | os.PathLike = ".") -> "RunConfig":
        cfg = cls()
        cfg.loss = raw.get("loss", "ls").lower()
        if cfg.loss not in ("ls", "logistic", "elliptical"):
            raise ConfigurationError(f"unknown loss {cfg.loss!r}")
        if "data" in raw:
            cfg.data_path = str(Path(base_dir, raw["data"]))
        if "truth" in raw:
            cfg.truth_path = str(Path(base_dir, raw["truth"]))
        cfg.response_col = raw.get("response_col", "0")
        cfg.seed = _num(raw, "seed", int, 0)
        kind = raw.get("penalty.kind", "mcp")
        cfg.penalty = PenaltySpec(kind, a=_num(raw, "penalty.a", float, 2.1), b=_num(raw, "penalty.b", float, 2.0))
        cfg.eta = _num(raw, "path.eta", float, 0.9)
        cfg.lambda_tgt = _num(raw, "path.lambda_tgt", float)
        cfg.lambda_tgt_c = _num(raw, "path.lambda_tgt_c", float, 1.0)
        cfg.lambda0 = _num(raw, "path.lambda0", float)
        cfg.eps_opt = _num(raw, "path.eps_opt", float, 1e-6)
        cfg.L_min = _num(raw, "path.L_min", float, 1e-6)
        cfg.radius = _num(raw, "path.radius", float, math.inf)
        cfg.max_iters = _num(raw, "path.max_iters", int, 10_000)
        cfg.fast_path = _num(raw, "path.fast_path", bool, True)
        cfg.solve_lambda = _num(raw, "solve.lambda", float)
        cfg.solve_lambda_frac = _num(raw, "solve.lambda_frac", float)
        cfg.solve_eps = _num(raw, "solve.eps", float, 1e-6)
        cfg.catoni_delta = _num(raw, "catoni.delta", float)
        cfg.replications = _num(raw, "replications", int, 1)
        if "methods" in raw:
            cfg.methods = tuple(m.strip() for m in raw["methods"].split(",") if m.strip())
        design_args = {}
        for key, (name, cast) in _DESIGN_KEYS.items():
            if key in raw:
                design_args[name] = raw[key] if cast is str else _num(raw, key, cast)
        if design_args:
            missing = [k for k in ("n", "d", "s_star") if k not in design_args]
            if missing:
                raise ConfigurationError(f"generator design needs design.{', design.'.join(missing)}")
            cfg.design = data_gen.ExperimentDesign(seed=cfg.seed, **design_args)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.data_path is None and self.design is None:
            raise ConfigurationError("config needs either 'data' or design.* keys")
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigurationError(f"unknown methods {bad}; choose from {METHODS}")
        if self.data_path is not None and not os.path.isfile(self.data_path):
            raise ConfigurationError(f"data file not found: {self.data_path}")
        if self.truth_path is not None and not os.path.isfile(self.truth_path):
            raise ConfigurationError(f"truth file not found: {self.truth_path}")

    def with_overrides(self, seed: int | None = None, reps: int | None = None) -> "RunConfig":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        if seed is not None:
            kw["seed"] = seed
            if self.design is not None:
                kw["design"] = data_gen.ExperimentDesign(**{**self.design.__dict__, "seed": seed})
        if reps is not None:
            kw["replications"] = reps
        out = RunConfig(**kw)
        out.validate()
        return out


def load_config(path: str | os.PathLike) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    raw = parse_config_text(path.read_text(), str(path))
    return RunConfig.from_mapping(raw, path.parent)


# ---------------------------------------------------------------- problem setup


def _catoni(cfg: RunConfig, Z: np.ndarray) -> CatoniConfig | None:
    return None if cfg.catoni_delta is None else CatoniConfig(cfg.catoni_delta)


def build_problem(cfg: RunConfig, replication: int = 0) -> tuple[Loss, GroundTruth | None]:
    """Model and (when known) ground truth for one replication."""
    truth = data_gen.load_truth_csv(cfg.truth_path) if cfg.truth_path else None
    if cfg.data_path is not None:
        X, y = data_gen.load_matrix_csv(cfg.data_path, cfg.response_col)
        if cfg.loss == "elliptical":
            Z = np.column_stack([y, X])
            return Elliptical(elliptical_cov(Z, _catoni(cfg, Z))), truth
        return make_loss(cfg.loss, DesignData(X, y)), truth
    des = cfg.design
    if cfg.loss == "elliptical":
        Z, truth = data_gen.gen_elliptical_samples(des, replication)
        return Elliptical(elliptical_cov(Z, _catoni(cfg, Z))), truth
    data, truth = data_gen.gen_problem(des, replication)
    if cfg.loss == "logistic":
        # binarize the linear response for a logistic model
        data = DesignData(data.X, (data.y > 0).astype(float))
    return make_loss(cfg.loss, data), truth


def _sample_size(model: Loss, cfg: RunConfig) -> int:
    if hasattr(model, "data"):
        return model.data.n
    if cfg.design is not None:
        return cfg.design.n
    X, _ = data_gen.load_matrix_csv(cfg.data_path, cfg.response_col)
    return X.shape[0]


def path_config(cfg: RunConfig, model: Loss) -> PathConfig:
    lam = cfg.lambda_tgt
    if lam is None:
        lam = default_lambda_tgt(_sample_size(model, cfg), model.d, cfg.lambda_tgt_c)
    return PathConfig(
        lambda_tgt=lam,
        eta=cfg.eta,
        eps_opt=cfg.eps_opt,
        L_min=cfg.L_min,
        radius=cfg.radius,
        max_iters=cfg.max_iters,
        fast_path=cfg.fast_path,
    )


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------- subcommands


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    model, truth = build_problem(cfg)
    lam0 = lambda_zero(model)
    if cfg.solve_lambda is not None:
        lam = cfg.solve_lambda
    elif cfg.solve_lambda_frac is not None:
        lam = cfg.solve_lambda_frac * lam0
    else:
        raise ConfigurationError("solve needs solve.lambda or solve.lambda_frac")
    if model.requires_radius and math.isinf(cfg.radius):
        raise ConfigurationError(f"{model.name} loss requires a finite path.radius")
    st = proximal_gradient(
        model, cfg.penalty, lam, cfg.solve_eps, None, cfg.L_min, cfg.radius,
        L_min=cfg.L_min, max_iters=cfg.max_iters, fast_path=cfg.fast_path,
        stage=1, beta_star=None if truth is None else truth.beta_star,
    )
    out.mkdir(parents=True, exist_ok=True)
    _write_trace(out / "trace.csv", st.trace)
    _write_json(
        out / "solution.json",
        {
            "lambda": lam,
            "lambda0": lam0,
            "eps": cfg.solve_eps,
            "penalty": str(cfg.penalty),
            "omega": st.omega,
            "converged": st.converged,
            "on_boundary": st.on_boundary,
            "iters": st.iters,
            "L": st.L,
            "objective": objective(model, cfg.penalty, lam, st.beta),
            "nnz": int(np.count_nonzero(st.beta)),
            "beta": [float(b) for b in st.beta],
        },
    )
    print(f"lambda={lam:.6g} (lambda0={lam0:.6g}) iters={st.iters} omega={st.omega:.3e} nnz={np.count_nonzero(st.beta)}")
    if not st.converged:
        print(f"error: solver did not reach omega <= {cfg.solve_eps:g} within {cfg.max_iters} iterations", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _write_trace(path: Path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TraceRecord.CSV_FIELDS)
        for rec in records:
            w.writerow(rec.csv_row())


def cmd_path(cfg: RunConfig, out: Path, schedule_only: bool = False) -> int:
    out.mkdir(parents=True, exist_ok=True)
    if schedule_only and cfg.lambda0 is not None and cfg.lambda_tgt is not None:
        # nothing depends on the data, so skip building it
        model, truth = None, None
        pcfg = PathConfig(cfg.lambda_tgt, cfg.eta, cfg.eps_opt, cfg.L_min, cfg.radius, cfg.max_iters, cfg.fast_path)
    else:
        model, truth = build_problem(cfg)
        pcfg = path_config(cfg, model)
    if schedule_only:
        sched = build_schedule(model, pcfg, cfg.lambda0)
        _write_json(
            out / "summary.json",
            {"lambda0": sched.lambda0, "lambda_tgt": pcfg.lambda_tgt, "eta": pcfg.eta, "N": sched.N,
             "lambdas": [float(v) for v in sched.lambdas]},
        )
        print(f"lambda0={sched.lambda0:.6g} lambda_tgt={pcfg.lambda_tgt:.6g} eta={pcfg.eta} N={sched.N}")
        return EXIT_OK
    res = run_path(model, cfg.penalty, pcfg, None if truth is None else truth.beta_star, lambda0=cfg.lambda0)
    res.write_trace_csv(out / "trace.csv")
    summary = res.summary(model, cfg.penalty)
    summary.update(
        lambda_tgt=pcfg.lambda_tgt,
        eta=pcfg.eta,
        penalty=str(cfg.penalty),
        beta=[float(b) for b in res.beta],
    )
    if truth is not None:
        summary["metrics"] = recovery_metrics(res.beta, truth).as_dict()
    _write_json(out / "summary.json", summary)
    print(f"lambda0={res.schedule.lambda0:.6g} N={res.schedule.N} total_iters={res.total_iters} nnz={np.count_nonzero(res.beta)}")
    if not res.all_converged:
        bad = [i + 1 for i, c in enumerate(res.converged) if not c]
        print(f"error: stages {bad} hit the iteration cap", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


_REP_FIELDS = ("replication", "method", "status", "tps", "fps", "l2_error", "exact_support", "converged", "nnz", "iters")


def _run_method(method: str, cfg: RunConfig, model: Loss, truth: GroundTruth, record: bool):
    if method == "oracle":
        beta = oracle_estimator(model, truth.support, cfg.radius)
        return beta, True, 0, None
    spec = cfg.penalty if method == "ncpath" else PenaltySpec.l1()
    res = run_path(model, spec, path_config(cfg, model), truth.beta_star, lambda0=cfg.lambda0, record=record)
    return res.beta, res.all_converged, res.total_iters, res


def run_replication(cfg: RunConfig, rep: int, trace_dir: str | None = None) -> list[dict]:
    """All requested methods on one replication; failures become status rows."""
    rows = []
    try:
        model, truth = build_problem(cfg, rep)
        if truth is None:
            raise ConfigurationError("experiment needs ground truth (generator design or 'truth' file)")
    except ConfigurationError:
        raise
    except Exception as exc:  # noqa: BLE001 - a failed draw is recorded, not fatal
        return [{"replication": rep, "method": m, "status": f"error: {exc}"} for m in cfg.methods]
    for method in cfg.methods:
        row = {"replication": rep, "method": method}
        try:
            beta, conv, iters, res = _run_method(method, cfg, model, truth, record=trace_dir is not None)
        except (LineSearchError, ConfigurationError, np.linalg.LinAlgError, FloatingPointError) as exc:
            row["status"] = f"error: {exc}"
            rows.append(row)
            continue
        m = recovery_metrics(beta, truth)
        row.update(m.as_dict())
        row.update(status="ok" if conv else "not_converged", converged=conv, nnz=int(np.count_nonzero(beta)), iters=iters)
        rows.append(row)
        if trace_dir is not None and res is not None:
            res.write_trace_csv(Path(trace_dir) / f"trace_rep0_{method}.csv")
    return rows


def _rep_worker(args):
    cfg, rep, trace_dir = args
    return run_replication(cfg, rep, trace_dir)


def aggregate(rows: list[dict], methods) -> list[dict]:
    """Mean and standard error per method over successful replications."""
    out = []
    for method in methods:
        ok = [r for r in rows if r["method"] == method and r["status"] == "ok"]
        agg = {"method": method, "n_ok": len(ok)}
        for key in ("tps", "fps", "l2_error", "exact_support"):
            vals = np.array([float(r[key]) for r in ok])
            agg[f"{key}_mean"] = float(vals.mean()) if vals.size else None
            # a single replication has no spread estimate
            agg[f"{key}_se"] = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else None
        out.append(agg)
    return out


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return _fmt(v)
    return str(v)


def cmd_experiment(cfg: RunConfig, out: Path, parallel: int = 1) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics").mkdir(exist_ok=True)
    jobs = [(cfg, rep, str(out) if rep == 0 else None) for rep in range(cfg.replications)]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            per_rep = list(pool.map(_rep_worker, jobs))
    else:
        per_rep = [_rep_worker(j) for j in jobs]
    rows = [r for rep_rows in per_rep for r in rep_rows]
    with open(out / "replications.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_REP_FIELDS)
        for r in rows:
            w.writerow([_cell(r.get(k)) for k in _REP_FIELDS])
    for rep, rep_rows in enumerate(per_rep):
        _write_json(out / "metrics" / f"rep_{rep:04d}.json", rep_rows)
    agg = aggregate(rows, cfg.methods)
    agg_fields = list(agg[0].keys())
    with open(out / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(agg_fields)
        for a in agg:
            w.writerow([_cell(a[k]) for k in agg_fields])
    failed = sum(any(r["status"] != "ok" for r in rep_rows) for rep_rows in per_rep)
    for a in agg:
        print(
            f"{a['method']:>15}: TPS {_short(a['tps_mean'])}  FPS {_short(a['fps_mean'])}  "
            f"l2 {_short(a['l2_error_mean'])}  exact {_short(a['exact_support_mean'])}  (n_ok={a['n_ok']})"
        )
    if failed > FAILURE_BUDGET * cfg.replications:
        print(f"error: {failed}/{cfg.replications} replications failed", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _short(v) -> str:
    return "-" if v is None else f"{v:.4g}"


def cmd_gen(cfg: RunConfig, out: Path) -> int:
    if cfg.design is None:
        raise ConfigurationError("gen needs design.* keys")
    out.mkdir(parents=True, exist_ok=True)
    for rep in range(cfg.replications):
        data, truth = data_gen.gen_problem(cfg.design, rep)
        name = out / (f"problem_{rep:04d}.csv" if cfg.replications > 1 else "problem.csv")
        data_gen.save_problem_csv(name, data, truth)
        print(f"wrote {name}")
    return EXIT_OK


def cmd_check(cfg: RunConfig, out: Path | None = None, seed: int = 0) -> int:
    """Penalty regularity conditions plus finite-difference gradient checks."""
    ok = True
    if cfg.penalty.is_convex:
        print(f"{cfg.penalty}: convex penalty, regularity conditions not applicable")
    else:
        rep = check_regularity(cfg.penalty, [0.05, 0.5, 1.0, 2.0], np.linspace(-10, 10, 10_001))
        for name, res in rep.conditions.items():
            print(f"regularity {name}: {'pass' if res.passed else 'FAIL'} (worst {res.worst:.3e})")
        ok &= rep.passed
    model, _ = build_problem(cfg)
    rng = np.random.default_rng(seed)
    h = 1e-6
    worst = 0.0
    for _ in range(3):
        beta = rng.standard_normal(model.d) * (rng.random(model.d) < 0.5)
        g = model.grad(beta)
        idx = rng.choice(model.d, size=min(model.d, 20), replace=False)
        for j in idx:
            e = np.zeros(model.d)
            e[j] = h
            fd = (model.value(beta + e) - model.value(beta - e)) / (2 * h)
            worst = max(worst, abs(fd - g[j]) / max(1.0, abs(g[j])))
    grad_ok = worst < 1e-5
    print(f"gradient consistency: {'pass' if grad_ok else 'FAIL'} (worst relative error {worst:.3e})")
    ok &= grad_ok
    return EXIT_OK if ok else EXIT_SOLVER


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncpath", description="Approximate path following for sparse nonconvex estimation")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("solve", "single proximal-gradient solve at a fixed lambda"),
        ("path", "full regularization path to lambda_tgt"),
        ("experiment", "Monte Carlo comparison of methods"),
        ("gen", "dump synthetic problems to CSV"),
        ("check", "penalty regularity and gradient self-tests"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="flat key = value config file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--reps", type=int, default=None, help="override the number of replications")
        sp.add_argument("--parallel", type=int, default=1, help="worker processes for replications")
        if name == "path":
            sp.add_argument("--schedule-only", action="store_true", help="report lambda0 and N without solving")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.reps)
        out = Path(args.out)
        if args.parallel < 1:
            raise ConfigurationError("--parallel must be >= 1")
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "path":
            return cmd_path(cfg, out, args.schedule_only)
        if args.command == "experiment":
            return cmd_experiment(cfg, out, args.parallel)
        if args.command == "gen":
            return cmd_gen(cfg, out)
        return cmd_check(cfg, out, cfg.seed)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LineSearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
