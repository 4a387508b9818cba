"""Approximate regularization path following.

Starting from ``lambda0 = ||grad L(0)||_inf`` the regularization level
shrinks geometrically, ``lambda_t = eta^t * lambda0``, with the last level
pinned to the target.  Intermediate stages are solved only to precision
``lambda_t / 4``; the final stage is solved to ``eps_opt``.  Each stage is
warm-started from the previous solution and its line-search coefficient.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import penalty as pen
from .errors import ConfigurationError
from .loss import Loss, lambda_zero, objective
from .prox import StageResult, TraceRecord, proximal_gradient


@dataclass(frozen=True)
class PathConfig:
    lambda_tgt: float
    eta: float = 0.9
    eps_opt: float = 1e-6
    L_min: float = 1e-6
    radius: float = math.inf
    max_iters: int = 10_000
    fast_path: bool = True

    def __post_init__(self):
        if not 0.9 <= self.eta < 1:
            raise ConfigurationError(f"eta must lie in [0.9, 1), got {self.eta}")
        if not self.lambda_tgt > 0:
            raise ConfigurationError(f"lambda_tgt must be positive, got {self.lambda_tgt}")
        if not self.eps_opt > 0:
            raise ConfigurationError("eps_opt must be positive")
        if not self.L_min > 0:
            raise ConfigurationError("L_min must be positive")
        if not self.radius > 0:
            raise ConfigurationError("radius must be positive (use inf for no constraint)")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if self.eps_opt > self.lambda_tgt / 40:
            warnings.warn(
                f"eps_opt={self.eps_opt:g} is not much smaller than lambda_tgt/4={self.lambda_tgt / 4:g}",
                stacklevel=3,
            )


@dataclass(frozen=True)
class PathSchedule:
    lambda0: float
    lambdas: np.ndarray  # lambda_1 .. lambda_N
    eps: np.ndarray

    @property
    def N(self) -> int:
        return int(self.lambdas.size)


def n_stages(lambda0: float, lambda_tgt: float, eta: float) -> int:
    ratio = math.log(lambda0 / lambda_tgt) / math.log(1.0 / eta)
    # absorb round-off when the target sits exactly on the geometric grid
    return max(1, math.ceil(ratio - 1e-9))


def build_schedule(model: Loss | None, cfg: PathConfig, lambda0: float | None = None) -> PathSchedule:
    """Geometric schedule from ``lambda0`` (computed from ``model`` if not given)."""
    if lambda0 is None:
        lambda0 = lambda_zero(model)
    if cfg.lambda_tgt >= lambda0:
        raise ConfigurationError(
            f"target exceeds λ₀: solution path is identically zero (lambda_tgt={cfg.lambda_tgt:g} >= lambda0={lambda0:g})"
        )
    N = n_stages(lambda0, cfg.lambda_tgt, cfg.eta)
    lambdas = lambda0 * cfg.eta ** np.arange(1, N + 1, dtype=float)
    lambdas[-1] = cfg.lambda_tgt
    eps = lambdas / 4
    eps[-1] = cfg.eps_opt
    return PathSchedule(float(lambda0), lambdas, eps)


def default_lambda_tgt(n: int, d: int, C: float = 1.0, beta_l1: float | None = None) -> float:
    """``C sqrt(log d / n)``, times ``||beta||_1`` for the elliptical loss."""
    base = C * math.sqrt(math.log(max(d, 2)) / n)
    return base * beta_l1 if beta_l1 is not None else base


@dataclass
class PathResult:
    schedule: PathSchedule
    stages: list[StageResult] = field(default_factory=list)

    @property
    def lambdas(self) -> np.ndarray:
        return self.schedule.lambdas

    @property
    def betas(self) -> list[np.ndarray]:
        return [s.beta for s in self.stages]

    @property
    def beta(self) -> np.ndarray:
        return self.stages[-1].beta

    @property
    def converged(self) -> list[bool]:
        return [s.converged for s in self.stages]

    @property
    def all_converged(self) -> bool:
        return all(self.converged)

    @property
    def total_iters(self) -> int:
        return sum(s.iters for s in self.stages)

    def trace(self) -> list[TraceRecord]:
        return [r for s in self.stages for r in s.trace]

    def write_trace_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TraceRecord.CSV_FIELDS)
            for rec in self.trace():
                w.writerow(rec.csv_row())

    def summary(self, model: Loss | None = None, spec: pen.PenaltySpec | None = None) -> dict:
        stages = []
        for t, (lam, eps, st) in enumerate(zip(self.schedule.lambdas, self.schedule.eps, self.stages), start=1):
            phi = st.trace[-1].phi if st.trace else (
                objective(model, spec, lam, st.beta) if model is not None else None
            )
            stages.append(
                {
                    "stage": t,
                    "lambda": float(lam),
                    "eps": float(eps),
                    "iters": st.iters,
                    "omega": st.omega,
                    "converged": st.converged,
                    "on_boundary": st.on_boundary,
                    "nnz": int(np.count_nonzero(st.beta)),
                    "phi": phi,
                    "L": st.L,
                }
            )
        return {
            "lambda0": self.schedule.lambda0,
            "N": self.schedule.N,
            "total_iters": self.total_iters,
            "all_converged": self.all_converged,
            "stages": stages,
        }

    def write_summary_json(self, path, model=None, spec=None) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(model, spec), fh, indent=2)


def run_path(
    model: Loss,
    spec: pen.PenaltySpec,
    cfg: PathConfig,
    beta_star=None,
    *,
    lambda0: float | None = None,
    record: bool = True,
) -> PathResult:
    """Solve the whole schedule with warm starts.

    ``beta_star`` only annotates the trace with recovery errors; it never
    changes the iterates.  Non-converged stages are flagged and the path
    continues from their last iterate.
    """
    if model.requires_radius and math.isinf(cfg.radius):
        raise ConfigurationError(f"{model.name} loss requires a finite l2 radius")
    schedule = build_schedule(model, cfg, lambda0)
    result = PathResult(schedule)
    beta = np.zeros(model.d)
    L = cfg.L_min
    for t, (lam, eps) in enumerate(zip(schedule.lambdas, schedule.eps), start=1):
        st = proximal_gradient(
            model,
            spec,
            float(lam),
            float(eps),
            beta,
            L,
            cfg.radius,
            L_min=cfg.L_min,
            max_iters=cfg.max_iters,
            fast_path=cfg.fast_path,
            stage=t,
            beta_star=beta_star,
            record=record,
        )
        result.stages.append(st)
        beta, L = st.beta, st.L
    return result
