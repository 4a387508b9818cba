"""Evaluation tools: oracle fits, support recovery, sparse eigenvalues, gap traces."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import penalty as pen
from .errors import ConfigurationError
from .loss import LeastSquares, Loss, objective


@dataclass(frozen=True)
class GroundTruth:
    beta_star: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta_star, dtype=float).ravel()
        b.setflags(write=False)
        object.__setattr__(self, "beta_star", b)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta_star)

    @property
    def s_star(self) -> int:
        return int(self.support.size)

    @property
    def d(self) -> int:
        return self.beta_star.size


@dataclass(frozen=True)
class RecoveryMetrics:
    tps: int
    fps: int
    l2_error: float
    exact_support: bool

    def as_dict(self) -> dict:
        return {"tps": self.tps, "fps": self.fps, "l2_error": self.l2_error, "exact_support": self.exact_support}


def recovery_metrics(beta_hat, truth: GroundTruth, zero_tol: float = 1e-8) -> RecoveryMetrics:
    beta_hat = np.asarray(beta_hat, dtype=float).ravel()
    if beta_hat.size != truth.d:
        raise ConfigurationError("estimate and truth differ in length")
    on = np.zeros(truth.d, dtype=bool)
    on[truth.support] = True
    active = np.abs(beta_hat) > zero_tol
    tps = int(np.count_nonzero(active & on))
    fps = int(np.count_nonzero(active & ~on))
    err = float(np.linalg.norm(beta_hat - truth.beta_star))
    return RecoveryMetrics(tps, fps, err, tps == truth.s_star and fps == 0)


def oracle_estimator(
    model: Loss,
    support,
    radius: float = math.inf,
    *,
    tol: float = 1e-8,
    max_iters: int = 100_000,
) -> np.ndarray:
    """Unpenalized minimizer of the loss with coordinates outside ``support`` fixed at 0.

    Least squares is solved from the restricted normal equations; other
    losses use projected gradient descent with backtracking on the support.
    """
    S = np.unique(np.asarray(support, dtype=int).ravel())
    if S.size == 0:
        raise ConfigurationError("oracle support must be non-empty")
    if model.requires_radius and math.isinf(radius):
        raise ConfigurationError(f"{model.name} oracle requires a finite radius")
    d = model.d
    beta = np.zeros(d)
    if isinstance(model, LeastSquares) and math.isinf(radius):
        XS = model.data.X[:, S]
        G = XS.T @ XS
        rank = np.linalg.matrix_rank(G)
        if rank < S.size:
            raise ConfigurationError(
                f"restricted Gram matrix is rank deficient (rank {rank} < support size {S.size})"
            )
        beta[S] = np.linalg.solve(G, XS.T @ model.data.y)
        return beta

    def proj(b):
        if math.isinf(radius):
            return b
        nrm = np.linalg.norm(b)
        return b * (radius / nrm) if nrm > radius else b

    L = 1.0
    f = model.value(beta)
    for _ in range(max_iters):
        g = np.zeros(d)
        g[S] = model.grad(beta)[S]
        while True:
            cand = proj(beta - g / L)
            step = cand - beta
            fc = model.value(cand)
            if fc <= f + g @ step + 0.5 * L * (step @ step) or L > 1e16:
                break
            L *= 2
        # gradient mapping norm: reduces to ||g_S|| in the interior
        if np.linalg.norm(step) * L <= tol:
            beta = cand
            break
        beta, f = cand, fc
        L = max(L / 2, 1e-12)
    return beta


@dataclass
class SparseEigReport:
    s: int
    rho_plus_lb: float
    rho_minus_ub: float
    kappa_estimate: float | None
    method: str
    n_supports: int
    per_probe: list[tuple[float, float]] = field(default_factory=list)


def sparse_eig_probe(
    model: Loss,
    beta_probes,
    s: int,
    budget: int = 5000,
    *,
    spec: pen.PenaltySpec | None = None,
    support=None,
    rng: np.random.Generator | None = None,
) -> SparseEigReport:
    """Extreme eigenvalues of s x s principal Hessian blocks at each probe point.

    Exhaustive over all supports when there are at most ``budget`` of them,
    otherwise ``budget`` random supports (plus ``support`` if given), which
    bounds the sparse eigenvalues from inside.  Each probe is reported
    separately in ``per_probe``; the headline numbers are the extremes.
    """
    d = model.d
    if not 1 <= s <= d:
        raise ConfigurationError(f"s must lie in [1, d], got {s}")
    probes = [np.asarray(b, dtype=float).ravel() for b in beta_probes] or [np.zeros(d)]
    total = math.comb(d, s)
    if total <= budget:
        supports = [np.array(c) for c in itertools.combinations(range(d), s)]
        method = "exhaustive"
    else:
        rng = rng or np.random.default_rng(0)
        supports = [np.sort(rng.choice(d, size=s, replace=False)) for _ in range(budget)]
        if support is not None:
            base = list(np.asarray(support, dtype=int).ravel())[:s]
            extra = [j for j in range(d) if j not in base][: s - len(base)]
            supports.append(np.array(sorted(base + extra)))
        method = "sampled"
    per_probe = []
    for b in probes:
        H = model.hessian(b)
        hi, lo = -np.inf, np.inf
        for S in supports:
            w = np.linalg.eigvalsh(H[np.ix_(S, S)])
            hi = max(hi, w[-1])
            lo = min(lo, w[0])
        per_probe.append((float(hi), float(lo)))
    rho_plus = max(p[0] for p in per_probe)
    rho_minus = min(p[1] for p in per_probe)
    kappa = None
    if spec is not None:
        zm, zp = spec.concavity_params()
        if rho_minus > zm:
            kappa = (rho_plus - zp) / (rho_minus - zm)
    return SparseEigReport(s, rho_plus, rho_minus, kappa, method, len(supports), per_probe)


@dataclass
class GapTrace:
    stages: np.ndarray
    gaps: np.ndarray
    slope: float | None
    intercept: float | None
    r2: float | None


def log_linear_fit(x, y) -> tuple[float | None, float | None, float | None]:
    """Least-squares line through ``(x, log y)`` for positive ``y``; (slope, intercept, R^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > 0
    x, ly = x[keep], np.log(y[keep])
    if x.size < 2 or np.ptp(x) == 0:
        return None, None, None
    slope, intercept = np.polyfit(x, ly, 1)
    resid = ly - (slope * x + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def objective_gap_trace(path_result, model: Loss, spec: pen.PenaltySpec, lambda_tgt: float | None = None, start: int = 0) -> GapTrace:
    """Gaps ``phi_tgt(beta_t) - phi_tgt(beta_N)`` for stages ``t = 1..N-1``.

    A single-stage path gives an empty trace.  The log-linear fit uses
    stages ``t >= start``.
    """
    if lambda_tgt is None:
        lambda_tgt = float(path_result.lambdas[-1])
    betas = path_result.betas
    N = len(betas)
    ref = objective(model, spec, lambda_tgt, betas[-1])
    ts = np.arange(1, N)
    gaps = np.array([objective(model, spec, lambda_tgt, betas[t - 1]) - ref for t in ts])
    sel = ts >= start
    slope, intercept, r2 = log_linear_fit(ts[sel], gaps[sel])
    return GapTrace(ts, gaps, slope, intercept, r2)


def stage_gap_fits(stage_result) -> tuple[float | None, float | None, int]:
    """Fit of log(phi(beta^k) - phi(beta_final)) vs k within one stage; (slope, R^2, points)."""
    phis = np.array([r.phi for r in stage_result.trace])
    ks = np.array([r.iter for r in stage_result.trace])
    gaps = phis[:-1] - phis[-1]
    slope, _, r2 = log_linear_fit(ks[:-1], gaps)
    return slope, r2, int(np.count_nonzero(gaps > 0))
