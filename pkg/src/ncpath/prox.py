"""Proximal-gradient solver for one regularization level.

The surrogate loss ``L + Q_lam`` is linearized around the previous iterate
and the l1 term is kept exact, so every update is a soft-threshold of a
gradient step (rescaled onto an l2 ball when a radius is set).  The
quadratic coefficient is found by doubling until the model majorizes the
objective at the new point, and iteration stops once the subgradient
residual ``omega`` drops below the stage tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import penalty as pen
from .errors import ConfigurationError, LineSearchError
from .loss import Loss, surrogate_grad, surrogate_value

DESCENT_TOL = 1e-10  # upper bound on the line-search acceptance slack
MAX_DOUBLINGS = 60


@dataclass
class TraceRecord:
    stage: int
    iter: int
    lam: float
    L: float
    phi: float
    omega: float
    nnz: int
    l2_err: float | None = None
    step_sq: float = 0.0  # ||beta^k - beta^{k-1}||^2, 0 for the starting point

    CSV_FIELDS = ("stage", "iter", "lambda", "L", "phi", "omega", "nnz", "l2_err")

    def csv_row(self) -> list[str]:
        vals = (self.stage, self.iter, self.lam, self.L, self.phi, self.omega, self.nnz, self.l2_err)
        return [_fmt(v) for v in vals]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass
class StageResult:
    beta: np.ndarray
    L: float
    iters: int
    omega: float
    converged: bool
    on_boundary: bool = False
    line_search_steps: int = 0
    trace: list[TraceRecord] = field(default_factory=list)


def quad_approx(model: Loss, spec: pen.PenaltySpec, lam: float, L: float, beta_ref, beta) -> float:
    """Local model of the objective around ``beta_ref`` with curvature ``L``."""
    beta_ref = np.asarray(beta_ref, dtype=float).ravel()
    beta = np.asarray(beta, dtype=float).ravel()
    diff = beta - beta_ref
    return (
        surrogate_value(model, spec, lam, beta_ref)
        + float(surrogate_grad(model, spec, lam, beta_ref) @ diff)
        + 0.5 * L * float(diff @ diff)
        + lam * float(np.abs(beta).sum())
    )


def soft_threshold(x: np.ndarray, thresh: float) -> np.ndarray:
    # ties at the threshold go to zero
    return np.where(np.abs(x) <= thresh, 0.0, np.sign(x) * (np.abs(x) - thresh))


def project_ball(beta: np.ndarray, radius: float) -> np.ndarray:
    if math.isinf(radius):
        return beta
    norm = float(np.linalg.norm(beta))
    if norm >= radius and norm > 0:
        return beta * (radius / norm)
    return beta


def _prox_from_grad(beta_ref, grad, lam, L, radius):
    return project_ball(soft_threshold(beta_ref - grad / L, lam / L), radius)


def prox_step(model: Loss, spec: pen.PenaltySpec, lam: float, L: float, beta_ref, radius: float = math.inf) -> np.ndarray:
    """Exact minimizer of :func:`quad_approx` over the ball of given radius."""
    if not L > 0:
        raise ConfigurationError(f"L must be positive, got {L}")
    beta_ref = np.asarray(beta_ref, dtype=float).ravel()
    g = surrogate_grad(model, spec, lam, beta_ref)
    if not np.all(np.isfinite(g)):
        raise ConfigurationError("non-finite surrogate gradient")
    return _prox_from_grad(beta_ref, g, lam, L, radius)


def omega_from_grad(grad: np.ndarray, beta: np.ndarray, lam: float) -> float:
    """``min_xi ||grad + lam * xi||_inf`` over subgradients ``xi`` of ``||beta||_1``."""
    nz = beta != 0
    res = np.where(nz, np.abs(grad + lam * np.sign(beta)), np.maximum(np.abs(grad) - lam, 0.0))
    return float(res.max()) if res.size else 0.0


def _on_boundary(beta, radius) -> bool:
    return not math.isinf(radius) and float(np.linalg.norm(beta)) >= radius * (1 - 1e-12)


def suboptimality(model: Loss, spec: pen.PenaltySpec, lam: float, beta, radius: float = math.inf) -> float:
    """Subgradient residual of ``beta``.

    Uses the interior formula; on the ball boundary the same value is
    returned (see :attr:`StageResult.on_boundary` for the flag).
    """
    beta = np.asarray(beta, dtype=float).ravel()
    return omega_from_grad(surrogate_grad(model, spec, lam, beta), beta, lam)


class _Evaluator:
    """Binds model, penalty and lambda for the surrogate evaluations."""

    def __init__(self, model, spec, lam):
        self.model, self.spec, self.lam = model, spec, lam

    def sval(self, beta):
        return surrogate_value(self.model, self.spec, self.lam, beta)

    def sgrad(self, beta):
        return surrogate_grad(self.model, self.spec, self.lam, beta)


def _line_search(ev: _Evaluator, beta_prev, sval_prev, grad_prev, L_init, radius, max_doublings):
    """Doubling search; returns ``(beta, L, sval, phi, grad_or_None, trials)``.

    When the value test misses by less than the rounding slack, function
    values can no longer resolve the step, so the majorization is checked
    through the gradient change instead: ``(g+ - g) . d <= L ||d||^2``
    (exact for quadratics).  That gradient is handed back for reuse.
    """
    lam = ev.lam
    L = L_init
    slack = min(DESCENT_TOL, 1e3 * np.finfo(float).eps * max(1.0, abs(sval_prev)))
    for trial in range(1, max_doublings + 2):
        beta = _prox_from_grad(beta_prev, grad_prev, lam, L, radius)
        diff = beta - beta_prev
        sval = ev.sval(beta)
        l1 = lam * float(np.abs(beta).sum())
        phi = sval + l1
        dsq = float(diff @ diff)
        psi = sval_prev + float(grad_prev @ diff) + 0.5 * L * dsq + l1
        if np.isfinite(phi) and phi <= psi:
            return beta, L, sval, phi, None, trial
        if np.isfinite(phi) and phi <= psi + slack:
            g = ev.sgrad(beta)
            if float((g - grad_prev) @ diff) <= L * dsq:
                return beta, L, sval, phi, g, trial
        if trial > max_doublings:
            break
        L *= 2.0
    raise LineSearchError(f"line search diverged after {max_doublings} doublings (L={L:.3g})")


def line_search(
    model: Loss,
    spec: pen.PenaltySpec,
    lam: float,
    beta_prev,
    L_init: float,
    radius: float = math.inf,
    max_doublings: int = MAX_DOUBLINGS,
) -> tuple[np.ndarray, float]:
    """Double ``L`` from ``L_init`` until the local model majorizes the objective."""
    if not L_init > 0:
        raise ConfigurationError(f"L_init must be positive, got {L_init}")
    beta_prev = np.asarray(beta_prev, dtype=float).ravel()
    ev = _Evaluator(model, spec, lam)
    g = ev.sgrad(beta_prev)
    if not np.all(np.isfinite(g)):
        raise ConfigurationError("non-finite surrogate gradient")
    beta, L, *_ = _line_search(ev, beta_prev, ev.sval(beta_prev), g, L_init, radius, max_doublings)
    return beta, L


def proximal_gradient(
    model: Loss,
    spec: pen.PenaltySpec,
    lam: float,
    eps: float,
    beta0=None,
    L0: float = 1e-6,
    radius: float = math.inf,
    *,
    L_min: float = 1e-6,
    max_iters: int = 10_000,
    fast_path: bool = True,
    stage: int = 0,
    beta_star=None,
    record: bool = True,
) -> StageResult:
    """Run proximal-gradient iterations at a fixed ``lam`` until ``omega <= eps``.

    ``L_init`` for each line search is ``max(L_min, L_prev / 2)``.  With
    ``fast_path`` a starting point that already certifies is returned
    without iterating.  Hitting ``max_iters`` returns the last iterate with
    ``converged=False``.
    """
    if not eps > 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    if not lam > 0:
        raise ConfigurationError(f"lambda must be positive, got {lam}")
    beta = np.zeros(model.d) if beta0 is None else np.array(beta0, dtype=float).ravel()
    if beta.shape[0] != model.d:
        raise ConfigurationError(f"beta0 has length {beta.shape[0]}, expected {model.d}")
    if not math.isinf(radius) and float(np.linalg.norm(beta)) > radius * (1 + 1e-12):
        raise ConfigurationError("starting point lies outside the l2 ball")
    if beta_star is not None:
        beta_star = np.asarray(beta_star, dtype=float).ravel()

    ev = _Evaluator(model, spec, lam)
    sval = ev.sval(beta)
    g = ev.sgrad(beta)
    if not np.all(np.isfinite(g)):
        raise ConfigurationError("non-finite surrogate gradient at the starting point")
    l1 = float(np.abs(beta).sum())
    phi = sval + lam * l1
    omega = omega_from_grad(g, beta, lam)
    L = max(L_min, float(L0))

    trace: list[TraceRecord] = []

    def push(k, step_sq):
        if record:
            err = None if beta_star is None else float(np.linalg.norm(beta - beta_star))
            trace.append(TraceRecord(stage, k, lam, L, phi, omega, int(np.count_nonzero(beta)), err, step_sq))

    push(0, 0.0)
    if fast_path and omega <= eps:
        return StageResult(beta, L, 0, omega, True, _on_boundary(beta, radius), 0, trace)

    k = 0
    ls_steps = 0
    converged = False
    while k < max_iters:
        k += 1
        L_init = max(L_min, L / 2)
        beta_new, L, sval, phi, g_new, trials = _line_search(ev, beta, sval, g, L_init, radius, MAX_DOUBLINGS)
        ls_steps += trials
        d = beta_new - beta
        beta = beta_new
        # this gradient certifies beta^k and drives the next prox step
        g = ev.sgrad(beta) if g_new is None else g_new
        omega = omega_from_grad(g, beta, lam)
        push(k, float(d @ d))
        if omega <= eps:
            converged = True
            break
    return StageResult(beta, L, k, omega, converged, _on_boundary(beta, radius), ls_steps, trace)

