"""Rank-based covariance estimation for elliptical designs.

Correlations come from Kendall's tau pushed through ``sin(pi * tau / 2)``;
marginal scales come from Catoni's M-estimator applied to each column and
to its square.  The assembled matrix is symmetric but may be indefinite,
and is returned as-is.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .errors import ConfigurationError
from .loss import EllipticalCov

log = logging.getLogger(__name__)

# pair rows processed per block in the Kendall matrix product
_PAIR_BLOCK = 1 << 16


@dataclass(frozen=True)
class CatoniConfig:
    """Confidence level ``delta``, variance bound ``v`` and Newton controls.

    ``v=None`` means "derive from the data": twice the sample variance of the
    samples handed to the estimator.
    """

    delta: float
    v: float | None = None
    max_newton_iters: int = 50
    newton_tol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ConfigurationError(f"delta must lie in (0, 1), got {self.delta}")
        if self.v is not None and not self.v > 0:
            raise ConfigurationError(f"variance bound v must be positive, got {self.v}")

    @classmethod
    def default(cls, n: int, dim: int, v: float | None = None) -> "CatoniConfig":
        """``delta = dim^-3``, raised where needed so that ``2 log(1/delta) <= n/2``."""
        delta = max(float(dim) ** -3.0, np.exp(-n / 4.0))
        delta = min(delta, 0.5)
        return cls(delta=delta, v=v)


def _pair_index(n: int):
    return np.triu_indices(n, k=1)


def kendall_tau(u, w) -> float:
    """Kendall's tau by explicit pair enumeration (no tie correction)."""
    u = np.asarray(u, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    n = u.size
    if n < 2 or w.size != n:
        raise ConfigurationError(f"kendall_tau needs two vectors of equal length >= 2, got {u.size}, {w.size}")
    i, k = _pair_index(n)
    s = np.sign(u[i] - u[k]) * np.sign(w[i] - w[k])
    return float(2.0 * s.sum() / (n * (n - 1)))


def kendall_tau_matrix(Z) -> np.ndarray:
    """Pairwise Kendall's tau between all columns of ``Z`` (unit diagonal)."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ConfigurationError("Z must be a 2-D array")
    n, p = Z.shape
    if n < 2:
        raise ConfigurationError("need at least two samples")
    i, k = _pair_index(n)
    acc = np.zeros((p, p))
    for start in range(0, i.size, _PAIR_BLOCK):
        sl = slice(start, start + _PAIR_BLOCK)
        # counts in a block stay far below 2**24, so float32 products are exact
        S = np.sign(Z[i[sl]] - Z[k[sl]]).astype(np.float32)
        acc += (S.T @ S).astype(np.float64)
    tau = 2.0 * acc / (n * (n - 1))
    np.fill_diagonal(tau, 1.0)
    return tau


def kendall_corr_matrix(Z) -> np.ndarray:
    """``sin(pi/2 * tau_jk)`` with unit diagonal."""
    R = np.sin(np.pi / 2 * kendall_tau_matrix(Z))
    R = np.clip((R + R.T) / 2, -1.0, 1.0)
    np.fill_diagonal(R, 1.0)
    return R


def catoni_influence(x):
    """Catoni's influence function: ``sign(x) log(1 + |x| + x^2/2)``."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    return np.sign(x) * np.log1p(ax + 0.5 * x * x)


def _influence_deriv(x):
    ax = np.abs(x)
    return (1 + ax) / (1 + ax + 0.5 * x * x)


def catoni_alpha(cfg: CatoniConfig, n: int, v: float | None = None) -> float:
    """Scale factor applied to deviations before the influence function."""
    v = cfg.v if v is None else v
    if v is None or not v > 0:
        raise ConfigurationError("catoni_alpha needs a positive variance bound v")
    ell = np.log(1.0 / cfg.delta)
    if not n > 2 * ell:
        raise ConfigurationError(
            f"Catoni infeasible: n too small for delta (n={n}, 2 log(1/delta)={2 * ell:.4g})"
        )
    return float(np.sqrt(2 * ell / (n * v + 2 * n * v * ell / (n - 2 * ell))))


@dataclass(frozen=True)
class CatoniEstimate:
    value: float
    method: str
    iterations: int


def _resolve_v(cfg: CatoniConfig, z: np.ndarray) -> float:
    if cfg.v is not None:
        return cfg.v
    var = float(np.var(z, ddof=1)) if z.size > 1 else 0.0
    # constant samples: any positive bound gives the same root
    return 2.0 * var if var > 0 else 1.0


def catoni_location_detail(samples, cfg: CatoniConfig, v: float | None = None) -> CatoniEstimate:
    """Solve ``sum_i h(alpha (z_i - mu)) = 0`` by Newton, bisection as fallback."""
    z = np.asarray(samples, dtype=float).ravel()
    n = z.size
    if n == 0:
        raise ConfigurationError("no samples")
    if v is None:
        v = _resolve_v(cfg, z)
    alpha = catoni_alpha(cfg, n, v)
    lo, hi = float(z.min()), float(z.max())
    if hi == lo:
        return CatoniEstimate(lo, "constant", 0)

    def f(mu):
        return float(catoni_influence(alpha * (z - mu)).sum())

    scale = hi - lo
    mu = float(np.median(z))
    for it in range(1, cfg.max_newton_iters + 1):
        u = alpha * (z - mu)
        fv = float(catoni_influence(u).sum())
        fp = -alpha * float(_influence_deriv(u).sum())
        step = fv / fp
        mu_new = mu - step
        if not lo <= mu_new <= hi:
            break
        mu = mu_new
        if abs(step) <= cfg.newton_tol * max(1.0, scale):
            return CatoniEstimate(mu, "newton", it)
    # the sum is strictly decreasing in mu and changes sign on [min z, max z]
    root = bisect(f, lo, hi, xtol=cfg.newton_tol * max(1.0, scale), maxiter=500)
    log.debug("Catoni Newton did not converge; used bisection")
    return CatoniEstimate(float(root), "bisection", cfg.max_newton_iters)


def catoni_location(samples, cfg: CatoniConfig, v: float | None = None) -> float:
    return catoni_location_detail(samples, cfg, v).value


def catoni_scale(column, cfg: CatoniConfig, *, v_sq: float | None = None, return_clipped: bool = False):
    """``sqrt(max(m - mu^2, 0))`` from Catoni estimates of ``E Z`` and ``E Z^2``.

    ``cfg.v`` bounds the raw variance; ``v_sq`` bounds the variance of the
    squares (data-driven when omitted).
    """
    z = np.asarray(column, dtype=float).ravel()
    mu = catoni_location(z, cfg)
    m = catoni_location(z * z, cfg, v=v_sq if v_sq is not None else _resolve_v(CatoniConfig(cfg.delta), z * z))
    var = m - mu * mu
    clipped = var < 0
    if clipped:
        log.debug("Catoni second moment below squared mean; clipping variance to 0")
    sigma = float(np.sqrt(max(var, 0.0)))
    return (sigma, bool(clipped)) if return_clipped else sigma


def elliptical_cov(Z, cfg: CatoniConfig | None = None) -> EllipticalCov:
    """Assemble ``K_jk = R_jk * sigma_j * sigma_k`` from the columns of ``Z``.

    Column 0 of ``Z`` must hold the response.  When ``cfg`` is omitted the
    defaults apply: ``delta`` from the dimension and ``v`` as twice the
    median column variance (raw columns and squared columns separately).
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] < 2:
        raise ConfigurationError("Z must be n x (d+1) with d >= 1")
    n, p = Z.shape
    if cfg is None:
        cfg = CatoniConfig.default(n, p)
    v_raw = cfg.v
    if v_raw is None:
        v_raw = 2.0 * float(np.median(np.var(Z, axis=0, ddof=1)))
    v_sq = 2.0 * float(np.median(np.var(Z * Z, axis=0, ddof=1)))
    if not v_raw > 0:
        v_raw = 1.0
    if not v_sq > 0:
        v_sq = 1.0
    raw_cfg = CatoniConfig(cfg.delta, v_raw, cfg.max_newton_iters, cfg.newton_tol)
    sigma = np.array([catoni_scale(Z[:, j], raw_cfg, v_sq=v_sq) for j in range(p)])
    R = kendall_corr_matrix(Z)
    K = R * np.outer(sigma, sigma)
    return EllipticalCov((K + K.T) / 2)
