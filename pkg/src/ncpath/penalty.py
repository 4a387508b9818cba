"""Folded-concave penalties written as an l1 part plus a smooth concave part.

Every penalty here decomposes as ``p(x) = lam * |x| + q(x)`` where ``q`` is
concave, symmetric, passes through the origin with zero slope, and has a
derivative bounded by ``lam``.  The solver only ever needs ``q'``; the l1
part is handled by soft-thresholding.

All scalar functions accept numpy arrays and broadcast elementwise.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

KINDS = ("scad", "mcp", "l1")


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family and its concavity parameter.

    ``a`` is only read for SCAD (must exceed 2), ``b`` only for MCP
    (must be positive).
    """

    kind: str
    a: float = 2.1
    b: float = 2.0

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in KINDS:
            raise ConfigurationError(f"unknown penalty kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind == "scad" and not self.a > 2:
            raise ConfigurationError(f"SCAD requires a > 2, got a={self.a}")
        if kind == "mcp" and not self.b > 0:
            raise ConfigurationError(f"MCP requires b > 0, got b={self.b}")

    @classmethod
    def scad(cls, a: float = 2.1) -> "PenaltySpec":
        return cls("scad", a=a)

    @classmethod
    def mcp(cls, b: float = 2.0) -> "PenaltySpec":
        return cls("mcp", b=b)

    @classmethod
    def l1(cls) -> "PenaltySpec":
        return cls("l1")

    @property
    def is_convex(self) -> bool:
        return self.kind == "l1"

    def concavity_params(self) -> tuple[float, float]:
        """Return ``(zeta_minus, zeta_plus)``, the bounds on ``-q''``."""
        if self.kind == "scad":
            return 1.0 / (self.a - 1.0), 0.0
        if self.kind == "mcp":
            return 1.0 / self.b, 0.0
        return 0.0, 0.0

    def __str__(self):
        if self.kind == "scad":
            return f"SCAD(a={self.a:g})"
        if self.kind == "mcp":
            return f"MCP(b={self.b:g})"
        return "L1"


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _check_lambda(lam):
    if not lam > 0:
        raise ConfigurationError(f"regularization parameter must be positive, got {lam}")


def scalar_penalty(spec: PenaltySpec, lam: float, beta):
    """Closed-form penalty value ``p_lam(beta)``."""
    _check_lambda(lam)
    x = np.abs(np.asarray(beta, dtype=float))
    if spec.kind == "l1":
        return _out(lam * x)
    if spec.kind == "scad":
        a = spec.a
        mid = -(x**2 - 2 * a * lam * x + lam**2) / (2 * (a - 1))
        val = np.where(x <= lam, lam * x, np.where(x <= a * lam, mid, (a + 1) * lam**2 / 2))
        return _out(val)
    b = spec.b
    val = np.where(x <= b * lam, lam * x - x**2 / (2 * b), b * lam**2 / 2)
    return _out(val)


def concave_value(spec: PenaltySpec, lam: float, beta):
    """Concave component ``q_lam(beta) = p_lam(beta) - lam*|beta|``."""
    _check_lambda(lam)
    x = np.abs(np.asarray(beta, dtype=float))
    if spec.kind == "l1":
        return _out(np.zeros_like(x))
    if spec.kind == "scad":
        a = spec.a
        mid = (2 * lam * x - x**2 - lam**2) / (2 * (a - 1))
        far = ((a + 1) * lam**2 - 2 * lam * x) / 2
        val = np.where(x <= lam, 0.0, np.where(x <= a * lam, mid, far))
        return _out(val)
    b = spec.b
    val = np.where(x <= b * lam, -(x**2) / (2 * b), b * lam**2 / 2 - lam * x)
    return _out(val)


def concave_grad(spec: PenaltySpec, lam: float, beta):
    """Derivative ``q'_lam(beta)`` of the concave component."""
    _check_lambda(lam)
    x = np.asarray(beta, dtype=float)
    if spec.kind == "l1":
        return _out(np.zeros_like(x))
    ax = np.abs(x)
    sgn = np.sign(x)
    if spec.kind == "scad":
        a = spec.a
        val = np.where(
            ax <= lam, 0.0, np.where(ax <= a * lam, (lam * sgn - x) / (a - 1), -lam * sgn)
        )
        return _out(val)
    b = spec.b
    # exact derivative of the closed form: -x/b inside the concave zone
    val = np.where(ax <= b * lam, -x / b, -lam * sgn)
    return _out(val)


def concave_grad_vector(spec: PenaltySpec, lam: float, beta) -> np.ndarray:
    """Gradient of ``Q_lam(beta) = sum_j q_lam(beta_j)``."""
    return np.asarray(concave_grad(spec, lam, np.asarray(beta, dtype=float).ravel()), dtype=float)


def concave_sum(spec: PenaltySpec, lam: float, beta) -> float:
    if spec.kind == "l1":
        return 0.0
    return float(np.sum(concave_value(spec, lam, np.asarray(beta, dtype=float).ravel())))


def penalty_sum(spec: PenaltySpec, lam: float, beta) -> float:
    return float(np.sum(scalar_penalty(spec, lam, np.asarray(beta, dtype=float).ravel())))


def flat_threshold(spec: PenaltySpec, lam: float) -> float | None:
    """Smallest ``nu`` with ``p'_lam(x) = 0`` for ``|x| >= nu`` (None for l1)."""
    _check_lambda(lam)
    if spec.kind == "scad":
        return spec.a * lam
    if spec.kind == "mcp":
        return spec.b * lam
    return None


@dataclass
class ConditionResult:
    passed: bool
    worst: float
    witness: dict = field(default_factory=dict)


@dataclass
class RegularityReport:
    spec: PenaltySpec
    tol: float
    conditions: dict[str, ConditionResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def failures(self) -> list[str]:
        return [k for k, c in self.conditions.items() if not c.passed]


def check_regularity(spec: PenaltySpec, lambda_grid, beta_grid, tol: float = 1e-9) -> RegularityReport:
    """Numerically check the five regularity conditions on the concave part.

    ``worst`` is the largest violation margin found for each condition
    (nonpositive means satisfied) and ``witness`` locates it.

    (a) difference quotients of ``q'`` lie in ``[-zeta_minus, -zeta_plus]``
    (b) ``q`` symmetric
    (c) ``q(0) = q'(0) = 0``
    (d) ``|q'| <= lam``
    (e) ``|q'_l1 - q'_l2| <= |l1 - l2|``
    """
    lams = np.unique(np.asarray(lambda_grid, dtype=float).ravel())
    xs = np.unique(np.asarray(beta_grid, dtype=float).ravel())
    if lams.size == 0 or xs.size == 0:
        raise ConfigurationError("check_regularity needs non-empty lambda and beta grids")
    if np.any(lams <= 0):
        raise ConfigurationError("lambda grid must be positive")
    zm, zp = spec.concavity_params()
    worst = {k: (-np.inf, {}) for k in "abcde"}

    def update(key, margin, witness):
        if margin > worst[key][0]:
            worst[key] = (float(margin), witness)

    grads = {}
    for lam in lams:
        g = np.asarray(concave_grad(spec, lam, xs), dtype=float)
        grads[lam] = g
        if xs.size > 1:
            quot = np.diff(g) / np.diff(xs)
            lo = -zm - quot
            hi = quot + zp
            i = int(np.argmax(np.maximum(lo, hi)))
            update("a", max(lo[i], hi[i]), {"lambda": lam, "beta": float(xs[i]), "beta_next": float(xs[i + 1])})
        q = np.asarray(concave_value(spec, lam, xs), dtype=float)
        qn = np.asarray(concave_value(spec, lam, -xs), dtype=float)
        i = int(np.argmax(np.abs(q - qn)))
        update("b", abs(q[i] - qn[i]), {"lambda": lam, "beta": float(xs[i])})
        c = max(abs(concave_value(spec, lam, 0.0)), abs(concave_grad(spec, lam, 0.0)))
        update("c", c, {"lambda": lam})
        i = int(np.argmax(np.abs(g)))
        update("d", abs(g[i]) - lam, {"lambda": lam, "beta": float(xs[i])})
    if lams.size == 1:
        update("e", 0.0, {})
    for l1, l2 in itertools.combinations(lams, 2):
        diff = np.abs(grads[l1] - grads[l2]) - abs(l1 - l2)
        i = int(np.argmax(diff))
        update("e", diff[i], {"lambda1": l1, "lambda2": l2, "beta": float(xs[i])})
    if xs.size == 1:
        update("a", 0.0, {})

    conditions = {
        k: ConditionResult(passed=bool(m <= tol), worst=m, witness=w) for k, (m, w) in worst.items()
    }
    return RegularityReport(spec=spec, tol=tol, conditions=conditions)
