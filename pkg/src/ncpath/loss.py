"""Smooth (possibly nonconvex) losses and the penalized objective built on them.

Three losses share one small interface: ``value``, ``grad``,
``hessian_quadform`` and ``hessian``.  The penalized objective splits as

    phi(beta) = [L(beta) + Q_lam(beta)] + lam * ||beta||_1

and the bracketed surrogate loss is what the proximal solver linearizes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import penalty as pen
from .errors import ConfigurationError


@dataclass(frozen=True)
class DesignData:
    """Design matrix ``X`` (rows are samples) and response ``y``."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ConfigurationError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ConfigurationError("design must have at least one sample and one feature")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ConfigurationError("design data contains non-finite entries")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class EllipticalCov:
    """Covariance estimate of ``Z = (Y, X)`` with ``Y`` in coordinate 0.

    Symmetric, but deliberately not required to be positive semidefinite.
    """

    K: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] < 2:
            raise ConfigurationError(f"covariance must be square with size >= 2, got {K.shape}")
        if not np.all(np.isfinite(K)):
            raise ConfigurationError("covariance contains non-finite entries")
        if not np.allclose(K, K.T, rtol=0, atol=1e-12 * max(1.0, np.abs(K).max())):
            raise ConfigurationError("covariance must be symmetric")
        if np.any(np.diag(K) < 0):
            raise ConfigurationError("covariance diagonal must be nonnegative")
        K = (K + K.T) / 2
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    @property
    def d(self) -> int:
        return self.K.shape[0] - 1

    @property
    def K_Y(self) -> float:
        return float(self.K[0, 0])

    @property
    def K_XY(self) -> np.ndarray:
        return self.K[1:, 0]

    @property
    def K_X(self) -> np.ndarray:
        return self.K[1:, 1:]


class Loss:
    """Base class; subclasses implement the four loss primitives."""

    name = "loss"
    requires_radius = False

    @property
    def d(self) -> int:
        raise NotImplementedError

    def _check(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float).ravel()
        if beta.shape[0] != self.d:
            raise ConfigurationError(f"beta has length {beta.shape[0]}, expected {self.d}")
        return beta

    def value(self, beta) -> float:
        raise NotImplementedError

    def grad(self, beta) -> np.ndarray:
        raise NotImplementedError

    def hessian_quadform(self, beta, v) -> float:
        raise NotImplementedError

    def hessian(self, beta=None) -> np.ndarray:
        raise NotImplementedError


class LeastSquares(Loss):
    """``||X beta - y||^2 / (2n)``."""

    name = "ls"

    def __init__(self, data: DesignData):
        self.data = data

    @property
    def d(self) -> int:
        return self.data.d

    def value(self, beta) -> float:
        r = self.data.X @ self._check(beta) - self.data.y
        return float(r @ r) / (2 * self.data.n)

    def grad(self, beta) -> np.ndarray:
        X = self.data.X
        return X.T @ (X @ self._check(beta) - self.data.y) / self.data.n

    def hessian_quadform(self, beta, v) -> float:
        Xv = self.data.X @ self._check(v)
        return float(Xv @ Xv) / self.data.n

    def hessian(self, beta=None) -> np.ndarray:
        X = self.data.X
        return X.T @ X / self.data.n


class Logistic(Loss):
    """Mean negative log-likelihood of a logistic model, ``y`` in ``{0, 1}``."""

    name = "logistic"
    requires_radius = True

    def __init__(self, data: DesignData):
        if not np.all((data.y == 0) | (data.y == 1)):
            raise ConfigurationError("logistic loss needs responses in {0, 1}")
        self.data = data

    @property
    def d(self) -> int:
        return self.data.d

    def value(self, beta) -> float:
        t = self.data.X @ self._check(beta)
        return float(np.mean(np.logaddexp(0.0, t) - self.data.y * t))

    def grad(self, beta) -> np.ndarray:
        X = self.data.X
        t = X @ self._check(beta)
        return X.T @ (expit(t) - self.data.y) / self.data.n

    def _weights(self, beta) -> np.ndarray:
        p = expit(self.data.X @ self._check(beta))
        return p * (1 - p)

    def hessian_quadform(self, beta, v) -> float:
        Xv = self.data.X @ self._check(v)
        return float(np.mean(Xv**2 * self._weights(beta)))

    def hessian(self, beta=None) -> np.ndarray:
        if beta is None:
            beta = np.zeros(self.d)
        X = self.data.X
        return (X * self._weights(beta)[:, None]).T @ X / self.data.n


class Elliptical(Loss):
    """Quadratic form ``(1, -beta) K (1, -beta)^T / 2`` of a covariance estimate."""

    name = "elliptical"

    def __init__(self, cov: EllipticalCov):
        self.cov = cov

    @property
    def d(self) -> int:
        return self.cov.d

    def value(self, beta) -> float:
        beta = self._check(beta)
        c = self.cov
        return 0.5 * c.K_Y - float(beta @ c.K_XY) + 0.5 * float(beta @ (c.K_X @ beta))

    def grad(self, beta) -> np.ndarray:
        return self.cov.K_X @ self._check(beta) - self.cov.K_XY

    def hessian_quadform(self, beta, v) -> float:
        v = self._check(v)
        return float(v @ (self.cov.K_X @ v))

    def hessian(self, beta=None) -> np.ndarray:
        return np.array(self.cov.K_X)


def make_loss(kind: str, data) -> Loss:
    kind = kind.lower()
    if kind in ("ls", "least_squares"):
        return LeastSquares(data)
    if kind == "logistic":
        return Logistic(data)
    if kind == "elliptical":
        return Elliptical(data)
    raise ConfigurationError(f"unknown loss kind {kind!r}")


def loss_value(model: Loss, beta) -> float:
    return model.value(beta)


def loss_grad(model: Loss, beta) -> np.ndarray:
    return model.grad(beta)


def hessian_quadform(model: Loss, beta, v) -> float:
    return model.hessian_quadform(beta, v)


def surrogate_value(model: Loss, spec: pen.PenaltySpec, lam: float, beta) -> float:
    """``L(beta) + Q_lam(beta)``."""
    return model.value(beta) + pen.concave_sum(spec, lam, beta)


def surrogate_grad(model: Loss, spec: pen.PenaltySpec, lam: float, beta) -> np.ndarray:
    """Gradient of the surrogate loss, ``grad L + grad Q_lam``."""
    g = model.grad(beta)
    if spec.kind == "l1":
        return g
    return g + pen.concave_grad_vector(spec, lam, beta)


def objective(model: Loss, spec: pen.PenaltySpec, lam: float, beta) -> float:
    beta = np.asarray(beta, dtype=float).ravel()
    return surrogate_value(model, spec, lam, beta) + lam * float(np.abs(beta).sum())


def lambda_zero(model: Loss) -> float:
    """``||grad L(0)||_inf``: every exact local solution is zero at or above it."""
    lam0 = float(np.abs(model.grad(np.zeros(model.d))).max())
    if not lam0 > 0:
        raise ConfigurationError("degenerate problem: the loss gradient at zero vanishes (lambda0 = 0)")
    return lam0
