"""Seeded synthetic regression problems.

Random streams come from numpy's counter-based Philox generator keyed by
``SeedSequence(seed, spawn_key=(replication,))``, so replication ``r`` can
be regenerated on its own without replaying ``0..r-1``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .diagnostics import GroundTruth
from .errors import ConfigurationError
from .loss import DesignData

DESIGNS = ("ar_gaussian", "ar_t", "equicorrelated_gaussian")
SIGNALS = ("gaussian", "plusminus")
NOISES = ("gaussian", "t")


@dataclass(frozen=True)
class ExperimentDesign:
    n: int
    d: int
    s_star: int
    design: str = "ar_gaussian"
    rho: float = 0.5
    dof: float = 5.0
    signal: str = "gaussian"
    magnitude: float = 2.0
    noise: str = "gaussian"
    noise_sd: float = 1.0
    noise_dof: float = 5.0
    noise_variance: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ConfigurationError("n and d must be positive")
        if not 0 <= self.s_star <= self.d:
            raise ConfigurationError(f"s_star must lie in [0, d], got {self.s_star}")
        if self.design not in DESIGNS:
            raise ConfigurationError(f"unknown design {self.design!r}; expected one of {DESIGNS}")
        if self.signal not in SIGNALS:
            raise ConfigurationError(f"unknown signal {self.signal!r}; expected one of {SIGNALS}")
        if self.noise not in NOISES:
            raise ConfigurationError(f"unknown noise {self.noise!r}; expected one of {NOISES}")
        if not 0 <= self.rho < 1:
            raise ConfigurationError(f"rho must lie in [0, 1), got {self.rho}")
        if self.design == "ar_t" and not self.dof > 2:
            raise ConfigurationError("t design needs dof > 2 for a finite variance")
        if self.noise == "t" and not self.noise_dof > 2:
            raise ConfigurationError("t noise needs dof > 2 for a prescribed variance")
        if self.noise_sd < 0 or self.noise_variance < 0:
            raise ConfigurationError("noise scale must be nonnegative")

    def population_cov(self) -> np.ndarray:
        """Covariance of a design row (unit marginal variances)."""
        idx = np.arange(self.d)
        if self.design == "equicorrelated_gaussian":
            S = np.full((self.d, self.d), self.rho)
            np.fill_diagonal(S, 1.0)
            return S
        return self.rho ** np.abs(idx[:, None] - idx[None, :])


def make_rng(seed: int, replication: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replication),))
    return np.random.Generator(np.random.Philox(ss))


def _design_rows(des: ExperimentDesign, rng: np.random.Generator) -> np.ndarray:
    n, d, rho = des.n, des.d, des.rho
    G = rng.standard_normal((n, d))
    if des.design == "equicorrelated_gaussian":
        f = rng.standard_normal((n, 1))
        return np.sqrt(rho) * f + np.sqrt(1 - rho) * G
    # AR(1) recursion gives corr 0.8^{|i-j|} style structure exactly
    X = np.empty_like(G)
    X[:, 0] = G[:, 0]
    c = np.sqrt(1 - rho * rho)
    for j in range(1, d):
        X[:, j] = rho * X[:, j - 1] + c * G[:, j]
    if des.design == "ar_t":
        w = rng.chisquare(des.dof, size=(n, 1)) / des.dof
        # rescale so each coordinate has unit variance
        X = X / np.sqrt(w) * np.sqrt((des.dof - 2) / des.dof)
    return X


def _coefficients(des: ExperimentDesign, rng: np.random.Generator) -> np.ndarray:
    beta = np.zeros(des.d)
    s = des.s_star
    if des.signal == "gaussian":
        beta[:s] = rng.standard_normal(s)
    else:
        beta[:s] = des.magnitude * rng.choice([-1.0, 1.0], size=s)
    return beta


def _noise(des: ExperimentDesign, rng: np.random.Generator) -> np.ndarray:
    if des.noise == "gaussian":
        return des.noise_sd * rng.standard_normal(des.n)
    t = rng.standard_t(des.noise_dof, size=des.n)
    return t * np.sqrt(des.noise_variance * (des.noise_dof - 2) / des.noise_dof)


def gen_problem(des: ExperimentDesign, replication: int = 0) -> tuple[DesignData, GroundTruth]:
    """Draw ``(X, y)`` and the true coefficients; deterministic given seed and replication."""
    rng = make_rng(des.seed, replication)
    beta = _coefficients(des, rng)
    X = _design_rows(des, rng)
    y = X @ beta + _noise(des, rng)
    return DesignData(X, y), GroundTruth(beta)


def gen_elliptical_samples(des: ExperimentDesign, replication: int = 0) -> tuple[np.ndarray, GroundTruth]:
    """Joint samples ``Z = [y, X]`` (response in column 0)."""
    data, truth = gen_problem(des, replication)
    return np.column_stack([data.y, data.X]), truth


def save_problem_csv(path, data: DesignData, truth: GroundTruth | None = None) -> None:
    """Write ``y, x1..xd`` rows; the true coefficients go to ``<path>.beta.csv``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"] + [f"x{j + 1}" for j in range(data.d)])
        for yi, xi in zip(data.y, data.X):
            w.writerow([format(yi, ".17g")] + [format(v, ".17g") for v in xi])
    if truth is not None:
        with open(f"{path}.beta.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["beta"])
            for b in truth.beta_star:
                w.writerow([format(b, ".17g")])


def load_matrix_csv(path, response_col: int | str = 0) -> tuple[np.ndarray, np.ndarray]:
    """Read a header-first CSV; returns ``(X, y)`` with the response column split off."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ConfigurationError(f"{path}: expected a header and at least one data row")
    header, body = rows[0], rows[1:]
    if isinstance(response_col, str) and not response_col.lstrip("-").isdigit():
        if response_col not in header:
            raise ConfigurationError(f"{path}: no column named {response_col!r}")
        col = header.index(response_col)
    else:
        col = int(response_col)
    try:
        M = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise ConfigurationError(f"{path}: non-numeric entry ({exc})") from None
    y = M[:, col]
    X = np.delete(M, col, axis=1)
    return X, y


def load_problem_csv(path, response_col: int | str = 0) -> DesignData:
    X, y = load_matrix_csv(path, response_col)
    return DesignData(X, y)


def load_truth_csv(path) -> GroundTruth:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return GroundTruth(np.array([float(r[0]) for r in rows]))
