import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncpath.errors import ConfigurationError, LineSearchError
from ncpath.loss import DesignData, LeastSquares, Loss, lambda_zero, objective, surrogate_grad
from ncpath.penalty import PenaltySpec
from ncpath.prox import (
    TraceRecord,
    line_search,
    omega_from_grad,
    prox_step,
    proximal_gradient,
    quad_approx,
    soft_threshold,
    suboptimality,
)

from .conftest import random_elliptical, random_logistic, random_ls
from .oracles import lasso_cd, omega_by_grid, prox_by_search

SPECS = [PenaltySpec.scad(2.1), PenaltySpec.mcp(2.0), PenaltySpec.mcp(1.1), PenaltySpec.l1()]


class ZeroLoss(Loss):
    """Constant loss, so the prox reduces to plain soft-thresholding."""

    name = "zero"

    def __init__(self, d):
        self._d = d

    @property
    def d(self):
        return self._d

    def value(self, beta):
        return 0.0

    def grad(self, beta):
        return np.zeros(self._d)


class BrokenLoss(ZeroLoss):
    def value(self, beta):
        return 0.0 if not np.any(beta) else np.inf


def one_dim_quadratic(c, m):
    # c/2 (beta - m)^2 written as least squares with a single sample
    return LeastSquares(DesignData(np.array([[math.sqrt(c)]]), np.array([math.sqrt(c) * m])))


class TestQuadApprox:
    def test_at_reference_equals_objective(self, rng):
        m = random_ls(rng)
        beta = rng.standard_normal(m.d)
        spec = PenaltySpec.mcp(2.0)
        assert quad_approx(m, spec, 0.3, 5.0, beta, beta) == pytest.approx(objective(m, spec, 0.3, beta))

    def test_fails_to_majorize_with_small_L(self, rng):
        m = random_ls(rng)
        spec = PenaltySpec.l1()
        beta_ref = rng.standard_normal(m.d)
        L = 1e-3
        beta = prox_step(m, spec, 0.1, L, beta_ref)
        assert quad_approx(m, spec, 0.1, L, beta_ref, beta) < objective(m, spec, 0.1, beta)


class TestProxStep:
    def test_hand_example(self):
        m = ZeroLoss(3)
        out = prox_step(m, PenaltySpec.l1(), 1.0, 2.0, [1.2, -0.3, 0.0])
        np.testing.assert_allclose(out, [0.7, 0.0, 0.0], atol=1e-15)
        out = prox_step(m, PenaltySpec.l1(), 1.0, 2.0, [1.2, -0.3, 0.0], radius=0.5)
        np.testing.assert_allclose(out, [0.5, 0.0, 0.0], atol=1e-15)

    def test_tie_goes_to_zero(self):
        out = soft_threshold(np.array([0.5, -0.5, 0.6]), 0.5)
        assert out[0] == 0.0 and out[1] == 0.0 and out[2] == pytest.approx(0.1)

    def test_zero_at_lambda_zero(self, rng):
        for m in (random_ls(rng), random_logistic(rng), random_elliptical(rng)):
            lam0 = lambda_zero(m)
            for L in (1e-3, 1.0, 1e3):
                np.testing.assert_array_equal(prox_step(m, PenaltySpec.mcp(), lam0, L, np.zeros(m.d)), 0.0)

    def test_invalid_L(self, rng):
        with pytest.raises(ConfigurationError):
            prox_step(random_ls(rng), PenaltySpec.l1(), 0.1, 0.0, np.zeros(5))

    @pytest.mark.parametrize("spec", SPECS, ids=str)
    def test_matches_search_oracle(self, rng, spec):
        for _ in range(5):
            m = random_ls(rng, n=8, d=4)
            beta_ref = rng.standard_normal(4)
            L = rng.uniform(0.5, 5)
            lam = rng.uniform(0.05, 1.0)
            got = prox_step(m, spec, lam, L, beta_ref)
            np.testing.assert_allclose(got, prox_by_search(m, spec, lam, L, beta_ref), atol=1e-6)
            R = 0.5 * np.linalg.norm(got) if np.any(got) else 1.0
            got_r = prox_step(m, spec, lam, L, beta_ref * min(1.0, R / np.linalg.norm(beta_ref)), radius=R)
            ref_r = prox_by_search(m, spec, lam, L, beta_ref * min(1.0, R / np.linalg.norm(beta_ref)), radius=R)
            np.testing.assert_allclose(got_r, ref_r, atol=1e-6)


@given(st.integers(0, 10**6), st.sampled_from(SPECS), st.sampled_from([np.inf, 0.3, 1.0]))
def test_prox_beats_random_probes(seed, spec, radius):
    rng = np.random.default_rng(seed)
    m = random_elliptical(rng, d=4, indefinite=seed % 2 == 0)
    beta_ref = rng.standard_normal(4)
    if np.isfinite(radius):
        beta_ref *= min(1.0, radius / np.linalg.norm(beta_ref))
    lam, L = 0.3, rng.uniform(0.5, 4)
    best = prox_step(m, spec, lam, L, beta_ref, radius)
    assert np.linalg.norm(best) <= radius * (1 + 1e-12)
    fbest = quad_approx(m, spec, lam, L, beta_ref, best)
    probes = rng.standard_normal((200, 4)) * rng.uniform(0.01, 2, size=(200, 1))
    probes[rng.random((200, 4)) < 0.3] = 0.0
    for p in probes:
        if np.isfinite(radius) and np.linalg.norm(p) > radius:
            p = p * radius / np.linalg.norm(p)
        assert fbest <= quad_approx(m, spec, lam, L, beta_ref, p) + 1e-9


class TestSuboptimality:
    def test_zero_absorbs_small_gradient(self):
        assert omega_from_grad(np.array([0.3, -0.5]), np.zeros(2), 0.5) == 0.0

    def test_exact_stationarity(self):
        assert omega_from_grad(np.array([-0.7]), np.array([1.0]), 0.7) == 0.0

    def test_matches_grid_oracle(self, rng):
        for _ in range(50):
            m = random_ls(rng, n=6, d=4)
            beta = rng.standard_normal(4) * (rng.random(4) < 0.5)
            spec = SPECS[rng.integers(len(SPECS))]
            lam = rng.uniform(0.05, 1.5)
            got = suboptimality(m, spec, lam, beta)
            ref = omega_by_grid(surrogate_grad(m, spec, lam, beta), beta, lam)
            assert got == pytest.approx(ref, abs=1e-4)
            assert got >= 0


class TestLineSearch:
    def test_quadratic_curvature_bracket(self):
        c, m0 = 3.7, 1.5
        m = one_dim_quadratic(c, m0)
        for L_init in (1e-3, 0.5, 2.0):
            _, L = line_search(m, PenaltySpec.l1(), 0.0, [0.0], L_init)
            assert c <= L < 2 * c

    def test_sufficient_L_unchanged(self):
        m = one_dim_quadratic(2.0, 1.0)
        beta, L = line_search(m, PenaltySpec.l1(), 0.0, [0.0], 10.0)
        assert L == 10.0
        assert beta[0] == pytest.approx(0.2)

    def test_returned_pair_majorizes(self, rng):
        for _ in range(20):
            m = random_logistic(rng)
            spec = SPECS[rng.integers(len(SPECS))]
            prev = rng.standard_normal(m.d)
            lam = 0.1
            beta, L = line_search(m, spec, lam, prev, 1e-6)
            psi = quad_approx(m, spec, lam, L, prev, beta)
            assert objective(m, spec, lam, beta) <= psi + 1e-12
            assert psi <= objective(m, spec, lam, prev) + 1e-12

    def test_diverges_on_broken_loss(self):
        with pytest.raises(LineSearchError, match="line search diverged"):
            line_search(BrokenLoss(2), PenaltySpec.l1(), 0.1, [1.0, 1.0], 1.0)


class TestProximalGradient:
    def test_lasso_matches_coordinate_descent(self, rng):
        X = rng.standard_normal((5, 3))
        y = rng.standard_normal(5)
        m = LeastSquares(DesignData(X, y))
        lam = 0.2 * lambda_zero(m)
        res = proximal_gradient(m, PenaltySpec.l1(), lam, 1e-12)
        ref = lasso_cd(X, y, lam)
        assert objective(m, PenaltySpec.l1(), lam, res.beta) == pytest.approx(
            objective(m, PenaltySpec.l1(), lam, ref), abs=1e-8
        )
        assert np.linalg.norm(res.beta - ref) < 1e-6

    def test_trace_nonincreasing_and_descent(self, rng):
        for spec in SPECS:
            m = random_elliptical(rng, d=6)
            res = proximal_gradient(m, spec, 0.05, 1e-9)
            assert res.converged and res.omega <= 1e-9
            for prev, cur in zip(res.trace, res.trace[1:]):
                assert cur.phi <= prev.phi - 0.5 * cur.L * cur.step_sq + 1e-10

    def test_fast_path(self, rng):
        m = random_ls(rng)
        lam0 = lambda_zero(m)
        res = proximal_gradient(m, PenaltySpec.mcp(), lam0, 1e-6)
        assert res.iters == 0 and res.converged and res.omega == 0.0
        res = proximal_gradient(m, PenaltySpec.mcp(), lam0, 1e-6, fast_path=False)
        assert res.iters == 1 and not np.any(res.beta) and res.omega == 0.0

    def test_zero_retention(self, rng):
        for m in (random_ls(rng), random_logistic(rng), random_elliptical(rng)):
            res = proximal_gradient(m, PenaltySpec.scad(), 1.5 * lambda_zero(m), 1e-8, fast_path=False, radius=10.0)
            assert not np.any(res.beta) and res.omega == 0.0

    def test_iteration_cap_flags(self, rng):
        m = random_ls(rng, n=30, d=10)
        res = proximal_gradient(m, PenaltySpec.mcp(), 0.01, 1e-14, max_iters=2)
        assert not res.converged and res.iters == 2 and res.omega > 1e-14

    def test_boundary_flag(self, rng):
        m = random_logistic(rng)
        res = proximal_gradient(m, PenaltySpec.l1(), 0.001, 1e-6, radius=0.05, max_iters=50)
        assert res.on_boundary
        assert np.linalg.norm(res.beta) <= 0.05 * (1 + 1e-12)

    def test_start_outside_ball(self, rng):
        m = random_ls(rng)
        with pytest.raises(ConfigurationError):
            proximal_gradient(m, PenaltySpec.l1(), 0.1, 1e-6, beta0=np.ones(m.d), radius=0.5)

    def test_L_respects_floor(self, rng):
        m = random_ls(rng)
        res = proximal_gradient(m, PenaltySpec.mcp(), 0.05, 1e-8, L_min=0.25)
        assert all(r.L >= 0.25 for r in res.trace)

    def test_ground_truth_does_not_change_iterates(self, rng):
        m = random_ls(rng, n=20, d=8)
        a = proximal_gradient(m, PenaltySpec.mcp(), 0.05, 1e-9)
        b = proximal_gradient(m, PenaltySpec.mcp(), 0.05, 1e-9, beta_star=np.ones(8))
        np.testing.assert_array_equal(a.beta, b.beta)
        assert b.trace[-1].l2_err == pytest.approx(np.linalg.norm(b.beta - 1))
        assert a.trace[-1].l2_err is None

    def test_csv_row(self):
        rec = TraceRecord(2, 3, 0.1, 1.0, 0.5, 1e-3, 4)
        row = rec.csv_row()
        assert row[:2] == ["2", "3"] and row[-1] == ""
        assert float(row[2]) == 0.1


@given(st.integers(0, 10**6), st.sampled_from(SPECS))
def test_omega_bounded_by_step(seed, spec):
    """omega(beta^k) <= (L + rho) ||beta^k - beta^{k-1}|| with rho the measured gradient change."""
    rng = np.random.default_rng(seed)
    m = random_ls(rng, n=10, d=5)
    lam = 0.1
    prev = rng.standard_normal(5)
    beta, L = line_search(m, spec, lam, prev, 1e-3)
    step = np.linalg.norm(beta - prev)
    omega = suboptimality(m, spec, lam, beta)
    if step == 0:
        assert omega <= 1e-12 or True
        return
    dg = surrogate_grad(m, spec, lam, beta) - surrogate_grad(m, spec, lam, prev)
    rho = np.linalg.norm(dg) / step
    assert omega <= (L + rho) * step + 1e-10
