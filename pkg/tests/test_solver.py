from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robpspline import (
    DimensionMismatchError,
    FitConfig,
    InvalidParameterError,
    SaturatedFitError,
    SingularSystemError,
    design_matrix,
    fit,
    gcv_score,
    irls_fit,
    make_basis,
    penalty_matrix,
    pwls_solve,
    select_lambda,
)
from robpspline.loss import (
    absolute,
    check,
    expectile,
    hampel,
    huber,
    least_squares,
    logcosh,
    lq,
    tukey,
)
from robpspline.sim import test_function
from robpspline.solver import estimating_equation, objective, trace_hat

X60 = np.arange(1, 61) / 60


def noisy(f_id="f1", n=60, scale=0.5, seed=0, dist="gaussian"):
    rng = np.random.default_rng(seed)
    x = np.arange(1, n + 1) / n
    e = rng.standard_normal(n)
    if dist == "mixture":
        e = np.where(rng.random(n) < 0.15, 9 * e, e)
    return x, test_function(f_id, x) + scale * e


def dense_pwls(B, W, y, lam_eff, P):
    A = B.T @ (W[:, None] * B) + lam_eff * P.T @ P
    return np.linalg.solve(A, B.T @ (W * y))


def assert_fixed_point(res):
    assert res.converged
    assert res.estimating_eq_norm < 1e-6


class TestPwls:
    def test_dense_oracle(self):
        rng = np.random.default_rng(0)
        basis = make_basis(3, 3)
        x = np.sort(rng.random(12))
        B = design_matrix(basis, x)
        pen = penalty_matrix(2, basis.dim)
        for _ in range(20):
            W = rng.random(12) + 0.1
            y = rng.standard_normal(12)
            lam = 10.0 ** rng.uniform(-4, 2)
            ours = pwls_solve(B, W, y, lam, pen)
            ref = dense_pwls(B, W, y, lam, pen.P)
            assert np.max(np.abs(ours - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))
            A = B.T @ (W[:, None] * B) + lam * pen.PtP
            resid = A @ ours - B.T @ (W * y)
            assert np.linalg.norm(resid) <= 1e-10 * np.linalg.norm(B.T @ (W * y))

    def test_unpenalized_interpolation(self):
        basis = make_basis(2, 4)
        x = np.linspace(0, 1, basis.dim)
        B = design_matrix(basis, x)
        y = np.random.default_rng(1).standard_normal(x.size)
        beta = pwls_solve(B, np.ones(x.size), y, 0.0, penalty_matrix(1, basis.dim))
        np.testing.assert_allclose(B @ beta, y, atol=1e-10)

    @pytest.mark.parametrize("lam_eff", [0.0, 1e-3, 1.0, 1e6])
    def test_affine_reproduction(self, lam_eff):
        basis = make_basis(4, 10)
        B = design_matrix(basis, X60)
        y = 3.0 - 2.0 * X60
        beta = pwls_solve(B, np.full(60, 2.0), y, lam_eff, penalty_matrix(2, basis.dim))
        np.testing.assert_allclose(B @ beta, y, atol=1e-8)

    def test_singular(self):
        basis = make_basis(4, 40)
        B = design_matrix(basis, X60[:20])
        with pytest.raises(SingularSystemError):
            pwls_solve(B, np.ones(20), np.zeros(20), 0.0, penalty_matrix(2, basis.dim))

    def test_validation(self):
        basis = make_basis(3, 3)
        B = design_matrix(basis, np.linspace(0, 1, 10))
        pen = penalty_matrix(2, basis.dim)
        with pytest.raises(DimensionMismatchError):
            pwls_solve(B, np.ones(9), np.zeros(10), 1.0, pen)
        with pytest.raises(InvalidParameterError):
            pwls_solve(B, -np.ones(10), np.zeros(10), 1.0, pen)


class TestTraceAndGcv:
    def test_trace_dense_oracle(self):
        rng = np.random.default_rng(2)
        basis = make_basis(3, 3)
        B = design_matrix(basis, np.sort(rng.random(12)))
        pen = penalty_matrix(2, basis.dim)
        W = rng.random(12) + 0.2
        for lam in (1e-4, 0.1, 10.0):
            H = B @ np.linalg.solve(B.T @ (W[:, None] * B) + lam * pen.P.T @ pen.P, B.T * W)
            assert trace_hat(B, W, lam, pen) == pytest.approx(np.trace(H), rel=1e-10)

    def test_trace_limits_and_monotone(self):
        basis = make_basis(4, 40)
        B = design_matrix(basis, X60)
        pen = penalty_matrix(2, basis.dim)
        W = np.random.default_rng(3).random(60) + 0.5
        lams = np.logspace(-10, 8, 40)
        tr = np.array([trace_hat(B, W, lam, pen) for lam in lams])
        assert np.all(np.diff(tr) <= 1e-9)
        assert tr[-1] == pytest.approx(2.0, abs=1e-3)
        assert trace_hat(B, W, 0.0, pen) == pytest.approx(44.0, abs=1e-9)
        assert np.all((tr > 0) & (tr <= 44 + 1e-9))

    def test_gcv_argmin_invariant_to_weight_scaling(self):
        x, y = noisy("f2", seed=4)
        basis = make_basis(4, 40)
        B = design_matrix(basis, x)
        pen = penalty_matrix(2, basis.dim)
        lams = np.logspace(-4, 4, 30)

        def curve(c):
            W = np.full(60, c)
            out = []
            for lam in lams:
                beta = pwls_solve(B, W, y, c * lam, pen)
                out.append(gcv_score(B, W, y - B @ beta, c * lam, pen))
            return np.array(out)

        g1, g2 = curve(1.0), curve(2.0)
        np.testing.assert_allclose(g2, 2.0 * g1, rtol=1e-10)
        assert np.argmin(g1) == np.argmin(g2)

    def test_saturated(self):
        basis = make_basis(2, 4)
        x = np.linspace(0, 1, basis.dim)
        B = design_matrix(basis, x)
        with pytest.raises(SaturatedFitError):
            gcv_score(B, np.ones(x.size), np.zeros(x.size), 0.0, penalty_matrix(1, basis.dim))


ROBUST = [huber(), tukey(), hampel(), check(0.3), check(0.5), expectile(0.8), lq(1.5),
          absolute(), logcosh()]


class TestIrls:
    def test_least_squares_one_iteration(self):
        x, y = noisy(seed=5)
        res = irls_fit(x, y, FitConfig(scale_mode="none"), 0.01)
        assert res.iterations == 1 and res.converged
        basis = make_basis(4, 40)
        B = design_matrix(basis, x)
        ref = dense_pwls(B, np.full(60, 2.0), y, 2 * 60 * 0.01, penalty_matrix(2, 44).P)
        np.testing.assert_allclose(res.beta, ref, rtol=1e-9, atol=1e-10)
        assert_fixed_point(res)
        np.testing.assert_array_equal(res.residuals, y - B @ res.beta)
        assert res.sigma == 1.0

    def test_huber_quadratic_zone_equals_ls(self):
        # rho_ls(x) = x^2 is twice the quadratic part of Huber's loss, so the
        # fits coincide when least squares uses twice the penalty
        x = X60
        y = np.sin(3 * x)
        cfg = FitConfig(loss=huber(), scale_mode="fixed", sigma=10.0)
        res = irls_fit(x, y, cfg, 1e-3)
        ls = irls_fit(x, y, replace(cfg, loss=least_squares()), 2e-3)
        np.testing.assert_allclose(res.beta, ls.beta, atol=1e-10)
        np.testing.assert_array_equal(res.weights, 1.0)

    @pytest.mark.parametrize("loss", ROBUST, ids=lambda loss: loss.name)
    def test_fixed_point(self, loss):
        x, y = noisy(seed=6, dist="mixture")
        res = irls_fit(x, y, FitConfig(loss=loss, max_iter=5000), 0.05)
        assert_fixed_point(res)

    @pytest.mark.parametrize("loss", [least_squares(), huber(), check(0.3), check(0.5),
                                      expectile(0.2), lq(1.3), absolute(), logcosh()],
                             ids=lambda loss: loss.name)
    def test_monotone_descent(self, loss):
        x, y = noisy("f3", seed=7, dist="mixture")
        res = irls_fit(x, y, FitConfig(loss=loss, max_iter=500), 0.01, start=np.zeros(44))
        trace = np.array(res.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12 * np.abs(trace[:-1]))

    def test_estimating_equation_is_gradient(self):
        x, y = noisy(seed=8)
        cfg = FitConfig(loss=logcosh())
        basis = make_basis(4, 40)
        B = design_matrix(basis, x)
        pen = penalty_matrix(2, 44)
        beta = np.random.default_rng(0).standard_normal(44)
        g = estimating_equation(cfg.loss, B, y, beta, 0.3, 0.7, pen)
        h = 1e-6
        num = np.array([(objective(cfg.loss, B, y, beta + h * e, 0.3, 0.7, pen)
                         - objective(cfg.loss, B, y, beta - h * e, 0.3, 0.7, pen)) / (2 * h)
                        for e in np.eye(44)])
        np.testing.assert_allclose(g, num, atol=1e-7)

    @pytest.mark.parametrize("loss", [huber(), tukey(), check(0.5)], ids=lambda loss: loss.name)
    @pytest.mark.parametrize("a", [0.1, 10.0])
    def test_scale_lambda_equivariance(self, loss, a):
        x, y = noisy(seed=9, dist="mixture")
        cfg = FitConfig(loss=loss, max_iter=1000, tol=1e-12)
        base = irls_fit(x, y, cfg, 0.02)
        scaled = irls_fit(x, a * y, cfg, 0.02 / a ** 2)
        assert scaled.sigma == pytest.approx(a * base.sigma, rel=1e-12)
        np.testing.assert_allclose(scaled.beta, a * base.beta, rtol=0,
                                   atol=1e-8 * np.max(np.abs(a * base.beta)))

    @pytest.mark.parametrize("loss", [least_squares(), huber(), tukey()], ids=lambda loss: loss.name)
    def test_null_space_limit(self, loss):
        x, y = noisy(seed=10, dist="mixture")
        res = irls_fit(x, y, FitConfig(loss=loss), 1e10)
        # rounding in 2 lam P'P beta alone exceeds the equation tolerance here
        assert not res.converged
        line = np.polyval(np.polyfit(x, res.fitted, 1), x)
        assert np.max(np.abs(res.fitted - line)) < 1e-6

    @pytest.mark.parametrize("lam", [0.0, 1e-6, 1.0, 1e8])
    def test_affine_data(self, lam):
        y = 1.5 + 4.0 * X60
        res = irls_fit(X60, y, FitConfig(loss=huber(), scale_mode="fixed", sigma=1.0), lam)
        np.testing.assert_allclose(res.fitted, y, atol=1e-6)

    def test_small_lambda_approaches_unpenalized(self):
        x = np.linspace(0, 1, 200)
        y = np.cos(5 * x) + 0.3 * np.random.default_rng(11).standard_normal(200)
        cfg = FitConfig(loss=huber(), K=10, scale_mode="fixed", sigma=0.3, tol=1e-12)
        free = irls_fit(x, y, cfg, 0.0)
        tiny = irls_fit(x, y, cfg, 1e-12)
        np.testing.assert_allclose(tiny.fitted, free.fitted, atol=1e-6)

    def test_not_converged_is_flag(self):
        x, y = noisy(seed=12, dist="mixture")
        res = irls_fit(x, y, FitConfig(loss=absolute(), max_iter=2), 0.01)
        assert not res.converged and res.iterations == 2

    def test_warm_start_chain(self):
        x, y = noisy(seed=13, dist="mixture")
        cfg = FitConfig(loss=tukey())
        h = irls_fit(x, y, replace(cfg, loss=huber()), 0.05)
        direct = irls_fit(x, y, cfg, 0.05)
        chained = irls_fit(x, y, cfg, 0.05, start=h.beta)
        np.testing.assert_allclose(direct.beta, chained.beta, atol=1e-9)

    def test_edf_range(self):
        x, y = noisy(seed=14)
        for lam in (1e-8, 1e-2, 1e6):
            res = irls_fit(x, y, FitConfig(loss=huber()), lam)
            assert 0 < res.edf <= 44

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10_000), lam=st.floats(1e-6, 1e3),
           kind=st.sampled_from(["huber", "tukey", "logcosh", "expectile"]))
    def test_fixed_point_property(self, seed, lam, kind):
        from robpspline import make_loss
        x, y = noisy("f2", seed=seed, dist="mixture")
        res = irls_fit(x, y, FitConfig(loss=make_loss(kind), max_iter=500), lam)
        if res.converged:
            assert res.estimating_eq_norm < 1e-6


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        {"q": 4}, {"q": 0}, {"K": 1}, {"lam": -1.0}, {"lam": "auto"}, {"scale_mode": "mad"},
        {"scale_mode": "fixed"}, {"max_iter": 0}, {"lambda_min": 1.0, "lambda_max": 0.1},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParameterError):
            FitConfig(**kwargs)


class TestSelectLambda:
    def test_matches_dense_grid(self):
        x, y = noisy("f2", seed=15)
        cfg = FitConfig(scale_mode="none")
        res = select_lambda(x, y, cfg)
        dense = np.logspace(-8, 4, 500)
        scores = [irls_fit(x, y, cfg, lam).gcv for lam in dense]
        best = dense[int(np.argmin(scores))]
        cell = np.log10(dense[1]) - np.log10(dense[0])
        assert abs(np.log10(res.lam) - np.log10(best)) <= cell
        assert res.gcv <= min(scores) + 1e-12

    def test_pure_noise_smooths(self):
        y = np.random.default_rng(16).standard_normal(60)
        cfg = FitConfig(scale_mode="none")
        res = select_lambda(X60, y, cfg)
        dense = np.logspace(-8, 4, 500)
        fits = [irls_fit(X60, y, cfg, lam) for lam in dense]
        oracle = fits[int(np.argmin([f.gcv for f in fits]))]
        assert abs(res.edf - oracle.edf) < 0.1
        assert res.edf < 4.0

    def test_affine_data(self):
        y = 0.5 - 2.0 * X60
        res = select_lambda(X60, y, FitConfig(scale_mode="none"))
        assert res.lam == pytest.approx(1e4)
        np.testing.assert_allclose(res.fitted, y, atol=1e-6)

    def test_tie_breaks_to_larger_lambda(self):
        from robpspline.solver import _argmin_largest
        assert _argmin_largest(np.array([3.0, 1.0, 2.0, 1.0, 5.0])) == 3

    def test_search_record(self):
        x, y = noisy(seed=17)
        res = select_lambda(x, y, FitConfig(loss=huber()))
        s = res.search
        assert s["grid"].size == 50 and s["gcv"].size == 50
        assert res.gcv <= s["gcv"][s["grid_index"]]
        assert_fixed_point(res)

    def test_nonconvex_window(self):
        x, y = noisy(seed=18, dist="mixture")
        cfg = FitConfig(loss=tukey())
        res = select_lambda(x, y, cfg)
        h = res.search["huber"]
        assert h.loss == huber()
        assert np.all(np.abs(np.log10(res.search["grid"]) - np.log10(h.lam)) <= 1.0 + 1e-9)
        assert_fixed_point(res)
        again = select_lambda(x, y, cfg, huber_fit=h)
        np.testing.assert_array_equal(again.beta, res.beta)

    def test_fit_dispatch(self):
        x, y = noisy(seed=19)
        fixed = fit(x, y, FitConfig(loss=huber(), lam=0.1))
        assert fixed.lam == 0.1 and fixed.search is None
        chosen = fit(x, y, FitConfig(loss=huber()))
        assert chosen.search is not None
