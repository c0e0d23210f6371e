import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from mobibench.elasticnet import (
    DEFAULT_GRID, ElasticNetError, FitConfig, fit, grid_for_estimator, predict,
    select_hyperparams,
)

TIGHT = dict(tol=1e-13, max_iter=50_000)


def soft_threshold(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def ridge_oracle(X, y, lam):
    """Closed-form ridge on standardized features, mapped back; independent path."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n = len(y)
    means = X.mean(axis=0)
    scales = X.std(axis=0)  # population std, matching the solver contract
    Xs = (X - means) / scales
    yc = y - y.mean()
    beta_std = np.linalg.solve(Xs.T @ Xs / n + lam * np.eye(X.shape[1]), Xs.T @ yc / n)
    coefs = beta_std / scales
    intercept = y.mean() - coefs @ means
    return intercept, coefs


class TestFitConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(lam=-0.1), dict(alpha=-0.1), dict(alpha=1.1), dict(tol=0.0), dict(max_iter=0),
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ElasticNetError):
            FitConfig(**kwargs)


class TestFitOracles:
    def test_lambda_zero_matches_least_squares(self):
        rng = np.random.default_rng(42)
        X = rng.normal(size=(5, 2))
        y = rng.normal(size=5)
        model = fit(X, y, FitConfig(lam=0.0, alpha=0.5, **TIGHT))
        coef_ls, *_ = np.linalg.lstsq(np.column_stack((np.ones(5), X)), y, rcond=None)
        np.testing.assert_allclose([model.intercept, *model.coefficients], coef_ls,
                                   atol=1e-8)

    def test_ridge_matches_closed_form(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(4, 2))
        y = rng.normal(size=4)
        lam = 0.3
        model = fit(X, y, FitConfig(lam=lam, alpha=0.0, **TIGHT))
        b0, coefs = ridge_oracle(X, y, lam)
        assert model.intercept == pytest.approx(b0, abs=1e-8)
        np.testing.assert_allclose(model.coefficients, coefs, atol=1e-8)

    def test_single_feature_lasso_is_soft_threshold(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=40)
        x = (x - x.mean()) / x.std()  # standardized feature: scale maps to identity
        y = 2.0 * x + rng.normal(size=40)
        lam = 0.5
        model = fit(x.reshape(-1, 1), y, FitConfig(lam=lam, alpha=1.0, **TIGHT))
        expected = soft_threshold(float(x @ y) / len(y), lam)
        assert model.coefficients[0] == pytest.approx(expected, abs=1e-10)

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_single_feature_solution_is_analytic(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 25))
        x = rng.normal(scale=rng.uniform(0.5, 5.0), size=n) + rng.uniform(-10, 10)
        assume(x.std() > 1e-8)
        y = rng.normal(size=n)
        lam = float(rng.uniform(0, 2))
        alpha = float(rng.uniform(0, 1))
        model = fit(x.reshape(-1, 1), y, FitConfig(lam=lam, alpha=alpha, **TIGHT))
        xs = (x - x.mean()) / x.std()
        rho = float(xs @ (y - y.mean())) / n
        beta_std = soft_threshold(rho, lam * alpha) / (1.0 + lam * (1.0 - alpha))
        assert model.coefficients[0] == pytest.approx(beta_std / x.std(), abs=1e-10)

    def test_degenerate_target(self):
        X = np.array([[1.0], [2.0], [3.0]])
        y = np.array([4.0, 4.0, 4.0])
        model = fit(X, y, FitConfig(lam=0.01))
        assert model.intercept == 4.0
        assert model.coefficients[0] == 0.0
        assert model.converged

    def test_zero_variance_feature_gets_exact_zero(self):
        rng = np.random.default_rng(5)
        X = np.column_stack((np.full(20, 3.0), rng.normal(size=20)))
        y = rng.normal(size=20)
        model = fit(X, y, FitConfig(lam=0.1, alpha=0.5))
        assert model.coefficients[0] == 0.0

    def test_rejects_non_finite(self):
        with pytest.raises(ElasticNetError, match="non-finite"):
            fit(np.array([[np.nan], [1.0]]), np.array([1.0, 2.0]), FitConfig())

    def test_rejects_empty(self):
        with pytest.raises(ElasticNetError):
            fit(np.empty((0, 1)), np.empty(0), FitConfig())


class TestObjective:
    def test_trace_recorded_and_monotone(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        model = fit(X, y, FitConfig(lam=0.05, alpha=0.7), record_trace=True)
        trace = model.objective_trace
        assert len(trace) == model.n_sweeps + 1
        assert np.all(np.diff(trace) <= 1e-12)
        assert trace[-1] == pytest.approx(model.final_objective)

    def test_trace_absent_by_default(self):
        model = fit([[1.0], [2.0]], [1.0, 2.0], FitConfig())
        assert model.objective_trace is None

    def test_final_objective_finite(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            X = rng.normal(size=(10, 2))
            y = rng.normal(size=10)
            assert np.isfinite(fit(X, y, FitConfig(lam=1.0)).final_objective)


class TestPredict:
    def test_zero_coefficients_constant(self):
        model = fit([[1.0], [2.0], [3.0]], [5.0, 5.0, 5.0], FitConfig())
        np.testing.assert_allclose(predict(model, [[10.0], [-3.0]]), 5.0)

    def test_ols_residuals_orthogonal(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(25, 2))
        y = rng.normal(size=25)
        model = fit(X, y, FitConfig(lam=0.0, **TIGHT))
        resid = y - predict(model, X)
        np.testing.assert_allclose(X.T @ resid, 0.0, atol=1e-7)
        assert resid.sum() == pytest.approx(0.0, abs=1e-7)

    def test_ridge_oracle_predictions(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(4, 2))
        y = rng.normal(size=4)
        model = fit(X, y, FitConfig(lam=0.3, alpha=0.0, **TIGHT))
        b0, coefs = ridge_oracle(X, y, 0.3)
        np.testing.assert_allclose(predict(model, X), b0 + X @ coefs, atol=1e-8)

    def test_dimension_mismatch(self):
        model = fit([[1.0], [2.0]], [1.0, 2.0], FitConfig())
        with pytest.raises(ElasticNetError, match="mismatch"):
            predict(model, [[1.0, 2.0]])


class TestInvariants:
    def test_scale_equivariance_of_predictions(self):
        rng = np.random.default_rng(21)
        X = rng.normal(size=(40, 2))
        y = X @ [1.0, -0.5] + rng.normal(size=40)
        cfg = FitConfig(lam=0.2, alpha=0.5, **TIGHT)
        base = predict(fit(X, y, cfg), X)
        for c in (0.01, 3.0, 1000.0):
            Xc = X.copy()
            Xc[:, 1] *= c
            scaled = predict(fit(Xc, y, cfg), Xc)
            np.testing.assert_allclose(scaled, base, atol=1e-8)

    def test_lasso_l1_path_monotone(self):
        rng = np.random.default_rng(22)
        z = rng.normal(size=50)
        X = np.column_stack((z, 0.7 * z + 0.3 * rng.normal(size=50)))
        y = X @ [2.0, -1.0] + 0.2 * rng.normal(size=50)
        norms = []
        for lam in (0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0):
            model = fit(X, y, FitConfig(lam=lam, alpha=1.0, **TIGHT))
            norms.append(np.abs(model.coefficients * model.feature_scales).sum())
        assert all(a >= b - 1e-10 for a, b in zip(norms, norms[1:]))

    def test_deterministic(self):
        rng = np.random.default_rng(23)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        a = fit(X, y, FitConfig(lam=0.1))
        b = fit(X, y, FitConfig(lam=0.1))
        assert a.intercept == b.intercept
        assert np.array_equal(a.coefficients, b.coefficients)


class TestSelectHyperparams:
    def test_singleton_grid(self):
        cfg = FitConfig(lam=0.42)
        rng = np.random.default_rng(31)
        X = rng.normal(size=(30, 1))
        y = rng.normal(size=30)
        assert select_hyperparams(X, y, [cfg], val_len=5) is cfg

    def test_noiseless_linear_picks_unpenalized(self):
        rng = np.random.default_rng(32)
        X = rng.normal(size=(40, 2))
        y = X @ [3.0, -2.0] + 1.0
        grid = [FitConfig(lam=0.0, alpha=0.5, **TIGHT), FitConfig(lam=10.0, alpha=0.5, **TIGHT)]
        assert select_hyperparams(X, y, grid, val_len=10).lam == 0.0

    def test_tie_prefers_larger_lambda(self):
        X = np.arange(20, dtype=float).reshape(-1, 1)
        y = np.full(20, 7.0)  # constant target: every config predicts the mean
        grid = [FitConfig(lam=0.001), FitConfig(lam=1.0)]
        assert select_hyperparams(X, y, grid, val_len=5).lam == 1.0
        assert select_hyperparams(X, y, grid[::-1], val_len=5).lam == 1.0

    def test_val_len_bounds(self):
        X = np.ones((5, 1))
        y = np.ones(5)
        grid = [FitConfig(), FitConfig(lam=1.0)]
        with pytest.raises(ElasticNetError):
            select_hyperparams(X, y, grid, val_len=5)
        with pytest.raises(ElasticNetError, match="degenerate split"):
            select_hyperparams(X, y, grid, val_len=4)

    def test_empty_grid(self):
        with pytest.raises(ElasticNetError, match="empty"):
            select_hyperparams(np.ones((5, 1)), np.ones(5), [], val_len=2)


class TestGrids:
    def test_default_grid_shape(self):
        assert len(DEFAULT_GRID) == 5
        assert all(cfg.alpha == 0.5 for cfg in DEFAULT_GRID)
        assert [cfg.lam for cfg in DEFAULT_GRID] == [0.0, 0.001, 0.01, 0.1, 1.0]

    def test_estimator_grids(self):
        assert [c.lam for c in grid_for_estimator("ols")] == [0.0]
        assert all(c.alpha == 0.0 for c in grid_for_estimator("ridge"))
        assert all(c.alpha == 1.0 for c in grid_for_estimator("lasso"))
        assert [c.lam for c in grid_for_estimator("lasso", [0.5, 2.0])] == [0.5, 2.0]
        with pytest.raises(ElasticNetError):
            grid_for_estimator("xgboost")
