import unittest
from types import SimpleNamespace
from unittest.mock import patch

import numpy as np

from factor_eval.core import (
    IllConditioned,
    InvalidConfig,
    PanelData,
    SplitConfig,
    compute_split_indices,
)
from factor_eval.dgp import DgpConfig, generate_dataset
from factor_eval.forecast import ForecastErrorStreams, ols, recursive_forecast_errors


def noiseless_panel(T=40, N=6, r=2, seed=0):
    """``y_{t+1} = 0.5 + 2 x_t`` exactly, with a factor panel unrelated to ``y``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(T)
    y = np.empty(T)
    y[0] = rng.standard_normal()
    y[1:] = 0.5 + 2.0 * x[:-1]
    F = rng.standard_normal((T, r))
    Lam = rng.standard_normal((N, r))
    X = F @ Lam.T
    return PanelData.from_arrays(X, y, np.column_stack([np.ones(T), x])), F, Lam


class TestOls(unittest.TestCase):
    def test_identity_design(self):
        np.testing.assert_allclose(ols(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])

    def test_intercept_only_is_sample_mean(self):
        self.assertAlmostEqual(float(ols(np.ones(4), [1.0, 2.0, 3.0, 4.0])[0]), 2.5, places=12)

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(8)
        Z = rng.standard_normal((50, 3))
        y = Z @ [1.0, -2.0, 0.5] + rng.standard_normal(50)
        coef = ols(Z, y)
        np.testing.assert_allclose(coef, np.linalg.solve(Z.T @ Z, Z.T @ y), rtol=1e-10)
        residual_fit = np.abs(Z.T @ (y - Z @ coef)).max()
        self.assertLess(residual_fit, 1e-8 * np.linalg.norm(Z) * np.linalg.norm(y))

    def test_collinear_design(self):
        Z = np.column_stack([np.ones(10), np.ones(10)])
        with self.assertRaises(IllConditioned):
            ols(Z, np.arange(10.0))

    def test_too_few_rows(self):
        with self.assertRaises(IllConditioned):
            ols(np.ones((2, 3)), [1.0, 2.0])


class TestRecursiveForecastErrors(unittest.TestCase):
    def setUp(self):
        self.panel, self.F, self.Lam = noiseless_panel()
        self.split = compute_split_indices(self.panel.T, SplitConfig())

    def test_exact_model_has_zero_errors(self):
        streams = recursive_forecast_errors(self.panel, self.split, 2)
        self.assertEqual(streams.n, 20)
        np.testing.assert_allclose(streams.u1, 0.0, atol=1e-10)
        np.testing.assert_allclose(streams.u2_hat, 0.0, atol=1e-10)
        self.assertIsNone(streams.u2_tilde)

    def test_observed_factors_and_diagnostics(self):
        streams = recursive_forecast_errors(
            self.panel, self.split, 2, F_true=self.F, Lambda_true=self.Lam
        )
        self.assertEqual(streams.u2_tilde.shape, (20,))
        np.testing.assert_allclose(streams.factor_error, 0.0, atol=1e-12)

    def test_one_step_alignment(self):
        # with y = noise and W = intercept, u1 at step t is y[t] minus the mean of y[1:t]
        rng = np.random.default_rng(1)
        T = 30
        y = rng.standard_normal(T)
        panel = PanelData.from_arrays(rng.standard_normal((T, 4)), y, np.ones(T))
        split = compute_split_indices(T, SplitConfig())
        streams = recursive_forecast_errors(panel, split, 1)
        expected = [y[t] - y[1:t].mean() for t in range(split.k0, T)]
        np.testing.assert_allclose(streams.u1, expected, atol=1e-12)

    def test_average_augmentation_and_standardize(self):
        streams = recursive_forecast_errors(
            self.panel, self.split, 3, standardize=True, augmentation="average"
        )
        self.assertEqual(streams.r_used, 1)
        self.assertEqual(streams.u2_hat.shape, (20,))

    def test_failure_reports_recursion_step(self):
        T = 30
        rng = np.random.default_rng(2)
        y = rng.standard_normal(T)
        panel = PanelData.from_arrays(
            rng.standard_normal((T, 4)), y, np.column_stack([np.ones(T), np.ones(T)])
        )
        split = compute_split_indices(T, SplitConfig())
        with self.assertRaises(IllConditioned) as cm:
            recursive_forecast_errors(panel, split, 1)
        self.assertEqual(cm.exception.t, split.k0)

    def test_invalid_r(self):
        with self.assertRaises(InvalidConfig):
            recursive_forecast_errors(self.panel, self.split, 7)

    def test_mismatched_split(self):
        with self.assertRaises(InvalidConfig):
            recursive_forecast_errors(
                self.panel, compute_split_indices(50, SplitConfig()), 2
            )


class TestStreamProperties(unittest.TestCase):
    def setUp(self):
        self.ds = generate_dataset(DgpConfig(N=30, T=80, beta=0.3, seed=31))
        self.split = compute_split_indices(80, SplitConfig())

    def streams(self, X=None, y=None, **kw):
        panel = self.ds.panel
        X = panel.X if X is None else X
        y = panel.y if y is None else y
        W = np.column_stack([np.ones(len(y)), y])
        return recursive_forecast_errors(PanelData.from_arrays(X, y, W), self.split, 3, **kw)

    def test_last_target_moves_only_last_entry(self):
        base = self.streams()
        y = self.ds.panel.y.copy()
        y[-1] += 5.0
        moved = self.streams(y=y)
        for name in ("u1", "u2_hat"):
            diff = np.abs(getattr(moved, name) - getattr(base, name))
            with self.subTest(stream=name):
                np.testing.assert_array_equal(diff[:-1], 0.0)
                self.assertAlmostEqual(diff[-1], 5.0, places=8)

    def test_zero_series_changes_nothing(self):
        base = self.streams()
        X = np.column_stack([self.ds.panel.X, np.zeros(80)])
        widened = self.streams(X=X)
        np.testing.assert_allclose(widened.u2_hat, base.u2_hat, atol=1e-8)

    def test_feasible_path_matches_observed_path_for_the_same_factors(self):
        F = self.ds.F_true

        def frozen(X_t, r):
            return SimpleNamespace(F_hat=F[: X_t.shape[0], :r])

        with patch("factor_eval.forecast.extract_factors", side_effect=frozen):
            streams = self.streams(F_true=F)
        np.testing.assert_allclose(streams.u2_hat, streams.u2_tilde, rtol=0, atol=1e-12)


class TestNestedNull(unittest.TestCase):
    def test_observed_factor_mse_matches_restricted_mse(self):
        ds = generate_dataset(DgpConfig(N=40, T=500, seed=32))
        split = compute_split_indices(500, SplitConfig())
        streams = recursive_forecast_errors(ds.panel, split, 3, F_true=ds.F_true)
        self.assertAlmostEqual(streams.mse_ratio(feasible=False), 1.0, delta=0.05)


class TestForecastErrorStreams(unittest.TestCase):
    def test_mse_ratio_and_missing_infeasible_stream(self):
        split = compute_split_indices(20, SplitConfig())
        streams = ForecastErrorStreams(
            u1=np.full(10, 2.0), u2_hat=np.full(10, 1.0), split=split, r_used=1
        )
        self.assertAlmostEqual(streams.mse_ratio(), 0.25)
        with self.assertRaises(InvalidConfig):
            streams.u2(feasible=False)

    def test_length_validation(self):
        split = compute_split_indices(20, SplitConfig())
        with self.assertRaises(InvalidConfig):
            ForecastErrorStreams(u1=np.zeros(9), u2_hat=np.zeros(10), split=split, r_used=1)


if __name__ == "__main__":
    unittest.main()
