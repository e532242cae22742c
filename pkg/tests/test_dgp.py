import unittest

import numpy as np
from pydantic import ValidationError

from factor_eval.dgp import (
    DgpConfig,
    LoadingRegime,
    generate_dataset,
    make_rng,
    simulate_garch,
    simulate_idiosyncratics,
    simulate_loadings,
)


def lag1_autocorrelation(x):
    x = x - x.mean()
    return float(x[1:] @ x[:-1] / (x @ x))


class TestDgpConfig(unittest.TestCase):
    def test_defaults_follow_r(self):
        cfg = DgpConfig(r=2)
        self.assertEqual(cfg.beta, [0.0, 0.0])
        self.assertEqual(cfg.alphas, [1.0, 1.0])
        self.assertEqual(cfg.D2diag, [2.0, 1.0])

    def test_regimes(self):
        self.assertEqual(DgpConfig(regime="weak").alphas, [0.51] * 3)
        self.assertEqual(DgpConfig(regime=LoadingRegime.heterogeneous).alphas, [1.0, 0.7, 0.51])

    def test_scalar_beta(self):
        self.assertEqual(DgpConfig(beta=0.2).beta, [0.2] * 3)
        self.assertEqual(DgpConfig().with_beta(0.4).beta, [0.4] * 3)

    def test_invalid_configs(self):
        for bad in (
            {"alphas": [0.51, 0.7, 1.0]},
            {"alphas": [1.0, 1.0, 1.2]},
            {"beta": [0.1, 0.1]},
            {"garch_params": (0.1, 0.5, 0.5)},
            {"N": 0},
            {"unknown": 1},
        ):
            with self.subTest(bad=bad), self.assertRaises(ValidationError):
                DgpConfig(**bad)


class TestSimulators(unittest.TestCase):
    def test_loadings_gram_matrix(self):
        Lam = simulate_loadings(800, 3, [1.0, 1.0, 1.0], [3.0, 2.0, 1.0], 0.0, make_rng(11))
        gram = Lam.T @ Lam / 800
        self.assertLess(np.abs(gram - np.diag([3.0, 2.0, 1.0])).max(), 0.5)

    def test_loading_eigenvalues_grow_like_n_to_alpha(self):
        alphas = [1.0, 0.7, 0.51]
        grid = np.array([200, 400, 800])
        means = []
        for N in grid:
            eig = [
                np.linalg.eigvalsh(Lam.T @ Lam)[::-1]
                for Lam in (
                    simulate_loadings(int(N), 3, alphas, [3.0, 2.0, 1.0], 0.0, make_rng([12, rep]))
                    for rep in range(20)
                )
            ]
            means.append(np.mean(eig, axis=0))
        slopes = np.polyfit(np.log(grid), np.log(np.array(means)), 1)[0]
        np.testing.assert_allclose(slopes, alphas, atol=0.15)

    def test_loadings_share_one_draw(self):
        # unit D and alpha = 1 make the loading exactly G * (1 + pi / sqrt(N))
        first = simulate_loadings(50, 2, [1.0, 1.0], [1.0, 1.0], 24.0, make_rng(5))
        G = make_rng(5).standard_normal((50, 2))
        np.testing.assert_allclose(first, G * (1.0 + 24.0 / np.sqrt(50)), rtol=1e-12)

    def test_white_noise_idiosyncratics(self):
        e = simulate_idiosyncratics(5, 4000, np.zeros(5), False, 0.4, 5, make_rng(1))
        for i in range(5):
            self.assertLess(abs(lag1_autocorrelation(e[:, i])), 3 / np.sqrt(4000))

    def test_persistent_idiosyncratics_have_unit_variance(self):
        e = simulate_idiosyncratics(5, 20000, np.full(5, 0.9), False, 0.4, 5, make_rng(2))
        np.testing.assert_allclose(e.var(axis=0), 1.0, rtol=0.15)

    def test_rho_is_clamped(self):
        e = simulate_idiosyncratics(3, 500, np.full(3, 1.8), False, 0.4, 5, make_rng(3))
        self.assertTrue(np.all(np.isfinite(e)))
        self.assertLess(np.abs(e).max(), 50.0)

    def test_spatial_dependence_decays(self):
        e = simulate_idiosyncratics(50, 2000, np.zeros(50), True, 0.4, 5, make_rng(4))
        corr = np.corrcoef(e.T)
        near = np.mean([corr[i, i + 1] for i in range(40)])
        far = np.mean([corr[i, i + 6] for i in range(40)])
        self.assertGreater(near, far)
        self.assertGreater(near, 0.6)

    def test_garch_stationary_variance(self):
        u = simulate_garch(100_000, 0.1, 0.1, 0.2, make_rng(5))
        self.assertAlmostEqual(u.var(), 0.1 / 0.7, delta=0.05 * 0.1 / 0.7)
        self.assertGreater(lag1_autocorrelation(u**2), 3 / np.sqrt(100_000))

    def test_garch_without_dynamics_is_gaussian(self):
        u = simulate_garch(100_000, 1.0, 0.0, 0.0, make_rng(6))
        kurtosis = np.mean(u**4) / np.mean(u**2) ** 2
        self.assertAlmostEqual(kurtosis, 3.0, delta=0.1)


class TestGenerateDataset(unittest.TestCase):
    def test_replay_is_bitwise_identical(self):
        cfg = DgpConfig(N=30, T=60, beta=0.3, cs_dependence=True, garch=True, seed=7)
        first, second = generate_dataset(cfg), generate_dataset(cfg)
        np.testing.assert_array_equal(first.panel.X, second.panel.X)
        np.testing.assert_array_equal(first.panel.y, second.panel.y)
        np.testing.assert_array_equal(first.F_true, second.F_true)

    def test_seed_override(self):
        cfg = DgpConfig(N=10, T=30)
        a = generate_dataset(cfg, seed=[1, 0, 0])
        b = generate_dataset(cfg, seed=[1, 0, 1])
        self.assertFalse(np.array_equal(a.panel.y, b.panel.y))

    def test_layout(self):
        ds = generate_dataset(DgpConfig(N=20, T=50))
        self.assertEqual(ds.panel.X.shape, (50, 20))
        self.assertEqual(ds.F_true.shape, (50, 3))
        self.assertEqual(ds.Lambda_true.shape, (20, 3))
        np.testing.assert_array_equal(ds.panel.W[:, 0], 1.0)
        np.testing.assert_array_equal(ds.panel.W[:, 1], ds.panel.y)
        frame = ds.to_frame()
        self.assertEqual(list(frame.columns[:3]), ["y", "x1", "x2"])
        self.assertEqual(frame.shape, (50, 21))

    def test_restricted_model_mean(self):
        ds = generate_dataset(DgpConfig(N=5, T=5000, seed=8))
        self.assertLess(abs(ds.panel.y.mean() - 2.5), 4 * 2.0 / np.sqrt(5000))

    def test_iid_target_without_dynamics(self):
        ds = generate_dataset(DgpConfig(N=5, T=5000, theta1=0.0, seed=9))
        self.assertAlmostEqual(ds.panel.y.mean(), 1.25, delta=4 / np.sqrt(5000))
        self.assertAlmostEqual(ds.panel.y.std(), 1.0, delta=0.05)

    def test_factor_scale(self):
        T = 500
        ds = generate_dataset(DgpConfig(N=10, T=T, seed=10))
        gap = ds.F_true.T @ ds.F_true / T - np.eye(3)
        self.assertLess(np.abs(gap).max(), 5 / np.sqrt(T))

    def test_signal_enters_target(self):
        cfg = DgpConfig(N=10, T=400, beta=0.6, theta1=0.0, seed=12)
        ds = generate_dataset(cfg)
        y_next = ds.panel.y[1:] - 1.25 - ds.F_true[:-1] @ np.full(3, 0.6)
        np.testing.assert_allclose(y_next, ds.u[1:], atol=1e-12)


if __name__ == "__main__":
    unittest.main()
