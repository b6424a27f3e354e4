import numpy as np
from django.test import SimpleTestCase

from panel.data import PanelData, QuantileLevel, check_loss, residuals, total_check_loss
from panel.exceptions import DimensionMismatchError, InvalidProblemError


class CheckLossTests(SimpleTestCase):

    def test_positive_and_negative_residuals(self):
        self.assertAlmostEqual(check_loss(2.0, 0.25), 0.5)
        self.assertAlmostEqual(check_loss(-2.0, 0.25), 1.5)
        self.assertEqual(check_loss(0.0, 0.9), 0.0)

    def test_vectorized(self):
        loss = check_loss(np.array([-1.0, 0.0, 3.0]), 0.5)
        np.testing.assert_allclose(loss, [0.5, 0.0, 1.5])

    def test_minimizer_over_constant_is_sample_quantile(self):
        y = np.array([3.0, -1.0, 7.0, 2.0, 5.0])
        grid = np.linspace(-2, 8, 1001)
        losses = [np.sum(check_loss(y - c, 0.5)) for c in grid]
        self.assertAlmostEqual(grid[int(np.argmin(losses))], 3.0)

    def test_convex_along_random_segments(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a, b = rng.normal(scale=5.0, size=2)
            tau, theta = rng.uniform(0.01, 0.99), rng.uniform()
            mixed = check_loss(theta * a + (1 - theta) * b, tau)
            self.assertLessEqual(mixed, theta * check_loss(a, tau) + (1 - theta) * check_loss(b, tau) + 1e-12)

    def test_mirrored_levels_sum_to_absolute_value(self):
        rng = np.random.default_rng(4)
        u = rng.normal(scale=3.0, size=500)
        for tau in rng.uniform(0.01, 0.99, 20):
            np.testing.assert_allclose(check_loss(u, tau) + check_loss(-u, 1 - tau), np.abs(u), atol=1e-12)

    def test_positive_scale_equivariance(self):
        rng = np.random.default_rng(5)
        u = rng.normal(scale=3.0, size=500)
        for tau, c in zip(rng.uniform(0.01, 0.99, 20), rng.uniform(0.01, 100.0, 20)):
            np.testing.assert_allclose(check_loss(c * u, tau), c * check_loss(u, tau), rtol=1e-12, atol=1e-12)

    def test_invalid_tau(self):
        for tau in (0.0, 1.0, -0.2, 1.5):
            with self.assertRaises(InvalidProblemError):
                QuantileLevel(tau)


class PanelDataTests(SimpleTestCase):

    def test_unbalanced_panel_shapes(self):
        data = PanelData(ids=[0, 0, 0, 1, 1], y=[1, 2, 3, 4, 5], x=[[1], [2], [3], [4], [5]])
        self.assertEqual((data.n, data.N, data.p), (2, 5, 1))
        np.testing.assert_array_equal(data.t_lengths, [3, 2])
        self.assertFalse(data.is_balanced)
        self.assertAlmostEqual(data.t_bar, 2.5)
        self.assertEqual(data.labels, ('1', '2'))
        self.assertEqual(data.covariate_names, ('x1',))

    def test_rows_sorted_by_individual(self):
        data = PanelData(ids=[1, 0, 1, 0], y=[10, 1, 11, 2], x=np.zeros((4, 0)))
        np.testing.assert_array_equal(data.ids, [0, 0, 1, 1])
        np.testing.assert_array_equal(data.y, [1, 2, 10, 11])
        self.assertEqual(data.p, 0)

    def test_individual_without_rows_rejected(self):
        with self.assertRaises(DimensionMismatchError):
            PanelData(ids=[0, 2], y=[1.0, 2.0], x=np.zeros((2, 0)))

    def test_misaligned_arrays_rejected(self):
        with self.assertRaises(DimensionMismatchError):
            PanelData(ids=[0, 1, 1], y=[1.0, 2.0], x=np.zeros((2, 0)))


class ResidualTests(SimpleTestCase):

    def setUp(self):
        self.data = PanelData(ids=[0, 0, 1, 1], y=[1.0, 2.0, 3.0, 5.0], x=[[1.0], [0.0], [1.0], [2.0]])

    def test_residuals(self):
        np.testing.assert_allclose(residuals(self.data, [0.5, 1.0], [1.0]), [-0.5, 1.5, 1.0, 2.0])

    def test_total_loss(self):
        self.assertAlmostEqual(total_check_loss(self.data, [0.5, 1.0], [1.0], 0.5), 2.5)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            residuals(self.data, [0.0, 0.0, 0.0], [1.0])
        with self.assertRaises(DimensionMismatchError):
            residuals(self.data, [0.0, 0.0], [1.0, 2.0])
