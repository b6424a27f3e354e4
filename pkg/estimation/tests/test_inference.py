import numpy as np
from django.test import SimpleTestCase

from estimation.inference import CovarianceEstimate, sandwich_covariance
from estimation.path_grouping import GroupStructure
from estimation.selection import RefitResult, refit
from panel.data import PanelData
from panel.exceptions import SingularCovarianceError

from .test_path_grouping import grouped_panel


class SandwichCovarianceTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        data, membership = grouped_panel(4, n=12, t=40)
        cls.data = data
        cls.grouping = GroupStructure.from_labels(membership, membership.astype(float))
        cls.fit = refit(data, 0.5, cls.grouping)

    def test_symmetric_and_positive_semidefinite(self):
        cov = sandwich_covariance(self.data, 0.5, self.grouping, self.fit)
        self.assertEqual(cov.matrix.shape, (4, 4))
        np.testing.assert_array_equal(cov.matrix, cov.matrix.T)
        self.assertGreaterEqual(np.linalg.eigvalsh(cov.matrix).min(), -1e-12)
        self.assertTrue(np.all(cov.standard_errors > 0))

    def test_confidence_intervals_cover_estimate(self):
        cov = sandwich_covariance(self.data, 0.5, self.grouping, self.fit, rule='bofinger')
        lo, hi = cov.confidence_intervals(self.fit.coefficients)
        self.assertTrue(np.all(lo < self.fit.coefficients))
        self.assertTrue(np.all(self.fit.coefficients < hi))
        np.testing.assert_allclose(hi - lo, 2 * 1.959963984540054 * cov.standard_errors)
        self.assertEqual(cov.slope_block(3).shape, (1, 1))

    def test_mismatched_grouping(self):
        one = GroupStructure(centers=[0.0], membership=np.zeros(self.data.n, dtype=int))
        with self.assertRaises(SingularCovarianceError):
            sandwich_covariance(self.data, 0.5, one, self.fit)


class LocationVarianceTests(SimpleTestCase):

    def test_median_variance(self):
        rng = np.random.default_rng(8)
        N = 5000
        data = PanelData(ids=np.zeros(N, dtype=int), y=rng.standard_normal(N), x=np.empty((N, 0)))
        grouping = GroupStructure(centers=[0.0], membership=[0])
        cov = sandwich_covariance(data, 0.5, grouping, refit(data, 0.5, grouping))
        expected = 0.25 * 2 * np.pi / N
        self.assertAlmostEqual(cov.matrix[0, 0] / expected, 1.0, delta=0.3)
        self.assertEqual(cov.truncated, 0)


class SingularDesignTests(SimpleTestCase):

    def test_zero_covariate(self):
        rng = np.random.default_rng(2)
        data = PanelData(
            ids=np.repeat(np.arange(3), 20),
            y=rng.standard_normal(60),
            x=np.column_stack([rng.standard_normal(60), np.zeros(60)]),
        )
        grouping = GroupStructure(centers=[0.0], membership=[0, 0, 0])
        fit = refit(data, 0.5, grouping)
        with self.assertRaises(SingularCovarianceError):
            sandwich_covariance(data, 0.5, grouping, fit)

    def test_standard_errors_ignore_negative_rounding(self):
        cov = CovarianceEstimate(matrix=np.array([[4.0, 0.0], [0.0, -1e-18]]), bandwidth=0.1)
        np.testing.assert_array_equal(cov.standard_errors, [2.0, 0.0])


class InvarianceTests(SimpleTestCase):
    """T * tau stays non-integer at tau and tau +/- h, so every refit is unique."""

    h = 0.08

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.data, _ = grouped_panel(9, n=6, t=35)

    def covariance(self, data):
        grouping = GroupStructure(centers=np.zeros(data.n), membership=np.arange(data.n))
        return sandwich_covariance(data, 0.5, grouping, refit(data, 0.5, grouping), h=self.h).matrix

    def test_duplicated_panel_halves_covariance(self):
        data = self.data
        doubled = PanelData(
            ids=np.concatenate([data.ids, data.ids]),
            y=np.concatenate([data.y, data.y]),
            x=np.vstack([data.x, data.x]),
        )
        np.testing.assert_allclose(self.covariance(doubled), self.covariance(data) / 2, rtol=1e-6, atol=1e-10)

    def test_permuting_individuals_permutes_intercept_block(self):
        data = self.data
        perm = np.array([3, 0, 5, 1, 4, 2])
        permuted = PanelData(ids=perm[data.ids], y=data.y, x=data.x)
        base, moved = self.covariance(data), self.covariance(permuted)
        n, slopes = data.n, np.arange(data.n, data.n + data.p)
        np.testing.assert_allclose(moved[np.ix_(perm, perm)], base[:n, :n], rtol=1e-6, atol=1e-10)
        np.testing.assert_allclose(moved[np.ix_(perm, slopes)], base[:n, n:], rtol=1e-6, atol=1e-10)
        np.testing.assert_allclose(moved[n:, n:], base[n:, n:], rtol=1e-6, atol=1e-10)
