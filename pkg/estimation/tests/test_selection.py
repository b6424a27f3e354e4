from types import SimpleNamespace

import numpy as np
from django.test import SimpleTestCase
from scipy.stats import norm

from estimation.path_grouping import GroupStructure, LambdaPathResult, run_lambda_path
from estimation.qr_solver import build_grouped_problem, data_loss, solve_fe
from estimation.selection import (
    IcConstants, bandwidth, bofinger_bandwidth, choose_by_ic, distinct_k_entries, hall_sheather_bandwidth,
    ic_constants, refit, refit_candidates, select_by_ic, sparsity_from_residuals,
)
from panel.data import PanelData, total_check_loss
from panel.exceptions import ConfigError, NoConvergedEntriesError

from .test_path_grouping import grouped_panel
from .test_qr_solver import assert_certified


class BandwidthTests(SimpleTestCase):

    def test_hall_sheather_at_median(self):
        self.assertAlmostEqual(hall_sheather_bandwidth(0.5, 1800), 0.0799, delta=1e-3)

    def test_bandwidth_shrinks_with_sample_size(self):
        self.assertLess(hall_sheather_bandwidth(0.5, 10000), hall_sheather_bandwidth(0.5, 100))
        self.assertLess(bofinger_bandwidth(0.5, 10000), bofinger_bandwidth(0.5, 100))

    def test_clipped_near_the_boundary(self):
        h = hall_sheather_bandwidth(0.01, 10)
        self.assertAlmostEqual(h, 0.999 * 0.01)
        self.assertGreater(0.01 - h, 0.0)

    def test_rule_dispatch(self):
        self.assertEqual(bandwidth('bofinger', 0.25, 500), bofinger_bandwidth(0.25, 500))
        with self.assertRaises(ConfigError):
            bandwidth('silverman', 0.5, 100)


class SparsityTests(SimpleTestCase):

    def test_normal_residuals(self):
        resid = norm.ppf((np.arange(1, 10001) - 0.5) / 10000)
        s = sparsity_from_residuals(resid, 0.5, 0.05)
        self.assertAlmostEqual(s / (1.0 / norm.pdf(0.0)), 1.0, delta=0.05)

    def test_normal_draws_with_rule_bandwidth(self):
        resid = np.random.default_rng(10).standard_normal(100_000)
        s = sparsity_from_residuals(resid, 0.5, hall_sheather_bandwidth(0.5, resid.size))
        self.assertAlmostEqual(s / np.sqrt(2 * np.pi), 1.0, delta=0.05)

    def test_uniform_residuals(self):
        resid = (np.arange(1, 10001) - 0.5) / 10000
        for tau in (0.25, 0.3, 0.5, 0.75):
            self.assertAlmostEqual(sparsity_from_residuals(resid, tau, 0.05), 1.0, delta=0.05)

    def test_constant_residuals(self):
        self.assertEqual(sparsity_from_residuals(np.full(50, 2.0), 0.5, 0.1), 0.0)


class IcConstantsTests(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(3)
        self.data = PanelData(ids=np.repeat(np.arange(30), 60), y=rng.standard_normal(1800), x=np.empty((1800, 0)))

    def test_pnt_scaling(self):
        constants = IcConstants(c_hat=0.2, p_nt=0.0, sparsity=1.0, bandwidth=0.1)
        scaled = constants.with_pnt_constant(self.data, 0.1)
        self.assertAlmostEqual(scaled.p_nt, 8.3496, places=3)
        self.assertAlmostEqual(scaled.penalty(3), 0.2 * 3 * scaled.p_nt)

    def test_constants_from_fixed_effects(self):
        fe = solve_fe(self.data, 0.5)
        constants = ic_constants(self.data, 0.5, fe, pnt_constant=0.1)
        self.assertAlmostEqual(constants.p_nt, 8.3496, places=3)
        self.assertEqual(constants.bandwidth, hall_sheather_bandwidth(0.5, 1800))
        self.assertAlmostEqual(constants.c_hat, 0.25 * constants.sparsity)
        self.assertGreater(constants.c_hat, 0.4)

    def test_floor(self):
        flat = PanelData(ids=np.repeat(np.arange(4), 5), y=np.ones(20), x=np.empty((20, 0)))
        constants = ic_constants(flat, 0.5, solve_fe(flat, 0.5), c_min=1e-3)
        self.assertLess(constants.sparsity, 1e-6)
        self.assertEqual(constants.c_hat, 1e-3)


class RefitTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.data, cls.truth = grouped_panel(11)
        cls.fe = solve_fe(cls.data, 0.5)

    def test_singletons_match_fixed_effects(self):
        result = refit(self.data, 0.5, GroupStructure.singletons(self.fe.alpha))
        self.assertEqual(result.k, self.data.n)
        self.assertAlmostEqual(result.objective, self.fe.objective, delta=1e-6 * (1 + self.fe.objective))

    def test_one_group_is_pooled(self):
        one = GroupStructure(centers=[0.0], membership=np.zeros(self.data.n, dtype=int))
        result = refit(self.data, 0.5, one)
        self.assertEqual(result.k, 1)
        self.assertAlmostEqual(
            result.objective,
            total_check_loss(self.data, result.individual_alpha(), result.beta, 0.5),
            places=6,
        )

    def test_objective_ordered_by_flexibility(self):
        truth = GroupStructure.from_labels(self.truth, self.fe.alpha)
        pooled = GroupStructure(centers=[0.0], membership=np.zeros(self.data.n, dtype=int))
        grouped = refit(self.data, 0.5, truth).objective
        self.assertLessEqual(self.fe.objective, grouped + 1e-4)
        self.assertLessEqual(grouped, refit(self.data, 0.5, pooled).objective + 1e-4)

    def test_location_only_matches_sample_quantile(self):
        rng = np.random.default_rng(5)
        y = rng.standard_normal(301)
        data = PanelData(ids=np.zeros(301, dtype=int), y=y, x=np.empty((301, 0)))
        result = refit(data, 0.3, GroupStructure(centers=[0.0], membership=[0]))
        best = total_check_loss(data, [np.quantile(y, 0.3, method='inverted_cdf')], [], 0.3)
        self.assertAlmostEqual(result.objective, best, delta=1e-6 * (1 + best))


def fake_fit(k, objective):
    return SimpleNamespace(k=k, objective=objective)


class ChooseByIcTests(SimpleTestCase):

    def setUp(self):
        self.constants = IcConstants(c_hat=0.5, p_nt=1.0, sparsity=2.0, bandwidth=0.1)

    def test_tie_goes_to_smaller_k(self):
        fitted = [
            (SimpleNamespace(lambda_tilde=0.05), fake_fit(3, 10.0)),
            (SimpleNamespace(lambda_tilde=0.10), fake_fit(2, 10.5)),
        ]
        selection = choose_by_ic(fitted, self.constants)
        self.assertEqual([c.k for c in selection.candidates], [2, 3])
        self.assertEqual(selection.candidates[0].ic_value, selection.candidates[1].ic_value)
        self.assertEqual(selection.k, 2)
        self.assertEqual(selection.selected.lambda_tilde, 0.10)

    def test_ic_is_loss_plus_penalty(self):
        fitted = [(SimpleNamespace(lambda_tilde=0.0), fake_fit(5, 4.0)), (SimpleNamespace(lambda_tilde=0.2), fake_fit(1, 9.0))]
        selection = choose_by_ic(fitted, self.constants)
        for candidate in selection.candidates:
            self.assertEqual(candidate.ic_value, candidate.refit.objective + 0.5 * candidate.k * 1.0)
        self.assertEqual(selection.k, 5)
        self.assertIsNone(selection.candidate_for(4))

    def test_distinct_k_keeps_first_entry(self):
        entries = [SimpleNamespace(k=k, lambda_tilde=lam) for k, lam in [(6, 0.0), (3, 0.1), (3, 0.2), (1, 0.3)]]
        kept = distinct_k_entries(SimpleNamespace(converged_entries=entries))
        self.assertEqual([(e.k, e.lambda_tilde) for e in kept], [(1, 0.3), (3, 0.1), (6, 0.0)])

    def test_no_converged_entries(self):
        with self.assertRaises(NoConvergedEntriesError):
            refit_candidates(LambdaPathResult(entries=(), fuse_tol=1e-4), None, 0.5)


class SelectByIcTests(SimpleTestCase):

    def test_selection_on_path(self):
        data, _ = grouped_panel(21)
        fe = solve_fe(data, 0.5)
        path = run_lambda_path(data, 0.5, [0.0, 0.05, 0.1, 0.2], fe)
        selection = select_by_ic(path, data, 0.5, fe)
        self.assertIn(selection.k, path.k_values)
        self.assertEqual([c.k for c in selection.candidates], sorted(set(e.k for e in path.converged_entries)))
        self.assertEqual(selection.selected.ic_value, min(c.ic_value for c in selection.candidates))
        self.assertEqual(selection.alpha.shape, (data.n,))


class RefitOptimalityTests(SimpleTestCase):
    """The unpenalized refit can only improve on the penalized fit under the same grouping."""

    def test_refit_not_worse_than_path_entry(self):
        data, _ = grouped_panel(13)
        fe = solve_fe(data, 0.4)
        path = run_lambda_path(data, 0.4, [0.0, 0.02, 0.05, 0.1, 0.2, 0.35], fe)
        self.assertTrue(path.converged_entries)
        for entry in path.converged_entries:
            membership = entry.grouping.membership
            centers = np.bincount(membership, weights=entry.alpha) / np.bincount(membership)
            penalized = data_loss(data, 0.4, centers[membership], entry.beta)
            result = refit(data, 0.4, entry.grouping)
            problem = build_grouped_problem(data, 0.4, membership, entry.grouping.k)
            assert_certified(self, problem, result.report)
            self.assertLessEqual(result.objective, penalized + 1e-8 * (1.0 + abs(penalized)))
