import tempfile
from pathlib import Path

import pandas as pd
import pytest
from django.test import SimpleTestCase

from estimation.path_grouping import LambdaGrid
from montecarlo.dgp import SimConfig
from montecarlo.harness import (
    FREQUENCY_KEYS, ReplicationRecord, SimReport, constant_sweep, frequency_key, run_cell, run_replication,
    sweep_report, write_audit_csv,
)
from panel.exceptions import ConfigError

SMALL_GRID = LambdaGrid.from_spec('0:0.35:0.05')


def small_config(**kwargs):
    values = {'n': 9, 't': 20, 'reps': 2, 'seed': 5, 'grid': SMALL_GRID}
    values.update(kwargs)
    return SimConfig(**values)


class ReplicationTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.config = small_config()
        cls.records = run_replication(cls.config, 0, [0.05, 0.1, 0.3])

    def test_one_record_per_constant(self):
        self.assertEqual([r.constant for r in self.records], [0.05, 0.1, 0.3])
        self.assertTrue(all(r.converged and r.rep == 0 for r in self.records))

    def test_shared_path_and_refits(self):
        candidates = {tuple(r.candidate_ks) for r in self.records}
        self.assertEqual(len(candidates), 1)
        self.assertEqual(len({r.fe_beta for r in self.records}), 1)
        for record in self.records:
            self.assertIn(record.k_hat, record.candidate_ks)

    def test_larger_constant_never_selects_more_groups(self):
        ks = [r.k_hat for r in self.records]
        self.assertEqual(ks, sorted(ks, reverse=True))

    def test_record_dict_round_trip(self):
        record = self.records[1]
        self.assertEqual(ReplicationRecord.from_dict(record.to_dict()), record)


class RunCellTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.config = small_config()
        cls.report = run_cell(cls.config)

    def test_report_shape(self):
        self.assertEqual(len(self.report.records), 2)
        self.assertEqual([r.rep for r in self.report.records], [0, 1])
        self.assertEqual(self.report.failures, 0)
        self.assertFalse(self.report.flagged)

    def test_frequency_sums_to_one(self):
        freq, se = self.report.k_frequency()
        self.assertEqual(list(freq), list(FREQUENCY_KEYS))
        self.assertAlmostEqual(sum(freq.values()), 1.0, delta=1e-12)
        self.assertTrue(all(v >= 0 for v in se.values()))

    def test_summary(self):
        summary = self.report.summary()
        self.assertEqual(summary['reps'], 2)
        self.assertEqual(summary['true_beta'], 1.0)
        self.assertIsNotNone(summary['beta_rmse'])
        if summary['coverage'] is not None:
            self.assertTrue(0.0 <= summary['coverage'] <= 1.0)

    def test_to_dict(self):
        report = self.report.to_dict()
        self.assertEqual((report['schema'], report['kind']), (1, 'simulation'))
        self.assertEqual(report['config']['pnt_constant'], 0.1)
        self.assertEqual(len(report['records']), 2)
        self.assertNotIn('records', self.report.to_dict(include_records=False))

    def test_deterministic(self):
        again = run_cell(self.config)
        self.assertEqual(again.to_dict(), self.report.to_dict())

    def test_worker_count_does_not_change_results(self):
        parallel = run_cell(self.config, workers=2)
        self.assertEqual(parallel.to_dict(), self.report.to_dict())

    def test_sweep_at_default_constant_matches_cell(self):
        sweep = constant_sweep(self.config, [0.05, 0.1, 0.2])
        self.assertEqual(list(sweep), [0.05, 0.1, 0.2])
        self.assertEqual(sweep[0.1].to_dict(), self.report.to_dict())
        report = sweep_report(self.config, sweep)
        self.assertEqual([point['constant'] for point in report['sweep']], [0.05, 0.1, 0.2])
        self.assertEqual(report['k_frequency'], self.report.to_dict()['k_frequency'])

    def test_audit_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'audit.csv'
            write_audit_csv(self.report, path)
            frame = pd.read_csv(path)
        self.assertEqual(frame['rep'].tolist(), [0, 1])
        self.assertIn('k_hat', frame.columns)

    def test_unknown_backend(self):
        with self.assertRaises(ConfigError):
            run_cell(self.config, backend='threads')


class CeleryBackendTests(SimpleTestCase):

    def test_eager_workers_match_local_run(self):
        from montecarlo.tasks import run_replication_task
        conf = run_replication_task.app.conf
        previous = conf.task_always_eager
        conf.task_always_eager = True
        try:
            config = small_config(reps=1)
            remote = run_cell(config, backend='celery')
        finally:
            conf.task_always_eager = previous
        self.assertEqual(remote.to_dict(), run_cell(config).to_dict())


class SimReportTests(SimpleTestCase):

    def test_failures_are_excluded_and_flagged(self):
        records = [
            ReplicationRecord(rep=0, constant=0.1, k_hat=3, beta_hat=1.1, fe_beta=1.0, covered=True,
                              perfect=True, frac_correct=1.0),
            ReplicationRecord(rep=1, constant=0.1, k_hat=6, beta_hat=0.9, fe_beta=1.0, covered=False),
            ReplicationRecord(rep=2, constant=0.1, converged=False, error='E_SOLVER'),
        ]
        report = SimReport(small_config(reps=3), 0.1, records)
        self.assertEqual(report.failures, 1)
        self.assertTrue(report.flagged)
        freq, _ = report.k_frequency()
        self.assertEqual(freq, {'1': 0.0, '2': 0.0, '3': 0.5, '4': 0.0, '5+': 0.5})
        summary = report.summary()
        self.assertAlmostEqual(summary['beta_bias'], 0.0)
        self.assertAlmostEqual(summary['beta_rmse'], 0.1)
        self.assertEqual(summary['coverage'], 0.5)
        self.assertEqual(summary['match_count'], 1)
        self.assertEqual(summary['perfect_match'], 1.0)

    def test_frequency_key(self):
        self.assertEqual([frequency_key(k) for k in (1, 4, 5, 30)], ['1', '4', '5+', '5+'])


@pytest.mark.slow
class PaperCellTests(SimpleTestCase):
    """Desk-scale versions of the published simulation results (200 reps per cell)."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.report = run_cell(SimConfig(reps=200, seed=20240601), workers=4)
        cls.summary = cls.report.summary()

    def test_group_count_recovery(self):
        freq, _ = self.report.k_frequency()
        self.assertGreaterEqual(freq['3'], 0.93)

    def test_slope_rmse_and_bias(self):
        self.assertTrue(0.016 <= self.summary['beta_rmse'] <= 0.029)
        self.assertTrue(-0.005 <= self.summary['beta_bias'] <= 0.005)

    def test_coverage(self):
        self.assertTrue(0.90 <= self.summary['coverage'] <= 0.975)

    def test_membership(self):
        self.assertGreaterEqual(self.summary['avg_match'], 0.97)
        self.assertGreaterEqual(self.summary['perfect_match'], 0.85)

    def test_worker_counts(self):
        config = SimConfig(reps=8, seed=99)
        baseline = run_cell(config, workers=1).to_dict()
        for workers in (2, 8):
            self.assertEqual(run_cell(config, workers=workers).to_dict(), baseline)


@pytest.mark.slow
class CorrelatedDesignTests(SimpleTestCase):

    def test_grouping_bias_shrinks_with_t(self):
        bias = {
            t: run_cell(SimConfig(dgp=2, model='location-scale', t=t, reps=200, seed=7), workers=4).summary()['beta_bias']
            for t in (30, 60)
        }
        self.assertGreater(bias[30], 0.0)
        self.assertGreaterEqual(bias[30], 2 * abs(bias[60]))

    def test_constant_sensitivity_shrinks_with_t(self):
        def spread(t):
            sweep = constant_sweep(SimConfig(t=t, reps=50, seed=11), [0.05, 0.1, 0.2], workers=4)
            shares = [report.k_frequency()[0]['3'] for report in sweep.values()]
            return max(shares) - min(shares)

        self.assertLess(spread(60), spread(15))
