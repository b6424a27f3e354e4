from django.test import SimpleTestCase

from montecarlo.dgp import SimConfig
from montecarlo.harness import ReplicationRecord, SimReport
from montecarlo.tables import parse_preset, preset_configs, table_report, table_rows
from panel.exceptions import ConfigError


def fake_report(config, ks):
    records = [
        ReplicationRecord(rep=i, constant=0.1, k_hat=k, beta_hat=1.0 + 0.01 * i, fe_beta=1.02, covered=True,
                          fe_covered=True, perfect=k == 3, frac_correct=1.0 if k == 3 else None)
        for i, k in enumerate(ks)
    ]
    return SimReport(config, 0.1, records)


class PresetTests(SimpleTestCase):

    def test_parse(self):
        preset = parse_preset('T3-n30-T60')
        self.assertEqual((preset.table, preset.n, preset.t), (3, 30, 60))
        self.assertEqual((preset.tau, preset.kind), (0.5, 'slope'))
        self.assertEqual(parse_preset('T6-n15-T30').tau, 0.75)
        self.assertEqual(parse_preset(' T1-n30-T60 ').name, 'T1-n30-T60')

    def test_rejects_unknown(self):
        for name in ('T7-n30-T60', 'T1-30-60', 'table1'):
            with self.assertRaises(ConfigError):
                parse_preset(name)

    def test_eight_cells(self):
        cells = preset_configs(parse_preset('T2-n15-T30'), SimConfig(reps=5, seed=3))
        self.assertEqual(len(cells), 8)
        self.assertEqual(len({(c.dgp, c.model, c.error) for c in cells}), 8)
        self.assertTrue(all((c.n, c.t, c.tau, c.reps, c.seed) == (15, 30, 0.75, 5, 3) for c in cells))
        self.assertEqual((cells[0].dgp, cells[0].model, cells[0].error), (1, 'location', 'normal'))


class TableRowTests(SimpleTestCase):

    def setUp(self):
        self.config = SimConfig(reps=4)
        self.report = fake_report(self.config, [3, 3, 2, 7])

    def test_frequency_row(self):
        frame = table_rows(parse_preset('T1-n30-T60'), [self.report])
        self.assertEqual(list(frame.columns), ['dgp', 'model', 'error', 'n', 'T', 'K=1', 'K=2', 'K=3', 'K=4', 'K=5+'])
        row = frame.iloc[0]
        self.assertEqual((row['K=2'], row['K=3'], row['K=5+']), (0.25, 0.5, 0.25))

    def test_slope_row(self):
        frame = table_rows(parse_preset('T3-n30-T60'), [self.report])
        self.assertAlmostEqual(frame.iloc[0]['QRFE bias'], 0.02)
        self.assertEqual(frame.iloc[0]['PQR coverage'], 1.0)

    def test_membership_row(self):
        frame = table_rows(parse_preset('T5-n30-T60'), [self.report])
        self.assertEqual(frame.iloc[0]['perfect match'], 1.0)
        self.assertEqual(frame.iloc[0]['average match'], 1.0)

    def test_report(self):
        report = table_report(parse_preset('T1-n30-T60'), [self.report])
        self.assertEqual((report['schema'], report['kind'], report['table']), (1, 'table', 1))
        self.assertEqual(len(report['rows']), 1)
        self.assertEqual(report['cells'][0]['kind'], 'simulation')
