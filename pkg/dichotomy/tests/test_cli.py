import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from dichotomy.management.commands import evaluate
from dichotomy.services.config_loader import load_config
from dichotomy.services.experiments import EXPERIMENTS, run_experiment
from dichotomy.services.runners import RunResult
from dichotomy.utils.exceptions import NumericError


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.out = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def call(self, *args, out=None, **options):
        stdout, stderr = StringIO(), StringIO()
        call_command(*args, out=str(out or self.out), stdout=stdout, stderr=stderr, **options)
        return stdout.getvalue()

    def call_failing(self, *args, **options):
        with self.assertRaises(CommandError) as ctx:
            self.call(*args, **options)
        return ctx.exception.returncode

    def summary(self, name):
        return json.loads((self.out / f'{name}.summary.json').read_text(encoding='utf-8'))


class EvaluateCommandTests(CommandTestCase):

    def test_barenblatt_center_value(self):
        self.call('evaluate', 'barenblatt', p=3.0, grid=64, t=1.0)
        summary = self.summary('evaluate')
        self.assertEqual(summary['code'], 0)
        self.assertEqual(summary['data_file'], 'evaluate.csv')
        self.assertAlmostEqual(summary['data']['value_at_center'], 1.0)
        lines = (self.out / 'evaluate.csv').read_text(encoding='utf-8').splitlines()
        self.assertEqual(lines[0], 'x,value')
        self.assertEqual(len(lines), 66)
        self.assertAlmostEqual(float(lines[33].split(',')[1]), 1.0, places=10)

    def test_rerun_is_byte_identical(self):
        self.call('evaluate', 'barenblatt', p=3.0, grid=32)
        with tempfile.TemporaryDirectory() as other:
            self.call('evaluate', 'barenblatt', p=3.0, grid=32, out=other)
            for name in ('evaluate.csv', 'evaluate.summary.json'):
                self.assertEqual((self.out / name).read_bytes(), (Path(other) / name).read_bytes())

    def test_json_format(self):
        self.call('evaluate', 'barenblatt', p=3.0, grid=16, format='json')
        table = json.loads((self.out / 'evaluate.json').read_text(encoding='utf-8'))
        self.assertEqual(table['columns'], ['x', 'value'])
        self.assertEqual(len(table['rows']), 17)

    def test_stdout_lists_artifacts(self):
        printed = json.loads(self.call('evaluate', 'barenblatt', p=3.0, grid=16))
        self.assertEqual(printed['code'], 0)
        self.assertTrue(printed['data_file'].endswith('evaluate.csv'))


class ConfigurationTests(CommandTestCase):

    def write_config(self, text):
        path = self.out / 'run.cfg'
        path.write_text(text, encoding='utf-8')
        return str(path)

    def test_invalid_exponent_exits_with_config_code(self):
        self.assertEqual(self.call_failing('evaluate', 'barenblatt', p=1.5), 2)
        record = json.loads((self.out / 'error.json').read_text(encoding='utf-8'))
        self.assertEqual(record['code'], 2)
        self.assertEqual(record['data']['type'], 'ConfigurationError')
        self.assertIn('p', record['data']['errors'])

    def test_config_file_and_override_priority(self):
        path = self.write_config("# 样例\np = 3\ngrid = 16  # 粗网格\nt-end = 1\n")
        self.call('evaluate', 'barenblatt', config=path)
        self.assertEqual(self.summary('evaluate')['config']['grid'], 16)
        self.call('evaluate', 'barenblatt', config=path, grid=24)
        self.assertEqual(self.summary('evaluate')['config']['grid'], 24)
        self.assertEqual(self.summary('evaluate')['config']['p'], 3.0)

    def test_malformed_line(self):
        path = self.write_config("p = 3\ngrid 16\n")
        self.assertEqual(self.call_failing('evaluate', 'barenblatt', config=path), 2)
        record = json.loads((self.out / 'error.json').read_text(encoding='utf-8'))
        self.assertEqual(record['data']['line'], 2)

    def test_missing_config_file(self):
        self.assertEqual(self.call_failing('evaluate', 'barenblatt', config=str(self.out / 'absent.cfg')), 2)

    def test_exponent_free_input_needs_no_exponent(self):
        self.call('infconv', input='abs', cells=8, steps=2)
        self.assertIsNone(self.summary('infconv')['config']['p'])

    def test_exponent_is_still_required_elsewhere(self):
        self.assertEqual(self.call_failing('evaluate', 'barenblatt', grid=16), 2)
        record = json.loads((self.out / 'error.json').read_text(encoding='utf-8'))
        self.assertIn('p', record['data']['errors'])

    def test_t_end_must_follow_start(self):
        self.assertEqual(self.call_failing('evolve', p=3.0, t_start=1.0, t_end=0.5), 2)


class ExitCodeTests(CommandTestCase):

    def test_inconclusive_result(self):
        result = RunResult('evaluate', ['x'], [[0.0]], {'label': 'Unknown'}, inconclusive=True)
        with mock.patch.object(evaluate.Command, 'runner', staticmethod(lambda config: result)):
            self.assertEqual(self.call_failing('evaluate', 'barenblatt', p=3.0), 4)
        summary = self.summary('evaluate')
        self.assertEqual(summary['code'], 4)
        self.assertEqual(summary['data']['label'], 'Unknown')

    def test_numeric_failure(self):
        def explode(config):
            raise NumericError("非有限值")

        with mock.patch.object(evaluate.Command, 'runner', staticmethod(explode)):
            self.assertEqual(self.call_failing('evaluate', 'barenblatt', p=3.0), 3)
        record = json.loads((self.out / 'error.json').read_text(encoding='utf-8'))
        self.assertEqual(record['code'], 3)
        self.assertEqual(record['data']['type'], 'NumericError')


class AnalysisCommandTests(CommandTestCase):

    def test_eigen_oracle(self):
        self.call('eigen', p=4.0, grid=256, oracle=True)
        data = self.summary('eigen')['data']
        self.assertLess(data['relative_error'], 0.01)
        self.assertAlmostEqual(data['beta_integral'], data['beta_identity'], delta=1e-8)
        header = (self.out / 'eigen.csv').read_text(encoding='utf-8').splitlines()[0]
        self.assertEqual(header, 'x,solver,oracle')

    def test_classify_separable(self):
        self.call('classify', input='separable', p=3.0, grid=64)
        data = self.summary('classify')['data']
        self.assertEqual(data['label'], 'M')
        self.assertEqual(data['verdicts'], {'1': 'Divergent', '0.5': 'Finite'})

    def test_infconv_paths_agree(self):
        self.call('infconv', input='abs', cells=16, steps=4, epsilon=0.05)
        self.assertTrue(self.summary('infconv')['data']['identical'])

    def test_pme_truncation(self):
        self.call('pme', 'truncation', m=2.0, grid=32, cells=16, steps=64)
        data = self.summary('pme_truncation')['data']
        self.assertGreater(data['growth'], 1.0)
        self.assertFalse(data['saturated'])

    def test_run_experiment(self):
        self.call('run_experiment', 'infimal_convolution', input='abs', cells=16, steps=4)
        data = self.summary('infimal_convolution')['data']
        self.assertTrue(data['checks']['sweep_identical'])
        self.assertIn('passed', data)


class ReducedExperimentTests(CommandTestCase):
    """每个验收实验以缩小的网格与样本量跑一遍，检查在粗网格上仍然成立的结论"""

    REDUCED = {
        'barenblatt_verification': ({'grid': 128, 'steps': 8, 'cells': 32}, ('mass', 'residual_order')),
        'sharp_exponents': ({}, None),
        'class_m_signature': ({'grid': 128, 'steps': 64},
                              ('threshold_divergent', 'half_threshold_finite', 'label_M', 'onset')),
        'eigen_oracle': ({'grid': 128}, ('max_scaling_p3', 'max_scaling_p4', 'max_scaling_p6', 'slope_scaling_p3',
                                         'slope_scaling_p4', 'slope_scaling_p6', 'beta_identity')),
        'dichotomy_probe': ({'grid': 128, 'cells': 16, 'steps': 32}, ('blow_up_detected', 'bounded_no_flag')),
        'comparison_principle': ({'samples': 50}, None),
        'harnack_corroboration': ({'grid': 64, 'samples': 100}, ('rescaling_invariant',)),
        'infimal_convolution': ({'cells': 16, 'steps': 8}, ('below', 'monotone_in_epsilon', 'sweep_identical')),
        'caccioppoli_bound': ({'cells': 16, 'steps': 8}, ('bounded_ratio',)),
        'pme_mirror': ({'grid': 128, 'cells': 32, 'steps': 64},
                       ('label_M', 'critical_divergent', 'below_critical_finite', 'point_threshold_finite',
                        'gradient_below_finite', 'bounded_label_B', 'giant_residual', 'giant_residual_decreases',
                        'truncation_grows')),
    }

    def reduced_run(self, name):
        overrides, expected = self.REDUCED[name]
        path = Path(settings.BASE_DIR) / 'configs' / f'{name}.cfg'
        config = load_config(name, str(path), {**overrides, 'out': str(self.out)})
        result = run_experiment(name, config)
        checks = result.summary['checks']
        self.assertEqual(result.summary['passed'], all(checks.values()))
        self.assertTrue(result.rows)
        return checks, expected

    def test_every_experiment_is_covered(self):
        self.assertEqual(set(self.REDUCED), set(EXPERIMENTS))

    def test_reduced_runs(self):
        for name in sorted(self.REDUCED):
            with self.subTest(experiment=name):
                checks, expected = self.reduced_run(name)
                for key in expected or checks:
                    self.assertTrue(checks[key], f'{name}.{key}: {checks}')
