import math

import numpy as np
from django.test import SimpleTestCase, override_settings

from dichotomy.conf import lab_config_with
from dichotomy.services.core import Cylinder, Equation, FieldSource, Grid, MediumParams, ScalarField, SingularHint
from dichotomy.services.diagnostics import (
    ClassLabel, Verdict, _tail_verdict, boundary_boundedness_check, bump_cutoff, caccioppoli_check, classify_field,
    classify_summability, detect_onset, harnack_check, summability_sweep,
)
from dichotomy.services.eigenfunctions import minimize_quotient
from dichotomy.services.evolution import EvolutionProblem, evolve
from dichotomy.services.exact_solutions import (
    BarenblattSpec, SeparableSpec, barenblatt_gradient_source, barenblatt_source, barenblatt_support_radius,
    rescaled_source, separable_source,
)
from dichotomy.utils.exceptions import ConfigurationError, ContractError, ParameterError

UNIT = Cylinder((0.0,), (1.0,), 0.0, 1.0)


def constant_source(value, region=UNIT):
    return FieldSource(lambda x, t: np.full(np.broadcast_shapes(x.shape[:-1], t.shape), float(value)), region)


class TailVerdictTests(SimpleTestCase):

    def test_flat_ratios_diverge(self):
        ratios, tail, verdict = _tail_verdict([1.0, 1.0, 0.95, 0.95])
        self.assertEqual(verdict, Verdict.DIVERGENT)
        self.assertEqual(len(ratios), 3)

    def test_halving_ratios_are_finite(self):
        _, tail, verdict = _tail_verdict([1.0, 0.5, 0.25, 0.125])
        self.assertEqual(verdict, Verdict.FINITE)
        self.assertAlmostEqual(tail, 0.5)

    def test_mixed_ratios_are_inconclusive(self):
        _, _, verdict = _tail_verdict([1.0, 0.5, 0.5, 0.25])
        self.assertEqual(verdict, Verdict.INCONCLUSIVE)

    def test_all_zero_is_finite(self):
        _, tail, verdict = _tail_verdict([0.0, 0.0, 0.0])
        self.assertEqual(verdict, Verdict.FINITE)
        self.assertEqual(tail, 0.0)


class BarenblattSummabilityTests(SimpleTestCase):
    """p=3, n=1：q_crit = 5，梯度临界指数 2.5"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        spec = BarenblattSpec(MediumParams(p=3.0, n=1), C=1.0)
        region = Cylinder((0.0,), (1.25 * barenblatt_support_radius(spec, 1.0),), 0.0, 1.0)
        cls.hint = SingularHint.point((0.0,), 0.0, 0.25)
        cls.source = barenblatt_source(spec, region)
        cls.gradient = barenblatt_gradient_source(spec, region)

    def test_critical_exponent_diverges(self):
        report = classify_summability(self.source, self.hint, 5.0)
        self.assertEqual(report.verdict, Verdict.DIVERGENT)
        self.assertAlmostEqual(report.tail_ratio, 1.0, places=6)
        self.assertEqual(len(report.shell_integrals), 5)

    def test_subcritical_exponent_is_finite(self):
        report = classify_summability(self.source, self.hint, 4.5)
        self.assertEqual(report.verdict, Verdict.FINITE)
        self.assertAlmostEqual(report.tail_ratio, 2.0 ** -1.25, places=6)

    def test_gradient_exponents(self):
        reports = summability_sweep(self.gradient, self.hint, [2.3, 2.5])
        self.assertEqual([r.verdict for r in reports], [Verdict.FINITE, Verdict.DIVERGENT])

    def test_class_threshold_is_inside_the_gap(self):
        self.assertEqual(classify_summability(self.source, self.hint, 1.0).verdict, Verdict.FINITE)

    def test_rejects_bad_exponent(self):
        with self.assertRaises(ParameterError):
            classify_summability(self.source, self.hint, 0.0)

    def test_rejects_hint_after_region(self):
        with self.assertRaises(ParameterError):
            classify_summability(self.source, SingularHint.point((0.0,), 2.0), 5.0)

    def test_tail_ratio_grows_with_exponent(self):
        reports = summability_sweep(self.source, self.hint, [1.0, 2.0, 3.0, 4.0, 4.5, 5.0])
        tails = [r.tail_ratio for r in reports]
        self.assertTrue(all(b > a for a, b in zip(tails[:-1], tails[1:])), tails)
        integrals = [r.shell_integrals[-1][1] for r in reports]
        self.assertTrue(all(value > 0 for value in integrals))

    @override_settings(LAB_CONFIG=lab_config_with(DIAGNOSTICS={'POINT_OCTAVES': 400}))
    def test_shells_below_float_resolution(self):
        report = classify_summability(self.source, self.hint, 5.0)
        self.assertEqual(report.verdict, Verdict.INCONCLUSIVE)
        self.assertTrue(report.reason)


class ClassificationTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = MediumParams(p=3.0)
        eigen = minimize_quotient(Grid.interval(0.0, 1.0, 64), cls.params)
        cls.separable = separable_source(SeparableSpec(eigen, 0.25), 0.0, 1.0)

    def test_separable_solution_is_class_m(self):
        verdict = classify_field(self.separable, self.params)
        self.assertEqual(verdict.label, ClassLabel.M)
        self.assertAlmostEqual(verdict.t0_detected, 0.25, places=6)
        self.assertGreater(verdict.minorant_floor, 0.0)
        self.assertEqual(verdict.threshold, 1.0)

    def test_separable_below_threshold_is_finite(self):
        report = classify_summability(self.separable, SingularHint.time_slice(0.25), 0.5)
        self.assertEqual(report.verdict, Verdict.FINITE)

    def test_bounded_field_is_class_b(self):
        verdict = classify_field(constant_source(2.0), self.params)
        self.assertEqual(verdict.label, ClassLabel.B)
        self.assertIsNone(verdict.t0_detected)

    def test_zero_field_is_class_b(self):
        self.assertEqual(classify_field(constant_source(0.0), self.params).label, ClassLabel.B)

    def test_onset_detection(self):
        t0, scan_dt = detect_onset(self.separable)
        self.assertAlmostEqual(t0, 0.25, places=6)
        self.assertAlmostEqual(scan_dt, 1.0 / 256)
        self.assertIsNone(detect_onset(constant_source(1.0))[0])


class BoundaryBoundednessTests(SimpleTestCase):

    def test_constant_field_is_bounded(self):
        self.assertTrue(boundary_boundedness_check(constant_source(1.0)))

    def test_lateral_blow_up(self):
        source = FieldSource(lambda x, t: np.where((np.abs(x[..., 0]) > 0.9) & (t > 0.5), math.inf, 1.0), UNIT)
        self.assertFalse(boundary_boundedness_check(source))


class HarnackTests(SimpleTestCase):

    def test_constant_field_has_unit_gamma(self):
        report = harnack_check(constant_source(1.0), MediumParams(p=3.0), C_used=0.01, samples=50, seed=1)
        self.assertEqual(report.gamma_measured, 1.0)
        self.assertGreater(len(report.samples), 0)
        self.assertEqual(len(report.samples) + report.skipped, 50)

    def test_same_seed_same_samples(self):
        args = (constant_source(1.0), MediumParams(p=3.0))
        first = harnack_check(*args, C_used=0.01, samples=20, seed=9)
        second = harnack_check(*args, C_used=0.01, samples=20, seed=9)
        self.assertEqual([s.x0 for s in first.samples], [s.x0 for s in second.samples])

    def test_zero_field_has_no_samples(self):
        with self.assertRaises(ConfigurationError):
            harnack_check(constant_source(0.0), MediumParams(p=3.0), C_used=0.01, samples=10, seed=1)

    def test_invalid_arguments(self):
        with self.assertRaises(ParameterError):
            harnack_check(constant_source(1.0), MediumParams(p=3.0), C_used=0.0, samples=10, seed=1)
        with self.assertRaises(ParameterError):
            harnack_check(constant_source(1.0), MediumParams(p=3.0), C_used=1.0, samples=0, seed=1)


class CaccioppoliTests(SimpleTestCase):

    def setUp(self):
        self.grid = Grid.interval(-1.0, 1.0, 64, t0=0.0, dt=0.125, steps=8)
        self.zeta = bump_cutoff(self.grid.axis(0), 0.0, 0.5)
        self.params = MediumParams(p=3.0)

    def test_cutoff_shape(self):
        self.assertEqual(bump_cutoff(0.0, 0.0, 0.5), 1.0)
        self.assertEqual(self.zeta[0], 0.0)
        self.assertTrue((self.zeta >= 0).all())

    def test_stationary_field_satisfies_bound(self):
        field = ScalarField(self.grid, np.full(self.grid.shape, 0.5))
        report = caccioppoli_check(field, self.zeta, (0.0, 1.0), self.params)
        self.assertEqual(report.terms['energy'], 0.0)
        self.assertLessEqual(report.ratio, 1.0)

    def test_zero_field(self):
        field = ScalarField(self.grid, np.zeros(self.grid.shape))
        self.assertEqual(caccioppoli_check(field, self.zeta, (0.0, 1.0), self.params).ratio, 0.0)

    def test_cutoff_must_vanish_on_boundary(self):
        field = ScalarField(self.grid, np.ones(self.grid.shape))
        with self.assertRaises(ContractError):
            caccioppoli_check(field, np.ones(65), (0.0, 1.0), self.params)
        with self.assertRaises(ParameterError):
            caccioppoli_check(field, np.zeros(10), (0.0, 1.0), self.params)

    def test_negative_field(self):
        field = ScalarField(self.grid, -np.ones(self.grid.shape))
        with self.assertRaises(ContractError):
            caccioppoli_check(field, self.zeta, (0.0, 1.0), self.params)


class SampledFieldTests(SimpleTestCase):
    """演化得到的采样场：每层至少缩小 4 倍，至少 3 个壳层"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = MediumParams(p=3.0)
        grid = Grid.interval(-1.0, 1.0, 64, t0=0.0, dt=0.1 / 64, steps=64)
        initial = np.cos(0.5 * np.pi * grid.axis(0)) ** 2
        cls.field = evolve(EvolutionProblem(cls.params, Equation.P_LAPLACE, grid, initial)).field

    def test_evolved_bump_is_class_b(self):
        verdict = classify_field(self.field, self.params)
        self.assertEqual(verdict.label, ClassLabel.B)
        self.assertIsNone(verdict.t0_detected)
        report = verdict.evidence[0]
        self.assertEqual(report.octaves, 2)
        self.assertEqual(len(report.shell_integrals), 3)
        self.assertTrue(all(r < 0.6 for r in report.ratios), report.ratios)

    def test_coarse_time_step_is_inconclusive(self):
        coarse = ScalarField(self.field.grid.with_time(0.0, 0.1 / 4, 4), self.field.values[::16])
        report = classify_summability(coarse, SingularHint.time_slice(0.0), 1.0)
        self.assertEqual(report.verdict, Verdict.INCONCLUSIVE)
        self.assertTrue(report.reason)
        self.assertEqual(report.shell_integrals, [])


class BarenblattHarnackTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = MediumParams(p=3.0)
        spec = BarenblattSpec(cls.params, C=1.0)
        cls.source = barenblatt_source(spec, Cylinder((0.0,), (1.0,), 0.5, 2.0))

    def test_gamma_is_stable_under_doubling(self):
        small = harnack_check(self.source, self.params, C_used=1.0, samples=200, seed=7)
        large = harnack_check(self.source, self.params, C_used=1.0, samples=400, seed=7)
        self.assertTrue(math.isfinite(large.gamma_measured))
        self.assertGreaterEqual(large.gamma_measured, small.gamma_measured)
        self.assertLessEqual(abs(large.gamma_measured - small.gamma_measured), 0.1 * small.gamma_measured)

    def test_gamma_is_invariant_under_intrinsic_scaling(self):
        base = harnack_check(self.source, self.params, C_used=1.0, samples=200, seed=7)
        scaled = harnack_check(rescaled_source(self.source, 2.0, 1.0), self.params, C_used=1.0, samples=200, seed=7)
        self.assertEqual(len(scaled.samples), len(base.samples))
        self.assertAlmostEqual(scaled.gamma_measured / base.gamma_measured, 1.0, delta=0.01)
