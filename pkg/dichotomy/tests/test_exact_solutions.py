import math

import numpy as np
from django.test import SimpleTestCase

from dichotomy.services.core import Cylinder, Grid, MediumParams, SingularHint
from dichotomy.services.eigenfunctions import minimize_quotient
from dichotomy.services.exact_solutions import (
    BarenblattSpec, SeparableSpec, barenblatt_eval, barenblatt_gradient_magnitude, barenblatt_mass,
    barenblatt_source, barenblatt_support_radius, pde_residual, profile_at, rescaled_source, separable_eval,
    separable_source,
)
from dichotomy.utils.exceptions import DomainError, ParameterError


class BarenblattTests(SimpleTestCase):

    def setUp(self):
        self.spec = BarenblattSpec(MediumParams(p=3.0, n=1), C=1.0)

    def test_center_value(self):
        """C=1 时 t=1 中心值为 C^{(p-1)/(p-2)} = 1"""
        self.assertAlmostEqual(barenblatt_eval(self.spec, 0.0, 1.0), 1.0)

    def test_vanishes_before_origin_time(self):
        self.assertEqual(barenblatt_eval(self.spec, 0.0, 0.0), 0.0)
        self.assertEqual(barenblatt_eval(self.spec, 0.3, -1.0), 0.0)

    def test_support_radius(self):
        rho = barenblatt_support_radius(self.spec, 1.0)
        self.assertGreater(barenblatt_eval(self.spec, 0.99 * rho, 1.0), 0.0)
        self.assertEqual(barenblatt_eval(self.spec, 1.01 * rho, 1.0), 0.0)
        self.assertEqual(barenblatt_support_radius(self.spec, 0.0), 0.0)

    def test_self_similarity(self):
        lam = self.spec.lam
        x = np.linspace(-2.0, 2.0, 17)
        for t in (0.5, 2.0, 7.0):
            expected = t ** (-1.0 / lam) * np.asarray(barenblatt_eval(self.spec, x / t ** (1.0 / lam), 1.0))
            np.testing.assert_allclose(barenblatt_eval(self.spec, x, t), expected, rtol=1e-12, atol=1e-15)

    def test_mass_is_conserved(self):
        masses = [barenblatt_mass(self.spec, t) for t in (0.5, 1.0, 2.0, 8.0)]
        np.testing.assert_allclose(masses, masses[0], rtol=1e-8)

    def test_mass_requires_positive_time(self):
        with self.assertRaises(DomainError):
            barenblatt_mass(self.spec, 0.0)

    def test_gradient_matches_finite_difference(self):
        delta = 1e-6
        for x in (0.4, 1.0, 2.0):
            numeric = (barenblatt_eval(self.spec, x + delta, 1.5) - barenblatt_eval(self.spec, x - delta, 1.5)) / (2 * delta)
            self.assertAlmostEqual(barenblatt_gradient_magnitude(self.spec, x, 1.5), abs(numeric), places=6)

    def test_planar_center(self):
        spec = BarenblattSpec(MediumParams(p=3.0, n=2), C=1.0, x0=(0.0, 0.0))
        radial = BarenblattSpec(MediumParams(p=3.0, n=2), C=1.0)
        self.assertAlmostEqual(barenblatt_eval(spec, np.array([0.3, 0.4]), 1.0), barenblatt_eval(radial, 0.5, 1.0))

    def test_invalid_spec(self):
        with self.assertRaises(ParameterError):
            BarenblattSpec(MediumParams(p=3.0), C=0.0)
        with self.assertRaises(ParameterError):
            BarenblattSpec(MediumParams(m=2.0), C=1.0)

    def test_rescaled_source_stays_a_solution(self):
        region = Cylinder((0.0,), (4.0,), 0.5, 2.0)
        source = barenblatt_source(self.spec, region)
        scaled = rescaled_source(source, 2.0, 1.0)
        points = np.array([[0.2], [1.1]])
        t = np.array([0.5, 0.75])
        np.testing.assert_allclose(scaled(points, t), 2.0 * source(points, 2.0 * t))
        self.assertAlmostEqual(scaled.region.t2, 1.0)


class ResidualTests(SimpleTestCase):

    def test_residual_converges_under_refinement(self):
        spec = BarenblattSpec(MediumParams(p=3.0, n=1), C=1.0)
        rho = barenblatt_support_radius(spec, 1.0)
        region = Cylinder((0.5 * rho,), (0.25 * rho,), 1.0, 1.5)
        norms = []
        for cells in (32, 64):
            grid = Grid.interval(0.25 * rho, 0.75 * rho, cells, t0=1.0, dt=0.5 / cells, steps=cells)
            norms.append(pde_residual(barenblatt_source(spec, region), grid, spec.params).sup_norm)
        self.assertGreaterEqual(math.log2(norms[0] / norms[1]), 1.0)

    def test_exclusion_masks_singular_point(self):
        spec = BarenblattSpec(MediumParams(p=3.0, n=1), C=1.0)
        grid = Grid.interval(-2.0, 2.0, 32, t0=0.0, dt=0.05, steps=20)
        source = barenblatt_source(spec, Cylinder((0.0,), (2.0,), 0.0, 1.0))
        result = pde_residual(source, grid, spec.params, exclude=SingularHint.point(0.0, 0.0))
        self.assertFalse(result.mask[0].any())
        self.assertTrue(np.isfinite(result.sup_norm))


class SeparableTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.eigen = minimize_quotient(Grid.interval(0.0, 1.0, 64), MediumParams(p=3.0))

    def test_decay_rate(self):
        spec = SeparableSpec(self.eigen, 0.25)
        self.assertAlmostEqual(separable_eval(spec, 0.5, 1.25) / separable_eval(spec, 0.5, 2.25), 2.0)

    def test_zero_before_singular_time(self):
        spec = SeparableSpec(self.eigen, 0.25)
        self.assertEqual(separable_eval(spec, 0.5, 0.25), 0.0)
        self.assertEqual(separable_eval(spec, 0.5, 0.1), 0.0)

    def test_profile_outside_domain(self):
        with self.assertRaises(DomainError):
            profile_at(self.eigen, 1.5)

    def test_source_region(self):
        source = separable_source(SeparableSpec(self.eigen, 0.25), 0.0, 1.0)
        self.assertEqual(source.region.center, (0.5,))
        self.assertEqual(source.region.half_widths, (0.5,))
        self.assertEqual(source.label, 'separable')
