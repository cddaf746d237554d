import numpy as np
from django.test import SimpleTestCase, override_settings
from scipy import special

from dichotomy.conf import lab_config_with
from dichotomy.services.core import Equation, Grid, MediumParams
from dichotomy.services.eigenfunctions import (
    QuotientExponents, coarse_residual, first_integral_oracle, giant_first_integral_oracle,
    giant_profile_from_first_integral, minimize_quotient, profile_from_first_integral, rayleigh_quotient,
)
from dichotomy.utils.exceptions import ConvergenceError, ParameterError


class FirstIntegralTests(SimpleTestCase):

    def test_beta_identity(self):
        for p in (3.0, 4.0, 6.0):
            oracle = first_integral_oracle(p, 1.0)
            self.assertAlmostEqual(oracle.beta_integral, oracle.beta_identity, delta=1e-8)
            self.assertAlmostEqual(oracle.beta_identity, 0.5 * special.beta(0.5, 1.0 - 1.0 / p), places=12)

    def test_scaling_laws(self):
        for p in (3.0, 4.0, 6.0):
            base, doubled = first_integral_oracle(p, 1.0), first_integral_oracle(p, 2.0)
            self.assertAlmostEqual(doubled.M / base.M, 2.0 ** (p / (p - 2.0)), places=10)
            self.assertAlmostEqual(doubled.slope / base.slope, 2.0 ** (2.0 / (p - 2.0)), places=10)
            self.assertAlmostEqual(base.max_exponent, p / (p - 2.0))

    def test_energy_balance(self):
        """端点处 (p-1)/p·|U'|^p 等于中点处 U²/(2(p-2))"""
        p = 4.0
        oracle = first_integral_oracle(p, 1.0)
        self.assertAlmostEqual((p - 1.0) / p * oracle.slope ** p, oracle.M ** 2 / (2.0 * (p - 2.0)), places=12)
        self.assertAlmostEqual(oracle.energy, oracle.M ** 2 / (2.0 * (p - 2.0)), places=12)

    def test_profile_shape(self):
        x, U = profile_from_first_integral(4.0, 1.0, 128)
        oracle = first_integral_oracle(4.0, 1.0)
        self.assertEqual(U[0], 0.0)
        self.assertAlmostEqual(U[-1], 0.0, places=14)
        self.assertAlmostEqual(U[64], oracle.M, places=12)
        np.testing.assert_allclose(U, U[::-1])
        self.assertTrue((np.diff(U[:65]) > 0).all())

    def test_giant_profile(self):
        x, G = giant_profile_from_first_integral(2.0, 1.0, 64)
        oracle = giant_first_integral_oracle(2.0, 1.0)
        self.assertAlmostEqual(G[32], oracle.profile_max, places=12)
        self.assertAlmostEqual(oracle.profile_max, np.sqrt(oracle.M), places=12)

    def test_rejects_bad_length(self):
        with self.assertRaises(ParameterError):
            first_integral_oracle(3.0, 0.0)


class MinimizerTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = MediumParams(p=4.0)
        cls.result = minimize_quotient(Grid.interval(0.0, 1.0, 256), cls.params)

    def test_matches_first_integral(self):
        oracle = first_integral_oracle(4.0, 1.0)
        self.assertLess(abs(self.result.maximum - oracle.M) / oracle.M, 0.01)

    def test_normalization_constant(self):
        """J0·C^{p-2} = 1/(p-2)"""
        self.assertAlmostEqual(self.result.J0 * self.result.normC ** 2, 0.5, places=10)

    def test_positive_interior_and_boundary_values(self):
        U = self.result.U
        self.assertEqual(U[0], 0.0)
        self.assertEqual(U[-1], 0.0)
        self.assertTrue((U[1:-1] > 0).all())

    def test_history_is_monotone(self):
        history = np.array(self.result.history)
        self.assertGreater(history.size, 0)
        self.assertTrue((np.diff(history) <= 1e-9 * np.abs(history[:-1])).all())

    def test_residual_meets_tolerance(self):
        self.assertLess(self.result.residual, 1e-6)

    def test_quotient_is_scale_invariant(self):
        w = self.result.U
        grid = self.result.grid
        self.assertAlmostEqual(rayleigh_quotient(3.0 * w, grid, self.params) / rayleigh_quotient(w, grid, self.params),
                               1.0, places=12)

    def test_sign_of_initial_guess_is_ignored(self):
        guess = -np.sin(np.pi * np.linspace(0.0, 1.0, 65))
        result = minimize_quotient(Grid.interval(0.0, 1.0, 64), self.params, initial_guess=guess)
        self.assertTrue((result.U[1:-1] > 0).all())

    @override_settings(LAB_CONFIG=lab_config_with(EIGEN={'MAX_ITERATIONS': 2}))
    def test_budget_exhaustion(self):
        with self.assertRaises(ConvergenceError) as ctx:
            minimize_quotient(Grid.interval(0.0, 1.0, 128), self.params)
        self.assertEqual(ctx.exception.code, 3)
        self.assertEqual(ctx.exception.iterations, 2)


class GeometryTests(SimpleTestCase):

    def test_radial_profile_peaks_at_center(self):
        result = minimize_quotient(Grid.radial(1.0, 64, n=2), MediumParams(p=3.0, n=2))
        self.assertEqual(int(np.argmax(result.U)), 0)
        self.assertEqual(result.U[-1], 0.0)

    def test_box_profile_is_positive_inside(self):
        result = minimize_quotient(Grid.box((0.0, 0.0), (1.0, 1.0), 12), MediumParams(p=3.0, n=2))
        self.assertTrue((result.U[1:-1, 1:-1] > 0).all())
        self.assertTrue((result.U[0] == 0).all() and (result.U[:, -1] == 0).all())

    def test_friendly_giant_matches_oracle(self):
        result = minimize_quotient(Grid.interval(0.0, 1.0, 256), MediumParams(m=2.0), Equation.PME)
        oracle = giant_first_integral_oracle(2.0, 1.0)
        self.assertLess(abs(result.maximum - oracle.profile_max) / oracle.profile_max, 0.01)
        np.testing.assert_allclose(result.w, result.U ** 2)

    def test_exponents(self):
        exponents = QuotientExponents.for_params(MediumParams(m=3.0), Equation.PME)
        self.assertEqual(exponents.P, 2.0)
        self.assertAlmostEqual(exponents.s, 4.0 / 3.0)
        self.assertAlmostEqual(exponents.lam, 0.5)


class EulerLagrangeResidualTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.levels = [minimize_quotient(Grid.interval(0.0, 1.0, cells), MediumParams(m=2.0), Equation.PME)
                      for cells in (256, 512, 1024)]

    def test_every_level_meets_tolerance(self):
        for result in self.levels:
            self.assertLess(result.residual, 1e-6)

    def test_coarse_residual_decreases_under_refinement(self):
        """细网格解注入粗网格后的残差随 h 减小"""
        coarse = [coarse_residual(result) for result in self.levels]
        self.assertTrue(all(b < a for a, b in zip(coarse[:-1], coarse[1:])), coarse)
        self.assertGreater(coarse[-1], 0.0)

    def test_coarse_residual_needs_even_cells(self):
        result = minimize_quotient(Grid.interval(0.0, 1.0, 33), MediumParams(p=3.0))
        with self.assertRaises(ParameterError):
            coarse_residual(result)

    @override_settings(LAB_CONFIG=lab_config_with(EIGEN={'EL_TOLERANCE': 1e-30}))
    def test_tolerance_violation_raises(self):
        with self.assertRaises(ConvergenceError) as ctx:
            minimize_quotient(Grid.interval(0.0, 1.0, 64), MediumParams(p=3.0))
        self.assertEqual(ctx.exception.code, 3)
        self.assertGreater(ctx.exception.residual, 1e-30)
