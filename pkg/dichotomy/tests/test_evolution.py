import math

import numpy as np
from django.test import SimpleTestCase, override_settings

from dichotomy.conf import lab_config_with
from dichotomy.services.core import Cylinder, Equation, FieldSource, Grid, MediumParams
from dichotomy.services.evolution import (
    BoundaryCondition, EvolutionProblem, comparison_check, evolve, evolve_ensemble, solve_ring,
)
from dichotomy.services.exact_solutions import BarenblattSpec, barenblatt_eval, barenblatt_support_radius
from dichotomy.utils.exceptions import ContractError, ParameterError, StiffnessError


def bump_problem(params=MediumParams(p=3.0), equation=Equation.P_LAPLACE, cells=32, steps=4, t_end=0.05,
                 scale=1.0, **kwargs):
    grid = Grid.interval(-1.0, 1.0, cells, t0=0.0, dt=t_end / steps, steps=steps)
    initial = scale * np.cos(0.5 * np.pi * grid.axis(0)) ** 2
    return EvolutionProblem(params, equation, grid, initial, **kwargs)


class BarenblattEvolutionTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.spec = BarenblattSpec(MediumParams(p=3.0, n=1), C=1.0)
        half = 1.25 * barenblatt_support_radius(cls.spec, 1.0)
        grid = Grid.interval(-half, half, 128, t0=0.5, dt=0.0625, steps=8)
        initial = np.asarray(barenblatt_eval(cls.spec, grid.axis(0), 0.5))
        cls.problem = EvolutionProblem(cls.spec.params, Equation.P_LAPLACE, grid, initial)
        cls.report = evolve(cls.problem)

    def test_matches_exact_solution(self):
        x = self.problem.grid.axis(0)
        exact = np.asarray(barenblatt_eval(self.spec, x, 1.0))
        error = np.max(np.abs(self.report.field.values[-1] - exact))
        self.assertLess(error, 0.05 * exact.max())

    def test_mass_is_conserved(self):
        volumes = self.problem.grid.node_measures()
        start = float(np.sum(volumes * self.report.field.values[0]))
        end = float(np.sum(volumes * self.report.field.values[-1]))
        self.assertAlmostEqual(end / start, 1.0, places=8)

    def test_report_layout(self):
        self.assertEqual(self.report.field.values.shape, (9, 129))
        self.assertFalse(self.report.blow_up_flag)
        self.assertIsNone(self.report.blow_up_time)
        self.assertAlmostEqual(self.report.step_times[-1], 1.0)
        self.assertTrue((self.report.dt_trace <= 0.0625).all())
        self.assertEqual(self.report.steps, self.report.dt_trace.size)

    def test_error_decreases_under_refinement(self):
        """h 与名义步长同时减半，L¹ 误差的实测阶至少为 1"""
        errors = []
        half = 1.25 * barenblatt_support_radius(self.spec, 1.0)
        for cells in (64, 128, 256):
            grid = Grid.interval(-half, half, cells, t0=0.5, dt=0.5 / cells, steps=cells)
            initial = np.asarray(barenblatt_eval(self.spec, grid.axis(0), 0.5))
            report = evolve(EvolutionProblem(self.spec.params, Equation.P_LAPLACE, grid, initial))
            exact = np.asarray(barenblatt_eval(self.spec, grid.axis(0), 1.0))
            errors.append(float(grid.node_measures() @ np.abs(report.field.values[-1] - exact)))
        orders = [math.log2(a / b) for a, b in zip(errors[:-1], errors[1:])]
        self.assertTrue(all(order >= 1.0 for order in orders), orders)

    def test_maximum_principle(self):
        self.assertLessEqual(self.report.max_trace.max(), self.problem.initial.max() + 1e-14)
        self.assertGreaterEqual(self.report.field.values.min(), 0.0)


class PorousMediumEvolutionTests(SimpleTestCase):

    def test_neumann_mass_conservation(self):
        problem = bump_problem(MediumParams(m=2.0), Equation.PME, left=BoundaryCondition.neumann(),
                               right=BoundaryCondition.neumann())
        report = evolve(problem)
        volumes = problem.grid.node_measures()
        masses = report.field.values @ volumes
        np.testing.assert_allclose(masses, masses[0], rtol=1e-12)

    def test_dirichlet_values_are_imposed(self):
        boundary = BoundaryCondition('dirichlet', 0.1)
        problem = bump_problem(MediumParams(m=2.0), Equation.PME, left=boundary, right=boundary)
        report = evolve(problem)
        np.testing.assert_array_equal(report.field.values[:, 0], 0.1)
        np.testing.assert_array_equal(report.field.values[:, -1], 0.1)
        self.assertGreaterEqual(report.field.values.min(), 0.0)


class ProblemValidationTests(SimpleTestCase):

    def test_negative_initial_data(self):
        with self.assertRaises(ContractError):
            bump_problem(scale=-1.0)

    def test_cfl_range(self):
        with self.assertRaises(ParameterError):
            bump_problem(cfl_safety=1.5)

    def test_boundary_series_length(self):
        problem = bump_problem(left=BoundaryCondition('dirichlet', np.zeros(3)))
        with self.assertRaises(ContractError):
            evolve(problem)

    def test_negative_boundary_data(self):
        problem = bump_problem(left=BoundaryCondition('dirichlet', -1.0))
        with self.assertRaises(ContractError):
            evolve(problem)

    def test_unknown_boundary_kind(self):
        with self.assertRaises(ParameterError):
            BoundaryCondition('robin')

    def test_ensemble_requires_shared_grid(self):
        with self.assertRaises(ParameterError):
            evolve_ensemble([bump_problem(cells=32), bump_problem(cells=16)])

    @override_settings(LAB_CONFIG=lab_config_with(EVOLUTION={'DT_UNDERFLOW': 1.0}))
    def test_step_underflow(self):
        with self.assertRaises(StiffnessError) as ctx:
            evolve(bump_problem())
        self.assertEqual(ctx.exception.code, 3)

    def test_default_threshold_follows_data_scale(self):
        self.assertEqual(bump_problem(scale=0.5).resolved_threshold(), 0.5e6)
        self.assertEqual(bump_problem(scale=4.0).resolved_threshold(), 4.0e6)
        self.assertEqual(bump_problem(scale=0.0).resolved_threshold(), 1e6)

    def test_explosion_threshold_stops_run(self):
        report = evolve(bump_problem(explosion_threshold=0.5))
        self.assertTrue(report.blow_up_flag)
        self.assertAlmostEqual(report.blow_up_time, report.step_times[0])
        self.assertEqual(report.dt_trace.size, 1)


class ComparisonTests(SimpleTestCase):

    def test_ordered_data_stay_ordered(self):
        self.assertTrue(comparison_check(bump_problem(scale=0.5), bump_problem(scale=1.0)))

    def test_ordered_pme_data(self):
        params = MediumParams(m=2.0)
        self.assertTrue(comparison_check(bump_problem(params, Equation.PME, scale=0.25),
                                         bump_problem(params, Equation.PME, scale=1.0)))

    def test_random_ordered_pairs(self):
        """10^3 对随机有序初边值，p-Laplace 与 PME 各半"""
        rng = np.random.default_rng(20240601)
        grid = Grid.interval(0.0, 1.0, 8, t0=0.0, dt=0.005, steps=2)
        cases = ((MediumParams(p=3.0), Equation.P_LAPLACE), (MediumParams(m=2.0), Equation.PME))
        violations = 0
        for k in range(1000):
            params, equation = cases[k % 2]
            u_a = rng.uniform(0.0, 1.0, 9)
            u_b = u_a + rng.uniform(0.0, 0.5, 9)
            a = rng.uniform(0.0, 1.0, 2)
            b = a + rng.uniform(0.0, 0.5, 2)
            pair = [
                EvolutionProblem(params, equation, grid, u, left=BoundaryCondition('dirichlet', bc[0]),
                                 right=BoundaryCondition('dirichlet', bc[1]))
                for u, bc in ((u_a, a), (u_b, b))
            ]
            violations += not comparison_check(*pair)
        self.assertEqual(violations, 0)

    def test_unordered_initial_data(self):
        with self.assertRaises(ContractError):
            comparison_check(bump_problem(scale=1.0), bump_problem(scale=0.5))

    def test_unordered_boundary_data(self):
        with self.assertRaises(ContractError):
            comparison_check(bump_problem(left=BoundaryCondition('dirichlet', 0.2)), bump_problem(scale=2.0))


class RingProbeTests(SimpleTestCase):

    def test_zero_trace_stays_zero(self):
        report = solve_ring(1.0, 0.5, None, MediumParams(p=3.0), cells=8, t_end=0.1, steps=4)
        self.assertFalse(report.blow_up_flag)
        self.assertEqual(len(report.fields), 2)
        self.assertTrue((report.field.values == 0).all())

    def test_infinite_trace_reaches_cap(self):
        region = Cylinder((0.0,), (1.0,), 0.0, 1.0)
        source = FieldSource(lambda x, t: np.where(t > 0.5, math.inf, 0.0) + 0.0 * x[..., 0], region)
        report = solve_ring(1.0, 0.5, source, MediumParams(p=3.0), cells=16, t_end=1.0, steps=16, cap=10.0,
                            breakpoints=(0.5,))
        self.assertTrue(report.blow_up_flag)
        self.assertGreater(report.blow_up_time, 0.5)
        self.assertEqual(report.threshold, 5.0)
        self.assertIn(0.5, report.step_times.tolist())

    def test_widths_must_be_ordered(self):
        with self.assertRaises(ParameterError):
            solve_ring(0.5, 1.0, None, MediumParams(p=3.0))
