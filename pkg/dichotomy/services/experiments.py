"""
命名实验
每个验收准则对应一个实验，摘要里的 checks 给出逐项结论，passed 为全部通过
"""
import logging
import math
from typing import Any, Callable

import numpy as np

from dichotomy.conf import lab_setting
from dichotomy.services.core import Cylinder, Equation, Grid, SingularHint, derived_constants
from dichotomy.services.diagnostics import (
    ClassLabel, Verdict, classify_field, detect_onset, harnack_check, summability_sweep,
)
from dichotomy.services.eigenfunctions import coarse_residual, first_integral_oracle, giant_first_integral_oracle
from dichotomy.services.evolution import (
    BoundaryCondition, EvolutionProblem, comparison_check, evolve, evolve_ensemble, solve_ring,
)
from dichotomy.services.exact_solutions import (
    SeparableSpec, barenblatt_eval, barenblatt_mass, barenblatt_source, barenblatt_support_radius, pde_residual,
    profile_at, rescaled_source, separable_source,
)
from dichotomy.services.pme import (
    PMESeparableSpec, pme_classify, pme_point_mass, pme_pressure_gradient, pme_separable_source,
    pme_truncation_gradient_check,
)
from dichotomy.services.regularization import InfConvSpec, inf_convolve
from dichotomy.services.runners import (
    Config, RunResult, barenblatt_problem, barenblatt_spec, caccioppoli_level, classification_input,
    continuous_field, equation_of, evolved_bump, harnack_input, medium, ring_trace, solve_profile, start_time,
    summability_rows, truncation_levels,
)
from dichotomy.utils.exceptions import ConfigurationError

logger = logging.getLogger('dichotomy')

SHELL_HEADER = ['field', 'q', 'shell_index', 'scale', 'integral', 'verdict']


def _finish(name: str, header: list[str], rows: list[list[Any]], summary: dict[str, Any], checks: dict[str, bool],
            inconclusive: bool = False) -> RunResult:
    summary['checks'] = checks
    summary['passed'] = all(checks.values())
    logger.info(f"实验 {name}: {'通过' if summary['passed'] else '未通过'} {checks}")
    return RunResult(name, header, rows, summary, inconclusive)


def _labelled(label: str, reports) -> list[list[Any]]:
    return [[label, *row] for row in summability_rows(reports)]


def barenblatt_verification(config: Config) -> RunResult:
    """演化解与闭式解、质量守恒、PDE 残差收敛阶"""
    spec = barenblatt_spec(config)
    t_start, t_end = start_time(config, 0.5), config['t_end']
    report = evolve(barenblatt_problem(config, spec, t_start, t_end, config['grid'], config['steps']))
    grid = report.field.grid
    x = grid.axis(0)
    numeric = report.field.values[-1]
    exact = np.atleast_1d(barenblatt_eval(spec, x, t_end))
    sup_error = float(np.max(np.abs(numeric - exact)) / np.max(exact))

    mass_end = 4.0 * t_start
    long_run = evolve(barenblatt_problem(config, spec, t_start, mass_end, config['grid'], config['steps']))
    masses = long_run.field.values @ long_run.field.grid.node_measures()
    mass_exact = barenblatt_mass(spec, t_start)
    mass_drift = float(np.max(np.abs(masses - mass_exact)) / mass_exact)

    rho = barenblatt_support_radius(spec, t_end)
    residuals = []
    for cells in (config['cells'], 2 * config['cells']):
        window = Grid.interval(0.25 * rho, 0.75 * rho, cells, t0=t_end, dt=0.5 * t_end / cells, steps=cells)
        region = Cylinder((0.5 * rho,), (0.25 * rho,), t_end, 1.5 * t_end)
        residuals.append(pde_residual(barenblatt_source(spec, region), window, spec.params).sup_norm)
    order = math.log2(residuals[0] / residuals[1]) if residuals[1] > 0 else math.inf

    summary = {
        'sup_error': sup_error, 'mass_exact': mass_exact, 'mass_drift': mass_drift, 'mass_window': [t_start, mass_end],
        'residuals': residuals, 'residual_order': order, 'steps': report.steps,
    }
    checks = {'sup_error': sup_error <= 0.01, 'mass': mass_drift <= 0.01, 'residual_order': order >= 1.0}
    rows = [[xi, ui, ei] for xi, ui, ei in zip(x, numeric, exact)]
    return _finish('barenblatt_verification', ['x', 'numeric', 'exact'], rows, summary, checks)


def sharp_exponents(config: Config) -> RunResult:
    """Barenblatt 在临界指数两侧的可积性与梯度可积性"""
    params = medium(config)
    source, _, hint, qs = classification_input({**config, 'input': 'barenblatt'})
    reports = summability_sweep(source, hint, qs)
    grad_source, _, grad_hint, grad_qs = classification_input({**config, 'input': 'barenblatt_gradient'})
    grad_reports = summability_sweep(grad_source, grad_hint, grad_qs)
    verdict = classify_field(source, params, Equation.P_LAPLACE)
    checks = {
        'below_critical_finite': reports[0].verdict == Verdict.FINITE,
        'critical_divergent': reports[1].verdict == Verdict.DIVERGENT,
        'threshold_finite': reports[2].verdict == Verdict.FINITE,
        'gradient_below_finite': grad_reports[0].verdict == Verdict.FINITE,
        'gradient_critical_divergent': grad_reports[1].verdict == Verdict.DIVERGENT,
        'label_B': verdict.label == ClassLabel.B,
    }
    constants = derived_constants(params, Equation.P_LAPLACE)
    summary = {
        'q_crit': constants.q_crit, 'qgrad_crit': constants.qgrad_crit, 'label': verdict.label.value,
        'tail_ratios': [r.tail_ratio for r in reports + grad_reports],
    }
    rows = _labelled('barenblatt', reports) + _labelled('barenblatt_gradient', grad_reports)
    inconclusive = any(r.verdict == Verdict.INCONCLUSIVE for r in reports + grad_reports)
    return _finish('sharp_exponents', SHELL_HEADER, rows, summary, checks, inconclusive)


def class_m_signature(config: Config) -> RunResult:
    """分离变量解：阈值处发散、半阈值处有限、标签 M、t0 与下界的精度"""
    params = medium(config)
    p, t0 = params.p, config['t0']
    eigen = solve_profile(config, Equation.P_LAPLACE)
    source = separable_source(SeparableSpec(eigen, t0), start_time(config, 0.0), config['t_end'])
    verdict = classify_field(source, params, Equation.P_LAPLACE)
    _, scan_dt = detect_onset(source)
    dt = (source.region.t2 - source.region.t1) / config['steps']
    t_star = verdict.t0_detected if verdict.t0_detected is not None else source.region.t1
    reports = summability_sweep(source, SingularHint.time_slice(t_star), [p - 2.0, 0.5 * (p - 2.0)])
    L = config['L']
    core_min = float(np.min(profile_at(eigen, np.linspace(0.25 * L, 0.75 * L, 257))))
    floor_error = abs(verdict.minorant_floor - core_min) / core_min
    onset_error = abs(t_star - t0)
    checks = {
        'threshold_divergent': reports[0].verdict == Verdict.DIVERGENT,
        'half_threshold_finite': reports[1].verdict == Verdict.FINITE,
        'label_M': verdict.label == ClassLabel.M,
        'onset': verdict.t0_detected is not None and onset_error <= 5 * dt,
        'minorant_floor': floor_error <= 0.05,
    }
    summary = {
        'label': verdict.label.value, 't0': t0, 't0_detected': verdict.t0_detected, 'dt': dt, 'scan_dt': scan_dt,
        'minorant_floor': verdict.minorant_floor, 'core_min': core_min, 'floor_error': floor_error,
    }
    return _finish('class_m_signature', SHELL_HEADER, _labelled('separable', reports), summary, checks,
                   verdict.label == ClassLabel.UNKNOWN)


def eigen_oracle(config: Config) -> RunResult:
    """变分解对首次积分：最大值、标度律与 Beta 恒等式"""
    ps, lengths = (3.0, 4.0, 6.0), (0.5, 1.0, 2.0, 4.0)
    rows, fits, checks = [], {}, {}
    beta_gap = 0.0
    for p in ps:
        maxima, slopes = [], []
        for L in lengths:
            eigen = solve_profile({**config, 'p': p, 'n': 1, 'L': L}, Equation.P_LAPLACE)
            oracle = first_integral_oracle(p, L)
            slope = (eigen.U[1] - eigen.U[0]) / eigen.grid.h
            error = abs(eigen.maximum - oracle.M) / oracle.M
            rows.append([p, L, eigen.maximum, oracle.M, error, slope, oracle.slope])
            maxima.append(eigen.maximum)
            slopes.append(slope)
            beta_gap = max(beta_gap, abs(oracle.beta_integral - oracle.beta_identity))
            if L == 1.0:
                checks[f'max_p{p:g}'] = error <= 0.005
        log_l = np.log(lengths)
        max_fit = float(np.polyfit(log_l, np.log(maxima), 1)[0])
        slope_fit = float(np.polyfit(log_l, np.log(slopes), 1)[0])
        max_expected, slope_expected = p / (p - 2.0), 2.0 / (p - 2.0)
        fits[format(p, 'g')] = {'max': max_fit, 'max_expected': max_expected,
                                'slope': slope_fit, 'slope_expected': slope_expected}
        checks[f'max_scaling_p{p:g}'] = abs(max_fit - max_expected) / max_expected <= 0.01
        checks[f'slope_scaling_p{p:g}'] = abs(slope_fit - slope_expected) / slope_expected <= 0.01
    checks['beta_identity'] = beta_gap <= 1e-8
    summary = {'fits': fits, 'beta_gap': beta_gap, 'grid': config['grid']}
    header = ['p', 'L', 'solver_M', 'oracle_M', 'relative_error', 'solver_slope', 'oracle_slope']
    return _finish('eigen_oracle', header, rows, summary, checks)


def dichotomy_probe(config: Config) -> RunResult:
    """环形探针：分离变量边界数据爆破且对阈值稳健，有界数据不爆破且外部上确界稳定"""
    equation = equation_of(config)
    params = medium(config)
    t_start, t_end, steps = start_time(config, 0.0), config['t_end'], config['steps']
    outer, inner = config['L'], 0.5 * config['L']
    dt = (t_end - t_start) / steps
    ring = dict(params=params, equation=equation, cells=config['cells'], t_start=t_start)

    trace, t0 = ring_trace(config, equation, t_start, t_end, 'separable')
    first = solve_ring(outer, inner, trace, t_end=t_end, steps=steps, breakpoints=(t0,), **ring)
    cap = first.threshold / float(lab_setting('EVOLUTION', 'RING_BLOWUP_FRACTION'))
    raised = solve_ring(outer, inner, trace, t_end=t_end, steps=steps, breakpoints=(t0,), cap=10.0 * cap, **ring)

    long_end = t_start + 2.0 * (t_end - t_start)
    bounded_trace, _ = ring_trace(config, equation, t_start, long_end, 'bounded')
    short = solve_ring(outer, inner, bounded_trace, t_end=t_end, steps=steps, **ring)
    extended = solve_ring(outer, inner, bounded_trace, t_end=long_end, steps=2 * steps, **ring)
    short_sup, long_sup = float(short.max_trace.max()), float(extended.max_trace.max())

    def detected(report) -> bool:
        return report.blow_up_flag and abs(report.blow_up_time - t0) <= 5 * dt

    checks = {
        'blow_up_detected': detected(first),
        'persists_under_raised_threshold': detected(raised),
        'bounded_no_flag': not short.blow_up_flag and not extended.blow_up_flag,
        'outer_sup_stable': abs(long_sup - short_sup) <= 0.05 * short_sup,
    }
    rows = [
        ['separable', first.threshold, first.blow_up_flag, first.blow_up_time, float(first.max_trace.max())],
        ['separable_raised', raised.threshold, raised.blow_up_flag, raised.blow_up_time,
         float(raised.max_trace.max())],
        ['bounded', short.threshold, short.blow_up_flag, short.blow_up_time, short_sup],
        ['bounded_extended', extended.threshold, extended.blow_up_flag, extended.blow_up_time, long_sup],
    ]
    summary = {'t0': t0, 'dt': dt, 'cap': cap, 'short_sup': short_sup, 'extended_sup': long_sup}
    return _finish('dichotomy_probe', ['case', 'threshold', 'blow_up', 'blow_up_time', 'max_interior'], rows,
                   summary, checks)


def comparison_principle(config: Config) -> RunResult:
    """随机有序数据对逐步保持次序，全部成员保持非负"""
    equation = equation_of(config)
    params = medium(config)
    rng = np.random.default_rng(config['seed'])
    cells, steps = config['cells'], config['steps']
    grid = Grid.interval(0.0, 1.0, cells, t0=0.0, dt=config['t_end'] / steps, steps=steps)
    problems, ordered = [], []
    for _ in range(config['samples']):
        u_a = rng.uniform(0.0, 1.0, cells + 1)
        u_b = u_a + rng.uniform(0.0, 0.5, cells + 1)
        a_left, a_right = rng.uniform(0.0, 1.0, 2)
        b_left, b_right = a_left + rng.uniform(0.0, 0.5), a_right + rng.uniform(0.0, 0.5)
        pair = (
            EvolutionProblem(params, equation, grid, u_a, left=BoundaryCondition('dirichlet', a_left),
                             right=BoundaryCondition('dirichlet', a_right), cfl_safety=config['cfl']),
            EvolutionProblem(params, equation, grid, u_b, left=BoundaryCondition('dirichlet', b_left),
                             right=BoundaryCondition('dirichlet', b_right), cfl_safety=config['cfl']),
        )
        ordered.append(comparison_check(*pair))
        problems.extend(pair)
    reports = evolve_ensemble(problems)
    minima = [float(report.field.values.min()) for report in reports]
    rows = [[k, ordered[k], minima[2 * k], minima[2 * k + 1]] for k in range(len(ordered))]
    violations = len(ordered) - sum(ordered)
    checks = {'ordered': violations == 0, 'positivity': min(minima) >= 0.0}
    summary = {'pairs': len(ordered), 'violations': violations, 'min_value': min(minima), 'seed': config['seed']}
    return _finish('comparison_principle', ['pair', 'ordered', 'min_a', 'min_b'], rows, summary, checks)


def harnack_corroboration(config: Config) -> RunResult:
    """γ 对样本量加倍稳定、对内蕴伸缩不变（Barenblatt 与 PME 鼓包）"""
    samples, seed, c_used = config['samples'], config['seed'], config['c_used']
    params = medium(config)
    data, equation, region = harnack_input(config, 'barenblatt')
    base = harnack_check(data, params, c_used, samples, seed, equation, region)
    doubled = harnack_check(data, params, c_used, 2 * samples, seed, equation, region)
    kappa = 2.0
    scaled_source = rescaled_source(data, kappa, params.class_exponent(Equation.P_LAPLACE))
    scaled = harnack_check(scaled_source, params, c_used, samples, seed, equation, scaled_source.region)

    pme_config = {**config, 'equation': Equation.PME.value, 'm': config.get('m') or 2.0}
    pme_params = medium(pme_config)
    pme_data, _, _ = harnack_input(pme_config, 'pme_bump')
    pme_base = harnack_check(pme_data, pme_params, c_used, samples, seed, Equation.PME)
    pme_doubled = harnack_check(pme_data, pme_params, c_used, 2 * samples, seed, Equation.PME)

    def stable(a, b) -> bool:
        return math.isfinite(a.gamma_measured) and abs(b.gamma_measured / a.gamma_measured - 1.0) <= 0.1

    checks = {
        'barenblatt_stable': stable(base, doubled),
        'rescaling_invariant': abs(scaled.gamma_measured / base.gamma_measured - 1.0) <= 0.01,
        'pme_stable': stable(pme_base, pme_doubled),
    }
    rows = [
        [case, len(r.samples) + r.skipped, r.gamma_measured, len(r.samples), r.skipped]
        for case, r in (('barenblatt', base), ('barenblatt_doubled', doubled), ('barenblatt_rescaled', scaled),
                        ('pme_bump', pme_base), ('pme_bump_doubled', pme_doubled))
    ]
    summary = {'C_used': c_used, 'kappa': kappa, 'seed': seed,
               'gamma': {row[0]: row[2] for row in rows}}
    return _finish('harnack_corroboration', ['case', 'samples', 'gamma', 'accepted', 'skipped'], rows, summary,
                   checks)


def infimal_convolution(config: Config) -> RunResult:
    """v^ε ≤ v、关于 ε 单调、一致收敛，扫描法与暴力法逐位一致"""
    field = continuous_field(config)
    domain = Cylinder.covering(field.grid)
    epsilons = (0.1, 0.05, 0.025)
    brute, identical = [], []
    for epsilon in epsilons:
        spec = InfConvSpec(epsilon, domain)
        result = inf_convolve(field, spec, 'brute')
        brute.append(result)
        identical.append(result.values.tobytes() == inf_convolve(field, spec, 'sweep').values.tobytes())
    gaps = [float(np.max(field.values - r.values)) for r in brute]
    checks = {
        'below': all((r.values <= field.values).all() for r in brute),
        'monotone_in_epsilon': all((a.values <= b.values).all() for a, b in zip(brute[:-1], brute[1:])),
        'uniform_convergence': all(b < a for a, b in zip(gaps[:-1], gaps[1:])),
        'sweep_identical': all(identical),
    }
    rows = [[e, g, same] for e, g, same in zip(epsilons, gaps, identical)]
    summary = {'epsilons': list(epsilons), 'sup_gaps': gaps, 'nodes': int(field.values.size)}
    return _finish('infimal_convolution', ['epsilon', 'sup_gap', 'identical'], rows, summary, checks)


def caccioppoli_bound(config: Config) -> RunResult:
    """三层加密下 lhs/rhs 的比值在 2 倍以内"""
    rows = []
    for level in range(3):
        cells = config['cells'] * 2 ** level
        h, report = caccioppoli_level(config, cells)
        rows.append([cells, h, report.lhs, report.rhs, report.ratio])
    ratios = [row[-1] for row in rows]
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
    checks = {'bounded_ratio': spread <= 2.0 and all(math.isfinite(r) for r in ratios)}
    summary = {'ratios': ratios, 'spread': spread}
    return _finish('caccioppoli_bound', ['cells', 'h', 'lhs', 'rhs', 'ratio'], rows, summary, checks)


def pme_mirror(config: Config) -> RunResult:
    """
    PME 版本：𝔐 类特征、点质量演化解上的临界指数、有界解的标签、
    Friendly Giant 收敛与截断梯度检查
    """
    m = config.get('m') or 2.0
    pme_config = {**config, 'equation': Equation.PME.value, 'm': m, 'n': 1}
    params = medium(pme_config)
    constants = derived_constants(params, Equation.PME)
    t0 = config['t0']

    giant = solve_profile(pme_config, Equation.PME)
    spec = PMESeparableSpec(giant, t0)
    source = pme_separable_source(spec, start_time(config, 0.0), config['t_end'])
    verdict = pme_classify(source, params)
    t_star = verdict.t0_detected if verdict.t0_detected is not None else source.region.t1
    threshold = constants.class_threshold
    reports = summability_sweep(source, SingularHint.time_slice(t_star), [threshold, 0.5 * threshold])

    # 点质量解贴近 Barenblatt：壳层按 τ^{1/λ} 收缩
    point_mass = pme_point_mass(m, cells=8 * config['cells'], steps=4 * config['steps'],
                                cfl_safety=config['cfl']).field
    point_hint = SingularHint.point((0.0,), 0.0, 1.0 / constants.lam)
    point_reports = summability_sweep(point_mass, point_hint, [constants.q_crit, m, threshold])
    # ∇(v^{m-1}) ~ t^{-m/λ}，自相似临界指数为 (m+2)/m
    self_similar = (m + 2.0) / m
    pressure = pme_pressure_gradient(point_mass, m)
    pressure_reports = summability_sweep(pressure, point_hint, [constants.qgrad_crit - 0.2, self_similar])

    bump = evolved_bump(pme_config, Equation.PME, config['cells']).field
    bump_verdict = pme_classify(bump, params)
    bump_reports = summability_sweep(bump, SingularHint.time_slice(bump.grid.t0), [threshold])

    oracle_max = giant_first_integral_oracle(m, config['L']).profile_max
    errors, residuals, coarse = [], [], []
    for cells in (config['grid'] // 2, config['grid']):
        level = solve_profile(pme_config, Equation.PME, cells=cells)
        errors.append(abs(level.maximum - oracle_max) / oracle_max)
        residuals.append(level.residual)
        coarse.append(coarse_residual(level))

    truncation_source = pme_separable_source(spec, t0, config['t_end'])
    separable_field = truncation_source.sample(truncation_source.region, config['cells'] + 1, config['steps'] + 1)
    levels = truncation_levels(pme_config)
    separable_values = [pme_truncation_gradient_check(separable_field, m, j) for j in levels]
    bump_values = [pme_truncation_gradient_check(bump, m, j) for j in levels]

    tolerance = float(lab_setting('EIGEN', 'EL_TOLERANCE'))
    checks = {
        'threshold_divergent': reports[0].verdict == Verdict.DIVERGENT,
        'half_threshold_finite': reports[1].verdict == Verdict.FINITE,
        'label_M': verdict.label == ClassLabel.M,
        'critical_divergent': point_reports[0].verdict == Verdict.DIVERGENT,
        'below_critical_finite': point_reports[1].verdict == Verdict.FINITE,
        'point_threshold_finite': point_reports[2].verdict == Verdict.FINITE,
        'gradient_below_finite': pressure_reports[0].verdict == Verdict.FINITE,
        'gradient_self_similar_divergent': pressure_reports[1].verdict == Verdict.DIVERGENT,
        'bounded_label_B': bump_verdict.label == ClassLabel.B,
        'bounded_finite': bump_reports[0].verdict == Verdict.FINITE,
        'giant_oracle': errors[-1] <= 0.005,
        'giant_converges': errors[-1] <= errors[0],
        'giant_residual': all(r <= tolerance for r in residuals),
        'giant_residual_decreases': coarse[-1] < coarse[0],
        'truncation_grows': all(b > a for a, b in zip(separable_values[:-1], separable_values[1:]))
        and separable_values[-1] >= 4.0 * separable_values[0],
        'truncation_saturates': math.isclose(bump_values[-1], bump_values[-2], rel_tol=1e-12),
    }
    summary = {
        'm': m, 'thresholds': {'class': threshold, 'q_crit': constants.q_crit, 'qgrad_crit': constants.qgrad_crit,
                               'gradient_self_similar': self_similar},
        'label': verdict.label.value, 'bounded_label': bump_verdict.label.value, 't0_detected': verdict.t0_detected,
        'point_tail_ratios': [r.tail_ratio for r in point_reports + pressure_reports],
        'oracle_max': oracle_max, 'giant_errors': errors, 'giant_residuals': residuals,
        'giant_coarse_residuals': coarse,
        'truncation_levels': levels, 'truncation_separable': separable_values, 'truncation_bounded': bump_values,
    }
    rows = (_labelled('pme_separable', reports) + _labelled('pme_point_mass', point_reports)
            + _labelled('pme_point_mass_pressure_gradient', pressure_reports) + _labelled('pme_bump', bump_reports))
    inconclusive = (ClassLabel.UNKNOWN in (verdict.label, bump_verdict.label)
                    or any(r.verdict == Verdict.INCONCLUSIVE for r in point_reports + pressure_reports))
    return _finish('pme_mirror', SHELL_HEADER, rows, summary, checks, inconclusive)


EXPERIMENTS: dict[str, Callable[[Config], RunResult]] = {
    'barenblatt_verification': barenblatt_verification,
    'sharp_exponents': sharp_exponents,
    'class_m_signature': class_m_signature,
    'eigen_oracle': eigen_oracle,
    'dichotomy_probe': dichotomy_probe,
    'comparison_principle': comparison_principle,
    'harnack_corroboration': harnack_corroboration,
    'infimal_convolution': infimal_convolution,
    'caccioppoli_bound': caccioppoli_bound,
    'pme_mirror': pme_mirror,
}


def run_experiment(name: str, config: Config) -> RunResult:
    """
    按名称执行实验
    :param name: 实验名
    :param config: 校验后的配置
    :return: 实验产物
    """
    if name not in EXPERIMENTS:
        raise ConfigurationError(f"实验不存在: {name}", detail={'available': sorted(EXPERIMENTS)})
    logger.info(f"实验开始: {name}")
    return EXPERIMENTS[name](config)
