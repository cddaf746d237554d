"""
子命令执行体
每个执行体接收校验后的配置字典，返回数据表与摘要，写盘由命令层负责
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Optional, Union

import numpy as np

from dichotomy.services.core import (
    Cylinder, Equation, FieldSource, Grid, GridKind, MediumParams, ScalarField, SingularHint, derived_constants,
    sampled_source,
)
from dichotomy.services.diagnostics import (
    ClassLabel, ClassVerdict, SummabilityReport, Verdict, bump_cutoff, caccioppoli_check, classify_field,
    harnack_check, summability_sweep,
)
from dichotomy.services.eigenfunctions import (
    EigenResult, first_integral_oracle, giant_first_integral_oracle, giant_profile_from_first_integral,
    minimize_quotient, profile_from_first_integral, profile_ode_residual,
)
from dichotomy.services.evolution import BoundaryCondition, EvolutionProblem, SolveReport, evolve, solve_ring
from dichotomy.services.exact_solutions import (
    BarenblattSpec, SeparableSpec, barenblatt_eval, barenblatt_gradient_magnitude, barenblatt_gradient_source,
    barenblatt_mass, barenblatt_source, barenblatt_support_radius, separable_eval, separable_source,
)
from dichotomy.services.pme import (
    PMESeparableSpec, friendly_giant, pme_classify, pme_separable_eval, pme_separable_source,
    pme_truncation_gradient_check,
)
from dichotomy.services.regularization import InfConvSpec, inf_convolve
from dichotomy.utils.exceptions import ParameterError

logger = logging.getLogger('dichotomy')

Config = dict[str, Any]


@dataclass
class RunResult:
    """一次执行的产物：数据表与摘要；inconclusive 为真时命令以退出码 4 结束"""
    name: str
    header: list[str]
    rows: list[list[Any]]
    summary: dict[str, Any]
    inconclusive: bool = False


def medium(config: Config) -> MediumParams:
    return MediumParams(p=config.get('p'), n=config.get('n', 1), m=config.get('m'))


def equation_of(config: Config) -> Equation:
    return Equation(config.get('equation') or 'pLaplace')


def start_time(config: Config, default: float) -> float:
    value = config.get('t_start')
    return default if value is None else float(value)


def profile_grid(config: Config, cells: Optional[int] = None, symmetric: bool = False) -> Grid:
    """一维时为 [0, L]（symmetric 时为 [-L, L]），高维时为半径 L 的球"""
    cells = cells or config['grid']
    L = config['L']
    if config.get('n', 1) == 1:
        return Grid.interval(-L if symmetric else 0.0, L, cells)
    return Grid.radial(L, cells, config['n'])


def solve_profile(config: Config, equation: Equation, cells: Optional[int] = None,
                  symmetric: bool = False) -> EigenResult:
    grid = profile_grid(config, cells, symmetric)
    if equation == Equation.PME:
        return friendly_giant(grid, config['m'], config.get('n', 1))
    return minimize_quotient(grid, medium(config), Equation.P_LAPLACE)


def separable_field_source(config: Config, equation: Equation, t1: float, t2: float, t0: Optional[float] = None,
                           symmetric: bool = False) -> FieldSource:
    """𝔘/(t-t0)^{1/(p-2)} 或 G/(t-t0)^{1/(m-1)} 的场源"""
    t0 = config['t0'] if t0 is None else t0
    eigen = solve_profile(config, equation, symmetric=symmetric)
    if equation == Equation.PME:
        return pme_separable_source(PMESeparableSpec(eigen, t0), t1, t2)
    return separable_source(SeparableSpec(eigen, t0), t1, t2)


def barenblatt_spec(config: Config) -> BarenblattSpec:
    return BarenblattSpec(medium(config), config['C'])


def barenblatt_problem(config: Config, spec: BarenblattSpec, t_start: float, t_end: float, cells: int,
                       steps: int) -> EvolutionProblem:
    """以 t_start 时刻的 Barenblatt 切片为初值，区域半宽取 1.25 倍终止时刻支集半径"""
    half = 1.25 * barenblatt_support_radius(spec, t_end)
    grid = Grid.interval(-half, half, cells, t0=t_start, dt=(t_end - t_start) / steps, steps=steps)
    initial = np.atleast_1d(barenblatt_eval(spec, grid.axis(0), t_start))
    return EvolutionProblem(spec.params, Equation.P_LAPLACE, grid, initial, cfl_safety=config['cfl'])


def evolved_bump(config: Config, equation: Equation, cells: int, offset: float = 0.0) -> SolveReport:
    """[-L, L] 上 offset + cos² 鼓包的演化，两端 Dirichlet 值为 offset"""
    L = config['L']
    t_start = start_time(config, 0.0)
    steps = config['steps']
    grid = Grid.interval(-L, L, cells, t0=t_start, dt=(config['t_end'] - t_start) / steps, steps=steps)
    initial = offset + np.cos(0.5 * np.pi * grid.axis(0) / L) ** 2
    boundary = BoundaryCondition('dirichlet', offset)
    problem = EvolutionProblem(medium(config), equation, grid, initial, left=boundary, right=boundary,
                               cfl_safety=config['cfl'])
    return evolve(problem)


def run_evaluate(config: Config) -> RunResult:
    """在一维网格上求闭式解或分离变量解"""
    target = config.get('target') or config.get('input') or 'barenblatt'
    t = config['t']
    summary: dict[str, Any] = {'target': target, 't': t}
    if target in ('barenblatt', 'barenblatt_gradient'):
        spec = barenblatt_spec(config)
        rho = barenblatt_support_radius(spec, t)
        half = 1.25 * rho if rho > 0 else config['L']
        if spec.params.n == 1:
            x = Grid.interval(-half, half, config['grid']).axis(0)
        else:
            x = Grid.radial(half, config['grid'], spec.params.n).axis(0)
        evaluator = barenblatt_eval if target == 'barenblatt' else barenblatt_gradient_magnitude
        values = np.atleast_1d(evaluator(spec, x, t))
        summary.update(value_at_center=evaluator(spec, 0.0, t), support_radius=rho, lam=spec.lam)
        if t > spec.t0:
            summary['mass'] = barenblatt_mass(spec, t)
    elif target in ('separable', 'pme_separable'):
        equation = Equation.PME if target == 'pme_separable' else Equation.P_LAPLACE
        eigen = solve_profile(config, equation)
        x = eigen.grid.axis(0)
        if equation == Equation.PME:
            values = np.atleast_1d(pme_separable_eval(PMESeparableSpec(eigen, config['t0']), x, t))
        else:
            values = np.atleast_1d(separable_eval(SeparableSpec(eigen, config['t0']), x, t))
        summary.update(t0=config['t0'], J0=eigen.J0, normC=eigen.normC, profile_max=eigen.maximum)
    else:
        raise ParameterError(f"未知的求值对象: {target}")
    summary['value_max'] = float(values.max())
    return RunResult('evaluate', ['x', 'value'], [[xi, vi] for xi, vi in zip(x, values)], summary)


def run_eigen(config: Config) -> RunResult:
    """极小化尺度不变商；oracle 为真时与首次积分轮廓对照"""
    equation = equation_of(config)
    eigen = solve_profile(config, equation)
    x = eigen.grid.axis(0)
    header, columns = ['x', 'solver'], [x, eigen.U]
    summary: dict[str, Any] = {
        'equation': equation.value, 'L': config['L'], 'grid': config['grid'], 'J0': eigen.J0,
        'normC': eigen.normC, 'residual': eigen.residual, 'iterations': eigen.iterations,
        'solver_M': eigen.maximum,
    }
    if config.get('oracle'):
        if eigen.grid.kind != GridKind.INTERVAL:
            raise ParameterError("首次积分对照只适用于一维区间")
        if equation == Equation.PME:
            m = config['m']
            oracle = giant_first_integral_oracle(m, config['L'])
            _, reference = giant_profile_from_first_integral(m, config['L'], config['grid'])
        else:
            oracle = first_integral_oracle(config['p'], config['L'])
            _, reference = profile_from_first_integral(config['p'], config['L'], config['grid'])
        oracle_max = oracle.profile_max
        summary.update(
            oracle_M=oracle_max,
            relative_error=abs(eigen.maximum - oracle_max) / oracle_max,
            oracle_slope=oracle.slope,
            beta_integral=oracle.beta_integral,
            beta_identity=oracle.beta_identity,
            ode_residual=profile_ode_residual(x, eigen.w, eigen.exponents),
        )
        header.append('oracle')
        columns.append(reference)
    return RunResult('eigen', header, [list(row) for row in zip(*columns)], summary)


def run_evolve(config: Config) -> RunResult:
    """Barenblatt 切片出发与闭式解对照，或演化 cos² 鼓包"""
    source = config.get('input') or 'barenblatt'
    if source == 'barenblatt':
        spec = barenblatt_spec(config)
        t_start = start_time(config, 0.5)
        report = evolve(barenblatt_problem(config, spec, t_start, config['t_end'], config['grid'], config['steps']))
        grid = report.field.grid
        x = grid.axis(0)
        numeric = report.field.values[-1]
        exact = np.atleast_1d(barenblatt_eval(spec, x, grid.t_end))
        masses = report.field.values @ grid.node_measures()
        mass_exact = barenblatt_mass(spec, t_start)
        summary = {
            'input': source, 't_start': t_start, 't_end': grid.t_end,
            'sup_error': float(np.max(np.abs(numeric - exact)) / np.max(exact)),
            'mass_exact': mass_exact,
            'mass_drift': float(np.max(np.abs(masses - mass_exact)) / mass_exact),
            'steps': report.steps, 'blow_up': report.blow_up_flag,
        }
        rows = [[xi, ui, ei] for xi, ui, ei in zip(x, numeric, exact)]
        return RunResult('evolve', ['x', 'numeric', 'exact'], rows, summary)
    if source not in ('bump', 'pme_bump'):
        raise ParameterError(f"演化不支持的初值: {source}")
    equation = Equation.PME if source == 'pme_bump' else equation_of(config)
    report = evolved_bump(config, equation, config['grid'])
    grid = report.field.grid
    masses = report.field.values @ grid.node_measures()
    summary = {
        'input': source, 'equation': equation.value, 'final_max': float(report.final_values.max()),
        'mass_initial': float(masses[0]), 'mass_final': float(masses[-1]), 'steps': report.steps,
        'blow_up': report.blow_up_flag,
    }
    rows = [[xi, ui] for xi, ui in zip(grid.axis(0), report.field.values[-1])]
    return RunResult('evolve', ['x', 'value'], rows, summary)


def ring_trace(config: Config, equation: Equation, t_start: float, t_end: float,
               kind: Optional[str] = None) -> tuple[Optional[FieldSource], Optional[float]]:
    """
    环形探针的内边界数据
    :return: (场源, 奇异时刻)；bounded 为 t0 提前一个单位的分离变量解，在整个时间窗内有界
    """
    kind = kind or config.get('trace') or 'separable'
    if kind == 'zero':
        return None, None
    if kind == 'separable':
        t0 = config['t0']
        return separable_field_source(config, equation, t_start, t_end, t0=t0, symmetric=True), t0
    if kind == 'bounded':
        return separable_field_source(config, equation, t_start, t_end, t0=t_start - 1.0, symmetric=True), None
    raise ParameterError(f"未知的环形边界数据: {kind}")


def run_probe(config: Config) -> RunResult:
    """Q_{2l}∖Q_l 上的截断边值问题，l = L/2"""
    equation = equation_of(config)
    params = medium(config)
    t_start, t_end = start_time(config, 0.0), config['t_end']
    trace, t0 = ring_trace(config, equation, t_start, t_end)
    outer = config['L']
    report = solve_ring(outer, 0.5 * outer, trace, params, equation, cells=config['cells'], t_start=t_start,
                        t_end=t_end, steps=config['steps'], breakpoints=() if t0 is None else (t0,))
    dt = (t_end - t_start) / config['steps']
    left, right = report.fields
    times = right.grid.times()
    rows = [[t, float(lv.max()), float(rv.max())] for t, lv, rv in zip(times, left.values, right.values)]
    summary = {
        'trace': config.get('trace') or 'separable', 'blow_up': report.blow_up_flag,
        'blow_up_time': report.blow_up_time, 't0': t0, 'dt': dt, 'threshold': report.threshold,
        'steps': report.steps, 'outer_sup': float(report.max_trace.max()) if report.max_trace.size else 0.0,
    }
    if t0 is not None and report.blow_up_time is not None:
        summary['detection_error'] = abs(report.blow_up_time - t0)
    return RunResult('probe', ['t', 'left_max', 'right_max'], rows, summary)


def summability_rows(reports: list[SummabilityReport]) -> list[list[Any]]:
    rows = []
    for report in reports:
        for index, (scale, integral) in enumerate(report.shell_integrals):
            rows.append([report.q, index, scale, integral, report.verdict.value])
    return rows


def classification_input(config: Config) -> tuple[FieldSource, Equation, Optional[SingularHint], list[float]]:
    """
    构造分类输入
    :return: (场源, 方程, 点奇异提示或 None, 缺省检验指数)
    """
    kind = config.get('input') or 'separable'
    params = medium(config)
    t_end = config['t_end']
    if kind in ('barenblatt', 'barenblatt_gradient'):
        spec = barenblatt_spec(config)
        constants = derived_constants(params, Equation.P_LAPLACE)
        region = Cylinder((0.0,), (1.25 * barenblatt_support_radius(spec, t_end),), 0.0, t_end)
        hint = SingularHint.point((0.0,), 0.0, 1.0 / constants.lam)
        if kind == 'barenblatt':
            qs = [constants.q_crit - 0.5, constants.q_crit, constants.class_threshold]
            return barenblatt_source(spec, region), Equation.P_LAPLACE, hint, qs
        qs = [constants.qgrad_crit - 0.2, constants.qgrad_crit]
        return barenblatt_gradient_source(spec, region), Equation.P_LAPLACE, hint, qs
    if kind in ('separable', 'pme_separable'):
        equation = Equation.PME if kind == 'pme_separable' else Equation.P_LAPLACE
        threshold = params.class_exponent(equation)
        source = separable_field_source(config, equation, start_time(config, 0.0), t_end)
        return source, equation, None, [threshold, 0.5 * threshold]
    if kind in ('bump', 'pme_bump'):
        equation = Equation.PME if kind == 'pme_bump' else equation_of(config)
        field = evolved_bump(config, equation, config['cells']).field
        return sampled_source(field, kind), equation, None, [params.class_exponent(equation)]
    if kind == 'zero':
        equation = equation_of(config)
        region = Cylinder((0.0,), (config['L'],), start_time(config, 0.0), t_end)
        source = FieldSource(lambda x, t: np.zeros(np.broadcast_shapes(x.shape[:-1], t.shape)), region,
                             label='zero')
        return source, equation, None, [params.class_exponent(equation)]
    raise ParameterError(f"分类不支持的输入: {kind}")


def run_classify(config: Config) -> RunResult:
    """𝔅/𝔐 判定，并在给定或缺省指数上列出壳层积分"""
    source, equation, hint, qs = classification_input(config)
    params = medium(config)
    if config.get('q') is not None:
        qs = [float(config['q'])]
    verdict: Optional[ClassVerdict] = None
    if source.label != 'barenblatt_gradient':
        if equation == Equation.PME:
            verdict = pme_classify(source, params)
        else:
            verdict = classify_field(source, params, equation)
    if hint is None:
        t_star = verdict.t0_detected if verdict and verdict.t0_detected is not None else source.region.t1
        hint = SingularHint.time_slice(t_star)
    reports = summability_sweep(source, hint, qs)
    constants = derived_constants(params, equation)
    summary: dict[str, Any] = {
        'input': config.get('input') or 'separable', 'equation': equation.value,
        'hint': hint.kind, 't_star': hint.t_star,
        'verdicts': {format(r.q, 'g'): r.verdict.value for r in reports},
        'tail_ratios': {format(r.q, 'g'): r.tail_ratio for r in reports},
        'q_crit': constants.q_crit, 'qgrad_crit': constants.qgrad_crit, 'threshold': constants.class_threshold,
    }
    inconclusive = any(r.verdict == Verdict.INCONCLUSIVE for r in reports)
    if verdict is not None:
        summary.update(label=verdict.label.value, t0_detected=verdict.t0_detected,
                       minorant_floor=verdict.minorant_floor)
        inconclusive = inconclusive or verdict.label == ClassLabel.UNKNOWN
    return RunResult('classify', ['q', 'shell_index', 'scale', 'integral', 'verdict'], summability_rows(reports),
                     summary, inconclusive)


def harnack_input(config: Config, kind: str) -> tuple[Union[FieldSource, ScalarField], Equation, Optional[Cylinder]]:
    if kind == 'barenblatt':
        spec = barenblatt_spec(config)
        region = Cylinder((0.0,), (config['L'],), start_time(config, 0.5), config['t_end'])
        return barenblatt_source(spec, region), Equation.P_LAPLACE, region
    if kind in ('bump', 'pme_bump'):
        equation = Equation.PME if kind == 'pme_bump' else equation_of(config)
        return evolved_bump(config, equation, config['grid'], offset=0.1).field, equation, None
    raise ParameterError(f"Harnack 检查不支持的输入: {kind}")


def run_harnack(config: Config) -> RunResult:
    """抽样测量内蕴 Harnack 常数"""
    kind = config.get('input') or ('pme_bump' if equation_of(config) == Equation.PME else 'barenblatt')
    data, equation, region = harnack_input(config, kind)
    report = harnack_check(data, medium(config), config['c_used'], config['samples'], config['seed'], equation,
                           region)
    rows = [[s.x0[0], s.t0, s.R, s.theta, s.lhs, s.rhs, s.ratio] for s in report.samples]
    summary = {
        'input': kind, 'gamma': report.gamma_measured, 'C_used': report.C_used, 'accepted': len(report.samples),
        'skipped': report.skipped, 'samples': config['samples'], 'seed': config['seed'],
    }
    return RunResult('harnack', ['x0', 't0', 'R', 'theta', 'lhs', 'rhs', 'ratio'], rows, summary)


def caccioppoli_level(config: Config, cells: int) -> tuple[float, Any]:
    """演化 Barenblatt 窗口上的一次 Caccioppoli 检查，ζ 支撑在初始支集内"""
    spec = barenblatt_spec(config)
    t_start, t_end = start_time(config, 0.5), config['t_end']
    report = evolve(barenblatt_problem(config, spec, t_start, t_end, cells, config['steps']))
    x = report.field.grid.axis(0)
    zeta = bump_cutoff(x, 0.0, barenblatt_support_radius(spec, t_start))
    return report.field.grid.h, caccioppoli_check(report.field, zeta, (t_start, t_end), spec.params)


def run_caccioppoli(config: Config) -> RunResult:
    h, report = caccioppoli_level(config, config['grid'])
    rows = [[name, value] for name, value in sorted(report.terms.items())]
    summary = {'h': h, 'lhs': report.lhs, 'rhs': report.rhs, 'ratio': report.ratio}
    return RunResult('caccioppoli', ['term', 'value'], rows, summary)


def continuous_field(config: Config) -> ScalarField:
    """下卷积用的连续采样场：Barenblatt 或 |x|(1+t)"""
    kind = config.get('input') or 'barenblatt'
    t_end = config['t_end']
    if kind == 'barenblatt':
        spec = barenblatt_spec(config)
        t_start = start_time(config, 0.5)
        region = Cylinder((0.0,), (1.25 * barenblatt_support_radius(spec, t_end),), t_start, t_end)
        source = barenblatt_source(spec, region)
    elif kind == 'abs':
        region = Cylinder((0.0,), (config['L'],), start_time(config, 0.0), t_end)
        source = FieldSource(lambda x, t: np.abs(x[..., 0]) * (1.0 + t), region, label='abs')
    else:
        raise ParameterError(f"下卷积不支持的输入: {kind}")
    return source.sample(region, config['cells'] + 1, config['steps'] + 1)


def run_infconv(config: Config) -> RunResult:
    """暴力法与逐维扫描两条路径计算 v^ε 并比对"""
    field = continuous_field(config)
    spec = InfConvSpec(config['epsilon'], Cylinder.covering(field.grid))
    brute = inf_convolve(field, spec, 'brute')
    sweep = inf_convolve(field, spec, 'sweep')
    grid = brute.grid
    rows = []
    for k, t in enumerate(grid.times()):
        for i, x in enumerate(grid.axis(0)):
            rows.append([t, x, field.values[k, i], brute.values[k, i]])
    summary = {
        'input': config.get('input') or 'barenblatt', 'epsilon': spec.epsilon,
        'sup_gap': float(np.max(field.values - brute.values)),
        'below': bool((brute.values <= field.values).all()),
        'identical': brute.values.tobytes() == sweep.values.tobytes(),
    }
    return RunResult('infconv', ['t', 'x', 'v', 'v_eps'], rows, summary)


def truncation_levels(config: Config, count: int = 5) -> list[float]:
    return [config['j'] * 2.0 ** k for k in range(count)]


def run_truncation(config: Config) -> RunResult:
    """∫∫|∇min(v^m, j)|² 随 j 的变化：分离变量解无界增长，有界解饱和"""
    kind = config.get('input') or 'pme_separable'
    m = config['m']
    if kind == 'pme_separable':
        source = separable_field_source(config, Equation.PME, config['t0'], config['t_end'])
        field = source.sample(source.region, config['cells'] + 1, config['steps'] + 1)
    elif kind in ('bump', 'pme_bump'):
        field = evolved_bump(config, Equation.PME, config['cells']).field
    else:
        raise ParameterError(f"截断检查不支持的输入: {kind}")
    levels = truncation_levels(config)
    values = [pme_truncation_gradient_check(field, m, j) for j in levels]
    summary = {
        'input': kind, 'levels': levels, 'values': values,
        'growth': values[-1] / values[0] if values[0] > 0 else math.inf,
        'saturated': math.isclose(values[-1], values[-2], rel_tol=1e-12),
    }
    return RunResult('truncation', ['j', 'value'], [[j, v] for j, v in zip(levels, values)], summary)


PME_ACTIONS = ('eigen', 'evaluate', 'evolve', 'classify', 'harnack', 'truncation')


def run_pme(config: Config) -> RunResult:
    """PME 镜像：固定 equation=PME 后转交对应执行体"""
    action = config.get('target') or 'eigen'
    if action not in PME_ACTIONS:
        raise ParameterError(f"未知的 PME 动作: {action}")
    config = {**config, 'equation': Equation.PME.value}
    if action == 'evaluate':
        config['target'] = 'pme_separable'
    elif action == 'classify':
        config['input'] = config.get('input') or 'pme_separable'
    elif action == 'harnack':
        config['input'] = config.get('input') or 'pme_bump'
    elif action == 'evolve':
        config['input'] = config.get('input') or 'pme_bump'
    result = RUNNERS[action](config)
    result.name = f'pme_{result.name}'
    return result


RUNNERS: dict[str, Callable[[Config], RunResult]] = {
    'evaluate': run_evaluate,
    'eigen': run_eigen,
    'evolve': run_evolve,
    'probe': run_probe,
    'classify': run_classify,
    'harnack': run_harnack,
    'caccioppoli': run_caccioppoli,
    'infconv': run_infconv,
    'truncation': run_truncation,
    'pme': run_pme,
}
