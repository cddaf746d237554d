"""
单调显式有限体积求解器
∂u/∂t = ∇·(|∇u|^{p-2}∇u) 与 ∂u/∂t = Δ(u^m)，区间与径向几何，
以及环形区域边值问题（有界/爆破二分探针）
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from dichotomy.conf import lab_setting
from dichotomy.services.core import Equation, FieldSource, Grid, GridKind, MediumParams, ScalarField
from dichotomy.utils.exceptions import ContractError, NumericError, ParameterError, StiffnessError

logger = logging.getLogger('dichotomy')

TraceLike = Union[Callable[[float], float], np.ndarray, float]


@dataclass(frozen=True)
class BoundaryCondition:
    """
    一端的边界条件

    dirichlet: trace 为 t -> 值 的函数、与名义时间层等长的序列或常数
    neumann: 零通量（径向几何 r=0 处的对称条件也用它表示）
    """
    kind: str = 'dirichlet'
    trace: TraceLike = 0.0

    def __post_init__(self):
        if self.kind not in ('dirichlet', 'neumann'):
            raise ParameterError(f"未知的边界条件类型: {self.kind}")

    @classmethod
    def neumann(cls) -> 'BoundaryCondition':
        return cls('neumann', 0.0)

    @property
    def is_dirichlet(self) -> bool:
        return self.kind == 'dirichlet'

    def value_at(self, t: float, grid: Grid) -> float:
        if callable(self.trace):
            return float(self.trace(t))
        series = np.asarray(self.trace, dtype=float)
        if series.ndim == 0:
            return float(series)
        if series.shape != (grid.steps + 1,):
            raise ContractError(f"边界序列长度 {series.size} 与时间层数 {grid.steps + 1} 不一致")
        return float(np.interp(t, grid.times(), series))


@dataclass(frozen=True, eq=False)
class EvolutionProblem:
    """
    一个演化问题

    grid 给出空间网格与名义输出时间层（dt 同时是自适应步长的上限），
    cap 不为空时边界数据在 cap 处截断，explosion_threshold 缺省为 10^6 × 数据上确界
    """
    params: MediumParams
    equation: Equation
    grid: Grid
    initial: np.ndarray
    left: BoundaryCondition = field(default_factory=BoundaryCondition)
    right: BoundaryCondition = field(default_factory=BoundaryCondition)
    geometry: str = 'interval'
    cap: Optional[float] = None
    explosion_threshold: Optional[float] = None
    cfl_safety: Optional[float] = None
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'equation', Equation(self.equation))
        self.params.require(self.equation)
        if self.grid.dim != 1:
            raise ParameterError("演化求解器只支持一维（区间、径向）网格")
        if self.geometry not in ('interval', 'radial', 'ring'):
            raise ParameterError(f"未知几何: {self.geometry}")
        if (self.geometry == 'radial') != (self.grid.kind == GridKind.RADIAL):
            raise ParameterError("径向几何需要径向网格")
        if self.geometry == 'radial' and self.left.is_dirichlet:
            object.__setattr__(self, 'left', BoundaryCondition.neumann())
        initial = np.array(self.initial, dtype=float)
        if initial.shape != self.grid.counts:
            raise ParameterError(f"初值形状 {initial.shape} 与网格 {self.grid.counts} 不一致")
        if (initial < 0).any():
            raise ContractError("初值必须非负")
        if self.cap is not None:
            initial = np.minimum(initial, self.cap)
        initial.setflags(write=False)
        object.__setattr__(self, 'initial', initial)
        cfl = self.cfl_safety if self.cfl_safety is not None else float(lab_setting('EVOLUTION', 'CFL_SAFETY'))
        if not 0 < cfl <= 1:
            raise ParameterError(f"CFL 安全系数必须在 (0, 1] 内，当前 {cfl}")
        object.__setattr__(self, 'cfl_safety', cfl)

    def boundary_values(self, t: float) -> tuple[float, float]:
        values = []
        for bc in (self.left, self.right):
            value = bc.value_at(t, self.grid) if bc.is_dirichlet else 0.0
            if math.isnan(value):
                raise NumericError(f"边界数据在 t={t} 处为 NaN")
            if value < 0:
                raise ContractError(f"边界数据在 t={t} 处为负")
            if self.cap is not None:
                value = min(value, self.cap)
            values.append(value)
        return values[0], values[1]

    def data_scale(self) -> float:
        """初值与边界数据在名义时间层上的上确界（只计有限值）"""
        samples = [self.initial.max()]
        for bc in (self.left, self.right):
            if bc.is_dirichlet:
                series = np.array([bc.value_at(t, self.grid) for t in self.grid.times()])
                finite = series[np.isfinite(series)]
                if finite.size:
                    samples.append(finite.max())
        scale = float(max(samples))
        return min(scale, self.cap) if self.cap is not None else scale

    def resolved_threshold(self) -> float:
        if self.explosion_threshold is not None:
            return float(self.explosion_threshold)
        factor = float(lab_setting('EVOLUTION', 'EXPLOSION_FACTOR'))
        scale = self.data_scale()
        # 全零数据没有尺度，阈值取系数本身
        return factor * scale if scale > 0 else factor


@dataclass(frozen=True, eq=False)
class SolveReport:
    """
    求解报告

    field 为名义时间层上的快照（爆破时截止到最后一个已到达的时间层），
    max_trace/dt_trace/step_times 为每个实际步的内部最大值、步长与时刻
    """
    field: ScalarField
    max_trace: np.ndarray
    dt_trace: np.ndarray
    step_times: np.ndarray
    blow_up_flag: bool
    blow_up_time: Optional[float]
    threshold: float
    final_values: np.ndarray
    fields: tuple[ScalarField, ...] = ()

    @property
    def steps(self) -> int:
        return int(self.dt_trace.size)


class EnsembleStepper:
    """
    在同一网格上以共同时间步推进一组问题

    共同步长取全体成员逐界面（PME 为逐节点）系数的最大值，保证更新对每个成员都单调
    """

    def __init__(self, problems: Sequence[EvolutionProblem]):
        if not problems:
            raise ParameterError("至少需要一个演化问题")
        first = problems[0]
        for other in problems[1:]:
            if (other.grid.kind, other.grid.h, other.grid.counts, other.grid.n, other.grid.t0, other.grid.dt,
                    other.grid.steps) != (first.grid.kind, first.grid.h, first.grid.counts, first.grid.n,
                                          first.grid.t0, first.grid.dt, first.grid.steps):
                raise ParameterError("集合中的问题必须共享网格")
            if other.params != first.params or other.equation != first.equation:
                raise ParameterError("集合中的问题必须共享方程与参数")
            if (other.left.kind, other.right.kind) != (first.left.kind, first.right.kind):
                raise ParameterError("集合中的问题必须共享边界条件类型")
        self.problems = list(problems)
        self.grid = first.grid
        self.params = first.params
        self.equation = first.equation
        self.cfl = min(p.cfl_safety for p in problems)
        self.faces = self.grid.face_measures()
        self.volumes = self.grid.node_measures()
        self.updated = np.ones(self.grid.counts[0], dtype=bool)
        self.updated[0] = not first.left.is_dirichlet
        self.updated[-1] = not first.right.is_dirichlet

    def flux(self, u: np.ndarray) -> np.ndarray:
        h = self.grid.h
        if self.equation == Equation.P_LAPLACE:
            D = np.diff(u, axis=-1) / h
            return np.abs(D) ** (self.params.p - 2.0) * D
        return np.diff(u ** self.params.m, axis=-1) / h

    def divergence(self, u: np.ndarray) -> np.ndarray:
        weighted = self.faces * self.flux(u)
        div = np.zeros_like(u)
        div[:, :-1] += weighted
        div[:, 1:] -= weighted
        return div / self.volumes

    def stable_dt(self, u: np.ndarray) -> float:
        """单调性允许的最大步长 cfl / max_i c_i"""
        h = self.grid.h
        if self.equation == Equation.P_LAPLACE:
            p = self.params.p
            D = np.abs(np.diff(u, axis=-1)) / h
            G = (p - 1.0) * np.max(D, axis=0) ** (p - 2.0) * self.faces
            rate = np.zeros(u.shape[-1])
            rate[:-1] += G
            rate[1:] += G
        else:
            m = self.params.m
            around = np.zeros(u.shape[-1])
            around[:-1] += self.faces
            around[1:] += self.faces
            rate = m * np.max(u, axis=0) ** (m - 1.0) * around
        rate = rate / (self.volumes * h)
        peak = float(np.max(rate[self.updated])) if self.updated.any() else 0.0
        return self.cfl / peak if peak > 0 else math.inf

    def apply_boundary(self, u: np.ndarray, t: float) -> None:
        for k, problem in enumerate(self.problems):
            left, right = problem.boundary_values(t)
            if not self.updated[0]:
                u[k, 0] = left
            if not self.updated[-1]:
                u[k, -1] = right

    def run(self, monitor: Optional[Callable[[np.ndarray, float], None]] = None) -> list[SolveReport]:
        grid = self.grid
        dt_max = grid.dt
        underflow = float(lab_setting('EVOLUTION', 'DT_UNDERFLOW'))
        onset = float(lab_setting('EVOLUTION', 'ONSET_FRACTION')) * dt_max
        growth = float(lab_setting('EVOLUTION', 'STEP_GROWTH'))
        thresholds = np.array([p.resolved_threshold() for p in self.problems])
        breaks = sorted({float(b) for p in self.problems for b in p.breakpoints if grid.t0 < b < grid.t_end})

        u = np.stack([p.initial.copy() for p in self.problems])
        self.apply_boundary(u, grid.t0)
        snapshots = [u.copy()]
        max_trace, dt_trace, step_times = [], [], []
        t = grid.t0
        k_out = 1
        limit = math.inf
        blown: Optional[int] = None
        blow_time: Optional[float] = None
        logger.info(f"演化开始: {self.equation.value}, {len(self.problems)} 个成员, "
                    f"节点 {grid.counts[0]}, t ∈ [{grid.t0:g}, {grid.t_end:g}]")

        while k_out <= grid.steps:
            t_out = grid.t0 + k_out * dt_max
            target = t_out
            pending = [b for b in breaks if b > t]
            if pending and pending[0] < t_out:
                target = pending[0]
            dt_cfl = self.stable_dt(u)
            if dt_cfl < underflow:
                raise StiffnessError(f"时间步下溢: dt={dt_cfl:.3e} 于 t={t:.10g}",
                                     detail={'t': t, 'dt': dt_cfl})
            dt = min(dt_cfl, dt_max, limit, target - t)
            limit = limit * growth if limit < dt_max else math.inf

            u[:, self.updated] += dt * self.divergence(u)[:, self.updated]
            t_new = target if dt >= target - t else t + dt
            self.apply_boundary(u, t_new)
            if not np.isfinite(u).all():
                raise NumericError(f"解在 t={t_new:.10g} 处出现非有限值")
            t = t_new

            interior = u[:, 1:-1] if u.shape[-1] > 2 else u
            peaks = interior.max(axis=-1)
            max_trace.append(peaks)
            dt_trace.append(dt)
            step_times.append(t)
            if monitor is not None:
                monitor(u, t)
            over = np.flatnonzero(peaks > thresholds)
            if over.size:
                blown, blow_time = int(over[0]), t
                logger.warning(f"检测到爆破: 成员 {blown}, t={t:.10g}, max={peaks[blown]:.3e}")
                break
            if pending and t == pending[0]:
                limit = onset
            if t == t_out:
                snapshots.append(u.copy())
                k_out += 1

        logger.info(f"演化结束: {len(dt_trace)} 步, t={t:.10g}")
        recorded = np.stack(snapshots, axis=1)
        traces = np.array(max_trace).reshape(-1, len(self.problems))
        out_grid = grid.with_time(grid.t0, dt_max, recorded.shape[1] - 1)
        reports = []
        for k, problem in enumerate(self.problems):
            reports.append(SolveReport(
                field=ScalarField(out_grid, recorded[k], problem.cap),
                max_trace=traces[:, k],
                dt_trace=np.array(dt_trace),
                step_times=np.array(step_times),
                blow_up_flag=blown == k,
                blow_up_time=blow_time if blown == k else None,
                threshold=float(thresholds[k]),
                final_values=u[k].copy(),
            ))
        return reports


def evolve(problem: EvolutionProblem) -> SolveReport:
    """
    显式守恒格式 u_i ← u_i + (dt/V_i)(A_{i+1/2}F_{i+1/2} - A_{i-1/2}F_{i-1/2})

    F = |D|^{p-2}D（p-Laplace）或 F = D(u^m)（PME）；步长逐步按单调性界自适应
    """
    return EnsembleStepper([problem]).run()[0]


def evolve_ensemble(problems: Sequence[EvolutionProblem]) -> list[SolveReport]:
    return EnsembleStepper(problems).run()


def comparison_check(problem_a: EvolutionProblem, problem_b: EvolutionProblem) -> bool:
    """
    离散比较原理：A 的初边值不超过 B 时，演化后逐节点逐步 u_A ≤ u_B

    :return: 全程无超出舍入容差的违例时为 True
    """
    grid = problem_a.grid
    if (problem_a.initial > problem_b.initial).any():
        raise ContractError("比较检查要求 A 的初值不超过 B")
    for t in grid.times():
        left_a, right_a = problem_a.boundary_values(t)
        left_b, right_b = problem_b.boundary_values(t)
        if left_a > left_b or right_a > right_b:
            raise ContractError(f"比较检查要求 A 的边界数据不超过 B（t={t:g}）")
    slack = float(lab_setting('EVOLUTION', 'COMPARISON_SLACK'))
    worst = [0.0]

    def watch(u: np.ndarray, t: float) -> None:
        worst[0] = max(worst[0], float(np.max(u[0] - u[1])))

    EnsembleStepper([problem_a, problem_b]).run(monitor=watch)
    ordered = worst[0] <= slack
    if not ordered:
        logger.warning(f"比较原理违例: max(u_A - u_B) = {worst[0]:.3e}")
    return ordered


def _ring_trace(source: Optional[FieldSource], x: float, delta: float) -> Callable[[float], float]:
    point = np.array([[x]])

    def trace(t: float) -> float:
        if source is None or t <= delta:
            return 0.0
        value = float(source(point, np.array([t]))[0])
        return value if np.isfinite(value) else math.inf

    return trace


def solve_ring(outer_half_width: float, inner_half_width: float, trace: Optional[FieldSource],
               params: MediumParams, equation: Equation = Equation.P_LAPLACE, cells: int = 32,
               t_start: float = 0.0, t_end: float = 1.0, steps: int = 64, delta: Optional[float] = None,
               cap: Optional[float] = None, breakpoints: Sequence[float] = ()) -> SolveReport:
    """
    环形区域 Q_{2l}∖Q_l 上的边值问题（一维：两段区间）

    h = 0 于外边界与初始时刻，h = v 于内边界，t ≤ δ 时 v 置零；
    边界数据在 cap 处截断，内部达到 RING_BLOWUP_FRACTION·cap 即判为爆破并停止

    Args:
        outer_half_width: 2l
        inner_half_width: l
        trace: 内边界数据 v 的场源，None 表示 v ≡ 0
        cells: 每段的单元数
        delta: 数据置零的时刻，缺省为 t_start
        cap: 截断值，缺省为 RING_CAP_FACTOR × 名义时间层上数据的上确界（全零数据取 1）
    """
    if not 0 < inner_half_width < outer_half_width:
        raise ParameterError("需要 0 < l < 2l")
    delta = t_start if delta is None else delta
    dt = (t_end - t_start) / steps
    outer, inner = outer_half_width, inner_half_width
    left_grid = Grid.interval(-outer, -inner, cells, t0=t_start, dt=dt, steps=steps)
    right_grid = Grid.interval(inner, outer, cells, t0=t_start, dt=dt, steps=steps)
    left_trace = _ring_trace(trace, -inner, delta)
    right_trace = _ring_trace(trace, inner, delta)

    if cap is None:
        samples = [f(t) for f in (left_trace, right_trace) for t in left_grid.times()]
        finite = [s for s in samples if math.isfinite(s)]
        scale = max(finite, default=0.0) or 1.0
        cap = float(lab_setting('EVOLUTION', 'RING_CAP_FACTOR')) * scale
    threshold = float(lab_setting('EVOLUTION', 'RING_BLOWUP_FRACTION')) * cap
    zeros = np.zeros(cells + 1)
    common = dict(params=params, equation=equation, geometry='ring', cap=cap, explosion_threshold=threshold,
                  breakpoints=tuple(breakpoints) + (delta,))
    segments = [
        EvolutionProblem(grid=left_grid, initial=zeros, left=BoundaryCondition('dirichlet', 0.0),
                         right=BoundaryCondition('dirichlet', left_trace), **common),
        EvolutionProblem(grid=right_grid, initial=zeros, left=BoundaryCondition('dirichlet', right_trace),
                         right=BoundaryCondition('dirichlet', 0.0), **common),
    ]
    logger.info(f"环形探针: l={inner:g}, 2l={outer:g}, cap={cap:.3e}, 阈值={threshold:.3e}")
    left_report, right_report = EnsembleStepper(segments).run()
    blown = left_report.blow_up_flag or right_report.blow_up_flag
    blow_time = left_report.blow_up_time if left_report.blow_up_flag else right_report.blow_up_time
    return SolveReport(
        field=right_report.field,
        max_trace=np.maximum(left_report.max_trace, right_report.max_trace),
        dt_trace=right_report.dt_trace,
        step_times=right_report.step_times,
        blow_up_flag=blown,
        blow_up_time=blow_time,
        threshold=threshold,
        final_values=right_report.final_values,
        fields=(left_report.field, right_report.field),
    )
