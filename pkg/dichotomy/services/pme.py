"""
多孔介质方程（PME）专门化
Friendly Giant 分离变量解、PME 类别判定与截断梯度检查，其余走共享的求解与诊断
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from dichotomy.services.core import (
    Cylinder, Equation, FieldSource, Grid, GridKind, MediumParams, ScalarField, integrate_q_norm, to_scalar,
)
from dichotomy.services.diagnostics import ClassVerdict, FieldLike, classify_field
from dichotomy.services.eigenfunctions import EigenResult, minimize_quotient
from dichotomy.services.evolution import EvolutionProblem, SolveReport, evolve
from dichotomy.services.exact_solutions import SeparableSpec, separable_values
from dichotomy.utils.exceptions import ContractError, ParameterError

logger = logging.getLogger('dichotomy')


@dataclass(frozen=True)
class PMESeparableSpec:
    """G(x)/(t-t0)^{1/(m-1)}，G 满足 Δ(G^m) + G/(m-1) = 0"""
    giant: EigenResult
    t0: float

    def __post_init__(self):
        if self.giant.exponents.equation != Equation.PME:
            raise ParameterError("PME 分离变量解需要 Friendly Giant 轮廓")
        # 复用内部为正的检查
        SeparableSpec(self.giant, self.t0)

    @property
    def m(self) -> float:
        return self.giant.exponents.m

    def region(self, t1: float, t2: float) -> Cylinder:
        return SeparableSpec(self.giant, self.t0).region(t1, t2)


def friendly_giant(grid: Grid, m: float, n: Optional[int] = None) -> EigenResult:
    """在给定区域上求 Friendly Giant 轮廓"""
    params = MediumParams(m=m, n=n or grid.n)
    return minimize_quotient(grid, params, Equation.PME)


def pme_separable_eval(spec: PMESeparableSpec, x, t):
    """G(x)/(t-t0)^{1/(m-1)}，t ≤ t0 时为 0"""
    return to_scalar(separable_values(spec.giant, spec.t0, x, t))


def pme_separable_source(spec: PMESeparableSpec, t1: float, t2: float) -> FieldSource:
    grid = spec.giant.grid
    return FieldSource(lambda x, t: separable_values(spec.giant, spec.t0, x, t), spec.region(t1, t2),
                       grid.kind, grid.n, 'pme_separable')


def pme_classify(data: FieldLike, params: MediumParams, region: Optional[Cylinder] = None) -> ClassVerdict:
    """阈值 m-1、权 (t-t0)^{1/(m-1)} 的类别判定"""
    return classify_field(data, params, Equation.PME, region)


def pme_truncation_gradient_check(field: ScalarField, m: float, j: float,
                                  window: Optional[tuple[float, float]] = None) -> float:
    """
    ∫∫|∇min(v^m, j)|² dx dt

    j 增大时对有界解趋于饱和，对 𝔐 类场无界增长
    """
    if not j > 0:
        raise ParameterError(f"截断值必须为正，当前 j={j}")
    if (field.values < 0).any():
        raise ContractError("截断梯度检查要求非负场")
    if window is not None:
        field = field.between(*window)
    grid = field.grid
    if grid.steps == 0:
        raise ParameterError("截断梯度检查至少需要两个时间层")
    w = np.minimum(field.values ** m, j)
    if grid.kind == GridKind.BOX2D:
        gx = np.gradient(w, grid.h, axis=-2)
        gy = np.gradient(w, grid.h, axis=-1)
        squared = gx * gx + gy * gy
    else:
        g = np.gradient(w, grid.h, axis=-1)
        squared = g * g
    value = integrate_q_norm(ScalarField(grid, squared), Cylinder.covering(grid), 1.0)
    logger.info(f"截断梯度检查: j={j:g}, 值 {value:.6g}")
    return value


def pme_point_mass(m: float, mass: float = 1.0, width: float = 0.1, half: float = 2.5, cells: int = 256,
                   t_end: float = 1.0, steps: int = 256, cfl_safety: Optional[float] = None) -> SolveReport:
    """
    一维 PME 从原点附近窄质量块出发的演化

    初值为 [-width, width] 上总质量 mass 的 cos² 块，两端 Dirichlet 0；
    width 远小于 t_end 时的支集半径时，解在 t ≫ width^{m+1} 后贴近以原点为源的 Barenblatt 解。
    half 需覆盖 t_end 时的支集
    """
    if not (m > 1 and mass > 0 and 0 < width < half):
        raise ParameterError(f"质量块参数不合法: m={m}, mass={mass}, width={width}, half={half}")
    grid = Grid.interval(-half, half, cells, t0=0.0, dt=t_end / steps, steps=steps)
    x = grid.axis(0)
    initial = np.where(np.abs(x) < width, (mass / width) * np.cos(0.5 * np.pi * x / width) ** 2, 0.0)
    problem = EvolutionProblem(MediumParams(m=m, n=1), Equation.PME, grid, initial, cfl_safety=cfl_safety)
    return evolve(problem)


def pme_pressure_gradient(field: ScalarField, m: float) -> ScalarField:
    """|∇(v^{m-1})| 的网格值，一维"""
    if field.grid.dim != 1:
        raise ParameterError("压力梯度只支持一维网格")
    if (field.values < 0).any():
        raise ContractError("压力梯度要求非负场")
    pressure = field.values ** (m - 1.0)
    return ScalarField(field.grid, np.abs(np.gradient(pressure, field.grid.h, axis=-1)))
