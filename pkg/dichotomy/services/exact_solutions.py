"""
显式解与下界函数的闭式求值
Barenblatt 源解、分离变量解，以及离散 PDE 残差检查
"""
import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator

from dichotomy.conf import lab_setting
from dichotomy.services.core import (
    Cylinder, Equation, FieldSource, Grid, GridKind, MediumParams, ScalarField, SingularHint,
    as_points, derived_constants, sphere_area, to_scalar,
)
from dichotomy.services.eigenfunctions import EigenResult
from dichotomy.utils.exceptions import DomainError, ParameterError

logger = logging.getLogger('dichotomy')


@dataclass(frozen=True)
class BarenblattSpec:
    """
    Barenblatt 源解

    x0 为空间中心（长度 1 表示区间或径向，长度 2 表示平面），t0 为时间平移
    """
    params: MediumParams
    C: float
    x0: tuple[float, ...] = (0.0,)
    t0: float = 0.0

    def __post_init__(self):
        self.params.require(Equation.P_LAPLACE)
        if not self.C > 0:
            raise ParameterError(f"Barenblatt 常数 C 必须为正，当前 C={self.C}")
        object.__setattr__(self, 'x0', tuple(float(v) for v in np.atleast_1d(self.x0)))
        if len(self.x0) == 2 and self.params.n != 2:
            raise ParameterError("平面中心只能用于 n=2")

    @property
    def lam(self) -> float:
        return derived_constants(self.params, Equation.P_LAPLACE).lam

    @property
    def profile_coefficient(self) -> float:
        """a = ((p-2)/p)·λ^{1/(1-p)}"""
        p = self.params.p
        return (p - 2.0) / p * self.lam ** (1.0 / (1.0 - p))

    def radius_of(self, x) -> np.ndarray:
        points = as_points(x, len(self.x0))
        return np.linalg.norm(points - np.array(self.x0), axis=-1)


def _bracket(spec: BarenblattSpec, r: np.ndarray, tau: np.ndarray) -> np.ndarray:
    p = spec.params.p
    safe = np.where(tau > 0, tau, 1.0)
    xi = r / safe ** (1.0 / spec.lam)
    return np.where(tau > 0, np.maximum(spec.C - spec.profile_coefficient * xi ** (p / (p - 1.0)), 0.0), 0.0)


def barenblatt_eval(spec: BarenblattSpec, x, t):
    """
    𝔅(x,t) = t^{-n/λ}[C - a(|x|/t^{1/λ})^{p/(p-1)}]_+^{(p-1)/(p-2)}，t ≤ 0 时为 0
    x 可以是单点或一组点，t 与之广播
    """
    p, n = spec.params.p, spec.params.n
    r = spec.radius_of(x)
    tau = np.asarray(t, dtype=float) - spec.t0
    r, tau = np.broadcast_arrays(r, tau)
    bracket = _bracket(spec, r, tau)
    safe = np.where(tau > 0, tau, 1.0)
    values = np.where(tau > 0, safe ** (-n / spec.lam) * bracket ** ((p - 1.0) / (p - 2.0)), 0.0)
    return to_scalar(values)


def barenblatt_gradient_magnitude(spec: BarenblattSpec, x, t):
    """|∇𝔅| = t^{-(n+1)/λ}·(a p/(p-2))·[·]_+^{1/(p-2)}·ξ^{1/(p-1)}，ξ = |x|/t^{1/λ}"""
    p, n = spec.params.p, spec.params.n
    r = spec.radius_of(x)
    tau = np.asarray(t, dtype=float) - spec.t0
    r, tau = np.broadcast_arrays(r, tau)
    bracket = _bracket(spec, r, tau)
    safe = np.where(tau > 0, tau, 1.0)
    xi = r / safe ** (1.0 / spec.lam)
    coefficient = spec.profile_coefficient * p / (p - 2.0)
    values = safe ** (-(n + 1.0) / spec.lam) * coefficient * bracket ** (1.0 / (p - 2.0)) * xi ** (1.0 / (p - 1.0))
    return to_scalar(np.where(tau > 0, values, 0.0))


def barenblatt_support_radius(spec: BarenblattSpec, t: float) -> float:
    """支集半径 ρ(t) = t^{1/λ}(C/a)^{(p-1)/p}"""
    tau = t - spec.t0
    if not tau > 0:
        return 0.0
    p = spec.params.p
    return tau ** (1.0 / spec.lam) * (spec.C / spec.profile_coefficient) ** ((p - 1.0) / p)


def barenblatt_mass(spec: BarenblattSpec, t: float) -> float:
    """总质量 ∫𝔅(x,t)dx = |S^{n-1}|∫_0^ρ r^{n-1}𝔅 dr"""
    if not t - spec.t0 > 0:
        raise DomainError(f"质量只在 t > t0 时有定义，当前 t={t}")
    n = spec.params.n
    rho = barenblatt_support_radius(spec, t)
    dim = len(spec.x0)

    def radial_density(r: float) -> float:
        point = np.array(spec.x0) + np.eye(dim)[0] * r
        return r ** (n - 1) * float(barenblatt_eval(spec, point, t))

    value, error = integrate.quad(radial_density, 0.0, rho, epsabs=0.0, epsrel=1e-12, limit=200)
    return sphere_area(n) * value


@dataclass(frozen=True)
class SeparableSpec:
    """分离变量解 𝔘(x)/(t-t0)^{1/(p-2)}，t ≤ t0 时为 0"""
    eigen: EigenResult
    t0: float

    def __post_init__(self):
        interior = self.eigen.U[self._interior_mask()]
        if interior.size and not (interior > 0).all():
            raise ParameterError("特征函数在内部必须为正")

    def _interior_mask(self) -> np.ndarray:
        mask = np.ones(self.eigen.grid.counts, dtype=bool)
        if self.eigen.grid.kind == GridKind.RADIAL:
            mask[-1] = False
        elif self.eigen.grid.dim == 1:
            mask[[0, -1]] = False
        else:
            mask[[0, -1], :] = False
            mask[:, [0, -1]] = False
        return mask

    @property
    def exponent(self) -> float:
        """时间衰减指数 1/(p-2)"""
        return self.eigen.exponents.lam

    def region(self, t1: float, t2: float) -> Cylinder:
        grid = self.eigen.grid
        if grid.kind == GridKind.RADIAL:
            return Cylinder((0.0,), (grid.upper()[0],), t1, t2)
        covering = Cylinder.covering(grid)
        return Cylinder(covering.center, covering.half_widths, t1, t2)


def profile_at(eigen: EigenResult, x) -> np.ndarray:
    """在网格上线性/双线性插值特征函数；定义域外报错"""
    grid = eigen.grid
    if grid.kind == GridKind.RADIAL:
        points = as_points(x, 1)
        r = np.abs(points[..., 0])
        if (r > grid.upper()[0] * (1 + 1e-12)).any():
            raise DomainError("求值点在球外")
        return np.interp(r, grid.axis(0), eigen.U)
    points = as_points(x, grid.dim)
    lower, upper = np.array(grid.origin), np.array(grid.upper())
    slack = 1e-12 * (upper - lower)
    if ((points < lower - slack) | (points > upper + slack)).any():
        raise DomainError("求值点在特征函数定义域之外")
    points = np.clip(points, lower, upper)
    if grid.dim == 1:
        return np.interp(points[..., 0], grid.axis(0), eigen.U)
    interpolator = RegularGridInterpolator(tuple(grid.axes()), eigen.U, method='linear')
    return interpolator(points.reshape(-1, 2)).reshape(points.shape[:-1])


def separable_values(eigen: EigenResult, t0: float, x, t) -> np.ndarray:
    """𝔘(x)·(t-t0)^{-λ}，λ 为时间衰减指数"""
    profile = profile_at(eigen, x)
    tau = np.asarray(t, dtype=float) - t0
    profile, tau = np.broadcast_arrays(profile, tau)
    safe = np.where(tau > 0, tau, 1.0)
    return np.where(tau > 0, profile * safe ** (-eigen.exponents.lam), 0.0)


def separable_eval(spec: SeparableSpec, x, t):
    """𝔘(x)/(t-t0)^{1/(p-2)}，t ≤ t0 时为 0"""
    return to_scalar(separable_values(spec.eigen, spec.t0, x, t))


def barenblatt_source(spec: BarenblattSpec, region: Cylinder, kind: Optional[GridKind] = None) -> FieldSource:
    """把 Barenblatt 解包装为场源；n>1 且中心为一维时按径向处理"""
    if kind is None:
        kind = GridKind.BOX2D if len(spec.x0) == 2 else (GridKind.RADIAL if spec.params.n > 1 else GridKind.INTERVAL)
    return FieldSource(lambda x, t: barenblatt_eval(spec, x, t), region, GridKind(kind), spec.params.n, 'barenblatt')


def barenblatt_gradient_source(spec: BarenblattSpec, region: Cylinder, kind: Optional[GridKind] = None) -> FieldSource:
    source = barenblatt_source(spec, region, kind)
    return FieldSource(lambda x, t: barenblatt_gradient_magnitude(spec, x, t), region, source.kind, source.n,
                       'barenblatt_gradient')


def separable_source(spec: SeparableSpec, t1: float, t2: float) -> FieldSource:
    grid = spec.eigen.grid
    return FieldSource(lambda x, t: separable_values(spec.eigen, spec.t0, x, t), spec.region(t1, t2),
                       grid.kind, grid.n, 'separable')


def rescaled_source(source: FieldSource, kappa: float, class_exponent: float) -> FieldSource:
    """
    内蕴伸缩 ũ(x,t) = κ·u(x, κ^{e}·t)，e 为 p-2 或 m-1
    伸缩后仍为同一方程的解
    """
    if not kappa > 0:
        raise ParameterError("伸缩因子必须为正")
    factor = kappa ** class_exponent
    region = source.region
    scaled = Cylinder(region.center, region.half_widths, region.t1 / factor, region.t2 / factor)
    return FieldSource(lambda x, t: kappa * source(x, factor * np.asarray(t)), scaled, source.kind, source.n,
                       f'{source.label}_rescaled')


@dataclass(frozen=True, eq=False)
class ResidualField:
    """逐节点强形式残差，mask 为参与范数的节点"""
    field: ScalarField
    mask: np.ndarray
    sup_norm: float


def _divergence_1d(u: np.ndarray, grid: Grid, params: MediumParams, equation: Equation) -> np.ndarray:
    """一维（区间/径向）通量散度，形状 (时间, 节点)，端点置零"""
    if equation == Equation.P_LAPLACE:
        D = np.diff(u, axis=-1) / grid.h
        flux = np.abs(D) ** (params.p - 2.0) * D
    else:
        flux = np.diff(u ** params.m, axis=-1) / grid.h
    faces = grid.face_measures()
    volumes = grid.node_measures()
    div = np.zeros_like(u)
    div[..., 1:-1] = (faces[1:] * flux[..., 1:] - faces[:-1] * flux[..., :-1]) / volumes[1:-1]
    return div


def _divergence_2d(u: np.ndarray, grid: Grid, params: MediumParams, equation: Equation) -> np.ndarray:
    h = grid.h
    div = np.zeros_like(u)
    if equation == Equation.PME:
        v = u ** params.m
        div[..., 1:-1, 1:-1] = (v[..., 2:, 1:-1] + v[..., :-2, 1:-1] + v[..., 1:-1, 2:] + v[..., 1:-1, :-2]
                                - 4.0 * v[..., 1:-1, 1:-1]) / (h * h)
        return div
    gx_nodes = np.gradient(u, h, axis=-2)
    gy_nodes = np.gradient(u, h, axis=-1)
    # x 方向界面 (i+1/2, j)
    Dx = np.diff(u, axis=-2) / h
    gy_face = 0.5 * (gy_nodes[..., 1:, :] + gy_nodes[..., :-1, :])
    Fx = (Dx * Dx + gy_face * gy_face) ** (0.5 * (params.p - 2.0)) * Dx
    # y 方向界面 (i, j+1/2)
    Dy = np.diff(u, axis=-1) / h
    gx_face = 0.5 * (gx_nodes[..., :, 1:] + gx_nodes[..., :, :-1])
    Fy = (Dy * Dy + gx_face * gx_face) ** (0.5 * (params.p - 2.0)) * Dy
    div[..., 1:-1, 1:-1] = (np.diff(Fx, axis=-2)[..., :, 1:-1] + np.diff(Fy, axis=-1)[..., 1:-1, :]) / h
    return div


def pde_residual(data: Union[ScalarField, FieldSource], grid: Grid, params: MediumParams,
                 equation: Equation = Equation.P_LAPLACE, exclude: Optional[SingularHint] = None) -> ResidualField:
    """
    强形式残差 ∂u/∂t - ∇·(|∇u|^{p-2}∇u)（PME: ∂u/∂t - Δ(u^m)）

    时间中心差分、半节点通量；边缘节点与奇异集附近 SINGULAR_EXCLUSION 层以内的节点不计入范数
    """
    equation = Equation(equation)
    params.require(equation)
    field = data if isinstance(data, ScalarField) else ScalarField.from_source(grid, data)
    grid = field.grid
    if grid.steps < 2:
        raise ParameterError("时间中心差分至少需要三个时间层")
    u = field.values
    if grid.dim == 1:
        div = _divergence_1d(u, grid, params, equation)
    else:
        div = _divergence_2d(u, grid, params, equation)
    residual = np.zeros_like(u)
    residual[1:-1] = (u[2:] - u[:-2]) / (2.0 * grid.dt) - div[1:-1]

    mask = np.zeros(grid.shape, dtype=bool)
    if grid.dim == 1:
        mask[1:-1, 1:-1] = True
    else:
        mask[1:-1, 1:-1, 1:-1] = True
    if exclude is not None:
        layers = int(lab_setting('DIAGNOSTICS', 'SINGULAR_EXCLUSION'))
        times = grid.times().reshape((-1,) + (1,) * grid.dim)
        if exclude.kind == 'slice':
            near = np.abs(times - exclude.t_star) <= layers * grid.dt
            mask &= ~np.broadcast_to(near, grid.shape)
        else:
            distance = np.linalg.norm(grid.points() - np.array(exclude.x_star), axis=-1)
            near = (distance[np.newaxis] <= layers * grid.h) & (np.abs(times - exclude.t_star) <= layers * grid.dt)
            near |= np.broadcast_to(times <= exclude.t_star, grid.shape)
            mask &= ~near
    residual = np.where(mask, residual, 0.0)
    sup_norm = float(np.abs(residual).max()) if mask.any() else 0.0
    logger.info(f"PDE 残差 ({equation.value}): sup={sup_norm:.3e}, 网格 h={grid.h:g}, dt={grid.dt:g}")
    return ResidualField(ScalarField(grid, residual), mask, sup_norm)
