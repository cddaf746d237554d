"""
网格、采样场、区域、求积与局部范数
其余所有模块都建立在这里的类型之上；类型构造后不可变
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import special
from scipy.interpolate import RegularGridInterpolator

from dichotomy.utils.exceptions import ContractError, DomainError, ParameterError

logger = logging.getLogger('dichotomy')


class Equation(str, Enum):
    """方程分支"""
    P_LAPLACE = 'pLaplace'
    PME = 'PME'


class GridKind(str, Enum):
    """网格类型"""
    INTERVAL = 'interval'
    RADIAL = 'radial'
    BOX2D = 'box2d'


@dataclass(frozen=True)
class MediumParams:
    """
    介质参数

    Args:
        p: p-Laplace 指数（慢扩散要求 p > 2）
        n: 空间维数
        m: 多孔介质指数（要求 m > 1），仅 PME 分支使用
    """
    p: Optional[float] = None
    n: int = 1
    m: Optional[float] = None

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"维数 n 必须是正整数，当前 n={self.n}")
        if self.p is None and self.m is None:
            raise ParameterError("p 与 m 至少需要给出一个")
        if self.p is not None and not self.p > 2:
            raise ParameterError(f"只处理慢扩散情形 p > 2，当前 p={self.p}")
        if self.m is not None and not self.m > 1:
            raise ParameterError(f"只处理慢扩散情形 m > 1，当前 m={self.m}")

    @property
    def default_equation(self) -> Equation:
        return Equation.P_LAPLACE if self.p is not None else Equation.PME

    def require(self, equation: Equation) -> None:
        """检查该分支所需的指数已给出"""
        if equation == Equation.P_LAPLACE and self.p is None:
            raise ParameterError("p-Laplace 分支需要指数 p")
        if equation == Equation.PME and self.m is None:
            raise ParameterError("PME 分支需要指数 m")

    def diffusion_exponent(self, equation: Equation) -> float:
        self.require(equation)
        return self.p if equation == Equation.P_LAPLACE else self.m

    def class_exponent(self, equation: Equation) -> float:
        """区分两类的可积指数：p-2 或 m-1"""
        self.require(equation)
        return self.p - 2.0 if equation == Equation.P_LAPLACE else self.m - 1.0

    def weight_exponent(self, equation: Equation) -> float:
        """分离变量解的时间衰减指数：1/(p-2) 或 1/(m-1)"""
        return 1.0 / self.class_exponent(equation)


@dataclass(frozen=True)
class DerivedConstants:
    """由指数导出的临界常数"""
    equation: Equation
    lam: float
    q_crit: float
    qgrad_crit: float
    class_threshold: float

    @property
    def void_gap(self) -> tuple[float, float]:
        return self.class_threshold, self.q_crit


def derived_constants(params: MediumParams, equation: Optional[Equation] = None) -> DerivedConstants:
    """
    计算临界指数

    p-Laplace: λ = n(p-2)+p, q_crit = p-1+p/n, qgrad_crit = p-1+1/(n+1), 阈值 p-2
    PME: λ = n(m-1)+2, q_crit = m+2/n, qgrad_crit = 1+1/(1+nm), 阈值 m-1
    """
    equation = Equation(equation or params.default_equation)
    params.require(equation)
    n = params.n
    if equation == Equation.P_LAPLACE:
        p = params.p
        constants = DerivedConstants(
            equation=equation,
            lam=n * (p - 2.0) + p,
            q_crit=p - 1.0 + p / n,
            qgrad_crit=p - 1.0 + 1.0 / (n + 1.0),
            class_threshold=p - 2.0,
        )
    else:
        m = params.m
        constants = DerivedConstants(
            equation=equation,
            lam=n * (m - 1.0) + 2.0,
            q_crit=m + 2.0 / n,
            qgrad_crit=1.0 + 1.0 / (1.0 + n * m),
            class_threshold=m - 1.0,
        )
    if not constants.class_threshold < constants.q_crit:
        raise ParameterError("临界指数顺序异常")
    return constants


def sphere_area(n: int) -> float:
    """单位球面 S^{n-1} 的面积，n=1 时为 2"""
    return 2.0 * math.pi ** (n / 2.0) / special.gamma(n / 2.0)


@dataclass(frozen=True)
class Grid:
    """
    均匀时空网格

    节点坐标 origin + index·h，时间层 t0 + k·dt，k = 0..steps。
    radial 网格的 origin 必须为 0，n 为其所代表的空间维数。
    """
    kind: GridKind
    origin: tuple[float, ...]
    h: float
    counts: tuple[int, ...]
    t0: float = 0.0
    dt: float = 1.0
    steps: int = 0
    n: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'kind', GridKind(self.kind))
        object.__setattr__(self, 'origin', tuple(float(v) for v in self.origin))
        object.__setattr__(self, 'counts', tuple(int(c) for c in self.counts))
        if not self.h > 0 or not self.dt > 0:
            raise ParameterError(f"网格步长必须为正: h={self.h}, dt={self.dt}")
        if len(self.origin) != self.dim or len(self.counts) != self.dim:
            raise ParameterError(f"{self.kind.value} 网格需要 {self.dim} 个坐标分量")
        if any(c < 2 for c in self.counts):
            raise ParameterError(f"每个方向至少两个节点: {self.counts}")
        if self.steps < 0:
            raise ParameterError("时间层数不能为负")
        if self.kind == GridKind.RADIAL and self.origin[0] != 0.0:
            raise ParameterError("径向网格必须从 r=0 开始")
        if self.kind != GridKind.RADIAL and self.n != self.dim:
            object.__setattr__(self, 'n', self.dim)

    @classmethod
    def interval(cls, a: float, b: float, cells: int, **time) -> 'Grid':
        """区间 [a, b] 上 cells 个单元"""
        return cls(GridKind.INTERVAL, (a,), (b - a) / cells, (cells + 1,), **time)

    @classmethod
    def radial(cls, radius: float, cells: int, n: int, **time) -> 'Grid':
        return cls(GridKind.RADIAL, (0.0,), radius / cells, (cells + 1,), n=n, **time)

    @classmethod
    def box(cls, lower: tuple[float, float], upper: tuple[float, float], cells: int, **time) -> 'Grid':
        """正方形单元的矩形区域，h 由 x 方向决定"""
        h = (upper[0] - lower[0]) / cells
        ny = int(round((upper[1] - lower[1]) / h))
        return cls(GridKind.BOX2D, tuple(lower), h, (cells + 1, ny + 1), **time)

    @property
    def dim(self) -> int:
        return 2 if self.kind == GridKind.BOX2D else 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.steps + 1, *self.counts)

    @property
    def t_end(self) -> float:
        return self.t0 + self.steps * self.dt

    def axis(self, k: int = 0) -> np.ndarray:
        return self.origin[k] + self.h * np.arange(self.counts[k])

    def axes(self) -> list[np.ndarray]:
        return [self.axis(k) for k in range(self.dim)]

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)

    def upper(self) -> tuple[float, ...]:
        return tuple(o + self.h * (c - 1) for o, c in zip(self.origin, self.counts))

    def with_time(self, t0: float, dt: float, steps: int) -> 'Grid':
        return replace(self, t0=t0, dt=dt, steps=steps)

    def spatial(self) -> 'Grid':
        return replace(self, t0=0.0, dt=1.0, steps=0)

    def points(self) -> np.ndarray:
        """空间节点坐标，形状 (*counts, dim)"""
        return np.stack(np.meshgrid(*self.axes(), indexing='ij'), axis=-1)

    def node_measures(self) -> np.ndarray:
        """
        一维网格（区间/径向）的节点控制体积，端点为半单元

        径向网格包含球面面积因子 |S^{n-1}| r^{n-1}
        """
        if self.dim != 1:
            raise ParameterError("控制体积只对一维网格定义")
        x = self.axis(0)
        half = np.concatenate(([x[0]], 0.5 * (x[:-1] + x[1:]), [x[-1]]))
        if self.kind == GridKind.INTERVAL:
            return np.diff(half)
        return sphere_area(self.n) * np.diff(half ** self.n) / self.n

    def face_measures(self) -> np.ndarray:
        """一维网格相邻节点之间界面的面积"""
        if self.dim != 1:
            raise ParameterError("界面面积只对一维网格定义")
        if self.kind == GridKind.INTERVAL:
            return np.ones(self.counts[0] - 1)
        faces = self.axis(0)[:-1] + 0.5 * self.h
        return sphere_area(self.n) * faces ** (self.n - 1)

    def cell_measures(self) -> np.ndarray:
        """空间单元测度，形状为 counts-1"""
        if self.kind == GridKind.INTERVAL:
            return np.full(self.counts[0] - 1, self.h)
        if self.kind == GridKind.RADIAL:
            r = self.axis(0)
            return sphere_area(self.n) * np.diff(r ** self.n) / self.n
        return np.full(tuple(c - 1 for c in self.counts), self.h * self.h)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    网格上的采样时空场，values 形状 (时间, 空间...)

    cap 不为空时表示取值已在 cap 处截断（“实际无穷”）
    """
    grid: Grid
    values: np.ndarray
    cap: Optional[float] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ParameterError(f"场的形状 {values.shape} 与网格 {self.grid.shape} 不一致")
        if self.cap is not None and values.size and np.nanmax(values) > self.cap:
            raise ContractError(f"场的取值超过截断值 cap={self.cap}")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_source(cls, grid: Grid, source: 'FieldSource', cap: Optional[float] = None) -> 'ScalarField':
        times = grid.times().reshape((-1,) + (1,) * grid.dim)
        points = grid.points()[np.newaxis]
        values = source(points, np.broadcast_to(times, grid.shape))
        if cap is not None:
            values = np.minimum(values, cap)
        return cls(grid, values, cap)

    def at_time_index(self, k: int) -> np.ndarray:
        return self.values[k]

    def between(self, t_first: float, t_last: float) -> 'ScalarField':
        """截取 [t_first, t_last] 内的时间层"""
        times = self.grid.times()
        tol = 0.5 * self.grid.dt
        index = np.flatnonzero((times >= t_first - tol) & (times <= t_last + tol))
        if index.size == 0:
            raise DomainError(f"时间窗 [{t_first}, {t_last}] 与场不相交")
        grid = self.grid.with_time(float(times[index[0]]), self.grid.dt, int(index.size - 1))
        return ScalarField(grid, self.values[index[0]:index[-1] + 1], self.cap)


@dataclass(frozen=True)
class Cylinder:
    """空间盒 × 时间区间 (t1, t2)；径向网格上表示以原点为心、半径 half_widths[0] 的球"""
    center: tuple[float, ...]
    half_widths: tuple[float, ...]
    t1: float
    t2: float

    def __post_init__(self):
        object.__setattr__(self, 'center', tuple(float(v) for v in self.center))
        object.__setattr__(self, 'half_widths', tuple(float(v) for v in self.half_widths))
        if not self.t1 < self.t2:
            raise ParameterError(f"时间区间需满足 t1 < t2: ({self.t1}, {self.t2})")
        if len(self.center) != len(self.half_widths) or any(w <= 0 for w in self.half_widths):
            raise ParameterError("空间盒半宽必须为正且与中心维数一致")

    @classmethod
    def covering(cls, grid: Grid) -> 'Cylinder':
        """覆盖整个网格的区域"""
        lower = np.array(grid.origin)
        upper = np.array(grid.upper())
        t2 = grid.t_end if grid.steps > 0 else grid.t0 + grid.dt
        return cls(tuple(0.5 * (lower + upper)), tuple(0.5 * (upper - lower)), grid.t0, t2)

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.center) - np.array(self.half_widths)

    @property
    def upper(self) -> np.ndarray:
        return np.array(self.center) + np.array(self.half_widths)

    def shrink(self, fraction: float) -> 'Cylinder':
        """同心缩小空间盒，时间区间不变"""
        return replace(self, half_widths=tuple(w * fraction for w in self.half_widths))

    def with_times(self, t1: float, t2: float) -> 'Cylinder':
        return replace(self, t1=t1, t2=t2)


@dataclass(frozen=True)
class SingularHint:
    """
    疑似奇异集：时空点 (x*, t*) 或整个时间片 t = t*

    点奇异时 spatial_exponent 为自相似空间尺度的指数 β（|x| ~ t^β），None 表示空间窗口不随时间收缩
    """
    kind: str
    t_star: float
    x_star: Optional[tuple[float, ...]] = None
    spatial_exponent: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ('point', 'slice'):
            raise ParameterError(f"未知的奇异集类型: {self.kind}")
        if self.kind == 'point' and self.x_star is None:
            raise ParameterError("点奇异需要给出空间位置 x*")
        if self.x_star is not None:
            object.__setattr__(self, 'x_star', tuple(float(v) for v in self.x_star))

    @classmethod
    def point(cls, x_star, t_star: float, spatial_exponent: Optional[float] = None) -> 'SingularHint':
        return cls('point', t_star, tuple(np.atleast_1d(x_star)), spatial_exponent)

    @classmethod
    def time_slice(cls, t_star: float) -> 'SingularHint':
        return cls('slice', t_star)


def as_points(x, dim: int) -> np.ndarray:
    """把标量/坐标数组统一成 (..., dim) 形状；一维时裸数组视为一组坐标"""
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., np.newaxis]
    if x.shape[-1] != dim:
        raise ParameterError(f"坐标最后一维应为 {dim}，当前形状 {x.shape}")
    return x


def to_scalar(values: np.ndarray):
    """零维结果转成 float"""
    values = np.asarray(values, dtype=float)
    return float(values) if values.ndim == 0 else values


FieldFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FieldSource:
    """
    可在任意点求值的场

    func(points, t): points 形状 (..., dim)，t 形状 (...)，返回 (...)
    region 为定义域，kind/n 说明空间几何；resolution 为采样来源的 (dt, h)，闭式解为 None
    """
    func: FieldFunction
    region: Cylinder
    kind: GridKind = GridKind.INTERVAL
    n: int = 1
    label: str = ''
    resolution: Optional[tuple[float, float]] = None

    def __call__(self, points: np.ndarray, t: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(np.asarray(points, dtype=float), np.asarray(t, dtype=float)), dtype=float)

    @property
    def dim(self) -> int:
        return 2 if self.kind == GridKind.BOX2D else 1

    def grid_over(self, region: Cylinder, nodes: int, time_nodes: Optional[int] = None) -> Grid:
        """在子区域上建立均匀网格（每方向 nodes 个节点）"""
        time_nodes = time_nodes or nodes
        dt = (region.t2 - region.t1) / (time_nodes - 1)
        if self.kind == GridKind.RADIAL:
            return Grid.radial(region.half_widths[0], nodes - 1, self.n, t0=region.t1, dt=dt, steps=time_nodes - 1)
        lower, upper = region.lower, region.upper
        h = (upper[0] - lower[0]) / (nodes - 1)
        counts = tuple(int(round((u - l) / h)) + 1 for l, u in zip(lower, upper))
        return Grid(self.kind, tuple(lower), h, counts, t0=region.t1, dt=dt, steps=time_nodes - 1)

    def sample(self, region: Cylinder, nodes: int, time_nodes: Optional[int] = None) -> ScalarField:
        return ScalarField.from_source(self.grid_over(region, nodes, time_nodes), self)


def sampled_source(field: ScalarField, label: str = 'sampled') -> FieldSource:
    """把采样场包装成可求值的场（时空多线性插值，越界点投影回网格）"""
    grid = field.grid
    if grid.steps == 0:
        raise ParameterError("采样场至少需要两个时间层")
    axes = (grid.times(), *grid.axes())
    interpolator = RegularGridInterpolator(axes, field.values, method='linear')
    lower = np.array([a[0] for a in axes])
    upper = np.array([a[-1] for a in axes])

    def evaluate(points: np.ndarray, t: np.ndarray) -> np.ndarray:
        t, points = np.broadcast_arrays(t[..., np.newaxis], points)
        query = np.concatenate((t[..., :1], points), axis=-1)
        query = np.clip(query, lower, upper)
        return interpolator(query.reshape(-1, query.shape[-1])).reshape(query.shape[:-1])

    return FieldSource(evaluate, Cylinder.covering(grid), grid.kind, grid.n, label, (grid.dt, grid.h))


def _cell_average(values: np.ndarray) -> np.ndarray:
    """多线性插值在每个时空单元中点的值"""
    for axis in range(values.ndim):
        lo = [slice(None)] * values.ndim
        hi = [slice(None)] * values.ndim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        values = 0.5 * (values[tuple(lo)] + values[tuple(hi)])
    return values


def _cell_mask(grid: Grid, region: Cylinder) -> np.ndarray:
    """单元中点落在区域内的单元"""
    tc = grid.times()[:-1] + 0.5 * grid.dt
    inside = (tc >= region.t1) & (tc <= region.t2)
    mask = inside.reshape((-1,) + (1,) * grid.dim)
    if grid.kind == GridKind.RADIAL:
        rc = grid.axis(0)[:-1] + 0.5 * grid.h
        return mask & (rc <= region.half_widths[0])[np.newaxis]
    for k, axis in enumerate(grid.axes()):
        xc = axis[:-1] + 0.5 * grid.h
        ok = np.abs(xc - region.center[k]) <= region.half_widths[k]
        shape = [1] * (grid.dim + 1)
        shape[k + 1] = -1
        mask = mask & ok.reshape(shape)
    return mask


def integrate_q_norm(field: ScalarField, region: Cylinder, q: float) -> float:
    """
    ∫∫ |v|^q dx dt 的张量中点求积

    权重全为正，区域单调：A ⊆ B 时积分值不减
    """
    if not q > 0:
        raise ParameterError(f"指数 q 必须为正，当前 q={q}")
    grid = field.grid
    if grid.steps == 0:
        raise DomainError("纯空间场没有时间方向，无法做时空积分")
    if len(region.center) != grid.dim:
        raise DomainError("区域维数与网格不一致")
    mask = _cell_mask(grid, region)
    if not mask.any():
        raise DomainError("区域与网格不相交")
    integrand = _cell_average(np.abs(field.values) ** q)
    measure = grid.dt * grid.cell_measures()
    weighted = np.where(mask, integrand, 0.0) * measure[np.newaxis]
    return float(weighted.sum())


def truncate(field: ScalarField, j: float) -> ScalarField:
    """截断 v_j = min{v, j}，并把截断标记设为 j"""
    if not j > 0:
        raise ParameterError(f"截断值必须为正，当前 j={j}")
    cap = j if field.cap is None else min(field.cap, j)
    return ScalarField(field.grid, np.minimum(field.values, cap), cap)


def extend_to_past(field: ScalarField, new_t0: float) -> ScalarField:
    """
    向过去延拓：t ≤ 原起始时间之前的时间层全部补 0

    只对非负场成立
    """
    grid = field.grid
    if not new_t0 < grid.t0:
        raise ParameterError(f"新的起始时间 {new_t0} 必须早于 {grid.t0}")
    if (field.values < 0).any():
        raise ContractError("向过去延拓只对非负场有效")
    pad = int(math.ceil((grid.t0 - new_t0) / grid.dt - 1e-9))
    zeros = np.zeros((pad, *grid.counts))
    extended = grid.with_time(grid.t0 - pad * grid.dt, grid.dt, grid.steps + pad)
    return ScalarField(extended, np.concatenate((zeros, field.values)), field.cap)
