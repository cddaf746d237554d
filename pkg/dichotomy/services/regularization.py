"""
时空下卷积（infimal convolution）
v^ε(x,t) = inf_{(y,τ)} v(y,τ) + (|x-y|² + |t-τ|²)/(2ε)，下确界取遍区域内的全部网格节点
"""
import logging
from dataclasses import dataclass

import numpy as np

from dichotomy.conf import lab_setting
from dichotomy.services.core import Cylinder, Grid, GridKind, ScalarField
from dichotomy.utils.exceptions import DomainError, ParameterError

logger = logging.getLogger('dichotomy')

METHODS = ('brute', 'sweep')


@dataclass(frozen=True)
class InfConvSpec:
    epsilon: float
    domain: Cylinder

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"ε 必须为正，当前 ε={self.epsilon}")


def _penalty(d: np.ndarray, epsilon: float) -> np.ndarray:
    # 两条计算路径必须使用同一表达式
    return (d * d) / (2.0 * epsilon)


def restrict(field: ScalarField, region: Cylinder) -> ScalarField:
    """截取区域内的网格节点，结果仍是规则子网格"""
    grid = field.grid
    if grid.kind == GridKind.RADIAL:
        raise ParameterError("下卷积只对区间与平面网格定义")
    times = grid.times()
    tol_t = 1e-12 * max(1.0, abs(region.t2))
    t_index = np.flatnonzero((times >= region.t1 - tol_t) & (times <= region.t2 + tol_t))
    slices = [slice(t_index[0], t_index[-1] + 1) if t_index.size else slice(0, 0)]
    origin = []
    for k, axis in enumerate(grid.axes()):
        tol = 1e-12 * max(1.0, abs(region.upper[k]), abs(region.lower[k]))
        index = np.flatnonzero((axis >= region.lower[k] - tol) & (axis <= region.upper[k] + tol))
        if index.size == 0:
            slices.append(slice(0, 0))
            origin.append(0.0)
            continue
        slices.append(slice(index[0], index[-1] + 1))
        origin.append(float(axis[index[0]]))
    values = field.values[tuple(slices)]
    if values.size == 0 or min(values.shape[1:]) < 2:
        raise DomainError("下卷积区域内没有足够的网格节点")
    sub = Grid(grid.kind, tuple(origin), grid.h, values.shape[1:],
               t0=float(times[t_index[0]]), dt=grid.dt, steps=values.shape[0] - 1, n=grid.n)
    return ScalarField(sub, values, field.cap)


def _coordinates(grid: Grid) -> list[np.ndarray]:
    return [grid.times(), *grid.axes()]


def _brute(values: np.ndarray, grid: Grid, epsilon: float) -> np.ndarray:
    coords = _coordinates(grid)
    mesh = [c.ravel() for c in np.meshgrid(*coords, indexing='ij')]
    flat = values.ravel()
    total = flat.size
    chunk = max(1, min(int(lab_setting('REGULARIZATION', 'CHUNK_SIZE')), (1 << 22) // total))
    result = np.empty(total)
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        acc = flat[np.newaxis, :]
        for axis in mesh:
            acc = acc + _penalty(axis[start:stop, np.newaxis] - axis[np.newaxis, :], epsilon)
        result[start:stop] = acc.min(axis=1)
    return result.reshape(values.shape)


def _sweep(values: np.ndarray, grid: Grid, epsilon: float) -> np.ndarray:
    """逐维一维下确界；加法舍入单调，结果与暴力法逐位一致"""
    result = values
    for axis, coord in enumerate(_coordinates(grid)):
        kernel = _penalty(coord[:, np.newaxis] - coord[np.newaxis, :], epsilon)
        moved = np.moveaxis(result, axis, -1)
        out = np.empty_like(moved)
        for i in range(coord.size):
            out[..., i] = (moved + kernel[i]).min(axis=-1)
        result = np.moveaxis(out, -1, axis)
    return result


def inf_convolve(field: ScalarField, spec: InfConvSpec, method: str = 'brute') -> ScalarField:
    """
    在 spec.domain 内对采样场做时空下卷积

    Args:
        field: 采样场（区间或平面网格）
        spec: ε 与区域
        method: 'brute' 逐点暴力求最小；'sweep' 逐维扫描
    Returns:
        区域子网格上的 v^ε
    """
    if method not in METHODS:
        raise ParameterError(f"未知的下卷积方法: {method}")
    local = restrict(field, spec.domain)
    if not np.isfinite(local.values).all():
        raise ParameterError("下卷积要求场在区域内取有限值")
    if method == 'brute':
        values = _brute(local.values, local.grid, spec.epsilon)
    else:
        values = _sweep(local.values, local.grid, spec.epsilon)
    logger.info(f"下卷积完成: ε={spec.epsilon:g}, 方法 {method}, 节点 {local.values.size}")
    return ScalarField(local.grid, values, local.cap)
