"""
非线性特征值问题
p-Laplace 分离变量解的轮廓 𝔘 与 PME 的 Friendly Giant 轮廓 G，
统一写成尺度不变商 R(w) = ∫|∇w|^P / (∫|w|^s)^{P/s} 的极小化，
并给出一维首次积分（不完全 Beta 函数）的精确对照。
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import integrate, optimize, sparse, special
from scipy.sparse import linalg as sparse_linalg

from dichotomy.conf import lab_setting
from dichotomy.services.core import Equation, Grid, GridKind, MediumParams
from dichotomy.utils.exceptions import ConvergenceError, NumericError, ParameterError

logger = logging.getLogger('dichotomy')


@dataclass(frozen=True)
class QuotientExponents:
    """
    商的指数与欧拉-拉格朗日方程 -Δ_P w = λ|w|^{s-2}w 的系数

    p-Laplace: P=p, s=2, λ=1/(p-2), 轮廓 U = w
    PME: P=2, s=(m+1)/m, λ=1/(m-1), 轮廓 G = w^{1/m}
    """
    P: float
    s: float
    lam: float
    equation: Equation
    m: Optional[float] = None

    @classmethod
    def for_params(cls, params: MediumParams, equation: Equation) -> 'QuotientExponents':
        equation = Equation(equation)
        params.require(equation)
        if equation == Equation.P_LAPLACE:
            return cls(P=params.p, s=2.0, lam=1.0 / (params.p - 2.0), equation=equation)
        m = params.m
        return cls(P=2.0, s=(m + 1.0) / m, lam=1.0 / (m - 1.0), equation=equation, m=m)

    def to_profile(self, w: np.ndarray) -> np.ndarray:
        if self.equation == Equation.P_LAPLACE:
            return w
        return np.abs(w) ** (1.0 / self.m)


@dataclass(frozen=True, eq=False)
class EigenResult:
    """
    离散特征函数

    U 为节点值（PME 分支为 G），J0 为单位 s-范数下的最小商值，
    normC 为使 J0·normC^{p-2} = 1/(p-2)（PME: J0·normC^{m-1} = 1/(m-1)）的缩放常数
    """
    grid: Grid
    U: np.ndarray
    J0: float
    normC: float
    residual: float
    iterations: int
    exponents: QuotientExponents
    history: tuple[float, ...] = field(default=())

    @property
    def maximum(self) -> float:
        return float(self.U.max())

    @property
    def w(self) -> np.ndarray:
        """方程变量 w（PME 分支为 G^m）"""
        if self.exponents.equation == Equation.P_LAPLACE:
            return self.U
        return self.U ** self.exponents.m


class QuotientProblem:
    """网格上的离散商及其梯度，未知量为非 Dirichlet 节点"""

    def __init__(self, grid: Grid, exponents: QuotientExponents):
        if grid.kind == GridKind.BOX2D and min(grid.counts) < 3:
            raise ParameterError("二维区域每个方向至少需要 3 个节点")
        self.grid = grid
        self.exponents = exponents
        self.free = np.ones(grid.counts, dtype=bool)
        if grid.kind == GridKind.INTERVAL:
            self.free[[0, -1]] = False
        elif grid.kind == GridKind.RADIAL:
            self.free[-1] = False
        else:
            self.free[[0, -1], :] = False
            self.free[:, [0, -1]] = False
        if grid.dim == 1:
            self.node_weights = grid.node_measures()
            self.cell_weights = grid.cell_measures()
        else:
            self.node_weights = np.full(grid.counts, grid.h * grid.h)
            self.cell_weights = None

    @property
    def size(self) -> int:
        return int(self.free.sum())

    def embed(self, z: np.ndarray) -> np.ndarray:
        w = np.zeros(self.grid.counts)
        w[self.free] = z
        return w

    def _energy(self, w: np.ndarray) -> tuple[float, np.ndarray]:
        """∫|∇w|^P 及其对节点值的梯度"""
        P, h = self.exponents.P, self.grid.h
        if self.grid.dim == 1:
            D = np.diff(w) / h
            num = float(np.sum(self.cell_weights * np.abs(D) ** P))
            g = self.cell_weights * P * np.abs(D) ** (P - 2.0) * D / h
            grad = np.zeros_like(w)
            grad[1:] += g
            grad[:-1] -= g
            return num, grad
        # 每个正方形单元剖分为两个 P1 三角形
        area = 0.5 * h * h
        grad = np.zeros_like(w)
        w00, w10, w01, w11 = w[:-1, :-1], w[1:, :-1], w[:-1, 1:], w[1:, 1:]
        num = 0.0
        for lower, gx, gy in (
            (True, (w10 - w00) / h, (w01 - w00) / h),
            (False, (w11 - w01) / h, (w11 - w10) / h),
        ):
            norm2 = gx * gx + gy * gy
            num += float(np.sum(area * norm2 ** (0.5 * P)))
            coef = area * P * norm2 ** (0.5 * P - 1.0) / h
            # ∂gx/∂w 与 ∂gy/∂w 只取 ±1/h
            if lower:
                grad[1:, :-1] += coef * gx
                grad[:-1, 1:] += coef * gy
                grad[:-1, :-1] -= coef * (gx + gy)
            else:
                grad[1:, 1:] += coef * (gx + gy)
                grad[:-1, 1:] -= coef * gx
                grad[1:, :-1] -= coef * gy
        return num, grad

    def _mass(self, w: np.ndarray) -> tuple[float, np.ndarray]:
        """∫|w|^s 及其梯度"""
        s = self.exponents.s
        den = float(np.sum(self.node_weights * np.abs(w) ** s))
        grad = self.node_weights * s * np.sign(w) * np.abs(w) ** (s - 1.0)
        return den, grad

    def quotient(self, w: np.ndarray) -> float:
        num, _ = self._energy(w)
        den, _ = self._mass(w)
        return num / den ** (self.exponents.P / self.exponents.s)

    def value_and_grad(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        w = self.embed(z)
        num, dnum = self._energy(w)
        den, dden = self._mass(w)
        if den <= 0:
            raise NumericError("迭代退化为零函数")
        ratio = self.exponents.P / self.exponents.s
        value = num / den ** ratio
        grad = (dnum - ratio * (num / den) * dden) / den ** ratio
        return value, grad[self.free]

    def normalize(self, w: np.ndarray) -> np.ndarray:
        den, _ = self._mass(w)
        return w / den ** (1.0 / self.exponents.s)

    def residual(self, w: np.ndarray, value: float) -> float:
        """单位范数下欧拉-拉格朗日方程的相对 ℓ² 残差"""
        _, dnum = self._energy(w)
        s = self.exponents.s
        source = value * np.sign(w) * np.abs(w) ** (s - 1.0)
        strong = dnum / (self.exponents.P * self.node_weights) - source
        scale = np.linalg.norm(source[self.free])
        if scale == 0:
            return float('inf')
        return float(np.linalg.norm(strong[self.free]) / scale)

    def equation(self, z: np.ndarray, lam: float) -> np.ndarray:
        """-Δ_P w - λ|w|^{s-2}w 在自由节点上的加权值（即 ∂N/P - λ∂D/s）"""
        w = self.embed(z)
        _, dnum = self._energy(w)
        _, dden = self._mass(w)
        return (dnum / self.exponents.P - lam * dden / self.exponents.s)[self.free]

    def jacobian(self, z: np.ndarray, lam: float) -> sparse.csc_matrix:
        """一维网格上 equation 的三对角雅可比矩阵"""
        P, s, h = self.exponents.P, self.exponents.s, self.grid.h
        w = self.embed(z)
        a = self.cell_weights * (P - 1.0) * np.abs(np.diff(w) / h) ** (P - 2.0) / (h * h)
        padded = np.concatenate(([0.0], a, [0.0]))
        positive = w > 0
        mass = np.zeros_like(w)
        mass[positive] = lam * (s - 1.0) * self.node_weights[positive] * w[positive] ** (s - 2.0)
        full = sparse.diags([-a, padded[:-1] + padded[1:] - mass, -a], [-1, 0, 1], format='csc')
        index = np.flatnonzero(self.free)
        return full[index][:, index]

    def newton_step(self, z: np.ndarray, lam: float, value: np.ndarray) -> np.ndarray:
        if self.grid.dim == 1:
            return sparse_linalg.spsolve(self.jacobian(z, lam), -value)
        # 二维：雅可比-向量积用方向差分近似
        eps = np.sqrt(np.finfo(float).eps) * max(1.0, float(np.linalg.norm(z)))

        def apply(v: np.ndarray) -> np.ndarray:
            norm = float(np.linalg.norm(v))
            if norm == 0:
                return np.zeros_like(v)
            step = eps / norm
            return (self.equation(z + step * v, lam) - value) / step

        operator = sparse_linalg.LinearOperator((z.size, z.size), matvec=apply)
        step, _ = sparse_linalg.gmres(operator, -value, restart=min(z.size, 50), maxiter=20)
        return step

    def polish(self, w: np.ndarray, lam: float) -> tuple[np.ndarray, int]:
        """
        以下降法的结果为初值，对 -Δ_P w = λ|w|^{s-2}w 做阻尼牛顿迭代
        步长减半直到残差下降且保持为正；无法下降时停止
        :return: (节点值, 牛顿步数)
        """
        target = float(lab_setting('EIGEN', 'NEWTON_TOLERANCE'))
        max_steps = int(lab_setting('EIGEN', 'NEWTON_STEPS'))
        z = w[self.free]
        current = self.residual(w, lam)
        taken = 0
        while taken < max_steps and current > target:
            value = self.equation(z, lam)
            step = self.newton_step(z, lam, value)
            t = 1.0
            accepted = False
            while t >= 2.0 ** -20:
                trial = z + t * step
                if (trial > 0).all():
                    trial_residual = self.residual(self.embed(trial), lam)
                    if trial_residual < current:
                        z, current, accepted = trial, trial_residual, True
                        break
                t *= 0.5
            if not accepted:
                break
            taken += 1
        return self.embed(z), taken

    def bump(self) -> np.ndarray:
        """正的正弦鼓包初值"""
        grid = self.grid
        if grid.kind == GridKind.RADIAL:
            r = grid.axis(0)
            return np.cos(0.5 * np.pi * r / r[-1])
        factors = []
        for axis in grid.axes():
            factors.append(np.sin(np.pi * (axis - axis[0]) / (axis[-1] - axis[0])))
        if grid.dim == 1:
            return factors[0]
        return np.outer(factors[0], factors[1])


def rayleigh_quotient(w: np.ndarray, grid: Grid, params: MediumParams,
                      equation: Equation = Equation.P_LAPLACE) -> float:
    """离散商 R(w)，w 为全部节点值（边界节点按零处理）"""
    problem = QuotientProblem(grid, QuotientExponents.for_params(params, equation))
    w = np.where(problem.free, np.asarray(w, dtype=float), 0.0)
    return problem.quotient(w)


def minimize_quotient(grid: Grid, params: MediumParams, equation: Equation = Equation.P_LAPLACE,
                      initial_guess: Optional[np.ndarray] = None) -> EigenResult:
    """
    在零边值下极小化尺度不变商，得到正的特征函数

    Args:
        grid: 空间网格（区间、径向球或二维矩形）
        params: 介质参数
        equation: pLaplace 求 𝔘，PME 求 Friendly Giant G
        initial_guess: 初值，取绝对值后使用，缺省为正弦鼓包

    Returns:
        EigenResult
    """
    grid = grid.spatial()
    exponents = QuotientExponents.for_params(params, equation)
    problem = QuotientProblem(grid, exponents)
    start = problem.bump() if initial_guess is None else np.abs(np.asarray(initial_guess, dtype=float))
    start = problem.normalize(np.where(problem.free, start, 0.0))
    max_iter = int(lab_setting('EIGEN', 'MAX_ITERATIONS'))
    history: list[float] = []

    def record(zk: np.ndarray) -> None:
        history.append(problem.quotient(problem.embed(zk)))

    logger.info(f"特征问题开始: {exponents.equation.value}, 网格 {grid.kind.value} {grid.counts}")
    result = optimize.minimize(
        problem.value_and_grad,
        start[problem.free],
        jac=True,
        method='L-BFGS-B',
        bounds=[(0.0, None)] * problem.size,
        callback=record,
        options={
            'maxiter': max_iter,
            'maxfun': 10 * max_iter,
            'ftol': float(lab_setting('EIGEN', 'FTOL')),
            'gtol': float(lab_setting('EIGEN', 'GTOL')),
            'maxcor': int(lab_setting('EIGEN', 'HISTORY_SIZE')),
        },
    )
    w = problem.normalize(np.abs(problem.embed(result.x)))
    J0 = problem.quotient(w)
    residual = problem.residual(w, J0)
    if result.status == 1:
        raise ConvergenceError(f"特征问题在 {result.nit} 次迭代内未收敛", residual=residual, iterations=int(result.nit))
    if not np.isfinite(J0) or J0 <= 0:
        raise NumericError(f"商值异常: J0={J0}")
    if result.status != 0:
        logger.warning(f"L-BFGS-B 提前结束: {result.message}，残差 {residual:.3e}")

    P, s, lam = exponents.P, exponents.s, exponents.lam
    c = (lam / J0) ** (1.0 / (P - s))
    w, newton_steps = problem.polish(c * w, lam)
    w = problem.normalize(w)
    J0 = problem.quotient(w)
    residual = problem.residual(w, J0)
    tolerance = float(lab_setting('EIGEN', 'EL_TOLERANCE'))
    if not residual <= tolerance:
        raise ConvergenceError(f"欧拉-拉格朗日残差 {residual:.3e} 超过容差 {tolerance:g}", residual=residual,
                               iterations=int(result.nit))
    c = (lam / J0) ** (1.0 / (P - s))
    w = c * w
    U = exponents.to_profile(w)
    normC = c if exponents.equation == Equation.P_LAPLACE else c ** (1.0 / exponents.m)
    logger.info(f"特征问题完成: J0={J0:.10g}, normC={normC:.10g}, 残差={residual:.3e}, "
                f"迭代 {result.nit} + 牛顿 {newton_steps}")
    return EigenResult(
        grid=grid,
        U=U,
        J0=J0,
        normC=normC,
        residual=residual,
        iterations=int(result.nit),
        exponents=exponents,
        history=tuple(history),
    )


def coarse_residual(result: EigenResult) -> float:
    """
    细网格解注入到两倍步长网格后的欧拉-拉格朗日相对残差

    细网格上的离散方程已解到舍入误差，注入后的残差只剩离散化误差，随网格加密下降
    """
    grid = result.grid
    if any((c - 1) % 2 for c in grid.counts):
        raise ParameterError(f"注入到粗网格需要偶数个单元: {grid.counts}")
    coarse = replace(grid, h=2.0 * grid.h, counts=tuple((c - 1) // 2 + 1 for c in grid.counts))
    problem = QuotientProblem(coarse, result.exponents)
    w = result.w[tuple(slice(None, None, 2) for _ in grid.counts)]
    return problem.residual(w, result.exponents.lam)


@dataclass(frozen=True)
class FirstIntegral1D:
    """
    一维首次积分 (P-1)/P|w'|^P + (λ/s)|w|^s = K 给出的精确常数

    M = C1·L^{P/(P-s)}, w'(0) = C2·L^{s/(P-s)}；p-Laplace 时即 L^{p/(p-2)} 与 L^{2/(p-2)}
    """
    p: float
    L: float
    M: float
    C1: float
    C2: float
    slope: float
    energy: float
    exponents: QuotientExponents
    beta_integral: float
    beta_identity: float
    quadrature_nodes: int

    @property
    def max_exponent(self) -> float:
        return self.exponents.P / (self.exponents.P - self.exponents.s)

    @property
    def slope_exponent(self) -> float:
        return self.exponents.s / (self.exponents.P - self.exponents.s)

    @property
    def profile_max(self) -> float:
        """轮廓最大值（PME 分支为 M^{1/m}）"""
        return float(self.exponents.to_profile(np.asarray(self.M)))


def _normalized_integral(exponents: QuotientExponents) -> tuple[float, float, int]:
    """
    ∫_0^1 (1-σ^s)^{-1/P} dσ：端点加权求积与 (1/s)B(1/s, 1-1/P) 对照

    σ=1 处的奇性用代数权 (1-σ)^{-1/P} 吸收，剩余因子光滑
    """
    P, s = exponents.P, exponents.s

    def smooth_part(sigma: float) -> float:
        if sigma <= 0.0:
            return 1.0
        if sigma >= 1.0:
            return s ** (-1.0 / P)
        ratio = np.expm1(s * np.log1p(sigma - 1.0)) / (sigma - 1.0)
        return float(ratio ** (-1.0 / P))

    value, _, info = integrate.quad(smooth_part, 0.0, 1.0, weight='alg', wvar=(0.0, -1.0 / P),
                                    epsabs=1e-14, epsrel=1e-13, limit=200, full_output=True)[:3]
    identity = special.beta(1.0 / s, 1.0 - 1.0 / P) / s
    if not abs(value - identity) <= 1e-8 * identity:
        raise NumericError(f"端点奇异积分与 Beta 恒等式不一致: {value} vs {identity}")
    return value, identity, int(info.get('neval', 0))


def _first_integral(exponents: QuotientExponents, L: float) -> FirstIntegral1D:
    if not L > 0:
        raise ParameterError(f"区间长度必须为正，当前 L={L}")
    P, s, lam = exponents.P, exponents.s, exponents.lam
    integral, identity, nodes = _normalized_integral(exponents)
    k = P * lam / ((P - 1.0) * s)
    # L/2 = M^{1-s/P} k^{-1/P} ∫_0^1 (1-σ^s)^{-1/P} dσ
    M = (0.5 * L * k ** (1.0 / P) / identity) ** (P / (P - s))
    slope = (k * M ** s) ** (1.0 / P)
    return FirstIntegral1D(
        p=P if exponents.equation == Equation.P_LAPLACE else exponents.m,
        L=L,
        M=M,
        C1=M / L ** (P / (P - s)),
        C2=slope / L ** (s / (P - s)),
        slope=slope,
        energy=lam / s * M ** s,
        exponents=exponents,
        beta_integral=integral,
        beta_identity=identity,
        quadrature_nodes=nodes,
    )


def first_integral_oracle(p: float, L: float) -> FirstIntegral1D:
    """p-Laplace 轮廓 𝔘 在 [0, L] 上的最大值与端点斜率"""
    exponents = QuotientExponents.for_params(MediumParams(p=p, n=1), Equation.P_LAPLACE)
    return _first_integral(exponents, L)


def giant_first_integral_oracle(m: float, L: float) -> FirstIntegral1D:
    """Friendly Giant 在 w = G^m 变量下的首次积分常数"""
    exponents = QuotientExponents.for_params(MediumParams(m=m, n=1), Equation.PME)
    return _first_integral(exponents, L)


def _profile(oracle: FirstIntegral1D, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    if resolution < 2:
        raise ParameterError("剖面分辨率至少为 2")
    P, s = oracle.exponents.P, oracle.exponents.s
    x = np.linspace(0.0, oracle.L, resolution + 1)
    # x(σ)/(L/2) = I_{σ^s}(1/s, 1-1/P)，对左半段求逆后镜像
    half = np.minimum(x, oracle.L - x)
    level = special.betaincinv(1.0 / s, 1.0 - 1.0 / P, np.clip(2.0 * half / oracle.L, 0.0, 1.0))
    w = oracle.M * level ** (1.0 / s)
    w = 0.5 * (w + w[::-1])
    return x, w


def profile_from_first_integral(p: float, L: float, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """
    由首次积分反演得到 [0, L] 上的完整轮廓 𝔘，关于 L/2 对称
    :return: (节点坐标, 轮廓值)
    """
    return _profile(first_integral_oracle(p, L), resolution)


def giant_profile_from_first_integral(m: float, L: float, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Friendly Giant 轮廓 G = w^{1/m}"""
    x, w = _profile(giant_first_integral_oracle(m, L), resolution)
    return x, w ** (1.0 / m)


def profile_ode_residual(x: np.ndarray, w: np.ndarray, exponents: QuotientExponents) -> float:
    """
    (|w'|^{P-2}w')' + λ|w|^{s-2}w 在内部节点上的相对上确界残差
    w 为方程变量（PME 分支传入 G^m）
    """
    h = x[1] - x[0]
    D = np.diff(w) / h
    flux = np.abs(D) ** (exponents.P - 2.0) * D
    source = exponents.lam * np.abs(w[1:-1]) ** (exponents.s - 1.0)
    residual = np.diff(flux) / h + source
    return float(np.max(np.abs(residual)) / np.max(source))
