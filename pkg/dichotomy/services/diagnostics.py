"""
二分诊断
可积性分类（二进壳层尾部检验）、𝔅/𝔐 判定、侧边界有界性、内蕴 Harnack 与 Caccioppoli 检查
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from dichotomy.conf import lab_setting
from dichotomy.services.core import (
    Cylinder, Equation, FieldSource, GridKind, MediumParams, ScalarField, SingularHint,
    integrate_q_norm, sampled_source,
)
from dichotomy.utils.exceptions import ConfigurationError, ContractError, ParameterError

logger = logging.getLogger('dichotomy')

FieldLike = Union[ScalarField, FieldSource]


class Verdict(str, Enum):
    FINITE = 'Finite'
    DIVERGENT = 'Divergent'
    INCONCLUSIVE = 'Inconclusive'


class ClassLabel(str, Enum):
    B = 'B'
    M = 'M'
    UNKNOWN = 'Unknown'


@dataclass(frozen=True)
class SummabilityReport:
    """
    壳层积分报告

    shell_integrals 为 (尺度, ∫∫|v|^q) 列表，尺度为壳层的时间上限（相对奇异时刻）；
    ratios 为相邻壳层之比，tail_ratio 为其几何平均
    """
    q: float
    hint: SingularHint
    shell_integrals: list[tuple[float, float]]
    ratios: list[float]
    tail_ratio: float
    verdict: Verdict
    octaves: int
    reason: str = ''


@dataclass(frozen=True)
class ClassVerdict:
    label: ClassLabel
    t0_detected: Optional[float]
    minorant_floor: float
    evidence: list[SummabilityReport]
    threshold: float


@dataclass(frozen=True)
class HarnackSample:
    x0: tuple[float, ...]
    t0: float
    R: float
    theta: float
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs


@dataclass(frozen=True)
class HarnackReport:
    samples: list[HarnackSample]
    gamma_measured: float
    C_used: float
    skipped: int = 0


def as_source(data: FieldLike) -> FieldSource:
    return data if isinstance(data, FieldSource) else sampled_source(data)


def _tail_verdict(integrals: Sequence[float]) -> tuple[list[float], float, Verdict]:
    """最后 K 个相邻比值全部 ≥ 0.9 为发散，全部 < 0.6 为有限"""
    divergent = float(lab_setting('DIAGNOSTICS', 'DIVERGENT_RATIO'))
    finite = float(lab_setting('DIAGNOSTICS', 'FINITE_RATIO'))
    ratios = []
    for outer, inner in zip(integrals[:-1], integrals[1:]):
        if outer > 0:
            ratios.append(inner / outer)
        else:
            ratios.append(0.0 if inner == 0 else math.inf)
    if not any(v > 0 for v in integrals):
        return ratios, 0.0, Verdict.FINITE
    positive = [r for r in ratios if 0 < r < math.inf]
    tail = float(np.exp(np.mean(np.log(positive)))) if positive else 0.0
    if all(r >= divergent for r in ratios):
        return ratios, tail, Verdict.DIVERGENT
    if all(r < finite for r in ratios):
        return ratios, tail, Verdict.FINITE
    return ratios, tail, Verdict.INCONCLUSIVE


def _shell_region(source: FieldSource, hint: SingularHint, region: Cylinder, tau_lo: float,
                  tau_hi: float, window: float) -> Cylinder:
    t1, t2 = hint.t_star + tau_lo, hint.t_star + tau_hi
    if hint.kind == 'slice':
        return region.with_times(t1, t2)
    scale = 1.0
    if hint.spatial_exponent is not None:
        scale = (tau_hi / window) ** hint.spatial_exponent
    widths = tuple(w * scale for w in region.half_widths)
    center = hint.x_star if source.kind != GridKind.RADIAL else (0.0,)
    return Cylinder(center, widths, t1, t2)


def classify_summability(data: FieldLike, hint: SingularHint, q: float, region: Optional[Cylinder] = None,
                         octaves: Optional[int] = None) -> SummabilityReport:
    """
    沿二进壳层逼近疑似奇异集，检验 ∫∫|v|^q 的尾部

    时间片奇异：壳层为 region 空间部分 × (t*+τ_{k+1}, t*+τ_k]；
    点奇异：空间窗口按 (τ_k/τ_0)^β 同步收缩。每层缩小 2^{-octaves}，
    每个壳层单独取 SHELL_NODES 个节点做中点求积
    """
    if not q > 0:
        raise ParameterError(f"指数 q 必须为正，当前 q={q}")
    source = as_source(data)
    region = region or source.region
    if hint.kind == 'point' and source.kind != GridKind.RADIAL and len(hint.x_star) != len(region.center):
        raise ParameterError("奇异点维数与区域不一致")
    count = int(lab_setting('DIAGNOSTICS', 'SHELL_COUNT'))
    nodes = int(lab_setting('DIAGNOSTICS', 'SHELL_NODES'))
    if octaves is None:
        octaves = int(lab_setting('DIAGNOSTICS', 'POINT_OCTAVES' if hint.kind == 'point' else 'SLICE_OCTAVES'))
    window = region.t2 - hint.t_star
    if not window > 0:
        raise ParameterError("奇异时刻必须早于区域终止时刻")

    reason = ''
    if source.resolution is not None:
        # 采样场：每层至少缩小 2^-SAMPLED_MIN_OCTAVES，壳层数截到最细壳层不小于一个时间步
        sampled_dt = source.resolution[0]
        levels = math.floor(math.log2(window / sampled_dt) + 1e-9) if window > sampled_dt else 0
        minimum = int(lab_setting('DIAGNOSTICS', 'MIN_SHELLS'))
        octaves = max(min(octaves, levels // minimum), int(lab_setting('DIAGNOSTICS', 'SAMPLED_MIN_OCTAVES')))
        count = min(count, levels // octaves)
        if count < minimum:
            reason = '采样时间步相对窗口太粗'

    floor = 64.0 * np.finfo(float).eps * abs(hint.t_star) + np.finfo(float).tiny
    if window * 2.0 ** (-octaves * count) < floor:
        reason = reason or '壳层低于浮点分辨率'

    integrals: list[tuple[float, float]] = []
    if not reason:
        for k in range(count):
            tau_hi = window * 2.0 ** (-octaves * k)
            tau_lo = tau_hi * 2.0 ** (-octaves)
            shell = _shell_region(source, hint, region, tau_lo, tau_hi, window)
            sampled = source.sample(shell, nodes)
            integrals.append((tau_hi, integrate_q_norm(sampled, shell, q)))
        ratios, tail, verdict = _tail_verdict([value for _, value in integrals])
    else:
        ratios, tail, verdict = [], math.nan, Verdict.INCONCLUSIVE
    logger.info(f"可积性检验 q={q:g} ({hint.kind}): {verdict.value}, 尾比 {tail:.4g}")
    return SummabilityReport(q, hint, integrals, ratios, tail, verdict, octaves, reason)


def summability_sweep(data: FieldLike, hint: SingularHint, qs: Sequence[float],
                      region: Optional[Cylinder] = None) -> list[SummabilityReport]:
    """同一奇异集上一组指数的检验，用于观察两个临界指数之间的空隙"""
    return [classify_summability(data, hint, q, region) for q in qs]


def _spatial_samples(source: FieldSource, region: Cylinder, nodes: int, fraction: float = 1.0) -> np.ndarray:
    """区域（按比例收缩后）空间部分的采样点，形状 (..., dim)"""
    if source.kind == GridKind.RADIAL:
        return np.linspace(0.0, region.half_widths[0] * fraction, nodes)[:, np.newaxis]
    axes = [np.linspace(c - w * fraction, c + w * fraction, nodes) for c, w in zip(region.center, region.half_widths)]
    return np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, len(axes))


def _slice_sup(source: FieldSource, points: np.ndarray, t: float) -> float:
    values = source(points, np.full(points.shape[:-1], t))
    finite = values[np.isfinite(values)]
    return float(finite.max()) if finite.size else math.inf


def detect_onset(data: FieldLike, region: Optional[Cylinder] = None) -> tuple[Optional[float], float]:
    """
    寻找上确界增长最快的时间片

    :return: (t0 或 None, 扫描步长)；没有正跳跃时返回 None
    """
    source = as_source(data)
    region = region or source.region
    slices = int(lab_setting('DIAGNOSTICS', 'SCAN_SLICES'))
    points = _spatial_samples(source, region, int(lab_setting('DIAGNOSTICS', 'SHELL_NODES')))
    times = np.linspace(region.t1, region.t2, slices)
    sups = np.array([_slice_sup(source, points, t) for t in times])
    jumps = np.diff(sups)
    scan_dt = float(times[1] - times[0])
    finite = np.abs(sups[np.isfinite(sups)])
    noise = 64.0 * np.finfo(float).eps * (float(finite.max()) if finite.size else 0.0)
    if not (jumps > noise).any():
        return None, scan_dt
    j = int(np.argmax(jumps))
    lo, hi = float(times[j]), float(times[j + 1])
    level = 0.5 * (sups[j] + sups[j + 1])
    if source.resolution is None:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if _slice_sup(source, points, mid) > level:
                hi = mid
            else:
                lo = mid
    return lo, scan_dt


def minorant_floor(data: FieldLike, t0: float, weight_exponent: float, region: Optional[Cylinder] = None,
                   scan_dt: Optional[float] = None) -> float:
    """
    min_{x∈K} inf_{t∈(t0, t0+τ]} v(x,t)(t-t0)^{w}

    K 为居中、占空间范围一半的核心，τ = MINORANT_WINDOW·(T - t0)
    """
    source = as_source(data)
    region = region or source.region
    nodes = int(lab_setting('DIAGNOSTICS', 'SHELL_NODES'))
    span = float(lab_setting('DIAGNOSTICS', 'MINORANT_WINDOW')) * (region.t2 - t0)
    start = t0 + (scan_dt if scan_dt is not None else span / (nodes - 1))
    if not span > 0 or start > t0 + span:
        return 0.0
    core = _spatial_samples(source, region, nodes, fraction=0.5)
    times = np.linspace(start, t0 + span, nodes)
    values = source(core[np.newaxis], np.broadcast_to(times[:, np.newaxis], (nodes, core.shape[0])))
    weighted = values * (times[:, np.newaxis] - t0) ** weight_exponent
    return float(max(0.0, weighted.min()))


def classify_field(data: FieldLike, params: MediumParams, equation: Equation = Equation.P_LAPLACE,
                   region: Optional[Cylinder] = None) -> ClassVerdict:
    """
    判定 𝔅 / 𝔐

    在阈值指数 p-2（PME: m-1）处沿候选时间片做可积性检验：
    有限 → B；发散且 v·(t-t0)^{1/(p-2)} 在核心上有正下界 → M；其余 → Unknown
    """
    equation = Equation(equation)
    threshold = params.class_exponent(equation)
    source = as_source(data)
    region = region or source.region
    onset, scan_dt = detect_onset(source, region)
    t_star = region.t1 if onset is None else onset
    report = classify_summability(source, SingularHint.time_slice(t_star), threshold, region.with_times(
        region.t1, region.t2))
    floor = minorant_floor(source, t_star, 1.0 / threshold, region, scan_dt)
    if report.verdict == Verdict.FINITE:
        label = ClassLabel.B
    elif report.verdict == Verdict.DIVERGENT and floor > 0:
        label = ClassLabel.M
    else:
        label = ClassLabel.UNKNOWN
    logger.info(f"类别判定 ({equation.value}): {label.value}, t0={onset}, 下界 {floor:.6g}")
    return ClassVerdict(label, onset, floor, [report], threshold)


def boundary_boundedness_check(data: FieldLike, region: Optional[Cylinder] = None,
                               threshold: Optional[float] = None) -> bool:
    """
    侧边界附近（向内一个采样间距）的取值是否保持在爆破阈值之下

    时间采样为均匀扫描层加上朝候选 t0 几何加密的 BOUNDARY_LEVELS 层
    """
    source = as_source(data)
    region = region or source.region
    nodes = int(lab_setting('DIAGNOSTICS', 'SHELL_NODES'))
    levels = int(lab_setting('DIAGNOSTICS', 'BOUNDARY_LEVELS'))
    slices = int(lab_setting('DIAGNOSTICS', 'SCAN_SLICES'))
    onset, _ = detect_onset(source, region)
    times = np.linspace(region.t1, region.t2, slices)
    if onset is not None:
        refined = onset + (region.t2 - onset) * 2.0 ** (-np.arange(levels, dtype=float))
        times = np.union1d(times, refined[refined > onset])

    if source.kind == GridKind.RADIAL:
        R = region.half_widths[0]
        lateral = np.array([[R - R / (nodes - 1)]])
    else:
        lower, upper = region.lower, region.upper
        inset = (upper - lower) / (nodes - 1)
        faces = []
        for k in range(len(lower)):
            axes = [np.linspace(lower[j] + inset[j], upper[j] - inset[j], nodes) for j in range(len(lower))]
            for value in (lower[k] + inset[k], upper[k] - inset[k]):
                axes_k = list(axes)
                axes_k[k] = np.array([value])
                faces.append(np.stack(np.meshgrid(*axes_k, indexing='ij'), axis=-1).reshape(-1, len(lower)))
        lateral = np.concatenate(faces)

    if threshold is None:
        core = _spatial_samples(source, region, nodes, fraction=0.5)
        scan = np.linspace(region.t1, region.t2, slices)
        core_sup = max(_slice_sup(source, core, t) for t in scan)
        if not (math.isfinite(core_sup) and core_sup > 0):
            core_sup = 1.0
        threshold = float(lab_setting('EVOLUTION', 'EXPLOSION_FACTOR')) * core_sup
    peak = 0.0
    for t in times:
        values = source(lateral, np.full(lateral.shape[0], t))
        if not np.isfinite(values).all():
            peak = math.inf
            break
        peak = max(peak, float(values.max()))
    bounded = peak < threshold
    logger.info(f"侧边界有界性: {'有界' if bounded else '无界'}, 峰值 {peak:.3e}, 阈值 {threshold:.3e}")
    return bounded


def harnack_check(data: FieldLike, params: MediumParams, C_used: float, samples: int, seed: int,
                  equation: Equation = Equation.P_LAPLACE, region: Optional[Cylinder] = None) -> HarnackReport:
    """
    内蕴 Harnack 不等式 u(x0,t0) ≤ γ inf_{B_R(x0)} u(·, t0+θ) 的经验 γ

    θ = C·R^p/u(x0,t0)^{p-2}（PME: C·R²/u^{m-1}）；R 在 [4h, 范围/8] 上对数均匀抽样；
    B(x0,4R)×(t0-4θ, t0+4θ) 必须落在区域内且在粗格点上为正，否则跳过并计数
    """
    equation = Equation(equation)
    if not C_used > 0:
        raise ParameterError("C_used 必须为正")
    if samples < 1:
        raise ParameterError("样本数至少为 1")
    source = as_source(data)
    region = region or source.region
    if source.kind == GridKind.RADIAL:
        raise ParameterError("Harnack 检查需要区间或平面场")
    exponent = params.class_exponent(equation)
    power = params.p if equation == Equation.P_LAPLACE else 2.0
    extent = 2.0 * min(region.half_widths)
    h = source.resolution[1] if source.resolution is not None else extent / (
        int(lab_setting('DIAGNOSTICS', 'SCAN_SLICES')) - 1)
    r_lo, r_hi = 4.0 * h, extent / 8.0
    if not r_lo < r_hi:
        raise ConfigurationError("网格太粗，无法抽样 Harnack 半径", detail={'h': h, 'extent': extent})
    probe = int(lab_setting('DIAGNOSTICS', 'HARNACK_PROBE_NODES'))
    dim = len(region.center)
    rng = np.random.default_rng(seed)
    accepted: list[HarnackSample] = []
    skipped = 0

    def ball(center: np.ndarray, radius: float, nodes: int) -> np.ndarray:
        axes = [np.linspace(c - radius, c + radius, nodes) for c in center]
        pts = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, dim)
        return pts[np.linalg.norm(pts - center, axis=-1) <= radius * (1 + 1e-12)]

    for _ in range(samples):
        R = float(np.exp(rng.uniform(np.log(r_lo), np.log(r_hi))))
        x0 = rng.uniform(region.lower, region.upper)
        t0 = float(rng.uniform(region.t1, region.t2))
        u0 = float(source(x0[np.newaxis], np.array([t0]))[0])
        if not (u0 > 0 and math.isfinite(u0)):
            skipped += 1
            continue
        theta = C_used * R ** power / u0 ** exponent
        fits = ((x0 - 4 * R >= region.lower) & (x0 + 4 * R <= region.upper)).all()
        fits = fits and region.t1 <= t0 - 4 * theta and t0 + 4 * theta <= region.t2
        if not fits:
            skipped += 1
            continue
        coarse = ball(x0, 4 * R, 9)
        coarse_times = np.linspace(t0 - 4 * theta, t0 + 4 * theta, 9)
        lattice = source(coarse[np.newaxis], np.broadcast_to(coarse_times[:, np.newaxis], (9, coarse.shape[0])))
        if not (lattice > 0).all():
            skipped += 1
            continue
        inner = ball(x0, R, probe)
        rhs = float(source(inner, np.full(inner.shape[0], t0 + theta)).min())
        if not rhs > 0:
            skipped += 1
            continue
        accepted.append(HarnackSample(tuple(float(v) for v in x0), t0, R, theta, u0, rhs))

    if not accepted:
        raise ConfigurationError("没有满足区域约束的 Harnack 样本", detail={'skipped': skipped})
    gamma = max(sample.ratio for sample in accepted)
    logger.info(f"Harnack 检查: γ={gamma:.6g}, 有效样本 {len(accepted)}, 跳过 {skipped}")
    return HarnackReport(accepted, gamma, C_used, skipped)


def bump_cutoff(x: np.ndarray, center: float, radius: float) -> np.ndarray:
    """光滑紧支截断函数 exp(1 - 1/(1-s²))，|s| < 1"""
    s = (np.asarray(x, dtype=float) - center) / radius
    inside = np.abs(s) < 1
    safe = np.where(inside, 1.0 - s * s, 1.0)
    return np.where(inside, np.exp(1.0 - 1.0 / safe), 0.0)


@dataclass(frozen=True)
class CaccioppoliReport:
    lhs: float
    rhs: float
    ratio: float
    terms: dict = field(default_factory=dict)


def caccioppoli_check(data: ScalarField, zeta: np.ndarray, window: tuple[float, float],
                      params: MediumParams) -> CaccioppoliReport:
    """
    Caccioppoli 估计两侧（C(p) 取 1 的原始括号）

    lhs = ∫∫ζ^p|∇u|^p + sup_t ∫ζ^p u²
    rhs = ∫∫u^p|∇ζ|^p + ∫ζ^p u(x,t1)²
    """
    grid = data.grid
    if grid.kind != GridKind.INTERVAL:
        raise ParameterError("Caccioppoli 检查只对区间网格实现")
    p = params.p
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != grid.counts:
        raise ParameterError("截断函数必须在网格节点上给出")
    if (zeta < 0).any() or zeta[0] != 0 or zeta[-1] != 0:
        raise ContractError("截断函数必须非负且在区域边界处为零")
    if (data.values < 0).any():
        raise ContractError("Caccioppoli 检查要求非负的下解")
    window_field = data.between(*window)
    u = window_field.values
    x = grid.axis(0)
    times = window_field.grid.times()
    grad_u = np.gradient(u, grid.h, axis=-1)
    grad_zeta = np.gradient(zeta, grid.h)
    zp = zeta ** p

    energy = float(np.trapezoid(np.trapezoid(zp * np.abs(grad_u) ** p, x, axis=-1), times))
    slices = np.trapezoid(zp * u ** 2, x, axis=-1)
    cutoff_term = float(np.trapezoid(np.trapezoid(u ** p * np.abs(grad_zeta) ** p, x, axis=-1), times))
    initial_term = float(slices[0])
    lhs = energy + float(slices.max())
    rhs = cutoff_term + initial_term
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    logger.info(f"Caccioppoli: lhs={lhs:.6g}, rhs={rhs:.6g}, 比值 {ratio:.4g}")
    return CaccioppoliReport(lhs, rhs, ratio, {
        'energy': energy, 'sup_slice': float(slices.max()), 'cutoff': cutoff_term, 'initial_slice': initial_term,
    })
