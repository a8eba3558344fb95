"""数值验证与语义错误检测

把 Tester 的输出（清单 + VTK 快照）转换为 ValidationReport：先按任务计算命名指标并比对验收阈值，
再运行三个语义检测器（缺失平流、边界错位、空壳程序），最后按固定优先级给出唯一的错误分类。
"""

import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from core.exceptions import (
    FileProcessingError,
    MeasurementError,
    NoPeakError,
    OracleInapplicableError,
    PreconditionError,
)
from core.logging import get_logger
from models.simulation import (
    BCKind,
    BCRule,
    BoundaryEdge,
    DetectorThresholds,
    InitKind,
    InitSpec,
    OutputManifest,
    PowerLawModel,
    ReactionKind,
    SimulationConfig,
    TaskSpec,
    TransportParams,
)
from models.validation import CheckResult, ErrorClass, ExecutionReport, ValidationReport
from services.vtk_io import (
    MANIFEST_NAME,
    SimulationOutput,
    SnapshotData,
    file_checksum,
    list_grid_files,
    read_grid_file,
    read_manifest,
)


logger = get_logger(__name__)

# Fisher-KPP 前沿速度拟合窗口（物理时间）
FRONT_FIT_WINDOW = (1000.0, 3000.0)

# 步数换算成物理时间后的比较容差
_TIME_TOL = 1e-9

_INSTABILITY_MARKERS = ("InstabilityError", "数值失稳")


# ---------------------------------------------------------------------------
# 解析解与测量
# ---------------------------------------------------------------------------

def _wrap(delta: np.ndarray, period: float) -> np.ndarray:
    """最小镜像距离，落在 [−period/2, period/2)"""
    return (delta + period / 2.0) % period - period / 2.0


def analytic_ad_gaussian(
    x,
    y,
    t: float,
    params: TransportParams,
    init: InitSpec,
    nx: int,
    ny: int,
):
    """周期区域上平流-扩散高斯解

    φ = A σ²/(σ²+2Dt) · exp(−|x − x₀ − u t|² / (2(σ²+2Dt)))，位移按最小镜像计算。
    扩展宽度超过 min(nx, ny)/6 时周期镜像不可忽略，报 OracleInapplicableError。
    """
    if t < 0:
        raise OracleInapplicableError("时间必须非负", oracle="analytic_ad_gaussian")
    if init.kind != InitKind.GAUSSIAN:
        raise OracleInapplicableError("初值不是高斯分布", oracle="analytic_ad_gaussian")
    width_sq = init.sigma ** 2 + 2.0 * params.diffusivity * t
    if math.sqrt(width_sq) > min(nx, ny) / 6.0:
        raise OracleInapplicableError(
            f"高斯宽度 {math.sqrt(width_sq):.3f} 超过区域尺寸的 1/6，周期镜像不可忽略",
            oracle="analytic_ad_gaussian",
        )
    xc, yc = init.resolved_center(nx, ny)
    ux, uy = params.velocity
    dx = _wrap(np.asarray(x, dtype=float) - xc - ux * t, nx)
    dy = _wrap(np.asarray(y, dtype=float) - yc - uy * t, ny)
    amplitude = init.amplitude * init.sigma ** 2 / width_sq
    return amplitude * np.exp(-(dx ** 2 + dy ** 2) / (2.0 * width_sq))


def analytic_center(t: float, params: TransportParams, init: InitSpec, nx: int, ny: int) -> Tuple[float, float]:
    xc, yc = init.resolved_center(nx, ny)
    return ((xc + params.velocity[0] * t) % nx, (yc + params.velocity[1] * t) % ny)


def _parabolic_offset(minus: float, center: float, plus: float) -> float:
    denominator = minus - 2.0 * center + plus
    if denominator == 0:
        return 0.0
    return 0.5 * (minus - plus) / denominator


def measure_peak(field: np.ndarray) -> Tuple[Tuple[float, float], float]:
    """定位峰值

    取最大值格点（并列时取 x 最小、再取 y 最小），再在每个方向上用三点抛物线细化。
    相邻点按周期取值。返回 ((x, y), 幅值)。
    """
    field = np.asarray(field, dtype=float)
    if not np.all(np.isfinite(field)):
        raise MeasurementError("场中存在非有限值", measurement="peak")
    if field.max() == field.min():
        raise NoPeakError()
    nx, ny = field.shape
    ix, iy = np.unravel_index(int(np.argmax(field)), field.shape)
    center = field[ix, iy]
    xm, xp = field[(ix - 1) % nx, iy], field[(ix + 1) % nx, iy]
    ym, yp = field[ix, (iy - 1) % ny], field[ix, (iy + 1) % ny]
    dx = _parabolic_offset(xm, center, xp)
    dy = _parabolic_offset(ym, center, yp)
    amplitude = center - 0.25 * (xm - xp) * dx - 0.25 * (ym - yp) * dy
    return ((ix + dx) % nx, (iy + dy) % ny), float(amplitude)


def periodic_distance(a: Sequence[float], b: Sequence[float], nx: int, ny: int) -> float:
    dx = _wrap(np.asarray(a[0] - b[0]), nx)
    dy = _wrap(np.asarray(a[1] - b[1]), ny)
    return float(math.hypot(dx, dy))


def field_variance(field: np.ndarray, center: Tuple[float, float]) -> float:
    """以 center 为中心（周期最小镜像）的二阶矩，x、y 两方向取平均"""
    field = np.asarray(field, dtype=float)
    nx, ny = field.shape
    mass = field.sum()
    if mass == 0:
        raise MeasurementError("场的总量为零", measurement="variance")
    dx = _wrap(np.arange(nx, dtype=float) - center[0], nx)[:, None]
    dy = _wrap(np.arange(ny, dtype=float) - center[1], ny)[None, :]
    var_x = float((field * dx ** 2).sum() / mass)
    var_y = float((field * dy ** 2).sum() / mass)
    return 0.5 * (var_x + var_y)


def front_speed(series: Sequence[Tuple[float, float]]) -> float:
    """半径–时间序列的最小二乘斜率"""
    if len(series) < 5:
        raise PreconditionError(f"前沿速度拟合至少需要 5 个采样点，实际 {len(series)} 个", operation="front_speed")
    times = np.array([t for t, _ in series], dtype=float)
    radii = np.array([r for _, r in series], dtype=float)
    if np.any(np.diff(radii) < -1e-12):
        raise MeasurementError("前沿半径随时间减小", measurement="front_speed")
    slope, _ = np.polyfit(times, radii, 1)
    return float(slope)


def level_set_radius(field: np.ndarray, level: float = 0.5, row: Optional[int] = None) -> float:
    """沿过区域中心的一行测量 φ ≥ level 区域的半宽，交点线性插值"""
    field = np.asarray(field, dtype=float)
    nx, ny = field.shape
    line = field[:, ny // 2 if row is None else row]
    center = nx // 2
    if line[center] < level:
        return 0.0
    if np.all(line >= level):
        raise MeasurementError("整行都超过水平集阈值，前沿已越过周期边界", measurement="level_set_radius")

    right = center
    while line[(right + 1) % nx] >= level:
        right += 1
    hi, lo = line[right % nx], line[(right + 1) % nx]
    right_edge = right + (hi - level) / (hi - lo)

    left = center
    while line[(left - 1) % nx] >= level:
        left -= 1
    hi, lo = line[left % nx], line[(left - 1) % nx]
    left_edge = left - (hi - level) / (hi - lo)
    return float(0.5 * (right_edge - left_edge))


def boundary_band_means(field: np.ndarray) -> Dict[BoundaryEdge, float]:
    """各边相邻一层节点的均值"""
    field = np.asarray(field, dtype=float)
    return {
        BoundaryEdge.TOP: float(field[:, -1].mean()),
        BoundaryEdge.BOTTOM: float(field[:, 0].mean()),
        BoundaryEdge.LEFT: float(field[0, :].mean()),
        BoundaryEdge.RIGHT: float(field[-1, :].mean()),
    }


def centerline_profile(u: np.ndarray, lid_speed: float) -> Tuple[np.ndarray, np.ndarray]:
    """竖直中线上的 u_x / U，返回 (归一化高度, 速度)；偶数 nx 取中间两列平均"""
    u = np.asarray(u, dtype=float)
    nx, ny = u.shape[:2]
    if nx % 2 == 0:
        ux = 0.5 * (u[nx // 2 - 1, :, 0] + u[nx // 2, :, 0])
    else:
        ux = u[nx // 2, :, 0]
    heights = (np.arange(ny) + 0.5) / ny
    return heights, ux / lid_speed


def self_convergence_error(
    profile_a: Tuple[np.ndarray, np.ndarray],
    profile_b: Tuple[np.ndarray, np.ndarray],
) -> float:
    """两套网格中线剖面的 L2（均方根）差，已按顶盖速度归一化

    细网格剖面插值到粗网格高度上比较。
    """
    heights_a, values_a = profile_a
    heights_b, values_b = profile_b
    if len(heights_a) > len(heights_b):
        heights_a, values_a, heights_b, values_b = heights_b, values_b, heights_a, values_a
    resampled = np.interp(heights_a, heights_b, values_b)
    return float(np.sqrt(np.mean((values_a - resampled) ** 2)))


def steady_fd_solution(config: SimulationConfig, refine: int = 1) -> np.ndarray:
    """有限差分求解平流-扩散稳态 u·∇φ = D∇²φ

    单元中心网格，间距 1/refine；壁面位于半格处，Dirichlet 用镜像虚点，Neumann 用对称虚点，
    未列出的边为周期。返回细网格上的场。
    """
    if not isinstance(config.params, TransportParams):
        raise OracleInapplicableError("稳态有限差分只适用于标量输运", oracle="steady_fd_solution")
    if not any(r.kind == BCKind.DIRICHLET for r in config.bc):
        raise OracleInapplicableError("没有 Dirichlet 边界，稳态解不唯一", oracle="steady_fd_solution")

    nx, ny = config.nx * refine, config.ny * refine
    h = 1.0 / refine
    diffusivity = config.params.diffusivity
    ux, uy = config.params.velocity
    size = nx * ny

    def index(i: int, j: int) -> int:
        return i * ny + j

    # 相邻点系数：扩散 D/h²，中心差分平流 ∓u/(2h)
    neighbours = (
        (1, 0, diffusivity / h ** 2 - ux / (2 * h), BoundaryEdge.RIGHT),
        (-1, 0, diffusivity / h ** 2 + ux / (2 * h), BoundaryEdge.LEFT),
        (0, 1, diffusivity / h ** 2 - uy / (2 * h), BoundaryEdge.TOP),
        (0, -1, diffusivity / h ** 2 + uy / (2 * h), BoundaryEdge.BOTTOM),
    )
    rules = {r.edge: r for r in config.bc}

    rows: List[int] = []
    cols: List[int] = []
    data: List[float] = []
    rhs = np.zeros(size)
    for i in range(nx):
        for j in range(ny):
            k = index(i, j)
            diagonal = -4.0 * diffusivity / h ** 2
            for di, dj, coefficient, edge in neighbours:
                ni, nj = i + di, j + dj
                inside = 0 <= ni < nx and 0 <= nj < ny
                rule = rules.get(edge)
                if inside or rule is None:
                    rows.append(k)
                    cols.append(index(ni % nx, nj % ny))
                    data.append(coefficient)
                elif rule.kind == BCKind.DIRICHLET:
                    # 虚点 φ_g = 2φ_wall − φ_k
                    diagonal -= coefficient
                    rhs[k] -= 2.0 * rule.value * coefficient
                else:
                    diagonal += coefficient
            rows.append(k)
            cols.append(k)
            data.append(diagonal)

    matrix = sparse.csr_matrix((data, (rows, cols)), shape=(size, size))
    solution = spsolve(matrix, rhs)
    return solution.reshape(nx, ny)


def restrict(field: np.ndarray, refine: int) -> np.ndarray:
    """把细网格场按 refine×refine 块平均回粗网格"""
    if refine == 1:
        return field
    nx, ny = field.shape
    return field.reshape(nx // refine, refine, ny // refine, refine).mean(axis=(1, 3))


# ---------------------------------------------------------------------------
# 输出读取
# ---------------------------------------------------------------------------

def load_output(output_dir: Union[str, Path]) -> Optional[SimulationOutput]:
    """读取 Tester 输出目录；没有清单时返回 None

    清单中的每个文件都会校验 SHA-256，不一致或无法解析时报 FileProcessingError。
    """
    output_dir = Path(output_dir)
    if not (output_dir / MANIFEST_NAME).is_file():
        return None
    manifest = read_manifest(output_dir)

    snapshots: List[SnapshotData] = []
    for record in sorted(manifest.snapshots, key=lambda r: r.timestep):
        path = output_dir / record.filename
        if not path.is_file():
            raise FileProcessingError("清单中的快照文件不存在", filename=str(path), operation="load_output")
        if file_checksum(path) != record.checksum:
            raise FileProcessingError("快照文件校验和不一致", filename=str(path), operation="load_output")
        grid = read_grid_file(path)
        snapshots.append(SnapshotData(timestep=record.timestep, filename=record.filename, fields=grid.fields))

    return SimulationOutput(
        task=manifest.task,
        output_dir=output_dir,
        final_fields=dict(snapshots[-1].fields) if snapshots else {},
        snapshots=snapshots,
        time_series=manifest.time_series,
        steps_run=manifest.steps_run,
        converged=manifest.converged,
        manifest=manifest,
    )


# ---------------------------------------------------------------------------
# 指标
# ---------------------------------------------------------------------------

def _scalar_snapshots(output: SimulationOutput) -> List[SnapshotData]:
    return [s for s in output.snapshots if "phi" in s.fields]


def _is_plain_ad(config: SimulationConfig) -> bool:
    return (
        isinstance(config.params, TransportParams)
        and config.init.kind == InitKind.GAUSSIAN
        and config.reaction.kind == ReactionKind.NONE
        and not config.bc
    )


def _final_time(task: TaskSpec, output: SimulationOutput) -> Optional[float]:
    snapshots = _scalar_snapshots(output)
    return task.config.time_at(snapshots[-1].timestep) if snapshots else None


def _metric_peak_amplitude(task: TaskSpec, output: SimulationOutput) -> Optional[float]:
    config = task.config
    if not _is_plain_ad(config) or output.final_scalar is None:
        return None
    t = _final_time(task, output)
    xc, yc = analytic_center(t, config.params, config.init, config.nx, config.ny)
    expected = float(analytic_ad_gaussian(xc, yc, t, config.params, config.init, config.nx, config.ny))
    _, measured = measure_peak(output.final_scalar)
    return abs(measured - expected) / expected


def _metric_peak_position(task: TaskSpec, output: SimulationOutput) -> Optional[float]:
    config = task.config
    if not _is_plain_ad(config) or output.final_scalar is None:
        return None
    t = _final_time(task, output)
    expected = analytic_center(t, config.params, config.init, config.nx, config.ny)
    measured, _ = measure_peak(output.final_scalar)
    return periodic_distance(measured, expected, config.nx, config.ny)


def _metric_mass_drift(task: TaskSpec, output: SimulationOutput) -> Optional[float]:
    config = task.config
    snapshots = _scalar_snapshots(output)
    if config.is_fluid or config.reaction.kind != ReactionKind.NONE or len(snapshots) < 2:
        return None
    if any(r.kind == BCKind.DIRICHLET for r in config.bc):
        return None
    initial = float(snapshots[0].fields["phi"].sum())
    final = float(snapshots[-1].fields["phi"].sum())
    return abs(final - initial) / abs(initial) if initial else None


def variance_growth_rate(times: Sequence[float], variances: Sequence[float]) -> float:
    """方差–时间序列的最小二乘斜率"""
    if len(times) < 2:
        raise PreconditionError("方差增长拟合至少需要初始快照之后的两个快照", operation="variance_growth")
    slope, _ = np.polyfit(np.asarray(times, dtype=float), np.asarray(variances, dtype=float), 1)
    return float(slope)


def _metric_variance_growth(task: TaskSpec, output: SimulationOutput) -> Optional[float]:
    """方差增长率与 2D 的相对误差

    从平衡初值启动时方差带有一个按 |1−ω|^t 衰减的初始偏移，因此跳过 t = 0 快照，
    对其余快照拟合斜率。
    """
    config = task.config
    snapshots = _scalar_snapshots(output)
    if not _is_plain_ad(config) or len(snapshots) < 2:
        return None
    later = [s for s in snapshots if s.timestep > snapshots[0].timestep]
    times = [config.time_at(s.timestep) for s in later]
    variances = [field_variance(s.fields["phi"], measure_peak(s.fields["phi"])[0]) for s in later]
    expected = 2.0 * config.params.diffusivity
    return abs(variance_growth_rate(times, variances) - expected) / expected


def _band_metric(edge: BoundaryEdge) -> Callable[[TaskSpec, SimulationOutput], Optional[float]]:
    def metric(task: TaskSpec, output: SimulationOutput) -> Optional[float]:
        if task.config.is_fluid or not task.config.bc or output.final_scalar is None:
            return None
        return boundary_band_means(output.final_scalar)[edge]
    return metric


def _front_series(task: TaskSpec, output: SimulationOutput) -> List[Tuple[float, float]]:
    """拟合窗口内的 (物理时间, 前沿半径)；运行时长不足窗口时取后 2/3"""
    config = task.config
    rows = [r for r in output.time_series if r.get("front_radius") is not None]
    start, stop = FRONT_FIT_WINDOW
    duration = config.time_at(output.steps_run)
    if duration < stop - _TIME_TOL:
        start, stop = duration / 3.0, duration
    series = [(config.time_at(r["timestep"]), r["front_radius"]) for r in rows]
    return [(t, radius) for t, radius in series if start - _TIME_TOL <= t <= stop + _TIME_TOL]


def _metric_front_speed(task: TaskSpec, output: SimulationOutput) -> Optional[float]:
    if task.config.reaction.kind != ReactionKind.LOGISTIC:
        return None
    return front_speed(_front_series(task, output))


def _metric_front_speed_error(task: TaskSpec, output: SimulationOutput) -> Optional[float]:
    config = task.config
    if config.reaction.kind != ReactionKind.LOGISTIC:
        return None
    expected = 2.0 * math.sqrt(config.reaction.rate * config.params.diffusivity)
    return abs(front_speed(_front_series(task, output)) - expected) / expected


def _metric_steady_residual(task: TaskSpec, output: SimulationOutput) -> Optional[float]:
    if not task.config.steady_state:
        return None
    residuals = [r["residual"] for r in output.time_series if r.get("residual") is not None]
    return float(residuals[-1]) if residuals else None


def _lid_speed(config: SimulationConfig) -> Optional[float]:
    for rule in config.bc:
        if rule.kind == BCKind.MOVING_WALL:
            return math.hypot(*rule.wall_velocity)
    return None


def _metric_max_speed(task: TaskSpec, output: SimulationOutput) -> Optional[float]:
    lid = _lid_speed(task.config)
    u = output.final_fields.get("velocity")
    if not task.config.is_fluid or not lid or u is None:
        return None
    return float(np.sqrt((u ** 2).sum(axis=-1)).max() / lid)


def _metric_centerline_min(task: TaskSpec, output: SimulationOutput) -> Optional[float]:
    lid = _lid_speed(task.config)
    u = output.final_fields.get("velocity")
    if not task.config.is_fluid or not lid or u is None:
        return None
    _, profile = centerline_profile(u, lid)
    return float(profile.min())


METRICS: Dict[str, Callable[[TaskSpec, SimulationOutput], Optional[float]]] = {
    "peak_amplitude_rel_error": _metric_peak_amplitude,
    "peak_position_error": _metric_peak_position,
    "mass_drift": _metric_mass_drift,
    "variance_growth_rel_error": _metric_variance_growth,
    "top_band_mean": _band_metric(BoundaryEdge.TOP),
    "bottom_band_mean": _band_metric(BoundaryEdge.BOTTOM),
    "left_band_mean": _band_metric(BoundaryEdge.LEFT),
    "right_band_mean": _band_metric(BoundaryEdge.RIGHT),
    "front_speed": _metric_front_speed,
    "front_speed_rel_error": _metric_front_speed_error,
    "steady_residual": _metric_steady_residual,
    "max_speed_over_lid": _metric_max_speed,
    "centerline_min_ux": _metric_centerline_min,
}


def compute_metrics(task: TaskSpec, output: SimulationOutput, notes: Optional[List[str]] = None) -> Dict[str, float]:
    """计算所有适用于该任务的指标；不适用或测量失败的指标被跳过并记录说明"""
    metrics: Dict[str, float] = {}
    for name, metric in METRICS.items():
        try:
            value = metric(task, output)
        except (OracleInapplicableError, MeasurementError, NoPeakError, PreconditionError) as e:
            if notes is not None:
                notes.append(f"{name}: {e.message}")
            continue
        if value is not None:
            metrics[name] = float(value)
    return metrics


# ---------------------------------------------------------------------------
# 语义错误检测器
# ---------------------------------------------------------------------------

def _tracked_displacement(
    peaks: Sequence[Tuple[float, float]],
    times: Sequence[float],
    config: SimulationConfig,
) -> float:
    """沿快照序列累加相邻峰位的最小镜像增量，得到展开后的总位移

    相邻快照间平流位移达到半个周期时最小镜像不再可靠，改为把终点与期望位置比较，
    返回 max(|u|t − 偏差, 0)。
    """
    ux, uy = config.params.velocity
    nx, ny = config.nx, config.ny
    gaps = np.diff(np.asarray(times, dtype=float))
    if np.any(abs(ux) * gaps >= nx / 2.0) or np.any(abs(uy) * gaps >= ny / 2.0):
        t = times[-1] - times[0]
        start, end = peaks[0], peaks[-1]
        expected = (start[0] + ux * t, start[1] + uy * t)
        return max(math.hypot(ux, uy) * t - periodic_distance(end, expected, nx, ny), 0.0)
    total = np.zeros(2)
    for previous, current in zip(peaks, peaks[1:]):
        total[0] += float(_wrap(np.asarray(current[0] - previous[0]), nx))
        total[1] += float(_wrap(np.asarray(current[1] - previous[1]), ny))
    return float(math.hypot(*total))


def detect_missing_advection(
    output: SimulationOutput,
    task: TaskSpec,
    thresholds: Optional[DetectorThresholds] = None,
) -> bool:
    """平流缺失：峰位移小于 |u|·t 的给定比例，而扩散（方差增长）确实发生

    峰位移沿全部快照展开计算，平移距离超过区域周期时也不会被折回。
    """
    thresholds = thresholds or task.detectors
    config = task.config
    if not isinstance(config.params, TransportParams) or config.init.kind != InitKind.GAUSSIAN:
        return False
    speed = math.hypot(*config.params.velocity)
    snapshots = _scalar_snapshots(output)
    if speed == 0 or len(snapshots) < 2:
        return False
    times = [config.time_at(s.timestep) for s in snapshots]
    t = times[-1] - times[0]
    try:
        peaks = [measure_peak(s.fields["phi"])[0] for s in snapshots]
        var0 = field_variance(snapshots[0].fields["phi"], peaks[0])
        var1 = field_variance(snapshots[-1].fields["phi"], peaks[-1])
    except (NoPeakError, MeasurementError):
        return False
    displacement = _tracked_displacement(peaks, times, config)
    return displacement < thresholds.missing_advection_fraction * speed * t and var1 > var0


def detect_bc_swap(
    field: np.ndarray,
    bc_rules: Sequence[BCRule],
    thresholds: Optional[DetectorThresholds] = None,
) -> bool:
    """边界错位：某 Dirichlet 边的边带偏离其值，而另一条边的边带恰好吻合该值"""
    thresholds = thresholds or DetectorThresholds()
    dirichlet = [r for r in bc_rules if r.kind == BCKind.DIRICHLET]
    if not dirichlet:
        return False
    field = np.asarray(field, dtype=float)
    value_range = float(field.max() - field.min())
    if value_range == 0:
        return False
    means = boundary_band_means(field)
    for rule in dirichlet:
        if abs(means[rule.edge] - rule.value) <= thresholds.bc_swap_miss * value_range:
            continue
        for edge, mean in means.items():
            if edge != rule.edge and abs(mean - rule.value) <= thresholds.bc_swap_match * value_range:
                return True
    return False


def detect_spurious(
    exec_report: Optional[ExecutionReport],
    manifest: Optional[OutputManifest],
    output: Optional[SimulationOutput] = None,
    thresholds: Optional[DetectorThresholds] = None,
) -> Tuple[bool, Optional[str]]:
    """空壳程序检测，返回 (是否命中, 原因)"""
    thresholds = thresholds or DetectorThresholds()
    if exec_report is not None and not exec_report.succeeded:
        return False, None
    if manifest is None:
        return True, "缺少输出清单"
    if manifest.steps == 0:
        return True, "声明的时间步数为 0"
    if not manifest.snapshots:
        return True, "没有输出任何 VTK 文件"
    if output is not None and len(output.snapshots) >= 2:
        first = output.snapshots[0].fields
        changed = False
        for snapshot in output.snapshots[1:]:
            for name, values in snapshot.fields.items():
                reference = first.get(name)
                if reference is None or reference.shape != values.shape:
                    changed = True
                elif np.max(np.abs(values - reference)) > thresholds.constancy_tol:
                    changed = True
        if not changed:
            return True, "所有输出场随时间不变"
    return False, None


# ---------------------------------------------------------------------------
# 汇总
# ---------------------------------------------------------------------------

def _mentions_instability(exec_report: ExecutionReport) -> bool:
    text = "\n".join(exec_report.captured_errors) + "\n" + exec_report.stderr
    return any(marker in text for marker in _INSTABILITY_MARKERS)


def _output_format_note(output_dir: Optional[Path]) -> Optional[str]:
    if output_dir is None or not output_dir.is_dir() or list_grid_files(output_dir):
        return None
    others = sorted({p.suffix for p in output_dir.rglob("*") if p.suffix.lower() in (".csv", ".png", ".npy", ".txt")})
    if others:
        return f"输出格式不符：只找到 {', '.join(others)} 文件，要求输出 .vtk/.vtu"
    return None


def _all_finite(output: SimulationOutput) -> bool:
    return all(np.all(np.isfinite(v)) for s in output.snapshots for v in s.fields.values())


def validate(
    task: TaskSpec,
    exec_report: ExecutionReport,
    output: Optional[SimulationOutput],
    output_dir: Optional[Union[str, Path]] = None,
) -> ValidationReport:
    """生成验证报告

    优先级：syntactic > unstable > spurious > spatial > misinterpretation > 指标失败 > pass。
    """
    notes: List[str] = []
    detectors = task.detectors

    if not exec_report.succeeded:
        if _mentions_instability(exec_report):
            notes.append("Tester 因数值失稳终止")
            return ValidationReport(task=task.name, error_class=ErrorClass.UNSTABLE, notes=notes)
        if exec_report.timed_out:
            notes.append("Tester 执行超时")
        return ValidationReport(task=task.name, error_class=ErrorClass.SYNTACTIC, notes=notes)

    if output is not None and not _all_finite(output):
        notes.append("输出场含有 NaN/Inf")
        return ValidationReport(task=task.name, error_class=ErrorClass.UNSTABLE, notes=notes)

    manifest = output.manifest if output is not None else None
    spurious, reason = detect_spurious(exec_report, manifest, output, detectors)
    if spurious:
        notes.append(reason)
        format_note = _output_format_note(Path(output_dir) if output_dir else None)
        if format_note:
            notes.append(format_note)
        return ValidationReport(task=task.name, error_class=ErrorClass.SPURIOUS, notes=notes)

    metrics = compute_metrics(task, output, notes)
    checks = [
        CheckResult(
            name=check.name,
            comparator=check.comparator,
            threshold=check.threshold,
            measured=metrics.get(check.name),
            passed=check.passes(metrics.get(check.name)),
        )
        for check in task.acceptance
    ]

    error_class = ErrorClass.PASS
    final_scalar = output.final_scalar
    if final_scalar is not None and detect_bc_swap(final_scalar, task.config.bc, detectors):
        notes.append("边界条件位置与描述不符")
        error_class = ErrorClass.SPATIAL
    elif detect_missing_advection(output, task, detectors):
        notes.append("峰值未随来流移动，疑似缺失平流项")
        error_class = ErrorClass.MISINTERPRETATION
    elif not all(c.passed for c in checks):
        failed = ", ".join(c.name for c in checks if not c.passed)
        notes.append(f"未通过的验收项: {failed}")
        error_class = ErrorClass.MISINTERPRETATION

    logger.info(f"验证完成 {task.name}: {error_class.value}")
    return ValidationReport(task=task.name, metrics=metrics, checks=checks, error_class=error_class, notes=notes)
