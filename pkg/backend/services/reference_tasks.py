"""基准 Tester

四个参考任务（平流-扩散高斯、混合边界、Fisher-KPP、幂律顶盖驱动方腔）的构造函数，
以及按 TaskSpec 执行时间推进、写出 VTK 快照和输出清单的 ``run_tester``。
"""

from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np

from core.config import DATA_DIR, settings
from core.exceptions import ConfigurationError, MeasurementError
from core.logging import PerformanceMonitor, get_logger
from models.simulation import (
    AcceptanceCheck,
    BCKind,
    BCRule,
    BoundaryEdge,
    InitKind,
    InitSpec,
    OutputManifest,
    PowerLawModel,
    ReactionKind,
    ReactionTerm,
    SimulationConfig,
    SnapshotRecord,
    TaskSpec,
    TransportParams,
)
from services.boundary_conditions import assemble_bc_pass
from services.lbm_core import (
    FluidState,
    ScalarState,
    init_fluid_state,
    init_scalar_state,
    step_fluid,
    step_scalar,
)
from services.task_descriptions import (
    config_from_values,
    parse_config_values,
    parse_description,
    render_config,
    render_description,
    task_from_description,
)
from services.validation_oracle import level_set_radius
from services.vtk_io import SimulationOutput, SnapshotData, file_checksum, write_manifest, write_vtk


logger = get_logger(__name__)

TASKS_DIR = DATA_DIR / "tasks"

# 时间序列采样间隔（步）
SERIES_EVERY = 100

# 超过该耗时（秒）的运行记一条慢操作警告
SLOW_RUN_SECONDS = 60.0

# 幂律方腔
CAVITY_CONSISTENCY = 1.0
CAVITY_BEHAVIOR_INDEX = 1.25
CAVITY_REFERENCE_CELLS = 100


def _description_path(name: str) -> str:
    return str(TASKS_DIR / f"{name}.md")


def task_ad_gaussian() -> TaskSpec:
    """周期区域中随来流平移并扩散的高斯分布"""
    config = SimulationConfig(
        nx=100,
        ny=100,
        steps=500,
        params=TransportParams(diffusivity=0.01, velocity=(0.1, 0.0)),
        init=InitSpec(kind=InitKind.GAUSSIAN, sigma=10.0),
        output_every=100,
    )
    return TaskSpec(
        name="ad_gaussian",
        description_path=_description_path("ad_gaussian"),
        config=config,
        acceptance=[
            AcceptanceCheck(name="peak_amplitude_rel_error", comparator="<=", threshold=0.02),
            AcceptanceCheck(name="peak_position_error", comparator="<=", threshold=1.0),
            AcceptanceCheck(name="mass_drift", comparator="<=", threshold=1e-10),
            AcceptanceCheck(name="variance_growth_rel_error", comparator="<=", threshold=0.05),
        ],
    )


def task_bc_mixed() -> TaskSpec:
    """上、左 Dirichlet，下、右零通量，运行到稳态"""
    config = SimulationConfig(
        nx=100,
        ny=100,
        steps=settings.steady_max_steps,
        params=TransportParams(diffusivity=1.0, velocity=(0.1, 0.2)),
        bc=[
            BCRule(edge=BoundaryEdge.TOP, kind=BCKind.DIRICHLET, value=0.0),
            BCRule(edge=BoundaryEdge.BOTTOM, kind=BCKind.NEUMANN),
            BCRule(edge=BoundaryEdge.LEFT, kind=BCKind.DIRICHLET, value=1.0),
            BCRule(edge=BoundaryEdge.RIGHT, kind=BCKind.NEUMANN),
        ],
        init=InitSpec(kind=InitKind.UNIFORM, value=1.0),
        output_every=10_000,
        steady_state=True,
        steady_tol=settings.steady_tol,
        steady_check_every=settings.steady_check_every,
    )
    return TaskSpec(
        name="bc_mixed",
        description_path=_description_path("bc_mixed"),
        config=config,
        acceptance=[
            AcceptanceCheck(name="top_band_mean", comparator="<=", threshold=0.1),
            AcceptanceCheck(name="left_band_mean", comparator=">=", threshold=0.9),
        ],
    )


def task_fisher_kpp(domain: Literal["channel", "square"] = "channel") -> TaskSpec:
    """logistic 反应扩散的行波前沿

    ``channel`` 为 4800×4 的周期长条，两侧前沿在 t ≤ 3000 内不会碰到周期镜像；
    ``square`` 为 100×100 区域，前沿在 t ≈ 80 即到达边界，只用于对照。
    Δt = 1/6 使格子扩散系数为 1/6（ω = 1），每步的反应增量 rΔt 远小于 1，
    显式源项带来的波速偏差可以忽略。
    """
    if domain == "channel":
        nx, ny = 4800, 4
    elif domain == "square":
        nx, ny = 100, 100
    else:
        raise ConfigurationError(f"未知的 Fisher-KPP 区域 {domain!r}", config_key="domain")
    config = SimulationConfig(
        nx=nx,
        ny=ny,
        steps=18_000,
        time_step=1.0 / 6.0,
        params=TransportParams(diffusivity=1.0, velocity=(0.0, 0.0)),
        reaction=ReactionTerm(kind=ReactionKind.LOGISTIC, rate=0.1),
        init=InitSpec(kind=InitKind.GAUSSIAN, sigma=12.5),
        output_every=3000,
    )
    return TaskSpec(
        name="fisher_kpp",
        description_path=_description_path("fisher_kpp"),
        config=config,
        acceptance=[AcceptanceCheck(name="front_speed_rel_error", comparator="<=", threshold=0.05)],
    )


def task_cavity_powerlaw(
    lid_velocity: Tuple[float, float] = (0.1, 0.0),
    n_cells: int = CAVITY_REFERENCE_CELLS,
) -> TaskSpec:
    """幂律流体顶盖驱动方腔

    网格加密时 K 按 (n_cells/100)^n 缩放，保持广义雷诺数 U^(2−n) L^n / K 不变。
    100² 网格收敛到 steady_tol 约需 160 s（纯 NumPy），测试中标记为 slow；
    200² 自收敛对照约需 10 min，超出单任务 5 min 的运行预算，只在 slow 测试里执行。
    """
    consistency = CAVITY_CONSISTENCY * (n_cells / CAVITY_REFERENCE_CELLS) ** CAVITY_BEHAVIOR_INDEX
    config = SimulationConfig(
        nx=n_cells,
        ny=n_cells,
        steps=settings.steady_max_steps,
        params=PowerLawModel(consistency=consistency, behavior_index=CAVITY_BEHAVIOR_INDEX),
        bc=[
            BCRule(edge=BoundaryEdge.TOP, kind=BCKind.MOVING_WALL, wall_velocity=tuple(lid_velocity)),
            BCRule(edge=BoundaryEdge.BOTTOM, kind=BCKind.NOSLIP),
            BCRule(edge=BoundaryEdge.LEFT, kind=BCKind.NOSLIP),
            BCRule(edge=BoundaryEdge.RIGHT, kind=BCKind.NOSLIP),
        ],
        init=InitSpec(kind=InitKind.QUIESCENT),
        output_every=10_000,
        steady_state=True,
        steady_tol=settings.steady_tol,
        steady_check_every=settings.steady_check_every,
    )
    return TaskSpec(
        name="cavity_powerlaw",
        description_path=_description_path("cavity_powerlaw"),
        config=config,
        acceptance=[
            AcceptanceCheck(name="steady_residual", comparator="<=", threshold=1e-8),
            AcceptanceCheck(name="max_speed_over_lid", comparator="<=", threshold=1.0),
            AcceptanceCheck(name="centerline_min_ux", comparator="<=", threshold=0.0),
        ],
    )


TASK_FACTORIES: Dict[str, Callable[[], TaskSpec]] = {
    "ad_gaussian": task_ad_gaussian,
    "bc_mixed": task_bc_mixed,
    "fisher_kpp": task_fisher_kpp,
    "cavity_powerlaw": task_cavity_powerlaw,
}


def load_task(name_or_path: Union[str, Path]) -> TaskSpec:
    """按名称取内置任务，或从 Math-Algo 描述文件构造任务"""
    if isinstance(name_or_path, str) and name_or_path in TASK_FACTORIES:
        return TASK_FACTORIES[name_or_path]()
    path = Path(name_or_path)
    if path.suffix != ".md":
        raise ConfigurationError(
            f"未知任务 {name_or_path!r}，可选: {', '.join(TASK_FACTORIES)} 或 .md 描述文件",
            config_key="task",
        )
    return task_from_description(path)


def apply_overrides(task: TaskSpec, overrides: Dict[str, str]) -> TaskSpec:
    """用 ``key=value`` 覆盖任务配置，例如 ``{"steps": "100"}``"""
    if not overrides:
        return task
    values = parse_config_values(render_config(task.config))
    for key, value in overrides.items():
        values.update(parse_config_values(f"{key}={value}"))
    config = config_from_values(values)
    return task.model_copy(update={"config": config})


def describe_task(task: TaskSpec) -> str:
    """渲染任务的 Math-Algo 描述；Tester 章节反映当前配置"""
    if not task.description_path or not Path(task.description_path).is_file():
        raise ConfigurationError(f"任务 {task.name} 没有可用的描述文件", config_key="description_path")
    description = parse_description(Path(task.description_path))
    return render_description(task, description.equations, description.algorithm)


# ---------------------------------------------------------------------------
# 执行
# ---------------------------------------------------------------------------

def _fields_of(state: Union[ScalarState, FluidState]) -> Dict[str, np.ndarray]:
    if isinstance(state, ScalarState):
        return {"phi": state.phi, "velocity": state.velocity}
    return {"rho": state.rho, "velocity": state.u}


def _primary_field(state: Union[ScalarState, FluidState]) -> np.ndarray:
    return state.phi if isinstance(state, ScalarState) else state.u


def _series_row(
    state: Union[ScalarState, FluidState],
    config: SimulationConfig,
    residual: Optional[float],
) -> Dict[str, Optional[float]]:
    if isinstance(state, ScalarState):
        mass = float(state.phi.sum())
    else:
        mass = float(state.rho.sum())
    front_radius = None
    if config.reaction.kind == ReactionKind.LOGISTIC:
        try:
            front_radius = level_set_radius(state.phi)
        except MeasurementError as e:
            logger.warning(f"第 {state.step} 步无法测量前沿半径: {e.message}")
    return {
        "timestep": state.step,
        "time": config.time_at(state.step),
        "mass": mass,
        "residual": residual,
        "front_radius": front_radius,
    }


def run_tester(task: TaskSpec, output_dir: Optional[Union[str, Path]] = None) -> SimulationOutput:
    """执行 Tester

    t = 0 起每 ``output_every`` 步写一个 VTK 快照，提前收敛时补写最终快照；
    每 ``SERIES_EVERY`` 步记录一行时间序列。稳态任务每 ``steady_check_every`` 步比较主场
    （标量为 φ，流体为 u）的最大变化，不超过 ``steady_tol`` 即停止。
    """
    config = task.config
    out_dir = Path(output_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    boundary = assemble_bc_pass(config.bc)
    if config.is_fluid:
        state: Union[ScalarState, FluidState] = init_fluid_state(config)
        advance = step_fluid
    else:
        state = init_scalar_state(config)
        advance = step_scalar

    records: List[SnapshotRecord] = []
    snapshots: List[SnapshotData] = []
    time_series: List[Dict[str, Optional[float]]] = []

    def emit(current) -> None:
        fields = {name: np.array(value, copy=True) for name, value in _fields_of(current).items()}
        filename = f"{task.name}_{current.step:06d}.vtk"
        path = write_vtk(out_dir / filename, fields, title=f"{task.name} t={current.step}")
        records.append(
            SnapshotRecord(
                timestep=current.step,
                filename=filename,
                field_names=list(fields),
                checksum=file_checksum(path),
            )
        )
        snapshots.append(SnapshotData(timestep=current.step, filename=filename, fields=fields))

    monitor = PerformanceMonitor()
    monitor.start(f"run_tester {task.name}")

    residual: Optional[float] = None
    converged: Optional[bool] = False if config.steady_state else None
    previous = _primary_field(state).copy()
    emit(state)
    time_series.append(_series_row(state, config, residual))

    while state.step < config.steps:
        state = advance(state, config, boundary)
        if config.steady_state and state.step % config.steady_check_every == 0:
            current = _primary_field(state)
            residual = float(np.max(np.abs(current - previous)))
            previous = current.copy()
            if residual <= config.steady_tol:
                converged = True
        if state.step % SERIES_EVERY == 0 or converged:
            time_series.append(_series_row(state, config, residual))
        if state.step % config.output_every == 0:
            emit(state)
        if converged:
            break

    if records[-1].timestep != state.step:
        emit(state)
    if time_series[-1]["timestep"] != state.step:
        time_series.append(_series_row(state, config, residual))
    if config.steady_state and not converged:
        logger.warning(f"{task.name} 在 {state.step} 步内未达到稳态，最后残差 {residual}")

    manifest = OutputManifest(
        task=task.name,
        nx=config.nx,
        ny=config.ny,
        steps=config.steps,
        steps_run=state.step,
        converged=converged,
        snapshots=records,
        time_series=time_series,
    )
    write_manifest(out_dir, manifest)
    duration = monitor.end(f"{state.step} 步, {len(records)} 个快照")
    monitor.log_slow_operation(f"run_tester {task.name}", duration, threshold=SLOW_RUN_SECONDS)

    return SimulationOutput(
        task=task.name,
        output_dir=out_dir,
        final_fields=dict(snapshots[-1].fields),
        snapshots=snapshots,
        time_series=time_series,
        steps_run=state.step,
        converged=converged,
        manifest=manifest,
    )
