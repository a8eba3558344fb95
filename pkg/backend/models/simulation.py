"""模拟配置与任务模型"""

import math
from enum import Enum
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


FREQ_VAL_BOUNDS = (0.05, 1.95)


def _viscosity_for_freq_val(freq_val: float) -> float:
    return (1.0 / freq_val - 0.5) / 3.0


class BoundaryEdge(str, Enum):
    """边界枚举"""
    TOP = "top"
    BOTTOM = "bottom"
    LEFT = "left"
    RIGHT = "right"


# 边界处理的固定顺序，后处理的边拥有角点
EDGE_ORDER: Tuple[BoundaryEdge, ...] = (
    BoundaryEdge.TOP,
    BoundaryEdge.BOTTOM,
    BoundaryEdge.LEFT,
    BoundaryEdge.RIGHT,
)


class BCKind(str, Enum):
    """边界条件类型枚举"""
    PERIODIC = "periodic"
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    NOSLIP = "noslip"
    MOVING_WALL = "wall"


SCALAR_BC_KINDS = {BCKind.PERIODIC, BCKind.DIRICHLET, BCKind.NEUMANN}
FLUID_BC_KINDS = {BCKind.PERIODIC, BCKind.NOSLIP, BCKind.MOVING_WALL}


class BCRule(BaseModel):
    """单条边界规则"""

    model_config = ConfigDict(frozen=True)

    edge: BoundaryEdge = Field(..., description="所在边界")
    kind: BCKind = Field(..., description="边界类型")
    value: Optional[float] = Field(None, description="Dirichlet 标量值 φ_const")
    wall_velocity: Optional[Tuple[float, float]] = Field(None, description="移动壁面速度")

    @model_validator(mode="after")
    def _check_payload(self) -> "BCRule":
        if self.kind == BCKind.DIRICHLET:
            if self.value is None or not math.isfinite(self.value):
                raise ValueError(f"{self.edge.value} 边的 Dirichlet 值必须为有限数")
        if self.kind == BCKind.MOVING_WALL:
            if self.wall_velocity is None or not all(math.isfinite(c) for c in self.wall_velocity):
                raise ValueError(f"{self.edge.value} 边的壁面速度必须为有限数")
        return self

    def to_config_value(self) -> str:
        """渲染为配置文件中的取值"""
        if self.kind == BCKind.DIRICHLET:
            return f"dirichlet:{self.value!r}"
        if self.kind == BCKind.MOVING_WALL:
            ux, uy = self.wall_velocity
            return f"wall:{ux!r},{uy!r}"
        return self.kind.value

    @classmethod
    def from_config_value(cls, edge: Union[str, BoundaryEdge], text: str) -> "BCRule":
        """从配置取值解析，例如 ``dirichlet:1.0`` 或 ``wall:0.1,0``"""
        edge = BoundaryEdge(edge)
        kind_text, _, payload = text.strip().partition(":")
        kind = BCKind(kind_text.strip())
        if kind == BCKind.DIRICHLET:
            return cls(edge=edge, kind=kind, value=float(payload))
        if kind == BCKind.MOVING_WALL:
            parts = [p for p in payload.split(",") if p.strip()]
            if len(parts) != 2:
                raise ValueError(f"壁面速度需要两个分量: {text!r}")
            return cls(edge=edge, kind=kind, wall_velocity=(float(parts[0]), float(parts[1])))
        if payload.strip():
            raise ValueError(f"{kind.value} 不接受参数: {text!r}")
        return cls(edge=edge, kind=kind)


class ReactionKind(str, Enum):
    """反应项类型枚举"""
    NONE = "none"
    LOGISTIC = "logistic"
    TABULATED = "tabulated"


class ReactionTerm(BaseModel):
    """反应项 R(φ)"""

    model_config = ConfigDict(frozen=True)

    kind: ReactionKind = Field(default=ReactionKind.NONE, description="反应类型")
    rate: Optional[float] = Field(None, description="logistic 速率 r（物理时间单位）")
    table: Optional[List[Tuple[float, float]]] = Field(None, description="用户表格 (φ, R) 采样点")

    @model_validator(mode="after")
    def _check_payload(self) -> "ReactionTerm":
        if self.kind == ReactionKind.LOGISTIC:
            if self.rate is None or not math.isfinite(self.rate):
                raise ValueError("logistic 反应需要有限的速率 r")
        if self.kind == ReactionKind.TABULATED:
            if not self.table or len(self.table) < 2:
                raise ValueError("表格反应至少需要两个采样点")
            phis = [p for p, _ in self.table]
            if any(b <= a for a, b in zip(phis, phis[1:])):
                raise ValueError("表格反应的 φ 采样点必须严格递增")
            if not all(math.isfinite(p) and math.isfinite(r) for p, r in self.table):
                raise ValueError("表格反应的采样值必须为有限数")
        return self

    def to_config_value(self) -> str:
        if self.kind == ReactionKind.LOGISTIC:
            return f"logistic:{self.rate!r}"
        if self.kind == ReactionKind.TABULATED:
            pairs = ",".join(f"{p!r}:{r!r}" for p, r in self.table)
            return f"tabulated:{pairs}"
        return "none"

    @classmethod
    def from_config_value(cls, text: str) -> "ReactionTerm":
        kind_text, _, payload = text.strip().partition(":")
        kind = ReactionKind(kind_text.strip())
        if kind == ReactionKind.LOGISTIC:
            return cls(kind=kind, rate=float(payload))
        if kind == ReactionKind.TABULATED:
            table = []
            for pair in payload.split(","):
                phi_text, sep, rate_text = pair.partition(":")
                if not sep:
                    raise ValueError(f"表格采样点格式应为 φ:R，实际为 {pair!r}")
                table.append((float(phi_text), float(rate_text)))
            return cls(kind=kind, table=table)
        return cls(kind=kind)


class TransportParams(BaseModel):
    """标量输运参数"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["transport"] = "transport"
    diffusivity: float = Field(..., gt=0, description="扩散系数 D")
    velocity: Tuple[float, float] = Field(default=(0.0, 0.0), description="平流速度 u")


class NewtonianFluid(BaseModel):
    """常粘度牛顿流体"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["newtonian"] = "newtonian"
    viscosity: float = Field(..., gt=0, description="运动粘度 ν")


class PowerLawModel(BaseModel):
    """幂律非牛顿流体模型 μ = K γ̇^(n−1)"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["power_law"] = "power_law"
    consistency: float = Field(..., gt=0, description="稠度系数 K")
    behavior_index: float = Field(..., gt=0, description="流动行为指数 n")
    shear_floor: float = Field(default=1e-12, gt=0, description="剪切率下限 γ̇_min")
    viscosity_bounds: Tuple[float, float] = Field(
        default=(_viscosity_for_freq_val(FREQ_VAL_BOUNDS[1]), _viscosity_for_freq_val(FREQ_VAL_BOUNDS[0])),
        description="粘度截断区间 [ν_min, ν_max]，默认对应 ω ∈ [0.05, 1.95]",
    )
    fixed_point_iterations: int = Field(default=1, ge=1, description="滞后粘度的不动点迭代次数")

    @field_validator("viscosity_bounds")
    @classmethod
    def _check_bounds(cls, bounds: Tuple[float, float]) -> Tuple[float, float]:
        low, high = bounds
        if not (0 < low < high):
            raise ValueError("粘度区间必须满足 0 < ν_min < ν_max")
        return bounds


PhysicsParams = Annotated[
    Union[TransportParams, NewtonianFluid, PowerLawModel],
    Field(discriminator="kind"),
]


class InitKind(str, Enum):
    """初始条件类型枚举"""
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    QUIESCENT = "quiescent"


class InitSpec(BaseModel):
    """初始条件"""

    model_config = ConfigDict(frozen=True)

    kind: InitKind = Field(..., description="初始条件类型")
    sigma: Optional[float] = Field(None, description="高斯标准差 σ")
    center: Optional[Tuple[float, float]] = Field(None, description="高斯中心，缺省为区域中心")
    amplitude: float = Field(default=1.0, description="高斯幅值")
    value: Optional[float] = Field(None, description="均匀场取值")

    @model_validator(mode="after")
    def _check_payload(self) -> "InitSpec":
        if self.kind == InitKind.GAUSSIAN:
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("高斯初值需要 σ > 0")
            if not math.isfinite(self.amplitude):
                raise ValueError("高斯幅值必须为有限数")
            if self.amplitude != 1.0 and self.center is None:
                raise ValueError("非单位幅值的高斯初值需要显式给出中心")
        if self.kind == InitKind.UNIFORM:
            if self.value is None or not math.isfinite(self.value):
                raise ValueError("均匀初值需要有限的取值")
        return self

    def resolved_center(self, nx: int, ny: int) -> Tuple[float, float]:
        """返回高斯中心，缺省时取区域中心"""
        if self.center is not None:
            return self.center
        return (nx / 2.0, ny / 2.0)

    def to_config_value(self) -> str:
        if self.kind == InitKind.GAUSSIAN:
            text = f"gaussian:{self.sigma!r}"
            if self.center is not None:
                text += f",{self.center[0]!r},{self.center[1]!r}"
                if self.amplitude != 1.0:
                    text += f",{self.amplitude!r}"
            return text
        if self.kind == InitKind.UNIFORM:
            return f"uniform:{self.value!r}"
        return "quiescent"

    @classmethod
    def from_config_value(cls, text: str) -> "InitSpec":
        kind_text, _, payload = text.strip().partition(":")
        kind = InitKind(kind_text.strip())
        if kind == InitKind.GAUSSIAN:
            parts = [float(p) for p in payload.split(",")]
            if len(parts) not in (1, 3, 4):
                raise ValueError(f"高斯初值格式应为 gaussian:σ[,x_c,y_c[,幅值]]，实际为 {text!r}")
            center = (parts[1], parts[2]) if len(parts) >= 3 else None
            amplitude = parts[3] if len(parts) == 4 else 1.0
            return cls(kind=kind, sigma=parts[0], center=center, amplitude=amplitude)
        if kind == InitKind.UNIFORM:
            return cls(kind=kind, value=float(payload))
        return cls(kind=kind)


class SimulationConfig(BaseModel):
    """模拟配置"""

    model_config = ConfigDict(frozen=True)

    nx: int = Field(..., ge=4, description="x 方向格点数")
    ny: int = Field(..., ge=4, description="y 方向格点数")
    steps: int = Field(..., gt=0, description="时间步数（稳态任务为上限）")
    time_step: float = Field(default=1.0, gt=0, le=1.0, description="每个格子步对应的物理时间 Δt，格距 Δx = 1")
    params: PhysicsParams = Field(..., description="物理参数")
    reaction: ReactionTerm = Field(default_factory=ReactionTerm, description="反应项")
    bc: List[BCRule] = Field(default_factory=list, description="边界规则，未列出的边为周期边界")
    init: InitSpec = Field(..., description="初始条件")
    output_every: int = Field(..., gt=0, description="快照输出间隔")
    output_dir: str = Field(default="output", description="输出目录")
    steady_state: bool = Field(default=False, description="是否运行到稳态")
    steady_tol: float = Field(default=1e-8, gt=0, description="每 steady_check_every 步的最大变化阈值")
    steady_check_every: int = Field(default=100, ge=1, description="稳态检查间隔")

    @field_validator("bc")
    @classmethod
    def _normalize_bc(cls, rules: List[BCRule]) -> List[BCRule]:
        seen = set()
        for rule in rules:
            if rule.edge in seen:
                raise ValueError(f"{rule.edge.value} 边重复指定了边界条件")
            seen.add(rule.edge)
        ordered = sorted(rules, key=lambda r: EDGE_ORDER.index(r.edge))
        return [r for r in ordered if r.kind != BCKind.PERIODIC]

    @model_validator(mode="after")
    def _check_consistency(self) -> "SimulationConfig":
        if self.output_every > self.steps:
            raise ValueError("output_every 不能大于 steps")
        allowed = FLUID_BC_KINDS if self.is_fluid else SCALAR_BC_KINDS
        for rule in self.bc:
            if rule.kind not in allowed:
                raise ValueError(f"{rule.kind.value} 边界不适用于当前物理模型")
        if self.is_fluid:
            if self.time_step != 1.0:
                raise ValueError("流体模拟使用格子单位，time_step 必须为 1")
            if self.init.kind != InitKind.QUIESCENT:
                raise ValueError("流体模拟只支持 quiescent 初值")
            if self.reaction.kind != ReactionKind.NONE:
                raise ValueError("流体模拟不支持反应项")
        elif self.init.kind == InitKind.QUIESCENT:
            raise ValueError("标量模拟需要 gaussian 或 uniform 初值")
        return self

    @property
    def is_fluid(self) -> bool:
        return not isinstance(self.params, TransportParams)

    def time_at(self, step: float) -> float:
        """第 step 个格子步对应的物理时间"""
        return step * self.time_step

    def rule_for(self, edge: BoundaryEdge) -> Optional[BCRule]:
        """返回某条边的规则，周期边界返回 None"""
        for rule in self.bc:
            if rule.edge == edge:
                return rule
        return None


class AcceptanceCheck(BaseModel):
    """验收检查项"""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., description="指标名")
    comparator: Literal["<=", ">="] = Field(..., description="比较方向")
    threshold: float = Field(..., description="阈值")

    def passes(self, measured: Optional[float]) -> bool:
        if measured is None or not math.isfinite(measured):
            return False
        if self.comparator == "<=":
            return measured <= self.threshold
        return measured >= self.threshold


class DetectorThresholds(BaseModel):
    """语义错误检测器阈值"""

    model_config = ConfigDict(frozen=True)

    missing_advection_fraction: float = Field(default=0.25, gt=0, description="峰位移低于 |u|t 的该比例即判为缺失平流")
    bc_swap_miss: float = Field(default=0.25, gt=0, description="边带均值偏离其 Dirichlet 值的比例阈值（相对场值范围）")
    bc_swap_match: float = Field(default=0.1, gt=0, description="另一条边带与该值吻合的比例阈值（相对场值范围）")
    constancy_tol: float = Field(default=1e-12, gt=0, description="判定场随时间不变的容差")


class TaskSpec(BaseModel):
    """基准任务（Tester）定义"""

    name: str = Field(..., description="任务名")
    description_path: Optional[str] = Field(None, description="Math-Algo 描述文件路径")
    config: SimulationConfig = Field(..., description="模拟配置")
    acceptance: List[AcceptanceCheck] = Field(default_factory=list, description="验收检查")
    detectors: DetectorThresholds = Field(default_factory=DetectorThresholds, description="检测器阈值")

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典"""
        return self.model_dump(mode="json")


class SnapshotRecord(BaseModel):
    """清单中的一个快照文件"""

    timestep: int = Field(..., ge=0, description="时间步")
    filename: str = Field(..., description="相对输出目录的文件名")
    field_names: List[str] = Field(default_factory=list, description="文件中的场名")
    checksum: str = Field(..., description="文件 SHA-256")


class OutputManifest(BaseModel):
    """Tester 输出清单（manifest.json）"""

    task: str = Field(..., description="任务名")
    nx: int = Field(..., ge=1, description="x 方向格点数")
    ny: int = Field(..., ge=1, description="y 方向格点数")
    steps: int = Field(..., ge=0, description="声明的时间步数")
    steps_run: int = Field(default=0, ge=0, description="实际运行的步数")
    converged: Optional[bool] = Field(None, description="稳态任务是否收敛")
    snapshots: List[SnapshotRecord] = Field(default_factory=list, description="快照列表")
    time_series: List[Dict[str, Optional[float]]] = Field(default_factory=list, description="时间序列")


class MathAlgoDescription(BaseModel):
    """Math-Algo 描述文件的四个一级章节"""

    equations: str = Field(..., description="# Equations 章节原文")
    algorithm: str = Field(..., description="# Algorithm 章节原文")
    tester: str = Field(..., description="# Tester 章节原文")
    acceptance: str = Field(..., description="# Acceptance 章节原文")
    path: Optional[str] = Field(None, description="来源文件")

    def section(self, title: str) -> str:
        """按标题返回章节原文，例如 ``section("Equations")``"""
        return getattr(self, title.strip().lower())
