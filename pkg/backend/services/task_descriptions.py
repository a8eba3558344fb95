"""配置文件与 Math-Algo 描述文件的解析和渲染

配置文件是扁平的 ``key=value`` 行；Math-Algo 描述是恰好包含
``# Equations``、``# Algorithm``、``# Tester``、``# Acceptance`` 四个一级章节的 markdown，
其中 Tester 章节就是配置文件内容，Acceptance 章节是 ``- 指标 <= 阈值`` 列表。
"""

import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from pydantic import ValidationError

from core.exceptions import ConfigurationError, DescriptionFormatError, FileProcessingError
from core.logging import get_logger
from models.simulation import (
    EDGE_ORDER,
    AcceptanceCheck,
    BCRule,
    DetectorThresholds,
    InitSpec,
    MathAlgoDescription,
    NewtonianFluid,
    PowerLawModel,
    ReactionTerm,
    SimulationConfig,
    TaskSpec,
    TransportParams,
)


logger = get_logger(__name__)

SECTION_TITLES = ("Equations", "Algorithm", "Tester", "Acceptance")

CONFIG_KEYS = (
    "name", "nx", "ny", "steps", "time_step",
    "diffusivity", "velocity_x", "velocity_y", "reaction",
    "viscosity", "consistency_K", "behavior_n", "shear_floor", "fixed_point_iterations",
    "viscosity_min", "viscosity_max",
    "bc_top", "bc_bottom", "bc_left", "bc_right",
    "init", "output_every", "output_dir",
    "steady_state", "steady_tol", "steady_check_every",
)

_POWER_LAW_KEYS = ("consistency_K", "behavior_n", "shear_floor", "fixed_point_iterations", "viscosity_min", "viscosity_max")

_ACCEPTANCE_PATTERN = re.compile(r"^-\s*([A-Za-z_][\w.]*)\s*(<=|>=)\s*(\S+)\s*$")
_DETECTOR_PATTERN = re.compile(r"^-\s*detector\.(\w+)\s*=\s*(\S+)\s*$")

_TRUE_VALUES = {"true", "yes", "1", "on"}
_FALSE_VALUES = {"false", "no", "0", "off"}


# ---------------------------------------------------------------------------
# 配置文件
# ---------------------------------------------------------------------------

def parse_config_values(text: str) -> Dict[str, str]:
    """把 ``key=value`` 行解析成有序字典

    空行、``#`` 注释和 markdown 代码围栏行被跳过；未知键和重复键报错。
    """
    values: Dict[str, str] = {}
    for line_num, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("```"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"第{line_num}行不是 key=value 格式: {line!r}")
        if key not in CONFIG_KEYS:
            raise ConfigurationError(f"第{line_num}行出现未知配置项 {key}", config_key=key)
        if key in values:
            raise ConfigurationError(f"第{line_num}行重复配置 {key}", config_key=key)
        values[key] = value.strip()
    return values


def _as_bool(key: str, text: str) -> bool:
    lowered = text.lower()
    if lowered in _TRUE_VALUES:
        return True
    if lowered in _FALSE_VALUES:
        return False
    raise ConfigurationError(f"{key} 需要布尔值，实际为 {text!r}", config_key=key)


def _physics_from_values(values: Dict[str, str]):
    if any(k in values for k in _POWER_LAW_KEYS):
        kwargs = {
            "consistency": float(values["consistency_K"]),
            "behavior_index": float(values["behavior_n"]),
        }
        if "shear_floor" in values:
            kwargs["shear_floor"] = float(values["shear_floor"])
        if "fixed_point_iterations" in values:
            kwargs["fixed_point_iterations"] = int(values["fixed_point_iterations"])
        if "viscosity_min" in values or "viscosity_max" in values:
            default_low, default_high = PowerLawModel.model_fields["viscosity_bounds"].default
            kwargs["viscosity_bounds"] = (
                float(values.get("viscosity_min", default_low)),
                float(values.get("viscosity_max", default_high)),
            )
        return PowerLawModel(**kwargs)
    if "viscosity" in values:
        return NewtonianFluid(viscosity=float(values["viscosity"]))
    return TransportParams(
        diffusivity=float(values["diffusivity"]),
        velocity=(float(values.get("velocity_x", "0")), float(values.get("velocity_y", "0"))),
    )


def config_from_values(values: Dict[str, str]) -> SimulationConfig:
    """由配置项构造 SimulationConfig；任何非法取值都报 ConfigurationError"""
    current_key = None
    try:
        for current_key in ("nx", "ny", "steps", "init", "output_every"):
            if current_key not in values:
                raise ConfigurationError(f"缺少配置项 {current_key}", config_key=current_key)
        if not any(k in values for k in ("diffusivity", "viscosity") + _POWER_LAW_KEYS):
            raise ConfigurationError("缺少物理参数（diffusivity、viscosity 或 consistency_K/behavior_n）", config_key="params")

        current_key = "params"
        params = _physics_from_values(values)
        current_key = "reaction"
        reaction = ReactionTerm.from_config_value(values.get("reaction", "none"))
        bc = []
        for edge in EDGE_ORDER:
            current_key = f"bc_{edge.value}"
            if current_key in values:
                bc.append(BCRule.from_config_value(edge, values[current_key]))
        current_key = "init"
        init = InitSpec.from_config_value(values["init"])

        current_key = None
        kwargs = {
            "nx": int(values["nx"]),
            "ny": int(values["ny"]),
            "steps": int(values["steps"]),
            "params": params,
            "reaction": reaction,
            "bc": bc,
            "init": init,
            "output_every": int(values["output_every"]),
        }
        if "time_step" in values:
            kwargs["time_step"] = float(values["time_step"])
        if "output_dir" in values:
            kwargs["output_dir"] = values["output_dir"]
        if "steady_state" in values:
            kwargs["steady_state"] = _as_bool("steady_state", values["steady_state"])
        if "steady_tol" in values:
            kwargs["steady_tol"] = float(values["steady_tol"])
        if "steady_check_every" in values:
            kwargs["steady_check_every"] = int(values["steady_check_every"])
        return SimulationConfig(**kwargs)
    except ConfigurationError:
        raise
    except (ValueError, KeyError, ValidationError) as e:
        raise ConfigurationError(f"配置无效: {e}", config_key=current_key) from e


def parse_config_text(text: str) -> SimulationConfig:
    return config_from_values(parse_config_values(text))


def render_config(config: SimulationConfig, name: Optional[str] = None) -> str:
    """把配置渲染为 ``key=value`` 文本，浮点数用 repr 以保证精确往返"""
    lines: List[str] = []
    if name:
        lines.append(f"name={name}")
    lines += [f"nx={config.nx}", f"ny={config.ny}", f"steps={config.steps}"]
    if config.time_step != 1.0:
        lines.append(f"time_step={config.time_step!r}")

    params = config.params
    if isinstance(params, TransportParams):
        lines.append(f"diffusivity={params.diffusivity!r}")
        lines.append(f"velocity_x={params.velocity[0]!r}")
        lines.append(f"velocity_y={params.velocity[1]!r}")
        lines.append(f"reaction={config.reaction.to_config_value()}")
    elif isinstance(params, NewtonianFluid):
        lines.append(f"viscosity={params.viscosity!r}")
    else:
        defaults = PowerLawModel(consistency=1.0, behavior_index=1.0)
        lines.append(f"consistency_K={params.consistency!r}")
        lines.append(f"behavior_n={params.behavior_index!r}")
        if params.shear_floor != defaults.shear_floor:
            lines.append(f"shear_floor={params.shear_floor!r}")
        if params.fixed_point_iterations != defaults.fixed_point_iterations:
            lines.append(f"fixed_point_iterations={params.fixed_point_iterations}")
        if params.viscosity_bounds != defaults.viscosity_bounds:
            lines.append(f"viscosity_min={params.viscosity_bounds[0]!r}")
            lines.append(f"viscosity_max={params.viscosity_bounds[1]!r}")

    for edge in EDGE_ORDER:
        rule = config.rule_for(edge)
        lines.append(f"bc_{edge.value}={rule.to_config_value() if rule else 'periodic'}")

    lines.append(f"init={config.init.to_config_value()}")
    lines.append(f"output_every={config.output_every}")
    lines.append(f"output_dir={config.output_dir}")
    if config.steady_state:
        lines.append("steady_state=true")
        lines.append(f"steady_tol={config.steady_tol!r}")
        lines.append(f"steady_check_every={config.steady_check_every}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Math-Algo 描述
# ---------------------------------------------------------------------------

def _read_text(path_or_text: Union[str, Path]) -> Tuple[str, Optional[str]]:
    if isinstance(path_or_text, Path) or (
        isinstance(path_or_text, str) and "\n" not in path_or_text and path_or_text.endswith(".md")
    ):
        path = Path(path_or_text)
        try:
            return path.read_text(encoding="utf-8"), str(path)
        except (OSError, UnicodeDecodeError) as e:
            raise FileProcessingError(f"读取描述文件失败: {e}", filename=str(path), operation="read") from e
    return str(path_or_text), None


def parse_description(path_or_text: Union[str, Path]) -> MathAlgoDescription:
    """把 Math-Algo markdown 切分为四个章节

    代码围栏内的 ``#`` 行不算章节标题；缺失、重复、多余或乱序的章节都报格式错误。
    """
    text, source = _read_text(path_or_text)
    sections: Dict[str, List[str]] = {}
    order: List[str] = []
    current: Optional[str] = None
    in_fence = False

    for line_num, line in enumerate(text.splitlines(), 1):
        if line.lstrip().startswith("```"):
            in_fence = not in_fence
        elif not in_fence and line.startswith("# "):
            title = line[2:].strip()
            if title not in SECTION_TITLES:
                raise DescriptionFormatError(f"第{line_num}行出现未知章节 {title!r}", section=title, line_number=line_num)
            if title in sections:
                raise DescriptionFormatError(f"第{line_num}行章节 {title} 重复", section=title, line_number=line_num)
            sections[title] = []
            order.append(title)
            current = title
            continue
        if current is None:
            if line.strip():
                raise DescriptionFormatError(f"第{line_num}行内容出现在第一个章节之前", line_number=line_num)
            continue
        sections[current].append(line)

    for title in SECTION_TITLES:
        if title not in sections:
            raise DescriptionFormatError(f"缺少章节 # {title}", section=title)
    if tuple(order) != SECTION_TITLES:
        raise DescriptionFormatError(f"章节顺序应为 {', '.join(SECTION_TITLES)}，实际为 {', '.join(order)}")

    body = {title.lower(): "\n".join(lines).strip("\n") for title, lines in sections.items()}
    return MathAlgoDescription(path=source, **body)


def parse_acceptance(text: str) -> Tuple[List[AcceptanceCheck], DetectorThresholds]:
    """解析 Acceptance 章节

    ``- 指标 <= 阈值`` 或 ``- 指标 >= 阈值`` 为验收项，``- detector.<名称> = 值`` 覆盖检测器阈值，
    其余非列表行视为说明文字。
    """
    checks: List[AcceptanceCheck] = []
    overrides: Dict[str, float] = {}
    for line_num, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line.startswith("-"):
            continue
        detector = _DETECTOR_PATTERN.match(line)
        if detector:
            field_name, value = detector.groups()
            if field_name not in DetectorThresholds.model_fields:
                raise DescriptionFormatError(f"Acceptance 第{line_num}行未知检测器参数 {field_name}", section="Acceptance", line_number=line_num)
            overrides[field_name] = float(value)
            continue
        match = _ACCEPTANCE_PATTERN.match(line)
        if not match:
            raise DescriptionFormatError(f"Acceptance 第{line_num}行格式应为 '- 指标 <= 阈值'", section="Acceptance", line_number=line_num)
        name, comparator, value = match.groups()
        try:
            checks.append(AcceptanceCheck(name=name, comparator=comparator, threshold=float(value)))
        except ValueError as e:
            raise DescriptionFormatError(f"Acceptance 第{line_num}行阈值无效: {value}", section="Acceptance", line_number=line_num) from e
    try:
        detectors = DetectorThresholds(**overrides)
    except ValidationError as e:
        raise DescriptionFormatError(f"检测器阈值无效: {e}", section="Acceptance") from e
    return checks, detectors


def render_acceptance(checks: List[AcceptanceCheck], detectors: DetectorThresholds) -> str:
    lines = [f"- {c.name} {c.comparator} {c.threshold!r}" for c in checks]
    defaults = DetectorThresholds()
    for field_name in DetectorThresholds.model_fields:
        value = getattr(detectors, field_name)
        if value != getattr(defaults, field_name):
            lines.append(f"- detector.{field_name} = {value!r}")
    return "\n".join(lines)


def render_description(task: TaskSpec, equations: str, algorithm: str) -> str:
    """渲染 Math-Algo markdown，与 ``parse_description`` 互逆"""
    return (
        "# Equations\n\n"
        f"{equations.strip()}\n\n"
        "# Algorithm\n\n"
        f"{algorithm.strip()}\n\n"
        "# Tester\n\n"
        f"{render_config(task.config, task.name)}\n"
        "# Acceptance\n\n"
        f"{render_acceptance(task.acceptance, task.detectors)}\n"
    )


def task_from_description(path_or_text: Union[str, Path], default_name: Optional[str] = None) -> TaskSpec:
    """由 Math-Algo 描述构造 TaskSpec；任务名取 Tester 的 ``name=``，缺省取文件名"""
    description = parse_description(path_or_text)
    try:
        values = parse_config_values(description.tester)
        config = config_from_values(values)
    except ConfigurationError as e:
        raise DescriptionFormatError(f"Tester 章节无效: {e.message}", section="Tester") from e
    checks, detectors = parse_acceptance(description.acceptance)

    name = values.get("name") or default_name
    if not name and description.path:
        name = Path(description.path).stem
    if not name:
        raise DescriptionFormatError("Tester 章节缺少 name=", section="Tester")
    logger.info(f"已解析任务描述 {name}: {config.nx}x{config.ny}, {config.steps} 步, {len(checks)} 项验收")
    return TaskSpec(
        name=name,
        description_path=description.path,
        config=config,
        acceptance=checks,
        detectors=detectors,
    )
