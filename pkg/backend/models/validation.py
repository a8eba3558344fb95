"""执行与验证报告模型"""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class ErrorClass(str, Enum):
    """错误分类枚举"""
    PASS = "pass"
    SYNTACTIC = "syntactic"
    MISINTERPRETATION = "semantic:misinterpretation"
    SPATIAL = "semantic:spatial"
    SPURIOUS = "semantic:spurious"
    UNSTABLE = "unstable"
    INFRASTRUCTURE = "infrastructure"

    @property
    def is_semantic(self) -> bool:
        return self.value.startswith("semantic:")


class CheckResult(BaseModel):
    """单项验收检查结果"""

    name: str = Field(..., description="指标名")
    comparator: str = Field(..., description="比较方向 <= 或 >=")
    threshold: float = Field(..., description="阈值")
    measured: Optional[float] = Field(None, description="实测值，无法测量时为空")
    passed: bool = Field(..., description="是否通过")


class ValidationReport(BaseModel):
    """验证报告"""

    task: str = Field(..., description="任务名")
    metrics: Dict[str, float] = Field(default_factory=dict, description="指标")
    checks: List[CheckResult] = Field(default_factory=list, description="检查项")
    error_class: ErrorClass = Field(..., description="错误分类")
    notes: List[str] = Field(default_factory=list, description="说明")

    @property
    def success(self) -> bool:
        return self.error_class == ErrorClass.PASS

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典"""
        data = self.model_dump(mode="json")
        data["success"] = self.success
        return data


class ExecutionReport(BaseModel):
    """Tester 执行报告"""

    exit_status: int = Field(..., description="退出码")
    stdout: str = Field(default="", description="标准输出（截断）")
    stderr: str = Field(default="", description="标准错误（截断）")
    duration: float = Field(default=0.0, ge=0, description="耗时（秒）")
    timed_out: bool = Field(default=False, description="是否超时")
    workdir: Optional[str] = Field(None, description="工作目录")
    captured_errors: List[str] = Field(default_factory=list, description="解析出的诊断行")
    diagnostic_categories: List[str] = Field(default_factory=list, description="诊断类别")
    command: Optional[str] = Field(None, description="实际执行的命令")

    @model_validator(mode="after")
    def _check_timeout(self) -> "ExecutionReport":
        if self.timed_out and self.exit_status == 0:
            raise ValueError("超时的执行必须带非零退出码")
        return self

    @property
    def succeeded(self) -> bool:
        return self.exit_status == 0 and not self.timed_out
