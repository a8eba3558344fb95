"""流水线状态与批量评估模型"""

import hashlib
from enum import Enum
from pathlib import PurePosixPath
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .validation import ErrorClass, ExecutionReport, ValidationReport


class Stage(str, Enum):
    """流水线阶段枚举"""
    GENERATING = "generating"
    INSPECTING1 = "inspecting1"
    CHECKING = "checking"
    DEBUGGING = "debugging"
    INSPECTING2 = "inspecting2"
    PACKING = "packing"
    DONE = "done"
    FAILED = "failed"


class AgentRole(str, Enum):
    """智能体角色枚举，取值同时是脚本化回复文件名的前缀"""
    GENERATOR = "generator"
    INSPECTOR1 = "inspector1"
    INSPECTOR2 = "inspector2"
    DEBUGGER = "debugger"


class PipelineLimits(BaseModel):
    """迭代上限"""

    max_inspect1: int = Field(default=3, ge=1, description="Inspector 1 最大轮数")
    max_inspect2: int = Field(default=3, ge=1, description="Inspector 2 连续不一致的最大轮数")
    max_debug: int = Field(default=8, ge=1, description="Debugger 最大轮数")

    @property
    def call_budget(self) -> int:
        """一次尝试内允许的智能体调用总数"""
        return self.max_inspect1 + self.max_debug * (self.max_inspect2 + 1) + 3


def _check_relative(name: str) -> None:
    path = PurePosixPath(name)
    if not name.strip() or path.is_absolute() or ".." in path.parts:
        raise ValueError(f"非法的文件名: {name!r}")


class Codebase(BaseModel):
    """目标代码库快照：相对路径 → 源码，按路径排序"""

    root: str = Field(..., description="代码库根目录")
    files: Dict[str, str] = Field(default_factory=dict, description="相对路径 → 源码")

    @field_validator("files")
    @classmethod
    def _sorted_files(cls, files: Dict[str, str]) -> Dict[str, str]:
        for name in files:
            _check_relative(name)
        return dict(sorted(files.items()))

    @property
    def checksum(self) -> str:
        """所有文件路径与内容的 SHA-256"""
        digest = hashlib.sha256()
        for name, text in self.files.items():
            digest.update(name.encode("utf-8") + b"\0")
            digest.update(text.encode("utf-8") + b"\0")
        return digest.hexdigest()

    def render_for_prompt(self) -> str:
        """渲染为带文件名标题的代码块序列"""
        return "\n".join(f"### {name}\n```python\n{text.rstrip()}\n```\n" for name, text in self.files.items())


class CodeArtifact(BaseModel):
    """生成的代码产物"""

    module_files: Dict[str, str] = Field(default_factory=dict, description="模块文件（相对路径 → 源码）")
    tester_name: str = Field(default="test_case.py", description="Tester 入口文件名")
    tester_file: str = Field(..., description="Tester 源码")
    provenance: AgentRole = Field(..., description="产生该产物的智能体")
    iteration: int = Field(default=0, ge=0, description="产生时的迭代序号")

    @field_validator("module_files")
    @classmethod
    def _check_names(cls, files: Dict[str, str]) -> Dict[str, str]:
        for name in files:
            _check_relative(name)
        return files

    @model_validator(mode="after")
    def _check_tester(self) -> "CodeArtifact":
        if not self.tester_file.strip():
            raise ValueError("产物缺少 Tester 源码")
        if self.tester_name in self.module_files:
            raise ValueError(f"模块文件与 Tester 重名: {self.tester_name}")
        return self

    def all_files(self) -> Dict[str, str]:
        """返回模块文件和 Tester 的合并视图"""
        files = dict(self.module_files)
        files[self.tester_name] = self.tester_file
        return files


class InspectionReport(BaseModel):
    """Inspector 结论"""

    which: int = Field(..., ge=1, le=2, description="Inspector 编号")
    consistent: bool = Field(..., description="是否与方程一致")
    findings: str = Field(default="", description="发现的问题")


class ChatMessage(BaseModel):
    """对话消息"""

    role: str = Field(..., description="角色：system / user / assistant")
    content: str = Field(..., description="消息内容")


class CallContext(BaseModel):
    """随每次后端调用传递的上下文，脚本化后端据此选择回复文件"""

    model_config = ConfigDict(frozen=True)

    agent: AgentRole = Field(..., description="智能体")
    iteration: int = Field(..., ge=1, description="该智能体在本次尝试中的第几次调用")
    attempt: int = Field(default=0, ge=0, description="尝试序号")


class AgentCall(BaseModel):
    """一次后端调用的完整记录"""

    agent: AgentRole = Field(..., description="智能体")
    iteration: int = Field(..., ge=0, description="该智能体的调用序号")
    retry: int = Field(default=0, ge=0, description="后端重试序号")
    system: str = Field(..., description="系统提示词")
    messages: List[ChatMessage] = Field(default_factory=list, description="用户消息")
    completion: Optional[str] = Field(None, description="回复文本")
    error: Optional[str] = Field(None, description="传输错误")


class ErrorLogEntry(BaseModel):
    """Checker 失败记录"""

    check_round: int = Field(..., ge=1, description="第几次执行")
    exit_status: int = Field(..., description="退出码")
    timed_out: bool = Field(default=False, description="是否超时")
    captured_errors: List[str] = Field(default_factory=list, description="诊断行")
    categories: List[str] = Field(default_factory=list, description="诊断类别")
    lint_violations: List[Dict[str, Any]] = Field(default_factory=list, description="lint 违规")


class PipelineState(BaseModel):
    """流水线状态"""

    stage: Stage = Field(default=Stage.GENERATING, description="当前阶段")
    artifact: Optional[CodeArtifact] = Field(None, description="当前产物")
    inspect1_rounds: int = Field(default=0, ge=0, description="Inspector 1 轮数")
    inspect2_rounds: int = Field(default=0, ge=0, description="Inspector 2 连续不一致轮数")
    debug_rounds: int = Field(default=0, ge=0, description="Debugger 轮数")
    check_rounds: int = Field(default=0, ge=0, description="Checker 执行次数")
    agent_calls: int = Field(default=0, ge=0, description="已用智能体调用次数")
    stage_history: List[Stage] = Field(default_factory=list, description="经过的阶段序列")
    transcripts: Dict[str, List[AgentCall]] = Field(default_factory=dict, description="按智能体分组的调用记录")
    last_exec: Optional[ExecutionReport] = Field(None, description="最近一次执行报告")
    last_findings: str = Field(default="", description="最近一次 Inspector 的问题描述")
    error_log: List[ErrorLogEntry] = Field(default_factory=list, description="执行失败日志")
    failure_reason: Optional[str] = Field(None, description="失败原因")

    def enter(self, stage: Stage):
        """切换阶段并记录"""
        self.stage = stage
        self.stage_history.append(stage)

    def record_call(self, call: AgentCall):
        self.transcripts.setdefault(call.agent.value, []).append(call)

    def fail(self, reason: str):
        self.failure_reason = reason
        self.enter(Stage.FAILED)


class PipelineResult(BaseModel):
    """单次尝试结果"""

    attempt: int = Field(default=0, ge=0, description="尝试序号")
    state: PipelineState = Field(..., description="最终状态")
    report: Optional[ValidationReport] = Field(None, description="验证报告")
    error_class: ErrorClass = Field(..., description="最终错误分类")
    duration: float = Field(default=0.0, ge=0, description="耗时（秒）")
    attempt_dir: Optional[str] = Field(None, description="尝试目录")
    packed_files: List[str] = Field(default_factory=list, description="已合并进代码库的文件")

    @property
    def success(self) -> bool:
        return self.state.stage == Stage.DONE


class AttemptOutcome(BaseModel):
    """批量评估中的单次尝试摘要"""

    attempt: int = Field(..., ge=0, description="尝试序号")
    error_class: ErrorClass = Field(..., description="错误分类")
    duration: float = Field(default=0.0, ge=0, description="耗时（秒）")
    final_stage: Stage = Field(..., description="最终阶段")


class BatchResult(BaseModel):
    """批量评估结果"""

    task: str = Field(..., description="任务名")
    backend: str = Field(default="", description="后端标识")
    attempts: int = Field(..., ge=1, description="尝试次数")
    successes: int = Field(..., ge=0, description="成功次数")
    per_attempt: List[AttemptOutcome] = Field(default_factory=list, description="每次尝试的结果")

    @model_validator(mode="after")
    def _check_counts(self) -> "BatchResult":
        if self.successes > self.attempts:
            raise ValueError("成功次数不能超过尝试次数")
        return self

    @property
    def success_rate(self) -> float:
        return self.successes / self.attempts

    @property
    def fraction(self) -> str:
        return f"{self.successes}/{self.attempts}"

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典"""
        data = self.model_dump(mode="json")
        data["success_rate"] = self.success_rate
        data["fraction"] = self.fraction
        return data
