"""多智能体代码生成流水线

Generator 根据 Math-Algo 描述生成模块与 Tester，Inspector 1 审查数学一致性；
Checker 在沙箱中执行 Tester，失败时 Debugger 整体重写产物，再由 Inspector 2 审查；
执行成功后交给验证器，通过后 Packer 把模块合并进代码库。
"""

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from jinja2 import Template
from pydantic import ValidationError

from core.config import DATA_DIR, settings
from core.exceptions import (
    ExternalServiceError,
    FileProcessingError,
    GenerationFormatError,
    InspectionFormatError,
    PackerCollisionError,
    PreconditionError,
    SandboxInfrastructureError,
)
from core.logging import attach_json_handler, detach_handler, get_logger
from models.pipeline import (
    AgentCall,
    AgentRole,
    CallContext,
    ChatMessage,
    Codebase,
    CodeArtifact,
    ErrorLogEntry,
    InspectionReport,
    PipelineLimits,
    PipelineResult,
    PipelineState,
    Stage,
)
from models.rules import RuleSet, Violation
from models.simulation import TaskSpec
from models.validation import ErrorClass, ExecutionReport, ValidationReport
from services.base import BaseService
from services.chat_backends import ChatBackend
from services.checker_sandbox import SandboxWorkspace, checker_service, classify_exec
from services.guidelines_rules import apply_remediations, lint, load_rules, render_guidelines
from services.reference_tasks import describe_task
from services.task_descriptions import parse_description, render_config
from services.validation_oracle import load_output, validate


logger = get_logger(__name__)

DEFAULT_CODEBASE_PATTERNS = ("core/*.py", "models/*.py", "services/*.py")
TESTER_TEMPLATE_PATH = DATA_DIR / "templates" / "test_case.py.j2"

CODE_CONDUCT = (
    "You are extending the library below. Agree with the code conduct of the library: "
    "reuse its modules, array layout, naming and exceptions instead of re-implementing them."
)

_CODE_BLOCK = re.compile(
    r"^#{1,6}[ \t]*(?:file:[ \t]*)?`?(?P<name>[\w./-]+\.\w+)`?[ \t]*\n+"
    r"```[\w+-]*[ \t]*\n(?P<body>.*?)^```[ \t]*$",
    re.MULTILINE | re.DOTALL | re.IGNORECASE,
)
_VERDICT = re.compile(r"^(?P<token>CONSISTENT|INCONSISTENT)\b[\s:.\-]*(?P<rest>.*)$", re.IGNORECASE)

GENERATOR_PROMPT = Template(
    """{{ description }}

# Tester template

Complete this template into the tester file `{{ tester_name }}`; put the new module files next to it.

```python
{{ tester_template }}
```
{% if findings %}
# Inspector findings on your previous answer

{{ findings }}
{% endif %}
Answer with one fenced code block per file, each preceded by a `### <relative path>` header line."""
)

INSPECTOR_SYSTEM = Template(
    """You are Inspector {{ which }}. Check that the code implements exactly these equations,
including every term, coefficient, boundary location and output requirement.

{{ equations }}

Start your answer with CONSISTENT or INCONSISTENT on the first line, followed by your findings."""
)

DEBUGGER_SYSTEM = Template(
    """{{ codebase }}

{{ conduct }}

Guidelines:
{{ guidelines }}"""
)

DEBUGGER_PROMPT = Template(
    """The following code fails.

{{ artifact }}
{% if errors %}
Errors reported while executing `{{ tester_name }}`:

```
{{ errors }}
```
{% endif %}{% if violations %}
Guideline violations:
{% for v in violations %}- {{ v.file }}:{{ v.line }} [{{ v.rule_id }}] {{ v.message }}: {{ v.excerpt }}
{% endfor %}{% endif %}{% if findings %}
Inspector findings:

{{ findings }}
{% endif %}
Regenerate the whole module and the tester. Answer with one fenced code block per file,
each preceded by a `### <relative path>` header line."""
)


class _AttemptLogAdapter(logging.LoggerAdapter):
    """给每条记录带上尝试编号，同时保留调用处的 extra"""

    def process(self, msg, kwargs):
        kwargs["extra"] = {**self.extra, **kwargs.get("extra", {})}
        return msg, kwargs


# ---------------------------------------------------------------------------
# 代码库与提示词
# ---------------------------------------------------------------------------

def load_codebase(
    root: Optional[Union[str, Path]] = None,
    patterns: Sequence[str] = DEFAULT_CODEBASE_PATTERNS,
) -> Codebase:
    """读取代码库快照，路径相对 root，按路径排序"""
    root_path = Path(root or settings.codebase_dir).resolve()
    if not root_path.is_dir():
        raise FileProcessingError("代码库目录不存在", filename=str(root_path), operation="load_codebase")
    files: Dict[str, str] = {}
    for pattern in patterns:
        for path in root_path.glob(pattern):
            if path.is_file() and "__pycache__" not in path.parts:
                files[path.relative_to(root_path).as_posix()] = path.read_text(encoding="utf-8")
    if not files:
        raise FileProcessingError("代码库中没有匹配的源文件", filename=str(root_path), operation="load_codebase")
    return Codebase(root=str(root_path), files=files)


def render_artifact(artifact: CodeArtifact) -> str:
    return "\n".join(
        f"### {name}\n```python\n{text.rstrip()}\n```\n" for name, text in artifact.all_files().items()
    )


def render_tester_template(task: TaskSpec) -> str:
    """按任务配置渲染 Tester 模板"""
    template = Template(TESTER_TEMPLATE_PATH.read_text(encoding="utf-8"))
    config = task.config
    return template.render(
        task_name=task.name,
        output_dir=config.output_dir,
        config_text=render_config(config, task.name).rstrip(),
        fields=["rho", "velocity"] if config.is_fluid else ["phi", "velocity"],
        steady_state=config.steady_state,
    )


def parse_artifact(
    completion: str,
    provenance: AgentRole,
    iteration: int = 0,
    tester_name: Optional[str] = None,
) -> CodeArtifact:
    """把回复中带文件名标题的代码块解析为产物"""
    tester_name = tester_name or settings.tester_name
    files: Dict[str, str] = {}
    for match in _CODE_BLOCK.finditer(completion):
        name = match.group("name").strip()
        if name in files:
            raise GenerationFormatError(f"回复中文件 {name} 出现了两次", agent=provenance.value)
        files[name] = match.group("body")
    if not files:
        raise GenerationFormatError("回复中没有带文件名标题的代码块", agent=provenance.value)
    tester = files.pop(tester_name, None)
    if tester is None:
        raise GenerationFormatError(f"回复中缺少 Tester 文件 {tester_name}", agent=provenance.value)
    try:
        return CodeArtifact(
            module_files=files,
            tester_name=tester_name,
            tester_file=tester,
            provenance=provenance,
            iteration=iteration,
        )
    except ValidationError as e:
        raise GenerationFormatError(f"产物无效: {e.errors()[0]['msg']}", agent=provenance.value) from e


def parse_verdict(completion: str, which: int) -> InspectionReport:
    """首个非空行是 CONSISTENT / INCONSISTENT，其余为问题描述"""
    lines = completion.strip().splitlines()
    match = _VERDICT.match(lines[0].strip()) if lines else None
    if match is None:
        raise InspectionFormatError("Inspector 回复首行缺少 CONSISTENT/INCONSISTENT", which=which)
    findings = "\n".join([match.group("rest")] + lines[1:]).strip()
    return InspectionReport(which=which, consistent=match.group("token").upper() == "CONSISTENT", findings=findings)


# ---------------------------------------------------------------------------
# 智能体调用
# ---------------------------------------------------------------------------

async def call_agent(
    backend: ChatBackend,
    system: str,
    user: str,
    context: CallContext,
    state: Optional[PipelineState] = None,
    max_retries: Optional[int] = None,
) -> str:
    """调用后端，传输错误时重试；每次请求（含重试）都记入 state 的调用记录"""
    max_retries = settings.llm_max_retries if max_retries is None else max_retries
    messages = [ChatMessage(role="user", content=user)]
    if state is not None:
        state.agent_calls += 1
    last_error: Optional[ExternalServiceError] = None
    for retry in range(max_retries + 1):
        call = AgentCall(agent=context.agent, iteration=context.iteration, retry=retry, system=system, messages=messages)
        try:
            call.completion = await backend.complete(system, messages, context)
        except ExternalServiceError as e:
            call.error = e.message
            last_error = e
            logger.warning(f"{context.agent.value}#{context.iteration} 第 {retry + 1} 次请求失败: {e.message}")
        finally:
            if state is not None:
                state.record_call(call)
        if call.completion is not None:
            return call.completion
    raise ExternalServiceError(
        f"{context.agent.value} 调用在 {max_retries} 次重试后仍失败: {last_error.message}",
        service=backend.name,
        retries=max_retries,
    )


def _context(agent: AgentRole, context: Optional[CallContext]) -> CallContext:
    return context or CallContext(agent=agent, iteration=1)


async def generator_step(
    task: TaskSpec,
    codebase: Codebase,
    backend: ChatBackend,
    *,
    findings: str = "",
    context: Optional[CallContext] = None,
    state: Optional[PipelineState] = None,
) -> CodeArtifact:
    """Generator：系统提示词为代码库 + 代码规范，用户提示词为描述 + Tester 模板"""
    context = _context(AgentRole.GENERATOR, context)
    system = f"{codebase.render_for_prompt()}\n{CODE_CONDUCT}"
    user = GENERATOR_PROMPT.render(
        description=describe_task(task).strip(),
        tester_name=settings.tester_name,
        tester_template=render_tester_template(task).rstrip(),
        findings=findings.strip(),
    )
    completion = await call_agent(backend, system, user, context, state)
    return parse_artifact(completion, AgentRole.GENERATOR, context.iteration)


async def inspector_step(
    artifact: CodeArtifact,
    task: TaskSpec,
    backend: ChatBackend,
    which: int,
    *,
    context: Optional[CallContext] = None,
    state: Optional[PipelineState] = None,
) -> InspectionReport:
    """Inspector：提示词为方程章节 + 产物"""
    if which not in (1, 2):
        raise PreconditionError(f"Inspector 编号只能是 1 或 2，收到 {which}", operation="inspector_step")
    agent = AgentRole.INSPECTOR1 if which == 1 else AgentRole.INSPECTOR2
    context = _context(agent, context)
    equations = parse_description(task.description_path).equations
    system = INSPECTOR_SYSTEM.render(which=which, equations=equations.strip())
    completion = await call_agent(backend, system, render_artifact(artifact), context, state)
    return parse_verdict(completion, which)


async def debugger_step(
    artifact: CodeArtifact,
    exec_report: ExecutionReport,
    guidelines_text: str,
    codebase: Codebase,
    backend: ChatBackend,
    *,
    violations: Iterable[Violation] = (),
    findings: str = "",
    context: Optional[CallContext] = None,
    state: Optional[PipelineState] = None,
) -> CodeArtifact:
    """Debugger：系统提示词为代码库 + Guidelines，用户提示词为失败产物 + 原样的错误文本"""
    violations = list(violations)
    if not exec_report.captured_errors and not violations:
        raise PreconditionError("执行报告中没有可供调试的错误", operation="debugger_step")
    context = _context(AgentRole.DEBUGGER, context)
    system = DEBUGGER_SYSTEM.render(
        codebase=codebase.render_for_prompt(),
        conduct=CODE_CONDUCT,
        guidelines=guidelines_text,
    )
    user = DEBUGGER_PROMPT.render(
        artifact=render_artifact(artifact),
        tester_name=artifact.tester_name,
        errors="\n".join(exec_report.captured_errors),
        violations=violations,
        findings=findings.strip(),
    )
    completion = await call_agent(backend, system, user, context, state)
    return parse_artifact(completion, AgentRole.DEBUGGER, context.iteration, artifact.tester_name)


def packer_merge(artifact: CodeArtifact, codebase: Codebase, subdir: Optional[str] = None) -> Codebase:
    """把模块文件写入 ``<root>/<subdir>/``；任一文件名冲突则整体拒绝，写入失败时回滚"""
    subdir = (subdir or settings.packer_subdir).strip("/")
    root = Path(codebase.root)
    targets = {f"{subdir}/{name}" if subdir else name: text for name, text in artifact.module_files.items()}
    collisions = sorted(name for name in targets if name in codebase.files or (root / name).exists())
    if collisions:
        raise PackerCollisionError(f"代码库中已存在同名文件: {', '.join(collisions)}", filenames=collisions)

    staged: List[Tuple[Path, Path]] = []
    written: List[Path] = []
    try:
        for name, text in targets.items():
            path = root / name
            path.parent.mkdir(parents=True, exist_ok=True)
            temp = path.with_name(f".{path.name}.packing")
            temp.write_bytes(text.encode("utf-8"))
            staged.append((temp, path))
        for temp, path in staged:
            os.replace(temp, path)
            written.append(path)
    except OSError as e:
        for temp, _ in staged:
            temp.unlink(missing_ok=True)
        for path in written:
            path.unlink(missing_ok=True)
        raise FileProcessingError(f"合并模块失败: {e}", filename=str(root), operation="packer_merge") from e

    files = dict(codebase.files)
    files.update(targets)
    logger.info(f"已合并 {len(targets)} 个模块文件到 {root / subdir}")
    return Codebase(root=codebase.root, files=files)


# ---------------------------------------------------------------------------
# 状态机
# ---------------------------------------------------------------------------

@dataclass
class _CheckOutcome:
    exec_report: ExecutionReport
    violations: List[Violation] = field(default_factory=list)
    report: Optional[ValidationReport] = None


class AgentPipeline(BaseService):
    """单次尝试的流水线，阶段严格顺序执行"""

    def __init__(
        self,
        task: TaskSpec,
        codebase: Codebase,
        backend: ChatBackend,
        limits: Optional[PipelineLimits] = None,
        rules: Optional[RuleSet] = None,
        attempt: int = 0,
        attempt_dir: Optional[Union[str, Path]] = None,
        packer_root: Optional[Union[str, Path]] = None,
        run_command: Optional[str] = None,
        timeout_s: Optional[float] = None,
    ):
        super().__init__("agent_pipeline")
        self.task = task
        self.codebase = codebase
        self.backend = backend
        self.limits = limits or PipelineLimits(
            max_inspect1=settings.max_inspect1,
            max_inspect2=settings.max_inspect2,
            max_debug=settings.max_debug,
        )
        self.rules = rules or load_rules()
        self.guidelines_text = render_guidelines(self.rules)
        self.attempt = attempt
        self.attempt_dir = Path(attempt_dir) if attempt_dir else None
        self.packer_root = Path(packer_root) if packer_root else None
        self.run_command = run_command
        self.timeout_s = timeout_s
        self.state = PipelineState()
        self.attempt_id = f"{task.name}#{attempt}"
        self.log = _AttemptLogAdapter(self.logger, {"attempt_id": self.attempt_id, "attempt": attempt})

    def _next_context(self, agent: AgentRole) -> CallContext:
        iteration = sum(1 for call in self.state.transcripts.get(agent.value, []) if call.retry == 0) + 1
        return CallContext(agent=agent, iteration=iteration, attempt=self.attempt)

    def _enter(self, stage: Stage):
        self.state.enter(stage)
        self.log.info(f"进入阶段 {stage.value}", extra={"stage": stage.value})

    def _budget_left(self) -> bool:
        return self.state.agent_calls < self.limits.call_budget

    async def _check(self) -> _CheckOutcome:
        """执行修复规则、lint 与 Tester；执行成功且无违规时在工作目录删除前完成验证"""
        state = self.state
        artifact = state.artifact
        codebase_files, artifact_files, notes = apply_remediations(
            dict(self.codebase.files), artifact.all_files(), self.rules
        )
        for note in notes:
            self.log.info(f"修复规则: {note}", extra={"stage": Stage.CHECKING.value})
        remediated = CodeArtifact(
            module_files={k: v for k, v in artifact_files.items() if k != artifact.tester_name},
            tester_name=artifact.tester_name,
            tester_file=artifact_files[artifact.tester_name],
            provenance=artifact.provenance,
            iteration=artifact.iteration,
        )
        violations = lint(remediated, self.rules)

        state.check_rounds += 1
        async with SandboxWorkspace(remediated, codebase_files) as workspace:
            exec_report = await checker_service.execute(workspace, self.run_command, self.timeout_s)
            if not exec_report.succeeded or violations:
                return _CheckOutcome(exec_report, violations)
            output_dir = workspace.workdir / self.task.config.output_dir
            try:
                output = load_output(output_dir)
            except FileProcessingError as e:
                self.log.warning(f"Tester 输出无法读取: {e.message}")
                report = ValidationReport(
                    task=self.task.name,
                    error_class=ErrorClass.SPURIOUS,
                    notes=[f"Tester 输出无法读取: {e.message}"],
                )
                return _CheckOutcome(exec_report, report=report)
            return _CheckOutcome(exec_report, report=validate(self.task, exec_report, output, output_dir))

    def _log_failure(self, outcome: _CheckOutcome):
        exec_report = outcome.exec_report
        entry = ErrorLogEntry(
            check_round=self.state.check_rounds,
            exit_status=exec_report.exit_status,
            timed_out=exec_report.timed_out,
            captured_errors=exec_report.captured_errors,
            categories=exec_report.diagnostic_categories,
            lint_violations=[v.model_dump() for v in outcome.violations],
        )
        self.state.error_log.append(entry)
        self.log.warning(
            f"第 {entry.check_round} 次执行失败",
            extra={"stage": Stage.CHECKING.value, "categories": entry.categories, "violations": len(outcome.violations)},
        )

    async def _generate_phase(self) -> bool:
        """generating ⇄ inspecting1，返回是否进入 checking"""
        state = self.state
        findings = ""
        while True:
            if not self._budget_left():
                state.fail("智能体调用次数用尽")
                return False
            self._enter(Stage.GENERATING)
            state.artifact = await generator_step(
                self.task, self.codebase, self.backend,
                findings=findings, context=self._next_context(AgentRole.GENERATOR), state=state,
            )
            if not self._budget_left():
                state.fail("智能体调用次数用尽")
                return False
            self._enter(Stage.INSPECTING1)
            state.inspect1_rounds += 1
            inspection = await inspector_step(
                state.artifact, self.task, self.backend, 1,
                context=self._next_context(AgentRole.INSPECTOR1), state=state,
            )
            if inspection.consistent:
                return True
            findings = state.last_findings = inspection.findings
            self.log.info("Inspector 1 判定不一致", extra={"stage": Stage.INSPECTING1.value, "findings": findings})
            if state.inspect1_rounds >= self.limits.max_inspect1:
                state.fail(f"Inspector 1 连续 {state.inspect1_rounds} 轮判定不一致")
                return False

    async def _debug_phase(self) -> Optional[ValidationReport]:
        """checking → debugging → inspecting2 循环，返回验证报告；失败时返回 None"""
        state = self.state
        findings = ""
        outcome: Optional[_CheckOutcome] = None
        while True:
            if outcome is None:
                self._enter(Stage.CHECKING)
                outcome = await self._check()
                state.last_exec = outcome.exec_report
                if outcome.report is not None:
                    return outcome.report
                self._log_failure(outcome)
                findings = ""

            if state.debug_rounds >= self.limits.max_debug:
                state.fail(f"Debugger 已用完 {state.debug_rounds} 轮仍未通过执行")
                return None
            if not self._budget_left():
                state.fail("智能体调用次数用尽")
                return None
            self._enter(Stage.DEBUGGING)
            state.debug_rounds += 1
            state.artifact = await debugger_step(
                state.artifact, outcome.exec_report, self.guidelines_text, self.codebase, self.backend,
                violations=outcome.violations, findings=findings,
                context=self._next_context(AgentRole.DEBUGGER), state=state,
            )

            if not self._budget_left():
                state.fail("智能体调用次数用尽")
                return None
            self._enter(Stage.INSPECTING2)
            inspection = await inspector_step(
                state.artifact, self.task, self.backend, 2,
                context=self._next_context(AgentRole.INSPECTOR2), state=state,
            )
            if inspection.consistent:
                state.inspect2_rounds = 0
                outcome = None
                continue
            state.inspect2_rounds += 1
            findings = state.last_findings = inspection.findings
            self.log.info("Inspector 2 判定不一致", extra={"stage": Stage.INSPECTING2.value, "findings": findings})
            if state.inspect2_rounds >= self.limits.max_inspect2:
                state.fail(f"Inspector 2 连续 {state.inspect2_rounds} 轮判定不一致")
                return None

    def _failure_class(self) -> ErrorClass:
        if self.state.last_exec is not None and not self.state.last_exec.succeeded:
            return classify_exec(self.state.last_exec)
        return ErrorClass.MISINTERPRETATION

    async def run(self) -> PipelineResult:
        """执行一次尝试并写出尝试目录"""
        state = self.state
        report: Optional[ValidationReport] = None
        error_class = ErrorClass.PASS
        packed: List[str] = []
        handler = None
        if self.attempt_dir is not None:
            self.attempt_dir.mkdir(parents=True, exist_ok=True)
            handler = attach_json_handler(self.logger, self.attempt_dir / "attempt.log.jsonl")
            handler.addFilter(lambda record: getattr(record, "attempt_id", None) == self.attempt_id)

        start = time.perf_counter()
        try:
            try:
                async with self.performance_context("run", task=self.task.name, attempt=self.attempt):
                    if await self._generate_phase():
                        report = await self._debug_phase()
                    if report is not None and report.success:
                        self._enter(Stage.PACKING)
                        before = set(self.codebase.files)
                        merged = packer_merge(state.artifact, self._packing_target())
                        packed = sorted(set(merged.files) - before)
                        self._enter(Stage.DONE)
                    elif report is not None:
                        error_class = report.error_class
                        state.fail(f"验证未通过: {error_class.value}")
                    else:
                        error_class = self._failure_class()
            except (ExternalServiceError, SandboxInfrastructureError, PackerCollisionError, FileProcessingError) as e:
                error_class = self._stage_failure("流水线基础设施失败", e, ErrorClass.INFRASTRUCTURE)
            except GenerationFormatError as e:
                error_class = self._stage_failure("智能体回复无法解析为代码", e, ErrorClass.SYNTACTIC)
            except InspectionFormatError as e:
                error_class = self._stage_failure("Inspector 回复格式无效", e, ErrorClass.INFRASTRUCTURE)
            duration = time.perf_counter() - start

            result = PipelineResult(
                attempt=self.attempt,
                state=state,
                report=report,
                error_class=error_class,
                duration=duration,
                attempt_dir=str(self.attempt_dir) if self.attempt_dir else None,
                packed_files=packed,
            )
            self.log.info(
                f"尝试结束: {state.stage.value} ({error_class.value})",
                extra={"stage": state.stage.value, "error_class": error_class.value, "duration": duration},
            )
            if self.attempt_dir is not None:
                write_attempt_dir(self.attempt_dir, result)
            return result
        finally:
            if handler is not None:
                detach_handler(self.logger, handler)

    def _stage_failure(self, message: str, error, error_class: ErrorClass) -> ErrorClass:
        self.log.error(
            f"{message}: {error.message}",
            extra={
                "stage": self.state.stage.value,
                "error_type": type(error).__name__,
                "details": error.details,
            },
        )
        self.state.fail(error.message)
        return error_class

    def _packing_target(self) -> Codebase:
        if self.packer_root is None:
            return self.codebase
        return Codebase(root=str(self.packer_root), files={})


def write_attempt_dir(attempt_dir: Union[str, Path], result: PipelineResult) -> Path:
    """写出 transcripts.json、state.json、report.json 与 artifact/"""
    attempt_dir = Path(attempt_dir)
    attempt_dir.mkdir(parents=True, exist_ok=True)
    state = result.state

    transcripts = {agent: [c.model_dump(mode="json") for c in calls] for agent, calls in state.transcripts.items()}
    _dump_json(attempt_dir / "transcripts.json", transcripts)
    _dump_json(attempt_dir / "state.json", state.model_dump(mode="json", exclude={"transcripts"}))
    _dump_json(
        attempt_dir / "report.json",
        {
            "attempt": result.attempt,
            "success": result.success,
            "final_stage": state.stage.value,
            "error_class": result.error_class.value,
            "failure_reason": state.failure_reason,
            "duration": result.duration,
            "packed_files": result.packed_files,
            "validation": result.report.to_dict() if result.report else None,
        },
    )
    if state.artifact is not None:
        for name, text in state.artifact.all_files().items():
            path = attempt_dir / "artifact" / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
    return attempt_dir


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def new_attempt_dir(task_name: str, attempt: int = 0, root: Optional[Union[str, Path]] = None) -> Path:
    """``<runs>/attempts/<任务>_<时间戳>_<序号>``"""
    root = Path(root) if root else settings.get_attempts_path()
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    return root / f"{task_name}_{stamp}_{attempt}"


async def run_pipeline(
    task: TaskSpec,
    codebase: Codebase,
    backend: ChatBackend,
    limits: Optional[PipelineLimits] = None,
    *,
    rules: Optional[RuleSet] = None,
    attempt: int = 0,
    attempt_dir: Optional[Union[str, Path]] = None,
    packer_root: Optional[Union[str, Path]] = None,
    run_command: Optional[str] = None,
    timeout_s: Optional[float] = None,
) -> PipelineResult:
    """执行一次完整尝试"""
    pipeline = AgentPipeline(
        task,
        codebase,
        backend,
        limits=limits,
        rules=rules,
        attempt=attempt,
        attempt_dir=attempt_dir,
        packer_root=packer_root,
        run_command=run_command,
        timeout_s=timeout_s,
    )
    return await pipeline.run()
