"""Checker：在隔离工作目录中执行 Tester

代码库快照与产物被写入新的临时目录，按 ``run_command`` 模板执行入口文件，
超时即终止进程，标准输出和标准错误各截断到配置的字节数，并解析出诊断行。
"""

import asyncio
import os
import re
import shlex
import shutil
import sys
import tempfile
import time
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

from core.config import settings
from core.exceptions import SandboxInfrastructureError
from core.logging import security_logger
from models.pipeline import Codebase, CodeArtifact
from models.validation import ErrorClass, ExecutionReport, ValidationReport
from services.base import BaseService


# 名称包含这些片段的环境变量不会传给 Tester
CREDENTIAL_MARKERS = ("API", "KEY", "TOKEN", "SECRET", "PASSWORD", "CREDENTIAL")

TRUNCATION_MARKER = "\n...[输出已截断，省略 {omitted} 字节]"

_TRACEBACK_HEADER = "Traceback (most recent call last):"
_FILE_LINE = re.compile(r'^\s*File ".*", line \d+')
_ERROR_LINE = re.compile(r"^[A-Za-z_][\w.]*(Error|Exception|Exit)\b(:.*)?$")

# (类别, 匹配片段)，按顺序检查
_DIAGNOSTIC_CATEGORIES = (
    ("timeout", ("TimeoutError",)),
    ("instability", ("InstabilityError",)),
    ("shape-mismatch", ("ShapeMismatchError", "could not be broadcast", "shape mismatch", "cannot reshape")),
    ("missing-module", ("ModuleNotFoundError", "No module named")),
    ("missing-import", ("ImportError", "cannot import name")),
    ("undefined-name", ("NameError", "UnboundLocalError", "is not defined", "referenced before assignment")),
    ("wrong-type", ("TypeError",)),
)


def parse_diagnostics(stderr: str) -> List[str]:
    """从标准错误中提取诊断行：完整的 traceback 块、文件定位行和异常行"""
    captured: List[str] = []
    in_traceback = False
    for line in stderr.splitlines():
        if line.startswith(_TRACEBACK_HEADER):
            in_traceback = True
            captured.append(line)
        elif in_traceback:
            captured.append(line)
            if line and not line[0].isspace():
                in_traceback = False
        elif _FILE_LINE.match(line) or _ERROR_LINE.match(line):
            captured.append(line)
    return captured


def diagnose(captured_errors: List[str]) -> List[str]:
    """把诊断行归类，结果按类别表顺序排列；无法归类时为 other"""
    text = "\n".join(captured_errors)
    if not text.strip():
        return []
    categories = [name for name, needles in _DIAGNOSTIC_CATEGORIES if any(n in text for n in needles)]
    return categories or ["other"]


def classify_exec(report: ExecutionReport, validation: Optional[ValidationReport] = None) -> ErrorClass:
    """执行结果分类：非零退出或超时为 syntactic（数值失稳除外），否则取验证结论"""
    if not report.succeeded:
        if "instability" in diagnose(report.captured_errors):
            return ErrorClass.UNSTABLE
        return ErrorClass.SYNTACTIC
    if validation is not None:
        return validation.error_class
    return ErrorClass.PASS


def _truncate(data: bytes, limit: int) -> str:
    if len(data) <= limit:
        return data.decode("utf-8", errors="replace")
    head = data[:limit].decode("utf-8", errors="replace")
    return head + TRUNCATION_MARKER.format(omitted=len(data) - limit)


def scrub_environment(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    """去掉凭据类环境变量，每个被去掉的名称记录到安全日志"""
    env: Dict[str, str] = {}
    for name, value in (os.environ if environ is None else environ).items():
        if any(marker in name.upper() for marker in CREDENTIAL_MARKERS):
            security_logger.warning(f"沙箱环境已移除变量 {name}")
            continue
        env[name] = value
    return env


class SandboxWorkspace:
    """一次执行的临时工作目录

    作为异步上下文管理器使用：进入时写出代码库快照与产物，退出时删除目录（``keep_workdir`` 时保留）。
    """

    def __init__(
        self,
        artifact: CodeArtifact,
        codebase: Union[Codebase, Mapping[str, str]],
        keep_workdir: bool = False,
    ):
        self.artifact = artifact
        self.codebase_files = dict(codebase.files if isinstance(codebase, Codebase) else codebase)
        self.keep_workdir = keep_workdir
        self.workdir: Optional[Path] = None

    @property
    def tester_path(self) -> Path:
        return self.workdir / self.artifact.tester_name

    def materialize(self) -> Path:
        try:
            self.workdir = Path(tempfile.mkdtemp(prefix="pdeforge_sandbox_"))
            files = dict(self.codebase_files)
            files.update(self.artifact.all_files())
            for name, text in files.items():
                path = self.workdir / name
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(text, encoding="utf-8")
        except OSError as e:
            raise SandboxInfrastructureError(f"无法准备沙箱目录: {e}") from e
        return self.workdir

    def remove(self):
        if self.workdir is not None and not self.keep_workdir:
            shutil.rmtree(self.workdir, ignore_errors=True)

    async def __aenter__(self) -> "SandboxWorkspace":
        self.materialize()
        return self

    async def __aexit__(self, exc_type, exc, tb):
        self.remove()


class CheckerService(BaseService):
    """Checker 服务"""

    def __init__(self):
        super().__init__("checker")

    def build_command(self, workspace: SandboxWorkspace, run_command: Optional[str] = None) -> List[str]:
        template = run_command or settings.sandbox_run_command
        text = template.format(
            python=shlex.quote(sys.executable),
            tester=shlex.quote(str(workspace.tester_path)),
            workdir=shlex.quote(str(workspace.workdir)),
        )
        return shlex.split(text)

    async def execute(
        self,
        workspace: SandboxWorkspace,
        run_command: Optional[str] = None,
        timeout_s: Optional[float] = None,
    ) -> ExecutionReport:
        """在已准备好的工作目录中执行 Tester"""
        timeout_s = timeout_s or settings.sandbox_timeout
        limit = settings.sandbox_output_limit
        command = self.build_command(workspace, run_command)
        env = scrub_environment()
        env["PYTHONPATH"] = str(workspace.workdir)

        async with self.performance_context("execute", tester=workspace.artifact.tester_name):
            start = time.perf_counter()
            try:
                process = await asyncio.create_subprocess_exec(
                    *command,
                    cwd=str(workspace.workdir),
                    env=env,
                    stdout=asyncio.subprocess.PIPE,
                    stderr=asyncio.subprocess.PIPE,
                )
            except OSError as e:
                raise SandboxInfrastructureError(f"无法启动 Tester: {e}", command=" ".join(command)) from e

            timed_out = False
            try:
                stdout, stderr = await asyncio.wait_for(process.communicate(), timeout=timeout_s)
            except asyncio.TimeoutError:
                timed_out = True
                process.kill()
                stdout, stderr = await process.communicate()
            duration = time.perf_counter() - start

        exit_status = process.returncode
        if timed_out and not exit_status:
            exit_status = 124
        # 输出中的路径改写为相对工作目录
        prefix = os.fsencode(str(workspace.workdir) + os.sep)
        stdout, stderr = stdout.replace(prefix, b""), stderr.replace(prefix, b"")
        stderr_text = _truncate(stderr, limit)
        captured = parse_diagnostics(stderr_text)
        if timed_out:
            captured.append(f"TimeoutError: 执行超过 {timeout_s:g} 秒被终止")
        elif exit_status != 0 and not captured:
            last_lines = [line for line in stderr_text.splitlines() if line.strip()]
            captured.append(last_lines[-1] if last_lines else f"进程以退出码 {exit_status} 结束")

        report = ExecutionReport(
            exit_status=exit_status,
            stdout=_truncate(stdout, limit),
            stderr=stderr_text,
            duration=duration,
            timed_out=timed_out,
            workdir=str(workspace.workdir),
            captured_errors=captured,
            diagnostic_categories=diagnose(captured),
            command=" ".join(command),
        )
        if report.succeeded:
            self.log_info("Tester 执行成功", duration=duration)
        else:
            self.log_warning("Tester 执行失败", exit_status=exit_status, categories=report.diagnostic_categories)
        return report


checker_service = CheckerService()


async def execute_tester(
    artifact: CodeArtifact,
    codebase: Union[Codebase, Mapping[str, str]],
    run_command: Optional[str] = None,
    timeout_s: Optional[float] = None,
    keep_workdir: bool = False,
) -> ExecutionReport:
    """在新的临时目录中执行一次 Tester，返回后删除目录（``keep_workdir`` 时保留）"""
    async with SandboxWorkspace(artifact, codebase, keep_workdir=keep_workdir) as workspace:
        return await checker_service.execute(workspace, run_command, timeout_s)
