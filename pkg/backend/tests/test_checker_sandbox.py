"""Checker 沙箱测试"""

import logging
import shutil
from pathlib import Path

import pytest

from core.config import settings
from core.exceptions import SandboxInfrastructureError
from models.pipeline import AgentRole, CodeArtifact
from models.validation import ErrorClass, ExecutionReport, ValidationReport
from services.checker_sandbox import (
    TRUNCATION_MARKER,
    classify_exec,
    diagnose,
    execute_tester,
    parse_diagnostics,
    scrub_environment,
)


TRACEBACK = """\
some progress output
Traceback (most recent call last):
  File "/tmp/x/test_case.py", line 3, in <module>
    solve_everything()
NameError: name 'solve_everything' is not defined
"""


def _artifact(tester: str, modules=None) -> CodeArtifact:
    return CodeArtifact(module_files=modules or {}, tester_file=tester, provenance=AgentRole.GENERATOR)


class TestDiagnostics:
    def test_traceback_block_is_captured(self):
        captured = parse_diagnostics(TRACEBACK)
        assert captured[0].startswith("Traceback")
        assert captured[-1] == "NameError: name 'solve_everything' is not defined"
        assert "some progress output" not in captured

    def test_loose_error_lines(self):
        captured = parse_diagnostics('warning text\nValueError: bad shape\n  File "a.py", line 2\n')
        assert captured == ["ValueError: bad shape", '  File "a.py", line 2']

    @pytest.mark.parametrize(
        "lines, expected",
        [
            (["NameError: name 'x' is not defined"], ["undefined-name"]),
            (["ModuleNotFoundError: No module named 'jmp'"], ["missing-module"]),
            (["ImportError: cannot import name 'PeriodicBC'"], ["missing-import"]),
            (["ValueError: operands could not be broadcast together"], ["shape-mismatch"]),
            (["core.exceptions.InstabilityError: 第 3 步"], ["instability"]),
            (["RuntimeError: boom"], ["other"]),
            ([], []),
        ],
    )
    def test_categories(self, lines, expected):
        assert diagnose(lines) == expected

    def test_classify_exec(self):
        failed = ExecutionReport(exit_status=1, captured_errors=["NameError: x"])
        unstable = ExecutionReport(exit_status=1, captured_errors=["InstabilityError: step 4"])
        ok = ExecutionReport(exit_status=0)
        spatial = ValidationReport(task="t", error_class=ErrorClass.SPATIAL)
        assert classify_exec(failed) == ErrorClass.SYNTACTIC
        assert classify_exec(unstable) == ErrorClass.UNSTABLE
        assert classify_exec(ok) == ErrorClass.PASS
        assert classify_exec(ok, spatial) == ErrorClass.SPATIAL

    def test_scrub_environment(self, caplog):
        logger = logging.getLogger("security")
        logger.addHandler(caplog.handler)
        try:
            env = scrub_environment({"PATH": "/bin", "LLM_API_KEY": "k", "GITHUB_TOKEN": "t", "HOME": "/root"})
        finally:
            logger.removeHandler(caplog.handler)
        assert env == {"PATH": "/bin", "HOME": "/root"}
        assert {"LLM_API_KEY", "GITHUB_TOKEN"} <= {w for r in caplog.records for w in r.getMessage().split()}


class TestExecution:
    async def test_tester_imports_codebase_and_modules(self):
        report = await execute_tester(
            _artifact("from solver import VALUE\nfrom helper import BASE\nprint(VALUE + BASE)\n", {"solver.py": "VALUE = 3\n"}),
            {"helper.py": "BASE = 4\n"},
        )
        assert report.succeeded
        assert report.stdout.strip() == "7"
        assert report.captured_errors == []
        assert not Path(report.workdir).exists()

    async def test_failure_is_diagnosed(self):
        report = await execute_tester(_artifact("x = 1\nsolve_everything()\n"), {})
        assert report.exit_status == 1
        assert report.diagnostic_categories == ["undefined-name"]
        assert report.captured_errors[-1].startswith("NameError")
        assert '  File "test_case.py", line 2, in <module>' in report.captured_errors

    async def test_exit_without_traceback(self):
        report = await execute_tester(_artifact("import sys\nsys.stderr.write('gave up\\n')\nsys.exit(3)\n"), {})
        assert report.exit_status == 3
        assert report.captured_errors == ["gave up"]

    async def test_timeout(self):
        report = await execute_tester(_artifact("import time\ntime.sleep(30)\n"), {}, timeout_s=0.5)
        assert report.timed_out
        assert report.exit_status != 0
        assert "timeout" in report.diagnostic_categories
        assert classify_exec(report) == ErrorClass.SYNTACTIC

    async def test_output_is_truncated(self, monkeypatch):
        monkeypatch.setattr(settings, "sandbox_output_limit", 100)
        report = await execute_tester(_artifact("print('x' * 1000)\n"), {})
        assert report.stdout.startswith("x" * 100)
        assert report.stdout.endswith(TRUNCATION_MARKER.format(omitted=901))

    async def test_credentials_are_not_visible(self, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "secret")
        report = await execute_tester(_artifact("import os\nprint(os.environ.get('LLM_API_KEY'))\n"), {})
        assert report.stdout.strip() == "None"

    async def test_keep_workdir(self):
        report = await execute_tester(_artifact("open('out.txt', 'w').write('hi')\n"), {}, keep_workdir=True)
        workdir = Path(report.workdir)
        try:
            assert (workdir / "out.txt").read_text() == "hi"
            assert (workdir / "test_case.py").is_file()
        finally:
            shutil.rmtree(workdir, ignore_errors=True)

    async def test_missing_interpreter_is_infrastructure(self):
        with pytest.raises(SandboxInfrastructureError):
            await execute_tester(_artifact("print(1)\n"), {}, run_command="/nonexistent/python {tester}")
