"""PDEForge 命令行

退出码：0 成功，1 任务或验证失败，2 用法或配置错误，3 I/O 或基础设施错误。
结果 JSON 写到标准输出，日志写到标准错误。
"""

import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from core.config import settings
from core.exceptions import INFRASTRUCTURE_ERRORS, USAGE_ERRORS, ConfigurationError, PDEForgeException
from core.logging import app_logger
from models.pipeline import BatchResult, PipelineLimits
from models.validation import ErrorClass, ExecutionReport
from services.agent_pipeline import load_codebase, new_attempt_dir, run_pipeline
from services.batch_service import BatchService, render_success_table
from services.chat_backends import make_backend
from services.guidelines_rules import (
    collect_source_files,
    inject_placeholder,
    lint,
    load_rules,
    remediate_rename,
)
from services.reference_tasks import TASK_FACTORIES, apply_overrides, load_task, run_tester
from services.validation_oracle import load_output, validate


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _print_json(data: Any):
    print(json.dumps(data, ensure_ascii=False, indent=2))


def _parse_pairs(pairs: Sequence[str], option: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"{option} 需要 key=value，收到 {pair!r}", config_key=option)
        values[key.strip()] = value.strip()
    return values


def _split_two(text: str, option: str) -> List[str]:
    parts = text.split(":")
    if len(parts) != 2 or not all(parts):
        raise ConfigurationError(f"{option} 需要 A:B 形式，收到 {text!r}", config_key=option)
    return parts


def _existing_path(path: str, option: str) -> Path:
    result = Path(path)
    if not result.exists():
        raise ConfigurationError(f"路径不存在: {path}", config_key=option)
    return result


def _limits(args: argparse.Namespace) -> PipelineLimits:
    return PipelineLimits(
        max_inspect1=args.max_inspect1 if args.max_inspect1 is not None else settings.max_inspect1,
        max_inspect2=args.max_inspect2 if args.max_inspect2 is not None else settings.max_inspect2,
        max_debug=args.max_debug if args.max_debug is not None else settings.max_debug,
    )


# ---------------------------------------------------------------------------
# 子命令
# ---------------------------------------------------------------------------

def cmd_run_tester(args: argparse.Namespace) -> int:
    """运行内置 Tester 并打印验证报告"""
    overrides = _parse_pairs(args.set or [], "--set")
    if args.steps is not None:
        overrides["steps"] = str(args.steps)
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    task = apply_overrides(load_task(args.task), overrides)

    output = run_tester(task)
    report = validate(task, ExecutionReport(exit_status=0), output, output.output_dir)
    _print_json(report.to_dict())
    return EXIT_OK if report.success else EXIT_FAILURE


def cmd_validate(args: argparse.Namespace) -> int:
    """验证已有的输出目录"""
    task = load_task(args.task)
    output_dir = _existing_path(args.output_dir, "output_dir")
    output = load_output(output_dir)
    report = validate(task, ExecutionReport(exit_status=0), output, output_dir)
    _print_json(report.to_dict())
    return EXIT_OK if report.success else EXIT_FAILURE


async def _run_pipeline(args: argparse.Namespace) -> int:
    task = load_task(args.description)
    limits = _limits(args)
    codebase = load_codebase(args.codebase)
    rules = load_rules(args.rules)
    backend = make_backend(args.backend)
    try:
        result = await run_pipeline(
            task,
            codebase,
            backend,
            limits,
            rules=rules,
            attempt=args.attempt,
            attempt_dir=new_attempt_dir(task.name, args.attempt),
            packer_root=args.packer_root,
            timeout_s=args.timeout,
        )
    finally:
        await backend.aclose()

    _print_json(
        {
            "task": task.name,
            "backend": backend.name,
            "success": result.success,
            "final_stage": result.state.stage.value,
            "error_class": result.error_class.value,
            "failure_reason": result.state.failure_reason,
            "stage_history": [stage.value for stage in result.state.stage_history],
            "attempt_dir": result.attempt_dir,
            "packed_files": result.packed_files,
            "report": result.report.to_dict() if result.report else None,
        }
    )
    if result.success:
        return EXIT_OK
    return EXIT_IO if result.error_class == ErrorClass.INFRASTRUCTURE else EXIT_FAILURE


def cmd_pipeline(args: argparse.Namespace) -> int:
    """运行一次流水线尝试"""
    settings.ensure_directories()
    return asyncio.run(_run_pipeline(args))


async def _run_batch(args: argparse.Namespace) -> List[BatchResult]:
    tasks = [load_task(description) for description in args.descriptions]
    limits = _limits(args)
    codebase = load_codebase(args.codebase)
    rules = load_rules(args.rules)
    backends = [make_backend(spec) for spec in args.backend or ["http"]]
    service = BatchService(parallel=args.parallel)
    results: List[BatchResult] = []
    try:
        for task in tasks:
            for backend in backends:
                results.append(
                    await service.run_batch(
                        task,
                        codebase,
                        backend,
                        args.attempts,
                        limits=limits,
                        rules=rules,
                        runs_root=args.runs_dir,
                        timeout_s=args.timeout,
                    )
                )
    finally:
        await service.cleanup()
        for backend in backends:
            await backend.aclose()
    return results


def cmd_batch(args: argparse.Namespace) -> int:
    """批量评估，JSON 写到标准输出，成功率表格写到标准错误"""
    if args.attempts < 1:
        raise ConfigurationError("--attempts 至少为 1", config_key="attempts")
    if args.parallel is not None and args.parallel < 1:
        raise ConfigurationError("--parallel 至少为 1", config_key="parallel")
    settings.ensure_directories()
    results = asyncio.run(_run_batch(args))
    _print_json([result.to_dict() for result in results])
    print(render_success_table(results), file=sys.stderr)
    return EXIT_OK


def cmd_lint(args: argparse.Namespace) -> int:
    """检查文件或目录，打印违规 JSON"""
    path = _existing_path(args.path, "path")
    violations = lint(collect_source_files(path), load_rules(args.rules))
    _print_json([v.model_dump() for v in violations])
    return EXIT_FAILURE if violations else EXIT_OK


def cmd_remediate(args: argparse.Namespace) -> int:
    """在磁盘上的代码库中执行重命名和占位声明"""
    root = _existing_path(args.codebase_dir, "codebase_dir")
    if not root.is_dir():
        raise ConfigurationError(f"不是目录: {root}", config_key="codebase_dir")
    if not args.rename and not args.placeholder:
        raise ConfigurationError("至少需要 --rename 或 --placeholder 之一", config_key="remediate")

    original = collect_source_files(root)
    files = dict(original)
    summary: Dict[str, Any] = {"renamed": [], "placeholders": []}
    for spec in args.rename or []:
        source, target = _split_two(spec, "--rename")
        result = remediate_rename(files, source, target)
        files = result.files
        summary["renamed"].append({"from": source, "to": target, "count": result.count, "per_file": result.per_file})
    for spec in args.placeholder or []:
        name, target_file = _split_two(spec, "--placeholder")
        files = inject_placeholder(files, name, target_file)
        summary["placeholders"].append({"name": name, "file": target_file})

    changed = sorted(name for name, text in files.items() if original.get(name) != text)
    for name in changed:
        (root / name).write_text(files[name], encoding="utf-8")
    summary["changed_files"] = changed
    _print_json(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# 参数解析
# ---------------------------------------------------------------------------

def _add_pipeline_options(parser: argparse.ArgumentParser):
    parser.add_argument("--codebase", default=None, help="目标代码库根目录 (默认: CODEBASE_DIR)")
    parser.add_argument("--rules", default=None, help="Guidelines 规则文件 (默认: GUIDELINES_PATH)")
    parser.add_argument("--max-inspect1", type=int, default=None, help="Inspector 1 最大轮数")
    parser.add_argument("--max-inspect2", type=int, default=None, help="Inspector 2 连续不一致的最大轮数")
    parser.add_argument("--max-debug", type=int, default=None, help="Debugger 最大轮数")
    parser.add_argument("--timeout", type=float, default=None, help="每次执行 Tester 的超时（秒）")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdeforge", description="LBM 求解器与多智能体代码生成流水线")
    parser.add_argument("--version", action="version", version=f"{settings.app_name} {settings.app_version}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_tester_parser = subparsers.add_parser("run-tester", help="运行内置 Tester 并验证")
    run_tester_parser.add_argument("task", help=f"任务名 ({', '.join(TASK_FACTORIES)}) 或 .md 描述文件")
    run_tester_parser.add_argument("--steps", type=int, default=None, help="覆盖时间步数")
    run_tester_parser.add_argument("--output-dir", default=None, help="输出目录")
    run_tester_parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="覆盖任意配置项，可重复")
    run_tester_parser.set_defaults(handler=cmd_run_tester)

    validate_parser = subparsers.add_parser("validate", help="验证 Tester 输出目录")
    validate_parser.add_argument("output_dir", help="包含 manifest.json 的输出目录")
    validate_parser.add_argument("task", help="任务名或 .md 描述文件")
    validate_parser.set_defaults(handler=cmd_validate)

    pipeline_parser = subparsers.add_parser("pipeline", help="运行一次流水线尝试")
    pipeline_parser.add_argument("description", help="Math-Algo 描述文件或内置任务名")
    pipeline_parser.add_argument("--backend", default="http", help="scripted:<目录> 或 http[:<模型>]")
    pipeline_parser.add_argument("--attempt", type=int, default=0, help="尝试序号")
    pipeline_parser.add_argument("--packer-root", default=None, help="合并目标目录 (默认: 代码库根目录)")
    _add_pipeline_options(pipeline_parser)
    pipeline_parser.set_defaults(handler=cmd_pipeline)

    batch_parser = subparsers.add_parser("batch", help="批量评估成功率")
    batch_parser.add_argument("descriptions", nargs="+", help="Math-Algo 描述文件或内置任务名")
    batch_parser.add_argument("--attempts", type=int, default=10, help="每个任务 × 后端的尝试次数 (默认: 10)")
    batch_parser.add_argument("--backend", action="append", help="后端，可重复 (默认: http)")
    batch_parser.add_argument("--parallel", type=int, default=None, help="并发尝试数 (默认: BATCH_PARALLEL)")
    batch_parser.add_argument("--runs-dir", default=None, help="批量结果目录")
    _add_pipeline_options(batch_parser)
    batch_parser.set_defaults(handler=cmd_batch)

    lint_parser = subparsers.add_parser("lint", help="按 Guidelines 检查源码")
    lint_parser.add_argument("path", help="文件或目录")
    lint_parser.add_argument("--rules", default=None, help="Guidelines 规则文件")
    lint_parser.set_defaults(handler=cmd_lint)

    remediate_parser = subparsers.add_parser("remediate", help="对磁盘上的代码库执行程序化修复")
    remediate_parser.add_argument("codebase_dir", help="代码库目录")
    remediate_parser.add_argument("--rename", action="append", metavar="FROM:TO", help="整词重命名，可重复")
    remediate_parser.add_argument("--placeholder", action="append", metavar="NAME:FILE", help="注入占位声明，可重复")
    remediate_parser.set_defaults(handler=cmd_remediate)

    return parser


def exit_code_for(error: Exception) -> int:
    """异常 → 退出码"""
    if isinstance(error, USAGE_ERRORS) or isinstance(error, ValidationError):
        return EXIT_USAGE
    if isinstance(error, INFRASTRUCTURE_ERRORS) or isinstance(error, OSError):
        return EXIT_IO
    return EXIT_FAILURE


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        return args.handler(args)
    except PDEForgeException as e:
        code = exit_code_for(e)
        app_logger.error(f"{args.command} 失败: {e.message}", extra={"error_code": e.error_code})
        _print_json(e.to_dict())
        return code
    except ValidationError as e:
        app_logger.error(f"{args.command} 参数无效: {e}")
        _print_json({"error": "ValidationError", "message": str(e), "error_code": "VALIDATION_ERROR", "details": {}})
        return EXIT_USAGE
    except OSError as e:
        app_logger.error(f"{args.command} I/O 失败: {e}")
        _print_json({"error": type(e).__name__, "message": str(e), "error_code": "IO_ERROR", "details": {}})
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
