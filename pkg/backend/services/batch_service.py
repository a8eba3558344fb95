"""批量评估服务

同一任务、同一后端独立运行 N 次尝试（并发数受限），汇总为 BatchResult；
多个任务 × 多个后端时再渲染成功率表格。
"""

import asyncio
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from core.config import settings
from models.pipeline import AttemptOutcome, BatchResult, Codebase, PipelineLimits, PipelineResult
from models.rules import RuleSet
from models.simulation import TaskSpec
from services.agent_pipeline import run_pipeline
from services.base import AsyncTaskService
from services.chat_backends import ChatBackend


class BatchService(AsyncTaskService):
    """批量评估服务"""

    def __init__(self, parallel: Optional[int] = None):
        super().__init__("batch", max_concurrent_tasks=parallel or settings.batch_parallel)

    def batch_dir(self, task: TaskSpec, backend: ChatBackend, root: Optional[Union[str, Path]] = None) -> Path:
        """``<runs>/batch/<任务>_<后端>_<时间戳>``，每次尝试在其下占用独立的子目录"""
        root = Path(root) if root else settings.get_runs_path() / "batch"
        backend_tag = backend.name.replace(":", "-").replace("/", "-")
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S-%f")
        return root / f"{task.name}_{backend_tag}_{stamp}"

    async def _attempt(
        self,
        index: int,
        task: TaskSpec,
        codebase: Codebase,
        backend: ChatBackend,
        limits: Optional[PipelineLimits],
        rules: Optional[RuleSet],
        batch_dir: Path,
        run_command: Optional[str],
        timeout_s: Optional[float],
    ) -> PipelineResult:
        attempt_dir = batch_dir / f"attempt_{index:03d}"
        return await self.run_task(
            f"{task.name}#{index}",
            run_pipeline(
                task,
                codebase,
                backend,
                limits,
                rules=rules,
                attempt=index,
                attempt_dir=attempt_dir,
                packer_root=attempt_dir / "packed",
                run_command=run_command,
                timeout_s=timeout_s,
            ),
        )

    async def run_batch(
        self,
        task: TaskSpec,
        codebase: Codebase,
        backend: ChatBackend,
        attempts: int,
        limits: Optional[PipelineLimits] = None,
        rules: Optional[RuleSet] = None,
        runs_root: Optional[Union[str, Path]] = None,
        run_command: Optional[str] = None,
        timeout_s: Optional[float] = None,
    ) -> BatchResult:
        """运行 attempts 次独立尝试

        每次尝试的合并目标是自己目录下的 ``packed/``，不同尝试之间没有共享的文件系统状态。
        """
        await self.initialize()
        batch_dir = self.batch_dir(task, backend, runs_root)
        self.log_info("开始批量评估", task=task.name, backend=backend.name, attempts=attempts)
        async with self.performance_context("run_batch", task=task.name, attempts=attempts):
            results: List[PipelineResult] = await asyncio.gather(
                *(
                    self._attempt(i, task, codebase, backend, limits, rules, batch_dir, run_command, timeout_s)
                    for i in range(attempts)
                )
            )
        result = aggregate(task.name, backend.name, results)
        self.log_info("批量评估完成", task=task.name, backend=backend.name, fraction=result.fraction)
        return result


def aggregate(task_name: str, backend_name: str, results: Sequence[PipelineResult]) -> BatchResult:
    """按尝试序号汇总单次结果"""
    ordered = sorted(results, key=lambda r: r.attempt)
    return BatchResult(
        task=task_name,
        backend=backend_name,
        attempts=len(ordered),
        successes=sum(1 for r in ordered if r.success),
        per_attempt=[
            AttemptOutcome(
                attempt=r.attempt,
                error_class=r.error_class,
                duration=r.duration,
                final_stage=r.state.stage,
            )
            for r in ordered
        ],
    )


def render_success_table(results: Sequence[BatchResult]) -> str:
    """任务 × 后端的成功率表格，单元格为 ``成功数/尝试数``"""
    tasks: List[str] = []
    backends: List[str] = []
    cells: Dict[tuple, str] = {}
    for result in results:
        if result.task not in tasks:
            tasks.append(result.task)
        if result.backend not in backends:
            backends.append(result.backend)
        cells[(result.task, result.backend)] = result.fraction

    header = ["task"] + backends
    rows = [[task] + [cells.get((task, b), "-") for b in backends] for task in tasks]
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]

    def line(row: List[str]) -> str:
        return "| " + " | ".join(cell.ljust(width) for cell, width in zip(row, widths)) + " |"

    separator = "|" + "|".join("-" * (width + 2) for width in widths) + "|"
    return "\n".join([line(header), separator] + [line(row) for row in rows])

