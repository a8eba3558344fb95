"""服务层基础类"""

import asyncio
import time
from abc import ABC
from contextlib import asynccontextmanager
from typing import Any, Awaitable, Dict, Optional

from core.logging import get_logger, performance_logger


class BaseService(ABC):
    """服务基础类"""

    def __init__(self, service_name: str):
        self.service_name = service_name
        self.logger = get_logger(service_name)
        self._initialized = False

    async def initialize(self):
        """初始化服务"""
        if self._initialized:
            return

        self.logger.debug(f"初始化 {self.service_name} 服务")
        await self._initialize()
        self._initialized = True

    async def cleanup(self):
        """清理服务资源"""
        if not self._initialized:
            return

        self.logger.debug(f"清理 {self.service_name} 服务")
        await self._cleanup()
        self._initialized = False

    async def _initialize(self):
        """子类实现的初始化逻辑"""

    async def _cleanup(self):
        """子类实现的清理逻辑"""

    @asynccontextmanager
    async def performance_context(self, operation: str, **kwargs):
        """性能监控上下文管理器"""
        start_time = time.perf_counter()
        try:
            yield
        finally:
            duration = time.perf_counter() - start_time
            performance_logger.info(
                f"{self.service_name}.{operation} 耗时 {duration:.3f}s",
                extra={
                    "operation": f"{self.service_name}.{operation}",
                    "duration": duration,
                    **kwargs,
                },
            )

    def log_error(self, message: str, error: Exception, **kwargs):
        """记录错误日志"""
        self.logger.error(
            message,
            extra={
                "error_type": type(error).__name__,
                "error_message": str(error),
                "service": self.service_name,
                **kwargs,
            },
        )

    def log_info(self, message: str, **kwargs):
        """记录信息日志"""
        self.logger.info(message, extra={"service": self.service_name, **kwargs})

    def log_warning(self, message: str, **kwargs):
        """记录警告日志"""
        self.logger.warning(message, extra={"service": self.service_name, **kwargs})


class AsyncTaskService(BaseService):
    """并发受限的异步任务服务基础类"""

    def __init__(self, service_name: str, max_concurrent_tasks: int = 4):
        super().__init__(service_name)
        self.max_concurrent_tasks = max_concurrent_tasks
        self._semaphore: Optional[asyncio.Semaphore] = None
        self._running_tasks: Dict[str, asyncio.Task] = {}

    async def _initialize(self):
        self._semaphore = asyncio.Semaphore(self.max_concurrent_tasks)

    async def _cleanup(self):
        """取消所有运行中的任务"""
        if not self._running_tasks:
            return
        self.log_info("取消运行中的任务", count=len(self._running_tasks))
        for task_id, task in list(self._running_tasks.items()):
            if not task.done():
                task.cancel()
                try:
                    await task
                except asyncio.CancelledError:
                    self.log_info("任务已取消", task_id=task_id)
                except Exception as e:
                    self.log_error("取消任务时出错", e, task_id=task_id)
        self._running_tasks.clear()

    async def run_task(self, task_id: str, coro: Awaitable[Any], timeout: Optional[float] = None) -> Any:
        """在信号量限制下运行一个协程"""
        if not self._semaphore:
            raise RuntimeError(f"{self.service_name} 服务尚未初始化")

        async with self._semaphore:
            task = asyncio.ensure_future(asyncio.wait_for(coro, timeout=timeout) if timeout else coro)
            self._running_tasks[task_id] = task
            try:
                self.log_info("开始任务", task_id=task_id)
                result = await task
                self.log_info("任务完成", task_id=task_id)
                return result
            except asyncio.TimeoutError:
                self.log_warning("任务超时", task_id=task_id, timeout=timeout)
                raise
            except Exception as e:
                self.log_error("任务失败", e, task_id=task_id)
                raise
            finally:
                self._running_tasks.pop(task_id, None)


__all__ = [
    "BaseService",
    "AsyncTaskService",
]
