"""对话后端

``ScriptedBackend`` 从固定目录读取预先写好的回复，完全确定；``HttpChatBackend`` 调用
OpenAI 兼容的 chat-completion 接口。两者都只做单次请求，重试由流水线负责。
"""

import re
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import httpx

from core.config import settings
from core.exceptions import ConfigurationError, ExternalServiceError
from core.logging import get_logger
from models.pipeline import CallContext, ChatMessage


logger = get_logger(__name__)

_FIXTURE_NAME = re.compile(r"^(?P<agent>[a-z0-9]+)_(?P<iteration>\d+)\.txt$")


class ChatBackend(ABC):
    """对话后端接口：(系统提示词, 有序消息) → 回复文本"""

    @property
    @abstractmethod
    def name(self) -> str:
        """后端标识，用于报告"""

    @abstractmethod
    async def complete(self, system: str, messages: List[ChatMessage], context: CallContext) -> str:
        """返回一次补全的文本"""

    async def aclose(self):
        """释放连接等资源"""


class ScriptedBackend(ChatBackend):
    """脚本化后端

    回复文件命名为 ``<agent>_<iteration>.txt``。缺少某次迭代的文件时沿用该智能体更早的最新一个；
    存在 ``attempt_<k>/`` 子目录时，第 k 次尝试只从该子目录取回复。
    """

    def __init__(self, fixture_dir: Union[str, Path]):
        self.fixture_dir = Path(fixture_dir)
        if not self.fixture_dir.is_dir():
            raise ConfigurationError(f"脚本化回复目录不存在: {self.fixture_dir}", config_key="backend")

    @property
    def name(self) -> str:
        return f"scripted:{self.fixture_dir.name}"

    def _directory_for(self, attempt: int) -> Path:
        override = self.fixture_dir / f"attempt_{attempt}"
        return override if override.is_dir() else self.fixture_dir

    def fixture_path(self, context: CallContext) -> Path:
        """选出本次调用使用的回复文件"""
        directory = self._directory_for(context.attempt)
        best: Optional[int] = None
        for path in directory.iterdir():
            match = _FIXTURE_NAME.match(path.name)
            if not match or match.group("agent") != context.agent.value:
                continue
            iteration = int(match.group("iteration"))
            if iteration <= context.iteration and (best is None or iteration > best):
                best = iteration
        if best is None:
            raise ExternalServiceError(
                f"没有 {context.agent.value} 第 {context.iteration} 次调用可用的回复文件 ({directory})",
                service=self.name,
            )
        return directory / f"{context.agent.value}_{best}.txt"

    async def complete(self, system: str, messages: List[ChatMessage], context: CallContext) -> str:
        path = self.fixture_path(context)
        logger.debug(f"脚本化回复 {path.name} → {context.agent.value}#{context.iteration}")
        return path.read_text(encoding="utf-8")


class HttpChatBackend(ChatBackend):
    """OpenAI 兼容的 HTTP 后端，连接在多次尝试间共享"""

    def __init__(
        self,
        api_url: Optional[str] = None,
        api_key: Optional[str] = None,
        model: Optional[str] = None,
        timeout: Optional[float] = None,
        transport: Optional[httpx.AsyncBaseTransport] = None,
    ):
        self.api_url = api_url or settings.llm_api_url
        self.api_key = api_key or settings.llm_api_key
        self.model = model or settings.llm_model
        if not self.api_url:
            raise ConfigurationError("HTTP 后端需要 LLM_API_URL", config_key="llm_api_url")
        if not self.api_key:
            raise ConfigurationError("HTTP 后端需要 LLM_API_KEY", config_key="llm_api_key")
        self._client = httpx.AsyncClient(
            timeout=timeout or settings.llm_timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {self.api_key}"},
        )

    @property
    def name(self) -> str:
        return f"http:{self.model}"

    def build_payload(self, system: str, messages: List[ChatMessage]) -> Dict[str, Any]:
        chat = [{"role": "system", "content": system}]
        chat += [{"role": m.role, "content": m.content} for m in messages]
        return {"model": self.model, "messages": chat}

    async def complete(self, system: str, messages: List[ChatMessage], context: CallContext) -> str:
        payload = self.build_payload(system, messages)
        try:
            response = await self._client.post(self.api_url, json=payload)
        except httpx.HTTPError as e:
            raise ExternalServiceError(f"请求对话后端失败: {e}", service=self.name) from e
        if response.status_code != 200:
            raise ExternalServiceError(
                f"对话后端返回 HTTP {response.status_code}",
                service=self.name,
                status_code=response.status_code,
            )
        try:
            return response.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise ExternalServiceError(f"对话后端回复格式无法解析: {e}", service=self.name) from e

    async def aclose(self):
        await self._client.aclose()


def make_backend(spec: str) -> ChatBackend:
    """按描述创建后端：``scripted:<目录>``、``http`` 或 ``http:<模型名>``"""
    kind, _, argument = spec.partition(":")
    if kind == "scripted":
        if not argument:
            raise ConfigurationError("scripted 后端需要回复目录，例如 scripted:fixtures/happy", config_key="backend")
        return ScriptedBackend(argument)
    if kind == "http":
        return HttpChatBackend(model=argument or None)
    raise ConfigurationError(f"未知的后端类型 {kind!r}，可选 scripted:<目录> 或 http[:<模型>]", config_key="backend")
