"""对话后端测试"""

import json

import httpx
import pytest

from core.config import settings
from core.exceptions import ConfigurationError, ExternalServiceError
from models.pipeline import AgentRole, CallContext, ChatMessage
from services.chat_backends import HttpChatBackend, ScriptedBackend, make_backend
from tests.conftest import write_fixtures


def _context(agent: AgentRole, iteration: int, attempt: int = 0) -> CallContext:
    return CallContext(agent=agent, iteration=iteration, attempt=attempt)


class TestScriptedBackend:
    @pytest.fixture
    def backend(self, tmp_path):
        write_fixtures(
            tmp_path / "replies",
            {
                "generator_1.txt": "gen one",
                "debugger_1.txt": "debug one",
                "debugger_3.txt": "debug three",
                "attempt_2/generator_1.txt": "gen for attempt two",
                "notes.md": "ignored",
            },
        )
        return ScriptedBackend(tmp_path / "replies")

    async def test_exact_and_latest_earlier_reply(self, backend):
        assert await backend.complete("s", [], _context(AgentRole.GENERATOR, 1)) == "gen one"
        assert await backend.complete("s", [], _context(AgentRole.DEBUGGER, 2)) == "debug one"
        assert await backend.complete("s", [], _context(AgentRole.DEBUGGER, 5)) == "debug three"

    async def test_attempt_subdirectory_overrides(self, backend):
        assert await backend.complete("s", [], _context(AgentRole.GENERATOR, 1, attempt=2)) == "gen for attempt two"
        assert await backend.complete("s", [], _context(AgentRole.GENERATOR, 1, attempt=1)) == "gen one"

    async def test_attempt_subdirectory_is_exclusive(self, backend):
        with pytest.raises(ExternalServiceError):
            await backend.complete("s", [], _context(AgentRole.DEBUGGER, 1, attempt=2))

    async def test_missing_reply(self, backend):
        with pytest.raises(ExternalServiceError):
            await backend.complete("s", [], _context(AgentRole.INSPECTOR1, 1))

    def test_name_and_missing_directory(self, backend, tmp_path):
        assert backend.name == "scripted:replies"
        with pytest.raises(ConfigurationError):
            ScriptedBackend(tmp_path / "nowhere")


class TestHttpBackend:
    @staticmethod
    def _backend(handler) -> HttpChatBackend:
        return HttpChatBackend(
            api_url="https://llm.example/v1/chat/completions",
            api_key="test-key",
            model="test-model",
            transport=httpx.MockTransport(handler),
        )

    async def test_payload_and_reply(self):
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["auth"] = request.headers["Authorization"]
            seen["body"] = json.loads(request.content)
            return httpx.Response(200, json={"choices": [{"message": {"content": "CONSISTENT"}}]})

        backend = self._backend(handler)
        try:
            reply = await backend.complete(
                "system text",
                [ChatMessage(role="user", content="check this")],
                _context(AgentRole.INSPECTOR1, 1),
            )
        finally:
            await backend.aclose()
        assert reply == "CONSISTENT"
        assert seen["auth"] == "Bearer test-key"
        assert seen["body"] == {
            "model": "test-model",
            "messages": [
                {"role": "system", "content": "system text"},
                {"role": "user", "content": "check this"},
            ],
        }
        assert backend.name == "http:test-model"

    async def test_http_error_status(self):
        backend = self._backend(lambda request: httpx.Response(503, text="overloaded"))
        try:
            with pytest.raises(ExternalServiceError) as exc:
                await backend.complete("s", [], _context(AgentRole.GENERATOR, 1))
        finally:
            await backend.aclose()
        assert exc.value.details["status_code"] == 503

    async def test_unparseable_reply(self):
        backend = self._backend(lambda request: httpx.Response(200, json={"result": "?"}))
        try:
            with pytest.raises(ExternalServiceError):
                await backend.complete("s", [], _context(AgentRole.GENERATOR, 1))
        finally:
            await backend.aclose()

    async def test_transport_error(self):
        def handler(request):
            raise httpx.ConnectError("refused", request=request)

        backend = self._backend(handler)
        try:
            with pytest.raises(ExternalServiceError):
                await backend.complete("s", [], _context(AgentRole.GENERATOR, 1))
        finally:
            await backend.aclose()

    def test_requires_url_and_key(self, monkeypatch):
        monkeypatch.setattr(settings, "llm_api_url", None)
        monkeypatch.setattr(settings, "llm_api_key", None)
        with pytest.raises(ConfigurationError):
            HttpChatBackend()
        with pytest.raises(ConfigurationError):
            HttpChatBackend(api_url="https://llm.example")


class TestMakeBackend:
    def test_scripted(self, tmp_path):
        assert isinstance(make_backend(f"scripted:{tmp_path}"), ScriptedBackend)

    async def test_http_with_model(self, monkeypatch):
        monkeypatch.setattr(settings, "llm_api_url", "https://llm.example")
        monkeypatch.setattr(settings, "llm_api_key", "k")
        backend = make_backend("http:small-model")
        try:
            assert backend.name == "http:small-model"
        finally:
            await backend.aclose()

    @pytest.mark.parametrize("spec", ["scripted", "grpc:x"])
    def test_invalid(self, spec):
        with pytest.raises(ConfigurationError):
            make_backend(spec)
