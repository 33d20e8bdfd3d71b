"""Streaming chat-completions client with hard cancellation at a token budget."""

from __future__ import annotations

import asyncio
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import httpx

from .mock import MockBackend, count_tokens, mock_url
from .types import (
    BUDGET_REACHED,
    ERROR,
    MODEL_FINISHED,
    TIMEOUT,
    BootResponse,
    ModelSpec,
    Query,
)

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


class AllCandidatesFailed(RuntimeError):
    def __init__(self, message: str, responses: Sequence[BootResponse] = (), trace=None):
        super().__init__(message)
        self.responses = list(responses)
        self.trace = trace


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[Mapping[str, str], ...]
    max_tokens: int
    stream: bool = True

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        for m in self.messages:
            if m.get("role") not in ROLES:
                raise ValueError(f"invalid role {m.get('role')!r}")

    @classmethod
    def user(cls, model_id: str, text: str, max_tokens: int, stream: bool = True
             ) -> "ChatRequest":
        return cls(model_id, ({"role": "user", "content": text},), max_tokens, stream)


def chunk_tokens(content: str) -> int:
    """Client-side token estimate for one streamed delta (at least 1 if non-empty)."""
    if not content:
        return 0
    return max(1, count_tokens(content))


def completions_url(endpoint: str) -> str:
    if endpoint.startswith("mock://"):
        return mock_url(endpoint)
    endpoint = endpoint.rstrip("/")
    if endpoint.endswith("/chat/completions"):
        return endpoint
    return endpoint + "/chat/completions"


@dataclass
class _Progress:
    parts: list[str] = field(default_factory=list)
    completion_tokens: int = 0
    usage: dict | None = None
    finish_reason: str | None = None

    @property
    def text(self) -> str:
        return "".join(self.parts)


class ModelClient:
    """Shared, concurrency-safe client for OpenAI-compatible endpoints.

    Endpoints of the form ``mock://<script>`` are served by ``mocks``.
    """

    def __init__(self, mocks: MockBackend | None = None, timeout: float = 60.0,
                 temperature: float | None = None,
                 http_client: httpx.AsyncClient | None = None) -> None:
        self.mocks = mocks
        self.timeout = timeout
        self.temperature = temperature
        self._http = http_client
        self._mock_http: httpx.AsyncClient | None = None

    async def __aenter__(self) -> "ModelClient":
        return self

    async def __aexit__(self, *exc) -> None:
        await self.aclose()

    async def aclose(self) -> None:
        for c in (self._http, self._mock_http):
            if c is not None:
                await c.aclose()
        self._http = self._mock_http = None

    def _client_for(self, model: ModelSpec) -> httpx.AsyncClient:
        if model.is_mock:
            if self.mocks is None:
                raise RuntimeError(f"{model.model_id}: mock endpoint but no mock scripts loaded")
            if self._mock_http is None:
                self._mock_http = httpx.AsyncClient(transport=self.mocks.transport())
            return self._mock_http
        if self._http is None:
            self._http = httpx.AsyncClient(timeout=httpx.Timeout(None))
        return self._http

    def _headers(self, model: ModelSpec) -> dict[str, str]:
        headers = {"content-type": "application/json"}
        if model.api_key_env:
            key = os.environ.get(model.api_key_env)
            if key:
                headers["authorization"] = f"Bearer {key}"
            else:
                logger.warning("%s: environment variable %s is not set",
                               model.model_id, model.api_key_env)
        return headers

    def _body(self, request: ChatRequest) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": request.model_id,
            "messages": [dict(m) for m in request.messages],
            "max_tokens": request.max_tokens,
            "stream": request.stream,
        }
        if request.stream:
            body["stream_options"] = {"include_usage": True}
        if self.temperature is not None:
            body["temperature"] = self.temperature
        return body

    @staticmethod
    def _prompt_estimate(request: ChatRequest) -> int:
        return sum(count_tokens(m.get("content", "")) for m in request.messages)

    async def stream_completion(self, model: ModelSpec, request: ChatRequest,
                                token_budget: int, timeout: float | None = None
                                ) -> BootResponse:
        """Stream a completion and abort once ``token_budget`` tokens have arrived.

        Never raises for upstream failures: they come back as
        ``termination`` = error/timeout with ``error_detail`` set.
        """
        if token_budget < 1:
            raise ValueError("token_budget must be >= 1")
        timeout = self.timeout if timeout is None else timeout
        progress = _Progress()
        started = time.perf_counter()
        termination, detail = MODEL_FINISHED, None
        try:
            termination = await asyncio.wait_for(
                self._consume(model, request, token_budget, progress), timeout)
        except asyncio.TimeoutError:
            termination, detail = TIMEOUT, f"no completion within {timeout:g}s"
        except httpx.HTTPStatusError as exc:
            termination, detail = ERROR, f"HTTP {exc.response.status_code}"
        except (httpx.HTTPError, ValueError, KeyError, RuntimeError) as exc:
            termination, detail = ERROR, f"{type(exc).__name__}: {exc}"
        return self._response(model, request, progress, termination, detail,
                              time.perf_counter() - started)

    async def _consume(self, model: ModelSpec, request: ChatRequest, token_budget: int,
                       progress: _Progress) -> str:
        client = self._client_for(model)
        body = self._body(request)
        async with client.stream("POST", completions_url(model.endpoint), json=body,
                                 headers=self._headers(model)) as resp:
            if resp.status_code >= 400:
                await resp.aread()
                resp.raise_for_status()
            async for line in resp.aiter_lines():
                if not line.startswith("data:"):
                    continue
                data = line[5:].strip()
                if data == "[DONE]":
                    break
                frame = json.loads(data)
                if frame.get("usage"):
                    progress.usage = frame["usage"]
                for choice in frame.get("choices") or []:
                    content = (choice.get("delta") or {}).get("content") or ""
                    if content:
                        progress.parts.append(content)
                        progress.completion_tokens += chunk_tokens(content)
                    if choice.get("finish_reason"):
                        progress.finish_reason = choice["finish_reason"]
                if progress.completion_tokens >= token_budget:
                    # leaving the context manager closes the upstream connection
                    return BUDGET_REACHED
        if progress.finish_reason == "length":
            return BUDGET_REACHED
        return MODEL_FINISHED

    def _response(self, model: ModelSpec, request: ChatRequest, progress: _Progress,
                  termination: str, detail: str | None, latency: float) -> BootResponse:
        usage = progress.usage
        if usage and termination in (MODEL_FINISHED, BUDGET_REACHED):
            prompt = int(usage.get("prompt_tokens", 0))
            completion = int(usage.get("completion_tokens", progress.completion_tokens))
            estimated = False
        else:
            prompt = self._prompt_estimate(request)
            completion = progress.completion_tokens
            estimated = True
        return BootResponse(
            model_id=model.model_id,
            text=progress.text,
            completion_tokens=completion,
            prompt_tokens=prompt,
            latency=latency,
            termination=termination,
            error_detail=detail,
            estimated=estimated,
        )

    async def complete(self, model: ModelSpec, request: ChatRequest,
                       timeout: float | None = None) -> BootResponse:
        """Single non-streamed call (selector and aggregator)."""
        timeout = self.timeout if timeout is None else timeout
        started = time.perf_counter()
        progress = _Progress()
        try:
            termination = await asyncio.wait_for(
                self._complete_once(model, request, progress), timeout)
            detail = None
        except asyncio.TimeoutError:
            termination, detail = TIMEOUT, f"no completion within {timeout:g}s"
        except httpx.HTTPStatusError as exc:
            termination, detail = ERROR, f"HTTP {exc.response.status_code}"
        except (httpx.HTTPError, ValueError, KeyError, IndexError, RuntimeError) as exc:
            termination, detail = ERROR, f"{type(exc).__name__}: {exc}"
        return self._response(model, request, progress, termination, detail,
                              time.perf_counter() - started)

    async def _complete_once(self, model: ModelSpec, request: ChatRequest,
                             progress: _Progress) -> str:
        client = self._client_for(model)
        body = self._body(ChatRequest(request.model_id, request.messages,
                                      request.max_tokens, stream=False))
        resp = await client.post(completions_url(model.endpoint), json=body,
                                 headers=self._headers(model))
        resp.raise_for_status()
        payload = resp.json()
        choice = payload["choices"][0]
        text = (choice.get("message") or {}).get("content") or ""
        progress.parts.append(text)
        progress.completion_tokens = count_tokens(text)
        progress.usage = payload.get("usage")
        if choice.get("finish_reason") == "length":
            return BUDGET_REACHED
        return MODEL_FINISHED

    async def complete_full(self, model: ModelSpec, request: ChatRequest,
                            max_final_tokens: int, timeout: float | None = None
                            ) -> BootResponse:
        req = ChatRequest(request.model_id, request.messages, max_final_tokens, True)
        return await self.stream_completion(model, req, max_final_tokens, timeout)

    async def dispatch_boot(self, query: Query, models: Sequence[ModelSpec],
                            boot_budget: int, timeout: float | None = None
                            ) -> list[BootResponse]:
        """Probe every model concurrently; one response per model, input order."""
        if not models:
            raise ValueError("models must be non-empty")
        responses = await asyncio.gather(*(
            self.stream_completion(
                m, ChatRequest.user(m.model_id, query.text, boot_budget), boot_budget, timeout)
            for m in models
        ))
        if not any(r.usable for r in responses):
            raise AllCandidatesFailed("all_candidates_failed", responses)
        return list(responses)
