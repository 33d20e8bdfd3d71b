"""Scripted OpenAI-compatible backend for offline runs.

A model whose endpoint is ``mock://<script-name>`` is served by this module
through an in-process :class:`httpx.MockTransport`, so the real wire parsing
code is exercised without network access.

Script document format (YAML or JSON)::

    scripts:
      long-a:
        chunk_size: 4          # tokens per streamed chunk (default 1)
        usage: true            # send a usage frame when the stream completes
        honor_max_tokens: true # stop at the request's max_tokens like a real server
        replies:
          - tokens: 2000       # synthetic reply of N tokens ("w0 w1 ...")
          - text: "The answer is 42."
          - chunks: ["The ", "answer ", "is 42."]
            delay_ms: 50       # before the first chunk
            chunk_delay_ms: 5  # between chunks
            error_at: 3        # 1-based chunk index that fails instead of arriving
            status: 500        # respond with this HTTP error status
            hang: true         # never answer (exercises timeouts)
            match: "Q7"        # only eligible when the last user message contains this
            extract: "#answer=(\\S+)"  # reply with the first regex group of the last user message

A token is a whitespace-delimited word. Replies are replayed in order per
distinct conversation (hash of the request messages); past the end of the
list the last reply repeats. Replies carrying ``match`` take precedence
over unconditional ones when they match.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, AsyncIterator, Mapping

import httpx
import yaml

WORD = re.compile(r"\S+")


def count_tokens(text: str) -> int:
    return len(WORD.findall(text))


@dataclass(frozen=True)
class ScriptedReply:
    text: str | None = None
    tokens: int | None = None
    chunks: tuple[str, ...] | None = None
    delay_ms: float = 0
    chunk_delay_ms: float = 0
    error_at: int | None = None
    status: int | None = None
    hang: bool = False
    match: str | None = None
    extract: str | None = None

    def render(self, last_user: str, chunk_size: int) -> list[str]:
        if self.chunks is not None:
            return list(self.chunks)
        if self.extract is not None:
            m = re.search(self.extract, last_user, re.S)
            text = (m.group(1) if m and m.groups() else m.group(0) if m else "").strip()
        elif self.tokens is not None:
            text = " ".join(f"w{i}" for i in range(self.tokens))
        else:
            text = self.text or ""
        words = WORD.findall(text)
        out = []
        for i in range(0, len(words), chunk_size):
            piece = " ".join(words[i:i + chunk_size])
            out.append(piece if i == 0 else " " + piece)
        return out


@dataclass(frozen=True)
class MockScript:
    name: str
    replies: tuple[ScriptedReply, ...]
    chunk_size: int = 1
    usage: bool = True
    honor_max_tokens: bool = True

    @classmethod
    def from_dict(cls, name: str, doc: Mapping[str, Any] | list) -> "MockScript":
        if isinstance(doc, list):
            doc = {"replies": doc}
        replies = []
        for r in doc.get("replies", []):
            if isinstance(r, str):
                r = {"text": r}
            r = dict(r)
            if "chunks" in r:
                r["chunks"] = tuple(r["chunks"])
            replies.append(ScriptedReply(**r))
        if not replies:
            raise ValueError(f"mock script {name!r} has no replies")
        chunk_size = int(doc.get("chunk_size", 1))
        if chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        return cls(
            name=name,
            replies=tuple(replies),
            chunk_size=chunk_size,
            usage=bool(doc.get("usage", True)),
            honor_max_tokens=bool(doc.get("honor_max_tokens", True)),
        )


def load_scripts(source: Mapping[str, Any] | str | Path) -> dict[str, MockScript]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        doc = json.loads(path.read_text()) if path.suffix == ".json" else yaml.safe_load(
            path.read_text())
    else:
        doc = source
    doc = doc.get("scripts", doc)
    return {name: MockScript.from_dict(name, body) for name, body in doc.items()}


def _conversation_key(messages: list[dict]) -> str:
    blob = json.dumps(messages, sort_keys=True, ensure_ascii=False).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class MockBackend:
    scripts: dict[str, MockScript]
    calls: list[dict] = field(default_factory=list)
    _cursors: dict[tuple[str, str], int] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    @classmethod
    def from_source(cls, source: Mapping[str, Any] | str | Path) -> "MockBackend":
        return cls(load_scripts(source))

    def reset(self) -> None:
        with self._lock:
            self.calls.clear()
            self._cursors.clear()

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self.handle)

    def _pick(self, script: MockScript, messages: list[dict]) -> tuple[ScriptedReply, str]:
        last_user = next(
            (m["content"] for m in reversed(messages) if m.get("role") == "user"), "")
        matching = [r for r in script.replies if r.match is not None and r.match in last_user]
        pool = matching or [r for r in script.replies if r.match is None] or list(script.replies)
        key = (script.name, _conversation_key(messages))
        with self._lock:
            idx = self._cursors.get(key, 0)
            self._cursors[key] = idx + 1
        return pool[min(idx, len(pool) - 1)], last_user

    async def handle(self, request: httpx.Request) -> httpx.Response:
        name = request.url.path.strip("/").split("/")[0]
        script = self.scripts.get(name)
        body = json.loads(request.content or b"{}")
        with self._lock:
            self.calls.append({"script": name, "body": body})
        if script is None:
            return httpx.Response(404, json={"error": f"unknown mock script {name!r}"})
        messages = body.get("messages", [])
        reply, last_user = self._pick(script, messages)
        if reply.hang:
            await asyncio.sleep(3600)
        if reply.delay_ms:
            await asyncio.sleep(reply.delay_ms / 1000)
        if reply.status is not None:
            return httpx.Response(reply.status, json={"error": "scripted failure"})

        chunks = reply.render(last_user, script.chunk_size)
        max_tokens = body.get("max_tokens")
        finish = "stop"
        if script.honor_max_tokens and max_tokens is not None:
            chunks, truncated = _truncate(chunks, int(max_tokens))
            if truncated:
                finish = "length"
        prompt_tokens = sum(count_tokens(str(m.get("content", ""))) for m in messages)
        model = body.get("model", name)

        if not body.get("stream"):
            if reply.error_at is not None:
                return httpx.Response(500, json={"error": "scripted failure"})
            text = "".join(chunks)
            return httpx.Response(200, json={
                "id": "mock", "object": "chat.completion", "model": model,
                "choices": [{"index": 0, "finish_reason": finish,
                             "message": {"role": "assistant", "content": text}}],
                "usage": {"prompt_tokens": prompt_tokens,
                          "completion_tokens": count_tokens(text),
                          "total_tokens": prompt_tokens + count_tokens(text)},
            })

        async def events() -> AsyncIterator[bytes]:
            sent = 0
            for i, piece in enumerate(chunks, start=1):
                if reply.error_at is not None and i >= reply.error_at:
                    raise httpx.ReadError("scripted stream failure")
                if reply.chunk_delay_ms and i > 1:
                    await asyncio.sleep(reply.chunk_delay_ms / 1000)
                sent += count_tokens(piece)
                yield _frame({"id": "mock", "object": "chat.completion.chunk", "model": model,
                              "choices": [{"index": 0, "delta": {"content": piece},
                                           "finish_reason": None}]})
            if reply.error_at is not None and reply.error_at == len(chunks) + 1:
                raise httpx.ReadError("scripted stream failure")
            yield _frame({"id": "mock", "object": "chat.completion.chunk", "model": model,
                          "choices": [{"index": 0, "delta": {}, "finish_reason": finish}]})
            if script.usage:
                yield _frame({"id": "mock", "object": "chat.completion.chunk", "model": model,
                              "choices": [],
                              "usage": {"prompt_tokens": prompt_tokens,
                                        "completion_tokens": sent,
                                        "total_tokens": prompt_tokens + sent}})
            yield b"data: [DONE]\n\n"

        return httpx.Response(200, content=events(),
                              headers={"content-type": "text/event-stream"})


def mock_url(endpoint: str) -> str:
    """Map ``mock://<script>`` to the URL the in-process transport serves."""
    name = endpoint[len("mock://"):].strip("/")
    return f"http://mock.invalid/{name}/chat/completions"


def _frame(payload: dict) -> bytes:
    return b"data: " + json.dumps(payload).encode() + b"\n\n"


def _truncate(chunks: list[str], limit: int) -> tuple[list[str], bool]:
    out, used = [], 0
    for piece in chunks:
        words = WORD.findall(piece)
        if used + len(words) <= limit:
            out.append(piece)
            used += len(words)
            continue
        keep = limit - used
        if keep > 0:
            lead = " " if piece[:1].isspace() else ""
            out.append(lead + " ".join(words[:keep]))
        return out, True
    return out, False
