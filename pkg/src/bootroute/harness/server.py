"""Local HTTP routing service.

Endpoints: ``POST /route``, ``GET /trace/{id}``, ``GET /healthz``.
"""

from __future__ import annotations

import asyncio
import json
import logging
from contextlib import asynccontextmanager
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from ..client import AllCandidatesFailed, ModelClient
from ..cost import format_currency
from ..pipeline import Router, RoutingTrace
from ..types import Query, RouterConfig
from .bench import make_client

logger = logging.getLogger(__name__)


def _parse_query(body: Any) -> Query:
    if not isinstance(body, dict):
        raise ValueError("body must be a JSON object")
    text = body.get("text")
    if not isinstance(text, str) or not text.strip():
        raise ValueError("'text' must be a non-empty string")
    caps = body.get("required_capabilities", [])
    if not isinstance(caps, list) or not all(isinstance(c, str) for c in caps):
        raise ValueError("'required_capabilities' must be a list of strings")
    kwargs = {}
    if "query_id" in body:
        if not isinstance(body["query_id"], str) or not body["query_id"]:
            raise ValueError("'query_id' must be a non-empty string")
        kwargs["query_id"] = body["query_id"]
    return Query(text, frozenset(caps), **kwargs)


def create_app(config: RouterConfig, client: ModelClient | None = None,
               concurrency: int = 4) -> FastAPI:
    traces: dict[str, RoutingTrace] = {}
    gate = asyncio.Semaphore(concurrency)
    state: dict[str, Any] = {}

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        state["client"] = client or make_client(config)
        state["router"] = Router(config, state["client"])
        yield
        if client is None:
            await state["client"].aclose()

    app = FastAPI(title="bootroute", lifespan=lifespan)
    app.state.traces = traces

    @app.get("/healthz", response_class=PlainTextResponse)
    async def healthz() -> str:
        return "ok"

    @app.post("/route")
    async def route(request: Request) -> JSONResponse:
        try:
            query = _parse_query(json.loads(await request.body()))
        except (ValueError, UnicodeDecodeError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        async with gate:
            try:
                trace = await state["router"].route(query)
            except AllCandidatesFailed as exc:
                trace = exc.trace or RoutingTrace(query.query_id, query.text, error=str(exc))
                traces[trace.query_id] = trace
                return JSONResponse({"error": str(exc), "trace_id": trace.query_id},
                                    status_code=502)
        traces[trace.query_id] = trace
        return JSONResponse({
            "trace_id": trace.query_id,
            "final_text": trace.final_text,
            "cost": {"tokens": trace.total_tokens,
                     "currency": format_currency(trace.total_currency)},
            "warnings": trace.warnings,
        })

    @app.get("/trace/{trace_id}")
    async def get_trace(trace_id: str) -> JSONResponse:
        trace = traces.get(trace_id)
        if trace is None:
            return JSONResponse({"error": "unknown trace"}, status_code=404)
        return JSONResponse(trace.to_dict())

    return app


def serve(config: RouterConfig, bind_address: str = "127.0.0.1:8080",
          concurrency: int = 4) -> None:
    """Run the service until interrupted; uvicorn drains in-flight requests on shutdown."""
    import uvicorn

    host, _, port = bind_address.rpartition(":")
    uvicorn.run(create_app(config, concurrency=concurrency), host=host or "127.0.0.1",
                port=int(port), timeout_graceful_shutdown=int(config.request_timeout) * 4)
