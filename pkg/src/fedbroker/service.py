"""HTTP selection service for retrieval-augmented generation pipelines.

``POST /select`` ranks the configured federation for a query; ``GET
/healthz`` and ``GET /resources`` expose liveness and the registry.
Selection jobs run in a bounded worker pool with a per-request timeout:
LLM fan-out latency dominates and must not pile up unbounded.
"""

from __future__ import annotations

import asyncio
import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .config import AppConfig
from .errors import AllFiltered, BackendUnavailable, FedbrokerError
from .llm import LlmClient
from .model import Query, QueryKind, QueryOrigin, ResourceRegistry, SelectionMethod
from .prompting import RepresentationConfig
from .selector import EmbeddingIndex, Encoder, SelectionRequest, rank_resources


def derived_query_id(text: str) -> str:
    """Stable id for ad-hoc query text arriving over the wire."""
    return "q" + hashlib.sha1(text.strip().encode("utf-8")).hexdigest()[:12]


@dataclass
class ServiceContext:
    registry: ResourceRegistry
    client: LlmClient
    config: AppConfig = field(default_factory=AppConfig)
    index: EmbeddingIndex | None = None
    encoder: Encoder | None = None


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _parse_select_body(body: object) -> SelectionRequest:
    if not isinstance(body, dict):
        raise ValueError("request body must be a JSON object")
    text = body.get("query")
    if not isinstance(text, str) or not text.strip():
        raise ValueError("'query' must be a non-empty string")

    k = body.get("k")
    if k is not None and (not isinstance(k, int) or isinstance(k, bool) or k < 1):
        raise ValueError("'k' must be a positive integer")

    method_name = body.get("method", "resllm")
    try:
        method = SelectionMethod(method_name)
    except ValueError:
        raise ValueError(f"unknown method {method_name!r}") from None
    if method is SelectionMethod.ORACLE:
        raise ValueError("the oracle method is not servable")

    representation = body.get("representation", {})
    if not isinstance(representation, dict):
        raise ValueError("'representation' must be an object")
    config = RepresentationConfig(
        use_description=bool(representation.get("description", False)),
        use_similar_snippets=bool(representation.get("snippets", False)),
    )

    query = Query(
        id=derived_query_id(text),
        text=text.strip(),
        kind=QueryKind.AD_HOC,
        origin=QueryOrigin.TEST,
    )
    return SelectionRequest(
        query=query,
        method=method,
        k=k,
        representation=config,
        filter_nonpositive=bool(body.get("filter_nonpositive", False)),
    )


def create_app(ctx: ServiceContext) -> FastAPI:
    app = FastAPI(title="fedbroker", docs_url=None, redoc_url=None)
    pool = ThreadPoolExecutor(max_workers=ctx.config.service.max_in_flight)

    @app.exception_handler(RequestValidationError)
    async def handle_validation(_request: Request, error: RequestValidationError):
        return _error(400, str(error))

    @app.get("/healthz")
    async def healthz():
        return {
            "status": "ok",
            "resources": len(ctx.registry),
            "backend": type(ctx.client.backend).__name__,
        }

    @app.get("/resources")
    async def resources():
        return [
            {
                "id": resource.id,
                "name": resource.name,
                "url": resource.url,
                "discontinued": resource.discontinued,
            }
            for resource in ctx.registry
        ]

    @app.post("/select")
    async def select(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "request body is not valid JSON")
        try:
            selection = _parse_select_body(body)
        except ValueError as error:
            return _error(400, str(error))

        started = time.monotonic()
        loop = asyncio.get_running_loop()
        job = loop.run_in_executor(
            pool,
            lambda: rank_resources(
                selection, ctx.registry, client=ctx.client, index=ctx.index, encoder=ctx.encoder
            ),
        )
        try:
            ranking = await asyncio.wait_for(job, timeout=ctx.config.service.timeout_seconds)
        except asyncio.TimeoutError:
            return _error(504, "selection timed out")
        except BackendUnavailable as error:
            return _error(503, str(error))
        except AllFiltered as error:
            return _error(422, str(error))
        except (FedbrokerError, ValueError) as error:
            return _error(400, str(error))

        elapsed_ms = int((time.monotonic() - started) * 1000)
        entries = []
        for resource_id, score in ranking.entries:
            resource = ctx.registry[resource_id]
            entries.append(
                {
                    "resource_id": resource_id,
                    "name": resource.name,
                    "url": resource.url,
                    "score": score,
                }
            )
        return JSONResponse(
            content={
                "query_id": ranking.query_id,
                "method": ranking.method.value,
                "entries": entries,
                "elapsed_ms": elapsed_ms,
            }
        )

    return app
