"""HTTP surface: /v1/score, /v1/health, and the layout-echo debug endpoint.

Wire protocol (must stay bit-compatible with the harness client):

  POST /v1/score
    {"id", "query", "context", "mode", "candidates", "top_k"}
      -> {"id", "candidate_logprobs", "top_k", "nsp_prob"}
  GET /v1/health -> {"status": "ok", "model": ...}

Malformed requests answer 400 with {"error": ...}; 503 while the model is
still loading.
"""

from __future__ import annotations

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .model import MODES, ModelSession, RequestError

logger = logging.getLogger(__name__)


def create_app(session: ModelSession | None = None, session_factory=None) -> FastAPI:
    """Build the service app.

    With ``session_factory`` the model loads on startup; until then every
    endpoint answers 503.
    """

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if session_factory is not None:
            logger.info("loading model...")
            app.state.session = session_factory()
            logger.info("model ready: %s", app.state.session.model_name)
        yield

    app = FastAPI(title="ctxprobe-service", lifespan=lifespan)
    app.state.session = session

    def current_session() -> ModelSession | None:
        return app.state.session

    @app.exception_handler(RequestError)
    async def _bad_request(_request: Request, exc: RequestError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/v1/health")
    def health():
        session = current_session()
        if session is None:
            return JSONResponse(status_code=503, content={"error": "model loading"})
        return {"status": "ok", "model": session.model_name}

    def parse_payload(payload: dict) -> dict:
        if not isinstance(payload, dict):
            raise RequestError("request body must be a JSON object")
        for key in ("id", "query", "mode", "candidates", "top_k"):
            if key not in payload:
                raise RequestError(f"missing field {key!r}")
        if payload["mode"] not in MODES:
            raise RequestError(f"unknown mode {payload['mode']!r}")
        candidates = payload["candidates"]
        if not isinstance(candidates, list) or not candidates:
            raise RequestError("candidates must be a non-empty list")
        if not all(isinstance(c, str) for c in candidates):
            raise RequestError("candidates must be strings")
        context = payload.get("context")
        if context is not None and not isinstance(context, str):
            raise RequestError("context must be a string or null")
        try:
            top_k = int(payload["top_k"])
        except (TypeError, ValueError):
            raise RequestError("top_k must be an integer")
        return {
            "request_id": str(payload["id"]),
            "query": str(payload["query"]),
            "context": context,
            "mode": str(payload["mode"]),
            "candidates": candidates,
            "top_k": top_k,
        }

    @app.post("/v1/score")
    async def score(request: Request):
        session = current_session()
        if session is None:
            return JSONResponse(status_code=503, content={"error": "model loading"})
        try:
            payload = await request.json()
        except Exception:
            raise RequestError("request body is not valid JSON")
        parsed = parse_payload(payload)
        result = session.score(
            parsed["query"], parsed["context"], parsed["mode"],
            parsed["candidates"], parsed["top_k"],
        )
        return {"id": parsed["request_id"], **result}

    @app.post("/v1/debug/layout")
    async def debug_layout(request: Request):
        session = current_session()
        if session is None:
            return JSONResponse(status_code=503, content={"error": "model loading"})
        try:
            payload = await request.json()
        except Exception:
            raise RequestError("request body is not valid JSON")
        if "query" not in payload or "mode" not in payload:
            raise RequestError("layout echo needs 'query' and 'mode'")
        layout = session.assemble(
            str(payload["query"]), payload.get("context"), str(payload["mode"])
        )
        return {
            "tokens": session.tokens_of(layout),
            "segment_ids": layout.token_type_ids,
            "mask_index": layout.mask_index,
        }

    return app
