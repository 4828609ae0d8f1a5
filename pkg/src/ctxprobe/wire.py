"""JSON-over-HTTP scoring protocol: mock server and remote client.

Protocol (normative):

  POST /v1/score
    request  {"id": str, "query": str, "context": str|null,
              "mode": "two_segment"|"one_segment"|"separator_only",
              "candidates": [str], "top_k": int}
    response {"id": str, "candidate_logprobs": [float],
              "top_k": [{"token": str, "logprob": float}],
              "nsp_prob": float|null}

  GET /v1/health -> {"status": "ok", "model": str}

Malformed requests get HTTP 400 with ``{"error": str}``; a loading model
answers 503. The client retries transport failures (including 503) at
most twice more with exponential backoff and never retries protocol
errors.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import requests

from .errors import ProtocolError, ScorerError, TransportError
from .scorer import Prediction, ScoreRequest, Vocabulary

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
BACKOFF_BASE_SECONDS = 0.25


def request_to_json(request: ScoreRequest) -> dict:
    return {
        "id": request.request_id,
        "query": request.query_text,
        "context": request.context_text,
        "mode": request.mode,
        "candidates": list(request.candidates.tokens),
        "top_k": request.top_k,
    }


def prediction_to_json(prediction: Prediction, request_id: str) -> dict:
    return {
        "id": request_id,
        "candidate_logprobs": list(prediction.candidate_logprobs),
        "top_k": [{"token": t, "logprob": lp} for t, lp in prediction.top_k],
        "nsp_prob": prediction.nsp_prob,
    }


def parse_score_request(payload: dict) -> ScoreRequest:
    """Validate an incoming wire request; raises ``ValueError`` on any defect."""
    if not isinstance(payload, dict):
        raise ValueError("request body must be a JSON object")
    for key in ("id", "query", "mode", "candidates", "top_k"):
        if key not in payload:
            raise ValueError(f"missing field {key!r}")
    candidates = payload["candidates"]
    if not isinstance(candidates, list) or not candidates:
        raise ValueError("candidates must be a non-empty list")
    if not all(isinstance(c, str) for c in candidates):
        raise ValueError("candidates must be strings")
    context = payload.get("context")
    if context is not None and not isinstance(context, str):
        raise ValueError("context must be a string or null")
    return ScoreRequest(
        query_text=str(payload["query"]),
        context_text=context,
        mode=str(payload["mode"]),
        candidates=Vocabulary(candidates),
        top_k=int(payload["top_k"]),
        request_id=str(payload["id"]),
    )


class _MockHandler(BaseHTTPRequestHandler):
    scorer = None
    model_name = "mock"

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/v1/health":
            self._send_json(200, {"status": "ok", "model": self.model_name})
        else:
            self._send_json(404, {"error": f"unknown path {self.path}"})

    def do_POST(self):
        if self.path != "/v1/score":
            self._send_json(404, {"error": f"unknown path {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
            request = parse_score_request(payload)
        except (ValueError, json.JSONDecodeError) as exc:
            self._send_json(400, {"error": str(exc)})
            return
        try:
            prediction = self.scorer.score(request)
        except ScorerError as exc:
            self._send_json(400, {"error": str(exc)})
            return
        self._send_json(200, prediction_to_json(prediction, request.request_id))

    def log_message(self, fmt, *args):
        logger.debug("mock server: " + fmt, *args)


class MockServer:
    """In-process HTTP server wrapping a mock scorer; used by tests and the CLI."""

    def __init__(self, scorer, host: str = "127.0.0.1", port: int = 0, model_name: str = "mock"):
        handler = type(
            "_BoundMockHandler", (_MockHandler,), {"scorer": scorer, "model_name": model_name}
        )
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join()


class RemoteScorer:
    """Client for the scoring protocol; drop-in replacement for a mock scorer.

    Transport failures are retried with exponential backoff; any deviation
    from the protocol (bad status, mismatched id, wrong vector length) is
    fatal and reported with a payload excerpt.
    """

    name = "remote"

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        max_attempts: int = MAX_ATTEMPTS,
        backoff_base: float = BACKOFF_BASE_SECONDS,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.session = session or requests.Session()

    def health(self) -> dict:
        response = self._request_with_retry("GET", f"{self.endpoint}/v1/health", None)
        return response.json()

    def score(self, request: ScoreRequest) -> Prediction:
        payload = request_to_json(request)
        response = self._request_with_retry("POST", f"{self.endpoint}/v1/score", payload)
        try:
            body = response.json()
        except ValueError as exc:
            raise ProtocolError(
                f"non-JSON response: {response.text[:200]!r}"
            ) from exc
        return self._parse_prediction(body, request)

    def _request_with_retry(self, method: str, url: str, payload: dict | None):
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                response = self.session.request(
                    method, url, json=payload, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("transport error talking to %s (attempt %d): %s", url, attempt + 1, exc)
                continue
            if response.status_code == 503:
                last_error = TransportError("service unavailable (503, model loading)")
                logger.warning("%s returned 503 (attempt %d)", url, attempt + 1)
                continue
            if response.status_code != 200:
                raise ProtocolError(
                    f"HTTP {response.status_code} from {url}: {response.text[:200]!r}"
                )
            return response
        raise TransportError(f"giving up on {url} after {self.max_attempts} attempts: {last_error}")

    @staticmethod
    def _parse_prediction(body: dict, request: ScoreRequest) -> Prediction:
        def fail(message: str):
            excerpt = json.dumps(body)[:200]
            raise ProtocolError(f"{message}; payload: {excerpt}")

        if not isinstance(body, dict):
            fail("response is not an object")
        if body.get("id") != request.request_id:
            fail(f"response id {body.get('id')!r} does not match request {request.request_id!r}")
        logprobs = body.get("candidate_logprobs")
        if not isinstance(logprobs, list) or len(logprobs) != len(request.candidates):
            fail("candidate_logprobs missing or wrong length")
        top_k = body.get("top_k")
        if not isinstance(top_k, list):
            fail("top_k missing")
        try:
            ranked = tuple((str(e["token"]), float(e["logprob"])) for e in top_k)
        except (KeyError, TypeError, ValueError):
            ranked = None
        if ranked is None:
            fail("top_k entries malformed")
        nsp_prob = body.get("nsp_prob")
        if nsp_prob is not None and not isinstance(nsp_prob, (int, float)):
            fail("nsp_prob must be a number or null")
        if not ranked:
            fail("top_k is empty")
        return Prediction(
            fact_uuid=request.request_id,
            candidate_logprobs=tuple(float(x) for x in logprobs),
            top_k=ranked,
            nsp_prob=None if nsp_prob is None else float(nsp_prob),
            argmax_token=ranked[0][0],
        )
