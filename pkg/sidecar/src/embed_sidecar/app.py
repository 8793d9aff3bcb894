"""The service: POST /embed and GET /health.

The model loads in a background thread at startup; /health answers 503 until
it is ready (and if loading failed), then 200 with the model name and
dimension. /embed rejects oversized batches with 413 and malformed bodies
with 400, and answers 503 with a Retry-After header on inference failure.
Vectors are unit-normalized server-side and returned in request order.
"""

from __future__ import annotations

import logging
import os
import threading
from contextlib import asynccontextmanager
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .encoders import DEFAULT_MODEL, Encoder, make_encoder

logger = logging.getLogger(__name__)

MAX_BATCH = 256
MAX_TEXT_CHARS = 10_000

MODEL_ENV = "EMBED_SIDECAR_MODEL"
PORT_ENV = "EMBED_SIDECAR_PORT"


class _EncoderState:
    def __init__(self):
        self.encoder: Optional[Encoder] = None
        self.error: Optional[str] = None
        self.ready = threading.Event()

    def load(self, model_id: str) -> None:
        try:
            self.encoder = make_encoder(model_id)
            logger.info("model %s ready (dimension %d)", self.encoder.name, self.encoder.dimension)
        except Exception as exc:
            self.error = f"model load failed: {exc}"
            logger.error("%s", self.error)
        finally:
            self.ready.set()


def create_app(model_id: Optional[str] = None, block_on_load: bool = False) -> FastAPI:
    model_id = model_id or os.environ.get(MODEL_ENV, DEFAULT_MODEL)
    state = _EncoderState()

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        thread = threading.Thread(target=state.load, args=(model_id,), daemon=True)
        thread.start()
        if block_on_load:
            state.ready.wait()
        yield

    app = FastAPI(title="embed-sidecar", lifespan=lifespan)
    app.state.encoder_state = state

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "malformed request body"})

    @app.get("/health")
    def health():
        if not state.ready.is_set():
            return JSONResponse(status_code=503, content={"status": "loading"})
        if state.error:
            return JSONResponse(status_code=503, content={"status": "error", "detail": state.error})
        return {
            "status": "ok",
            "model": state.encoder.name,
            "dimension": state.encoder.dimension,
        }

    @app.post("/embed")
    async def embed(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return JSONResponse(status_code=400, content={"error": "body is not valid JSON"})
        if not isinstance(payload, dict) or "texts" not in payload:
            return JSONResponse(status_code=400, content={"error": "missing 'texts'"})
        texts = payload["texts"]
        if not isinstance(texts, list) or not texts or not all(isinstance(t, str) for t in texts):
            return JSONResponse(
                status_code=400, content={"error": "'texts' must be a nonempty list of strings"}
            )
        if len(texts) > MAX_BATCH:
            return JSONResponse(
                status_code=413,
                content={"error": f"batch of {len(texts)} exceeds the {MAX_BATCH}-text limit"},
            )
        oversized = [i for i, t in enumerate(texts) if len(t) > MAX_TEXT_CHARS]
        if oversized:
            return JSONResponse(
                status_code=400,
                content={"error": f"text {oversized[0]} exceeds {MAX_TEXT_CHARS} characters"},
            )
        if not state.ready.is_set() or state.error or state.encoder is None:
            return JSONResponse(
                status_code=503,
                content={"error": state.error or "model is still loading"},
                headers={"Retry-After": "5"},
            )
        try:
            vectors = np.asarray(state.encoder.encode(texts), dtype=np.float64)
            norms = np.linalg.norm(vectors, axis=1)
            if np.any(norms == 0.0):
                raise ValueError("encoder returned a zero vector")
            vectors = vectors / norms[:, None]
        except Exception as exc:
            logger.exception("inference failed")
            return JSONResponse(
                status_code=503,
                content={"error": f"inference failed: {exc}"},
                headers={"Retry-After": "5"},
            )
        return {
            "vectors": [[float(x) for x in row] for row in vectors],
            "dimension": state.encoder.dimension,
        }

    return app


app = create_app()


def serve() -> None:
    import uvicorn

    logging.basicConfig(level=logging.INFO)
    port = int(os.environ.get(PORT_ENV, "8099"))
    uvicorn.run("embed_sidecar.app:app", host="127.0.0.1", port=port)


if __name__ == "__main__":
    serve()
