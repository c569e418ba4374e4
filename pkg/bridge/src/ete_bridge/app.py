"""HTTP service implementing the ete-oracle/1 wire protocol.

Endpoints:

* GET  /v1/health    -> {"protocol": "ete-oracle/1", "model": ...}
* POST /v1/marginals -> {"marginals": [[{"position": i, "probs": [...]}, ...], ...]}

Requests carry "tokens" (mask = -1), "prompt_len", and "positions"; batched
requests additionally carry "batch" (full variant token arrays) with
"positions" as one list per variant. All variants of a batch are evaluated in
one checkpoint forward. Malformed requests get a 400 with a schema
diagnostic; batches beyond the configured limit get a 503 with a batch-size
hint.
"""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .checkpoint import ServerConfig, load_checkpoint

PROTOCOL_VERSION = "ete-oracle/1"
PROTOCOL_HEADER = "X-Oracle-Protocol"
WIRE_MASK = -1


class MarginalsRequest(BaseModel):
    tokens: list[int]
    prompt_len: int = Field(ge=0)
    positions: list
    batch: list[list[int]] | None = None


def _schema_error(detail: str) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": "bad request", "detail": detail})


def _validate_variant(tokens: list[int], positions: list, index: int, max_seq_len: int):
    if len(tokens) == 0 or len(tokens) > max_seq_len:
        return f"variant {index}: token array length {len(tokens)} outside [1, {max_seq_len}]"
    if not isinstance(positions, list) or not all(isinstance(p, int) for p in positions):
        return f"variant {index}: positions must be a list of integers"
    for p in positions:
        if not (0 <= p < len(tokens)):
            return f"variant {index}: position {p} outside the token array"
        if tokens[p] != WIRE_MASK:
            return f"variant {index}: queried position {p} is not masked"
    return None


def create_app(config: ServerConfig) -> FastAPI:
    checkpoint = load_checkpoint(config.model)
    app = FastAPI(title="ete-oracle bridge", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _schema_error(str(exc.errors()[:3]))

    @app.get("/v1/health")
    async def health():
        return JSONResponse(
            content={"protocol": PROTOCOL_VERSION, "model": config.model},
            headers={PROTOCOL_HEADER: PROTOCOL_VERSION},
        )

    @app.post("/v1/marginals")
    async def marginals(req: MarginalsRequest):
        if req.batch is not None:
            variants = req.batch
            if not (
                isinstance(req.positions, list)
                and len(req.positions) == len(variants)
                and all(isinstance(ps, list) for ps in req.positions)
            ):
                return _schema_error(
                    "batched requests need one positions list per batch variant"
                )
            position_sets = req.positions
            if len(variants) == 0:
                return _schema_error("batch must contain at least one variant")
            if len(variants) > config.max_batch:
                return JSONResponse(
                    status_code=503,
                    content={
                        "error": "batch too large for this checkpoint",
                        "detail": f"retry with batch <= {config.max_batch}",
                    },
                )
        else:
            variants = [req.tokens]
            if not all(isinstance(p, int) for p in req.positions):
                return _schema_error("single requests need a flat integer positions list")
            position_sets = [req.positions]

        for i, (tokens, positions) in enumerate(zip(variants, position_sets)):
            problem = _validate_variant(tokens, positions, i, config.max_seq_len)
            if problem:
                return _schema_error(problem)
            bad = [t for t in tokens if t != WIRE_MASK and not (0 <= t < checkpoint.vocab_size)]
            if bad:
                return _schema_error(f"variant {i}: token ids {bad[:5]} outside the vocabulary")

        result = checkpoint.forward(variants, req.prompt_len, position_sets)
        payload = {
            "marginals": [
                [
                    {"position": int(p), "probs": probs.tolist()}
                    for p, probs in zip(positions, row)
                ]
                for positions, row in zip(position_sets, result)
            ]
        }
        return JSONResponse(content=payload, headers={PROTOCOL_HEADER: PROTOCOL_VERSION})

    return app


def serve(config: ServerConfig) -> None:
    """Run the marginal server until interrupted. Requests are handled
    serially per model instance; concurrent requests queue."""
    import uvicorn

    uvicorn.run(create_app(config), host="0.0.0.0", port=config.port, workers=1)
