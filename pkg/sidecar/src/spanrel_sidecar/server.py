"""Wire-protocol service: GET /v1/health and POST /v1/predict.

Stateless between requests; thresholds and decoding live entirely in the
client. Malformed requests get status 400 with a reason; per-item model
failures come back as error records inside a 200 response.
"""

from __future__ import annotations

from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .model import load_model, predict_batch


@dataclass(frozen=True)
class SidecarConfig:
    model: str = "builtin:overlap"
    port: int = 8140
    max_batch: int = 32
    device: str = "cpu"

    def __post_init__(self):
        if not (0 < self.port < 65536):
            raise ValueError(f"port out of range: {self.port}")
        if self.max_batch < 1:
            raise ValueError("max batch must be >= 1")


def _bad_request(reason: str) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": reason})


def _validate_items(body) -> list[dict] | str:
    if not isinstance(body, dict):
        return "body must be a JSON object"
    items = body.get("items")
    if not isinstance(items, list):
        return "body must contain an items list"
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            return f"items[{i}] must be an object"
        for field in ("id", "context", "question"):
            if not isinstance(item.get(field), str):
                return f"items[{i}] missing string field {field!r}"
    return items


def build_app(config: SidecarConfig) -> FastAPI:
    app = FastAPI(title="spanrel-sidecar", docs_url=None, redoc_url=None)
    model = load_model(config.model, device=config.device)
    app.state.config = config
    app.state.model = model

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    @app.post("/v1/predict")
    async def predict(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _bad_request("body is not valid JSON")
        items = _validate_items(body)
        if isinstance(items, str):
            return _bad_request(items)
        predictions: list[dict] = []
        for lo in range(0, len(items), config.max_batch):
            predictions.extend(predict_batch(model, items[lo : lo + config.max_batch]))
        return {"predictions": predictions}

    return app
