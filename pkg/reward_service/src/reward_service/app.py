"""FastAPI app exposing the forward-synthesis wire protocol.

POST /predict {"reactants": [smiles], "top_k": n} -> {"products": [...]}
GET  /health -> {"model": name, "ready": bool}

Environment: REWARD_MODEL_PATH (fixture file for the mock backend),
REWARD_SERVICE_PORT, REWARD_CACHE_SIZE.
"""

from __future__ import annotations

import os
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .backend import Backend, CachingBackend, MockBackend


class PredictRequest(BaseModel):
    reactants: list[str] = Field(min_length=1, max_length=2)
    top_k: int = Field(default=5, ge=1, le=10)


class PredictResponse(BaseModel):
    products: list[str]


class HealthResponse(BaseModel):
    model: str
    ready: bool


def create_app(backend: Optional[Backend] = None) -> FastAPI:
    app = FastAPI(title="reward-service")

    if backend is None:
        path = os.environ.get("REWARD_MODEL_PATH")
        if path:
            backend = MockBackend.from_file(path)
        else:
            backend = MockBackend({})
    cache_size = int(os.environ.get("REWARD_CACHE_SIZE", "1024"))
    backend = CachingBackend(backend, max_entries=cache_size)
    app.state.backend = backend

    @app.post("/predict", response_model=PredictResponse)
    def predict(request: PredictRequest) -> PredictResponse:
        if not all(s.strip() for s in request.reactants):
            raise HTTPException(status_code=400, detail="empty reactant SMILES")
        if not app.state.backend.ready():
            raise HTTPException(status_code=503, detail="model is not ready")
        products = app.state.backend.predict(request.reactants, request.top_k)
        return PredictResponse(products=products)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(model=app.state.backend.name,
                              ready=app.state.backend.ready())

    return app


def main() -> None:  # pragma: no cover - manual entry point
    import uvicorn

    port = int(os.environ.get("REWARD_SERVICE_PORT", "8701"))
    uvicorn.run(create_app(), host="127.0.0.1", port=port)


if __name__ == "__main__":  # pragma: no cover
    main()
