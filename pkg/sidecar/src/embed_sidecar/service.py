"""FastAPI application implementing the embedding provider contract."""

from __future__ import annotations

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .config import SidecarConfig
from .encoders import EmptyTextError, load_encoder

logger = logging.getLogger(__name__)

MODALITIES = ("code", "description")


class EmbedRequest(BaseModel):
    texts: list[str]
    modality: str


class EncoderRegistry:
    """Holds both encoders; requests are rejected with 503 until load()."""

    def __init__(self, config: SidecarConfig):
        self.config = config
        self.code = None
        self.desc = None

    @property
    def loaded(self) -> bool:
        return self.code is not None and self.desc is not None

    @property
    def provider_id(self) -> str:
        return f"sidecar:{self.config.code_model}|{self.config.desc_model}"

    def load(self) -> None:
        if self.loaded:
            return
        logger.info("loading encoders: code=%s desc=%s", self.config.code_model, self.config.desc_model)
        self.code = load_encoder(self.config.code_model)
        self.desc = load_encoder(self.config.desc_model)

    def for_modality(self, modality: str):
        return self.code if modality == "code" else self.desc


def create_app(config: SidecarConfig | None = None) -> FastAPI:
    config = config or SidecarConfig.from_env()
    registry = EncoderRegistry(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        registry.load()
        yield

    app = FastAPI(title="embed-sidecar", lifespan=lifespan)
    app.state.registry = registry

    @app.get("/health")
    def health():
        if not registry.loaded:
            raise HTTPException(status_code=503, detail="encoders are still loading")
        return {
            "status": "ok",
            "provider_id": registry.provider_id,
            "code_dimension": registry.code.dimension,
            "desc_dimension": registry.desc.dimension,
        }

    @app.post("/embed")
    def embed(request: EmbedRequest):
        if not registry.loaded:
            raise HTTPException(status_code=503, detail="encoders are still loading")
        if request.modality not in MODALITIES:
            raise HTTPException(
                status_code=400,
                detail=f"modality must be one of {MODALITIES}, got {request.modality!r}",
            )
        if not request.texts:
            raise HTTPException(status_code=400, detail="texts must be non-empty")
        if len(request.texts) > config.max_batch:
            raise HTTPException(
                status_code=413,
                detail=f"batch of {len(request.texts)} exceeds limit {config.max_batch}",
            )
        blank = [i for i, t in enumerate(request.texts) if not t.strip()]
        if blank:
            raise HTTPException(status_code=400, detail=f"texts at {blank} are empty")
        encoder = registry.for_modality(request.modality)
        try:
            vectors, truncated = encoder.encode(request.texts)
        except EmptyTextError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        if truncated:
            logger.warning(
                "truncated %d/%d inputs to %d tokens", len(truncated), len(request.texts),
                encoder.max_tokens,
            )
        return {
            "vectors": vectors,
            "dimension": encoder.dimension,
            "provider_id": registry.provider_id,
            "truncated": truncated,
        }

    return app
