"""Service configuration, read from the environment."""

from __future__ import annotations

import os
from dataclasses import dataclass

ENV_CODE_MODEL = "SIDE_CODE_MODEL"
ENV_DESC_MODEL = "SIDE_DESC_MODEL"
ENV_PORT = "SIDE_PORT"

DEFAULT_CODE_MODEL = "microsoft/codebert-base"
DEFAULT_DESC_MODEL = "sentence-transformers/all-MiniLM-L6-v2"
DEFAULT_PORT = 8301
DEFAULT_MAX_BATCH = 64


class SidecarConfigError(ValueError):
    """Bad environment configuration."""


@dataclass(frozen=True)
class SidecarConfig:
    code_model: str = DEFAULT_CODE_MODEL
    desc_model: str = DEFAULT_DESC_MODEL
    port: int = DEFAULT_PORT
    max_batch: int = DEFAULT_MAX_BATCH

    def __post_init__(self):
        if not self.code_model or not self.desc_model:
            raise SidecarConfigError("encoder model names must be non-empty")
        if not (0 <= self.port <= 65535):
            raise SidecarConfigError(f"port out of range: {self.port}")
        if self.max_batch < 1:
            raise SidecarConfigError(f"max_batch must be >= 1, got {self.max_batch}")

    @classmethod
    def from_env(cls) -> "SidecarConfig":
        raw_port = os.environ.get(ENV_PORT, str(DEFAULT_PORT))
        try:
            port = int(raw_port)
        except ValueError:
            raise SidecarConfigError(f"{ENV_PORT} must be an integer, got {raw_port!r}") from None
        return cls(
            code_model=os.environ.get(ENV_CODE_MODEL, DEFAULT_CODE_MODEL),
            desc_model=os.environ.get(ENV_DESC_MODEL, DEFAULT_DESC_MODEL),
            port=port,
        )
