"""Embedding sidecar service.

Serves code and description embeddings over a small HTTP JSON contract:

    POST /embed   {"texts": [...], "modality": "code" | "description"}
              ->  {"vectors": [[...], ...], "dimension": D,
                   "provider_id": "...", "truncated": [...]}
    GET  /health  -> {"status": "ok", "provider_id": "...",
                      "code_dimension": D1, "desc_dimension": D2}

Encoder checkpoints are configuration: ``hash:<dim>`` selects the built-in
deterministic hashing encoder (no model weights needed); anything else is
treated as a transformer checkpoint name and mean-pooled.
"""

from .config import SidecarConfig
from .encoders import HashEncoder, load_encoder
from .service import EncoderRegistry, create_app

__all__ = [
    "SidecarConfig",
    "HashEncoder",
    "load_encoder",
    "EncoderRegistry",
    "create_app",
]

__version__ = "0.1.0"
