"""tagminer-bridge: emit tagminer input files from real images and models."""

__version__ = "0.1.0"

from .backends import BackendUnavailable, load_encoder, load_tagger
from .bridge import BridgeConfig, embed_descriptions, embed_images, extract_tags

__all__ = [
    "BackendUnavailable",
    "BridgeConfig",
    "embed_descriptions",
    "embed_images",
    "extract_tags",
    "load_encoder",
    "load_tagger",
]
